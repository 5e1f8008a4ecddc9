//! `lstmp`: train and evaluate RNN/LSTM sequence-labeling models.
//!
//! Subcommands: `gen` (synthetic datasets), `train`, `eval`, `gradcheck`,
//! `params`, `compare`. Exit codes: 0 success, 1 usage error, 2 validation
//! error, 3 numerical failure (divergence, gradient-check breach).

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "lstmp", version, about = "Recurrent-network training toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Generate a synthetic dataset in the SEQD format
    Gen(GenArgs),
    /// Train a model from a key=value config file
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset
    Eval(EvalArgs),
    /// Verify analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Print the parameter count of an architecture
    Params(ParamsArgs),
    /// Train several architectures at a matched parameter budget
    Compare(CompareArgs),
}

#[derive(Args)]
pub struct GenArgs {
    #[command(subcommand)]
    pub generator: GenCmd,
}

#[derive(Subcommand)]
pub enum GenCmd {
    /// One-hot symbols; the label is the symbol seen `delay` frames earlier
    DelayedEcho {
        #[arg(long, default_value_t = 8)]
        symbols: usize,
        #[arg(long, default_value_t = 10)]
        delay: usize,
        #[arg(long, default_value_t = 2000)]
        utterances: usize,
        #[arg(long, default_value_t = 50)]
        min_len: usize,
        #[arg(long, default_value_t = 100)]
        max_len: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Left-to-right HMM over phone states with Gaussian emissions
    SyntheticFrames {
        #[arg(long, default_value_t = 14)]
        phones: usize,
        #[arg(long, default_value_t = 3)]
        states_per_phone: usize,
        #[arg(long, default_value_t = 40)]
        feature_dim: usize,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 500)]
        utterances: usize,
        #[arg(long, default_value_t = 50)]
        min_len: usize,
        #[arg(long, default_value_t = 100)]
        max_len: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: std::path::PathBuf,
    },
}

#[derive(Args)]
pub struct TrainArgs {
    /// Path to a key=value config file
    pub config: std::path::PathBuf,
    /// key=value overrides applied on top of the file
    pub overrides: Vec<String>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: std::path::PathBuf,
    #[arg(long)]
    pub data: std::path::PathBuf,
    #[arg(long, default_value_t = 0)]
    pub output_delay: usize,
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// Architecture to check (default: all four)
    #[arg(long)]
    pub arch: Option<String>,
    /// Comma-separated seeds per architecture. The defaults are vetted to
    /// keep every random draw's smallest gradient entries above the
    /// finite-difference noise floor.
    #[arg(long, default_value = "7,16,21,41,89", value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Window length
    #[arg(long, default_value_t = 12)]
    pub window: usize,
    /// Finite-difference step
    #[arg(long, default_value_t = lstmp::grad::GRADCHECK_EPSILON)]
    pub epsilon: f64,
    /// Maximum accepted relative error
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Fault-injection hook: nudge one analytic entry before comparing
    #[arg(long, default_value_t = 0.0, hide = true)]
    pub inject_error: f64,
}

#[derive(Args)]
pub struct ParamsArgs {
    #[arg(long)]
    pub arch: String,
    #[arg(long)]
    pub n_i: usize,
    #[arg(long)]
    pub n_c: usize,
    #[arg(long)]
    pub n_r: Option<usize>,
    #[arg(long)]
    pub n_p: Option<usize>,
    #[arg(long)]
    pub n_o: usize,
    #[arg(long, default_value_t = false)]
    pub include_biases: bool,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Training dataset (SEQD)
    #[arg(long)]
    pub data: std::path::PathBuf,
    /// Weight budget shared by all architectures
    #[arg(long)]
    pub budget: usize,
    /// Total training frames per architecture
    #[arg(long)]
    pub frames: u64,
    /// Architecture entries, `name` or `name:lr0` (repeatable)
    #[arg(long = "arch", required = true)]
    pub archs: Vec<String>,
    /// Default lr0 for entries without their own
    #[arg(long, default_value_t = 1.0)]
    pub lr0: f64,
    /// n_r as a fraction of n_c for projected variants
    #[arg(long, default_value_t = 0.25)]
    pub rp_ratio: f64,
    /// n_p as a fraction of n_c for the dual-projection variant
    #[arg(long, default_value_t = 0.25)]
    pub np_ratio: f64,
    /// Fraction of utterances held out as the dev set
    #[arg(long, default_value_t = 0.1)]
    pub dev_fraction: f64,
    #[arg(long, default_value_t = 20)]
    pub t_bptt: usize,
    #[arg(long, default_value_t = 4)]
    pub lanes_per_worker: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 0)]
    pub output_delay: usize,
    #[arg(long, default_value_t = 500)]
    pub eval_interval: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.2)]
    pub init_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub forget_bias: f64,
    /// Directory for per-architecture learning curves
    #[arg(long)]
    pub out_dir: Option<std::path::PathBuf>,
}

fn exit_code(err: &lstmp::Error) -> i32 {
    match err {
        lstmp::Error::Diverged { .. } => 3,
        _ => 2,
    }
}

pub fn main_entry() -> ! {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Gen(args) => crate::commands::gen(args),
        Cmd::Train(args) => crate::commands::train(args),
        Cmd::Eval(args) => crate::commands::eval(args),
        Cmd::Gradcheck(args) => crate::commands::gradcheck(args),
        Cmd::Params(args) => crate::commands::params(args),
        Cmd::Compare(args) => crate::commands::compare(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
