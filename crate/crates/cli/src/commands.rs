use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use lstmp::cells::{param_count, ArchKind, ArchSpec, ModelParams};
use lstmp::data::{
    read_dataset, split_dataset, write_dataset, DelayedEchoSpec, SequenceDataset,
    SyntheticFramesSpec,
};
use lstmp::eval::{compare_architectures, frame_accuracy, CompareTemplate, COMPARE_HEADER};
use lstmp::grad::gradient_check;
use lstmp::train::{
    train_async, train_sync, CurvePoint, EvalObserver, ResumePoint, TrainOutcome, CURVE_HEADER,
};
use lstmp::{Error, Result, Scalar};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{Precision, RunConfig};
use crate::cli::{CompareArgs, EvalArgs, GenArgs, GenCmd, GradcheckArgs, ParamsArgs, TrainArgs};

fn dataset_stats(ds: &SequenceDataset) {
    println!("utterances {}", ds.utterances.len());
    println!("frames {}", ds.total_frames());
    println!("n_i {}", ds.n_i);
    println!("n_o {}", ds.n_o);
    println!("provenance {}", ds.provenance);
}

pub fn gen(args: GenArgs) -> Result<i32> {
    let (ds, out) = match args.generator {
        GenCmd::DelayedEcho { symbols, delay, utterances, min_len, max_len, seed, out } => {
            let spec = DelayedEchoSpec { n_symbols: symbols, delay, utterances, min_len, max_len, seed };
            (spec.generate()?, out)
        }
        GenCmd::SyntheticFrames {
            phones,
            states_per_phone,
            feature_dim,
            noise,
            utterances,
            min_len,
            max_len,
            seed,
            out,
        } => {
            let spec = SyntheticFramesSpec {
                n_phones: phones,
                states_per_phone,
                feature_dim,
                noise,
                utterances,
                min_len,
                max_len,
                seed,
            };
            (spec.generate()?, out)
        }
    };
    write_dataset(&ds, &out)?;
    dataset_stats(&ds);
    Ok(0)
}

/// Appends curve rows and rewrites the checkpoint at every evaluation.
struct FileObserver {
    curve: Option<Mutex<fs::File>>,
    ckpt: Option<PathBuf>,
}

impl FileObserver {
    fn new(curve_path: Option<&str>, ckpt_path: Option<&str>) -> Result<FileObserver> {
        let curve = match curve_path {
            Some(p) => {
                let mut f = fs::File::create(p)?;
                writeln!(f, "#{CURVE_HEADER}")?;
                Some(Mutex::new(f))
            }
            None => None,
        };
        Ok(FileObserver { curve, ckpt: ckpt_path.map(PathBuf::from) })
    }
}

impl<S: Scalar> EvalObserver<S> for FileObserver {
    fn on_eval(&self, point: &CurvePoint, snapshot: &ModelParams<S>) {
        if let Some(curve) = &self.curve {
            let mut f = curve.lock().unwrap();
            let _ = writeln!(f, "{}", point.to_csv_row());
            let _ = f.flush();
        }
        if let Some(path) = &self.ckpt {
            let tmp = path.with_extension("tmp");
            if save_checkpoint(&tmp, snapshot, point.step).is_ok() {
                let _ = fs::rename(&tmp, path);
            }
        }
    }
}

fn load_train_dev(cfg: &RunConfig) -> Result<(SequenceDataset, SequenceDataset)> {
    let train_path = cfg.train_data.as_ref().expect("validated");
    let full = read_dataset(Path::new(train_path))?;
    match &cfg.dev_data {
        Some(dev_path) => {
            let dev = read_dataset(Path::new(dev_path))?;
            Ok((full, dev))
        }
        None => split_dataset(&full, cfg.dev_fraction, cfg.split_seed),
    }
}

fn run_train<S: Scalar>(cfg: &RunConfig) -> Result<TrainOutcome<S>> {
    let (train_ds, dev_ds) = load_train_dev(cfg)?;
    let tc = cfg.train_config();
    let resume = match &cfg.resume {
        Some(path) => {
            let (params, step) = load_checkpoint::<S>(Path::new(path))?;
            Some(ResumePoint { params, step })
        }
        None => None,
    };
    let observer = FileObserver::new(cfg.curve_out.as_deref(), cfg.checkpoint_out.as_deref())?;
    let obs: Option<&dyn EvalObserver<S>> = Some(&observer);
    if tc.workers == 1 {
        train_sync(&tc, &train_ds, &dev_ds, resume, obs)
    } else {
        train_async(&tc, &train_ds, &dev_ds, resume, obs)
    }
}

pub fn train(args: TrainArgs) -> Result<i32> {
    let text = fs::read_to_string(&args.config)?;
    let mut cfg = RunConfig::parse(&text)?;
    cfg.apply_overrides(&args.overrides)?;
    cfg.validate()?;
    print!("{}", cfg.normalized());

    macro_rules! run {
        ($ty:ty) => {{
            let out = run_train::<$ty>(&cfg)?;
            if let Some(path) = &cfg.checkpoint_out {
                save_checkpoint(Path::new(path), &out.params, out.steps)?;
            }
            println!("steps {}", out.steps);
            println!("frames_seen {}", out.frames_seen);
            println!("wall_clock_sec {:.1}", out.wall_clock_sec);
            if let Some(p) = out.curve.last() {
                println!("final_dev_accuracy {:.4}", p.dev_frame_accuracy);
            }
        }};
    }
    match cfg.precision {
        Precision::F64 => run!(f64),
        Precision::F32 => run!(f32),
    }
    Ok(0)
}

pub fn eval(args: EvalArgs) -> Result<i32> {
    let (params, step) = load_checkpoint::<f64>(&args.checkpoint)?;
    let ds = read_dataset(&args.data)?;
    let report = frame_accuracy(&params, &ds, args.output_delay)?;
    println!("checkpoint_step {step}");
    println!("frames {}", report.frames);
    println!("correct {}", report.correct);
    println!("accuracy {:.6}", report.accuracy);
    if report.n_classes <= 16 {
        println!("confusion (rows = reference)");
        for r in 0..report.n_classes {
            let row: Vec<String> =
                (0..report.n_classes).map(|c| report.confusion_at(r, c).to_string()).collect();
            println!("  {}", row.join(" "));
        }
    }
    Ok(0)
}

pub fn gradcheck(args: GradcheckArgs) -> Result<i32> {
    let kinds: Vec<ArchKind> = match &args.arch {
        Some(name) => vec![ArchKind::from_name(name)
            .ok_or_else(|| Error::InvalidArg(format!("unknown architecture {name:?}")))?],
        None => vec![ArchKind::Rnn, ArchKind::Lstm, ArchKind::LstmRp, ArchKind::LstmRpNp],
    };
    if args.seeds.is_empty() {
        return Err(Error::InvalidArg("gradcheck needs at least one seed".into()));
    }
    let mut failed = Vec::new();
    println!("arch,block,max_rel_err");
    for kind in kinds {
        let spec = match kind {
            ArchKind::Rnn => ArchSpec::rnn(5, 7, 6),
            ArchKind::Lstm => ArchSpec::lstm(5, 7, 6),
            ArchKind::LstmRp => ArchSpec::lstm_rp(5, 7, 4, 6),
            ArchKind::LstmRpNp => ArchSpec::lstm_rp_np(5, 7, 4, 3, 6),
        };
        let report =
            gradient_check(&spec, &args.seeds, args.window, args.epsilon, args.inject_error)?;
        for blk in &report.blocks {
            println!("{},{},{:.3e}", kind.name(), blk.block, blk.max_rel_err);
            if blk.max_rel_err >= args.tolerance {
                failed.push(format!("{}/{}", kind.name(), blk.block));
            }
        }
    }
    if failed.is_empty() {
        println!("gradcheck ok (tolerance {:.0e})", args.tolerance);
        Ok(0)
    } else {
        eprintln!("gradcheck FAILED for blocks: {}", failed.join(", "));
        Ok(3)
    }
}

pub fn params(args: ParamsArgs) -> Result<i32> {
    let kind = ArchKind::from_name(&args.arch)
        .ok_or_else(|| Error::InvalidArg(format!("unknown architecture {:?}", args.arch)))?;
    let spec = ArchSpec { kind, n_i: args.n_i, n_c: args.n_c, n_r: args.n_r, n_p: args.n_p, n_o: args.n_o };
    spec.validate()?;
    let formula = param_count(&spec, args.include_biases);
    let instantiated = ModelParams::<f64>::zeros(&spec)?.scalar_count(args.include_biases);
    println!("arch {}", kind.name());
    println!("formula_params {formula}");
    println!("instantiated_params {instantiated}");
    if formula == instantiated {
        Ok(0)
    } else {
        eprintln!("count mismatch: formula {formula} vs instantiated {instantiated}");
        Ok(3)
    }
}

fn parse_compare_arch(token: &str, default_lr0: f64) -> Result<(String, ArchKind, f64)> {
    let (name, lr0) = match token.split_once(':') {
        Some((name, lr)) => {
            let lr0: f64 = lr
                .parse()
                .map_err(|_| Error::InvalidArg(format!("bad lr0 in arch entry {token:?}")))?;
            (name, lr0)
        }
        None => (token, default_lr0),
    };
    let kind = ArchKind::from_name(name)
        .ok_or_else(|| Error::InvalidArg(format!("unknown architecture {name:?}")))?;
    Ok((name.to_string(), kind, lr0))
}

pub fn compare(args: CompareArgs) -> Result<i32> {
    let full = read_dataset(&args.data)?;
    let (train_ds, dev_ds) = split_dataset(&full, args.dev_fraction, args.seed)?;

    // Template ratios are expressed against a nominal n_c and rescaled by
    // the budget fit.
    let nominal = 100usize;
    let ratio_dim = |ratio: f64| ((nominal as f64 * ratio).round() as usize).max(1);
    let mut templates = Vec::new();
    for token in &args.archs {
        let (name, kind, lr0) = parse_compare_arch(token, args.lr0)?;
        let template = match kind {
            ArchKind::Rnn => ArchSpec::rnn(full.n_i, nominal, full.n_o),
            ArchKind::Lstm => ArchSpec::lstm(full.n_i, nominal, full.n_o),
            ArchKind::LstmRp => {
                ArchSpec::lstm_rp(full.n_i, nominal, ratio_dim(args.rp_ratio), full.n_o)
            }
            ArchKind::LstmRpNp => ArchSpec::lstm_rp_np(
                full.n_i,
                nominal,
                ratio_dim(args.rp_ratio),
                ratio_dim(args.np_ratio),
                full.n_o,
            ),
        };
        templates.push(CompareTemplate { name, template, lr0 });
    }

    let mut base = lstmp::train::TrainConfig::new(templates[0].template);
    base.t_bptt = args.t_bptt;
    base.lanes_per_worker = args.lanes_per_worker;
    base.workers = args.workers;
    base.output_delay = args.output_delay;
    base.eval_interval = args.eval_interval;
    base.seed = args.seed;
    base.init_scale = args.init_scale;
    base.forget_bias = args.forget_bias;

    let rows =
        compare_architectures::<f64>(&train_ds, &dev_ds, &templates, args.budget, args.frames, &base)?;
    println!("{COMPARE_HEADER}");
    for row in &rows {
        println!("{}", row.to_tsv_row());
    }
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        for row in &rows {
            let mut f = fs::File::create(dir.join(format!("{}.csv", row.name)))?;
            writeln!(f, "#{CURVE_HEADER}")?;
            for p in &row.curve {
                writeln!(f, "{}", p.to_csv_row())?;
            }
        }
    }
    Ok(0)
}
