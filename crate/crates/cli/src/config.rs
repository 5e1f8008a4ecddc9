//! Run configuration: a flat `key = value` text format covering the
//! architecture, training hyperparameters, clipping, the learning-rate
//! schedule and dataset paths. Unknown keys are rejected; the normalized
//! echo re-parses to the same configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use lstmp::cells::{ArchKind, ArchSpec};
use lstmp::grad::ClipPolicy;
use lstmp::train::{LrSchedule, TrainConfig};
use lstmp::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

/// Parsed and validated run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub arch: ArchKind,
    pub n_i: usize,
    pub n_c: usize,
    pub n_r: Option<usize>,
    pub n_p: Option<usize>,
    pub n_o: usize,
    pub t_bptt: usize,
    pub lanes_per_worker: usize,
    pub workers: usize,
    pub lr0: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_interval: u64,
    pub gradient_bound: f64,
    pub activation_bound: f64,
    pub clip_gradients_rnn: bool,
    pub clip_gradients_lstm: bool,
    pub clip_activations_rnn: bool,
    pub output_delay: usize,
    pub max_steps: u64,
    pub max_frames: Option<u64>,
    pub eval_interval: u64,
    pub seed: u64,
    pub init_scale: f64,
    pub forget_bias: f64,
    pub precision: Precision,
    pub train_data: Option<String>,
    pub dev_data: Option<String>,
    pub dev_fraction: f64,
    pub split_seed: u64,
    pub curve_out: Option<String>,
    pub checkpoint_out: Option<String>,
    pub resume: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let clip = ClipPolicy::default();
        RunConfig {
            arch: ArchKind::Lstm,
            n_i: 1,
            n_c: 1,
            n_r: None,
            n_p: None,
            n_o: 1,
            t_bptt: 20,
            lanes_per_worker: 4,
            workers: 1,
            lr0: 0.1,
            lr_decay_factor: 0.9,
            lr_decay_interval: 1000,
            gradient_bound: clip.gradient_bound,
            activation_bound: clip.activation_bound,
            clip_gradients_rnn: clip.clip_gradients_rnn,
            clip_gradients_lstm: clip.clip_gradients_lstm,
            clip_activations_rnn: clip.clip_activations_rnn,
            output_delay: 0,
            max_steps: 1000,
            max_frames: None,
            eval_interval: 100,
            seed: 1,
            init_scale: 0.04,
            forget_bias: 0.0,
            precision: Precision::F64,
            train_data: None,
            dev_data: None,
            dev_fraction: 0.1,
            split_seed: 1,
            curve_out: None,
            checkpoint_out: None,
            resume: None,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::InvalidArg(format!("{key}: expected true/false, got {v:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::InvalidArg(format!("{key}: cannot parse {v:?}")))
}

impl RunConfig {
    /// Parse `key = value` lines; `#` starts a comment, blank lines are
    /// ignored, unknown keys are errors.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidArg(format!(
                    "line {}: expected key = value, got {raw:?}",
                    lineno + 1
                )));
            };
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Apply `key=value` override tokens on top of a parsed config.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for token in overrides {
            let Some((key, value)) = token.split_once('=') else {
                return Err(Error::InvalidArg(format!("override {token:?} is not key=value")));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "arch" => {
                self.arch = ArchKind::from_name(value).ok_or_else(|| {
                    Error::InvalidArg(format!(
                        "arch: expected rnn|lstm|lstm_rp|lstm_rp_np, got {value:?}"
                    ))
                })?;
            }
            "n_i" => self.n_i = parse_num(key, value)?,
            "n_c" => self.n_c = parse_num(key, value)?,
            "n_r" => self.n_r = Some(parse_num(key, value)?),
            "n_p" => self.n_p = Some(parse_num(key, value)?),
            "n_o" => self.n_o = parse_num(key, value)?,
            "t_bptt" => self.t_bptt = parse_num(key, value)?,
            "lanes_per_worker" => self.lanes_per_worker = parse_num(key, value)?,
            "workers" => self.workers = parse_num(key, value)?,
            "lr0" => self.lr0 = parse_num(key, value)?,
            "lr_decay_factor" => self.lr_decay_factor = parse_num(key, value)?,
            "lr_decay_interval" => self.lr_decay_interval = parse_num(key, value)?,
            "gradient_bound" => self.gradient_bound = parse_num(key, value)?,
            "activation_bound" => self.activation_bound = parse_num(key, value)?,
            "clip_gradients_rnn" => self.clip_gradients_rnn = parse_bool(key, value)?,
            "clip_gradients_lstm" => self.clip_gradients_lstm = parse_bool(key, value)?,
            "clip_activations_rnn" => self.clip_activations_rnn = parse_bool(key, value)?,
            "output_delay" => self.output_delay = parse_num(key, value)?,
            "max_steps" => self.max_steps = parse_num(key, value)?,
            "max_frames" => self.max_frames = Some(parse_num(key, value)?),
            "eval_interval" => self.eval_interval = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "init_scale" => self.init_scale = parse_num(key, value)?,
            "forget_bias" => self.forget_bias = parse_num(key, value)?,
            "precision" => {
                self.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => {
                        return Err(Error::InvalidArg(format!(
                            "precision: expected f32|f64, got {value:?}"
                        )))
                    }
                };
            }
            "train_data" => self.train_data = Some(value.to_string()),
            "dev_data" => self.dev_data = Some(value.to_string()),
            "dev_fraction" => self.dev_fraction = parse_num(key, value)?,
            "split_seed" => self.split_seed = parse_num(key, value)?,
            "curve_out" => self.curve_out = Some(value.to_string()),
            "checkpoint_out" => self.checkpoint_out = Some(value.to_string()),
            "resume" => self.resume = Some(value.to_string()),
            _ => return Err(Error::InvalidArg(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn arch_spec(&self) -> ArchSpec {
        ArchSpec {
            kind: self.arch,
            n_i: self.n_i,
            n_c: self.n_c,
            n_r: self.n_r,
            n_p: self.n_p,
            n_o: self.n_o,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            arch: self.arch_spec(),
            t_bptt: self.t_bptt,
            lanes_per_worker: self.lanes_per_worker,
            workers: self.workers,
            lr: LrSchedule {
                lr0: self.lr0,
                decay_factor: self.lr_decay_factor,
                decay_interval: self.lr_decay_interval,
            },
            clip: ClipPolicy {
                gradient_bound: self.gradient_bound,
                activation_bound: self.activation_bound,
                clip_gradients_rnn: self.clip_gradients_rnn,
                clip_gradients_lstm: self.clip_gradients_lstm,
                clip_activations_rnn: self.clip_activations_rnn,
            },
            output_delay: self.output_delay,
            max_steps: self.max_steps,
            max_frames: self.max_frames,
            eval_interval: self.eval_interval,
            seed: self.seed,
            init_scale: self.init_scale,
            forget_bias: self.forget_bias,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.train_data.is_none() {
            return Err(Error::InvalidArg("train_data is required".into()));
        }
        if self.dev_data.is_none() && !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return Err(Error::InvalidArg(
                "without dev_data, dev_fraction must be in (0,1)".into(),
            ));
        }
        Ok(())
    }

    /// Canonical text form; `parse(normalized(c)) == c`.
    pub fn normalized(&self) -> String {
        let mut kv: BTreeMap<&'static str, String> = BTreeMap::new();
        kv.insert("arch", self.arch.name().to_string());
        kv.insert("n_i", self.n_i.to_string());
        kv.insert("n_c", self.n_c.to_string());
        if let Some(n_r) = self.n_r {
            kv.insert("n_r", n_r.to_string());
        }
        if let Some(n_p) = self.n_p {
            kv.insert("n_p", n_p.to_string());
        }
        kv.insert("n_o", self.n_o.to_string());
        kv.insert("t_bptt", self.t_bptt.to_string());
        kv.insert("lanes_per_worker", self.lanes_per_worker.to_string());
        kv.insert("workers", self.workers.to_string());
        kv.insert("lr0", self.lr0.to_string());
        kv.insert("lr_decay_factor", self.lr_decay_factor.to_string());
        kv.insert("lr_decay_interval", self.lr_decay_interval.to_string());
        kv.insert("gradient_bound", self.gradient_bound.to_string());
        kv.insert("activation_bound", self.activation_bound.to_string());
        kv.insert("clip_gradients_rnn", self.clip_gradients_rnn.to_string());
        kv.insert("clip_gradients_lstm", self.clip_gradients_lstm.to_string());
        kv.insert("clip_activations_rnn", self.clip_activations_rnn.to_string());
        kv.insert("output_delay", self.output_delay.to_string());
        kv.insert("max_steps", self.max_steps.to_string());
        if let Some(mf) = self.max_frames {
            kv.insert("max_frames", mf.to_string());
        }
        kv.insert("eval_interval", self.eval_interval.to_string());
        kv.insert("seed", self.seed.to_string());
        kv.insert("init_scale", self.init_scale.to_string());
        kv.insert("forget_bias", self.forget_bias.to_string());
        kv.insert("precision", self.precision.name().to_string());
        if let Some(p) = &self.train_data {
            kv.insert("train_data", p.clone());
        }
        if let Some(p) = &self.dev_data {
            kv.insert("dev_data", p.clone());
        }
        kv.insert("dev_fraction", self.dev_fraction.to_string());
        kv.insert("split_seed", self.split_seed.to_string());
        if let Some(p) = &self.curve_out {
            kv.insert("curve_out", p.clone());
        }
        if let Some(p) = &self.checkpoint_out {
            kv.insert("checkpoint_out", p.clone());
        }
        if let Some(p) = &self.resume {
            kv.insert("resume", p.clone());
        }
        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
