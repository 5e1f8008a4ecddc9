//! Frame-accuracy measurement and the matched-parameter architecture
//! comparison harness.
//!
//! Evaluation always runs the whole sequence forward from a reset state (no
//! window truncation; inference has no window constraint), predicts the
//! argmax class per frame, and compares against delay-adjusted targets. Ties
//! break toward the lowest class index.

use std::time::Instant;

use crate::cells::{forward_sequence, param_count, reset_state, ArchSpec, ModelParams};
use crate::data::SequenceDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::train::{train_async, train_sync, CurvePoint, TrainConfig};

/// Frame-accuracy report with per-class confusion counts.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub frames: u64,
    pub correct: u64,
    pub accuracy: f64,
    /// Row-major `n_o x n_o`; row = reference class, column = prediction.
    pub confusion: Vec<u64>,
    pub n_classes: usize,
}

impl EvalReport {
    pub fn confusion_at(&self, reference: usize, predicted: usize) -> u64 {
        self.confusion[reference * self.n_classes + predicted]
    }
}

fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0usize;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Whole-sequence frame accuracy of `params` on `ds` with the output label
/// delayed by `d` frames; the first `d` frames of each utterance are
/// excluded.
pub fn frame_accuracy<S: Scalar>(
    params: &ModelParams<S>,
    ds: &SequenceDataset,
    d: usize,
) -> Result<EvalReport> {
    let spec = params.spec();
    if ds.n_i != spec.n_i || ds.n_o != spec.n_o {
        return Err(Error::shape(
            "frame_accuracy",
            format!(
                "dataset is n_i={} n_o={} but model needs n_i={} n_o={}",
                ds.n_i, ds.n_o, spec.n_i, spec.n_o
            ),
        ));
    }
    let n_o = spec.n_o;
    let mut confusion = vec![0u64; n_o * n_o];
    let mut frames = 0u64;
    let mut correct = 0u64;
    for utt in &ds.utterances {
        let frames_s = utt.frames.convert::<S>();
        let (_, _, logits) = forward_sequence(params, &reset_state(spec), &frames_s)?;
        for t in d..utt.len() {
            let reference = utt.labels[t - d] as usize;
            let predicted = argmax(logits.row(t));
            confusion[reference * n_o + predicted] += 1;
            frames += 1;
            if predicted == reference {
                correct += 1;
            }
        }
    }
    let accuracy = if frames > 0 { correct as f64 / frames as f64 } else { 0.0 };
    Ok(EvalReport { frames, correct, accuracy, confusion, n_classes: n_o })
}

/// Largest architecture of the template's shape that fits a parameter
/// budget. `n_c` grows (and `n_r`/`n_p` with it, preserving the template's
/// ratios) until the weight count would exceed `w_star`; reports the spec
/// achieving the largest count `<= w_star`.
pub fn matched_budget(template: &ArchSpec, w_star: usize) -> Result<ArchSpec> {
    template.validate()?;
    let r_ratio = template.n_r.map(|n_r| n_r as f64 / template.n_c as f64);
    let p_ratio = template.n_p.map(|n_p| n_p as f64 / template.n_c as f64);
    let sized = |n_c: usize| -> ArchSpec {
        let scale = |ratio: f64| ((n_c as f64 * ratio).round() as usize).max(1);
        ArchSpec {
            n_c,
            n_r: r_ratio.map(scale),
            n_p: p_ratio.map(scale),
            ..*template
        }
    };
    let minimum = param_count(&sized(1), false);
    if minimum > w_star {
        return Err(Error::InfeasibleBudget { budget: w_star, minimum });
    }
    let mut hi = 1usize;
    while param_count(&sized(hi * 2), false) <= w_star {
        hi *= 2;
    }
    let mut lo = hi; // invariant: sized(lo) fits
    hi *= 2; // sized(hi) exceeds
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if param_count(&sized(mid), false) <= w_star {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(sized(lo))
}

/// One architecture entry in a comparison run.
#[derive(Clone, Debug)]
pub struct CompareTemplate {
    pub name: String,
    pub template: ArchSpec,
    /// Task-tuned initial learning rate for this architecture.
    pub lr0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunOutcome {
    Completed { dev_accuracy: f64 },
    /// Instability is an outcome, not a harness failure.
    Diverged { step: u64 },
}

#[derive(Clone, Debug)]
pub struct CompareRow {
    pub name: String,
    pub spec: ArchSpec,
    pub params: usize,
    pub outcome: RunOutcome,
    pub steps: u64,
    pub frames_seen: u64,
    pub wall_clock_sec: f64,
    pub curve: Vec<CurvePoint>,
}

impl CompareRow {
    /// Table row: architecture, params, final dev accuracy, steps, seconds.
    pub fn to_tsv_row(&self) -> String {
        let acc = match &self.outcome {
            RunOutcome::Completed { dev_accuracy } => format!("{dev_accuracy:.4}"),
            RunOutcome::Diverged { step } => format!("diverged@{step}"),
        };
        format!(
            "{}\t{}\t{}\t{}\t{:.1}",
            self.name, self.params, acc, self.steps, self.wall_clock_sec
        )
    }
}

pub const COMPARE_HEADER: &str = "architecture\tparams\tfinal_dev_accuracy\tsteps\twall_clock_sec";

/// Train each template at a matched parameter budget on the same data and a
/// fixed total frame budget, and report aligned curves and final dev
/// accuracies. Divergence (the instability failure mode of unclipped
/// recurrences) is recorded as an outcome.
pub fn compare_architectures<S: Scalar>(
    train_ds: &SequenceDataset,
    dev_ds: &SequenceDataset,
    templates: &[CompareTemplate],
    budget: usize,
    frame_budget: u64,
    base: &TrainConfig,
) -> Result<Vec<CompareRow>> {
    let mut rows = Vec::with_capacity(templates.len());
    for tpl in templates {
        let spec = matched_budget(&tpl.template, budget)?;
        let mut cfg = base.clone();
        cfg.arch = spec;
        cfg.lr.lr0 = tpl.lr0;
        cfg.max_frames = Some(frame_budget);
        // generous step ceiling; the frame budget is the binding limit
        cfg.max_steps = u64::MAX / 2;
        let started = Instant::now();
        let result = if cfg.workers == 1 {
            train_sync::<S>(&cfg, train_ds, dev_ds, None, None)
        } else {
            train_async::<S>(&cfg, train_ds, dev_ds, None, None)
        };
        let wall = started.elapsed().as_secs_f64();
        let row = match result {
            Ok(out) => CompareRow {
                name: tpl.name.clone(),
                spec,
                params: param_count(&spec, false),
                outcome: RunOutcome::Completed {
                    dev_accuracy: out.curve.last().map(|p| p.dev_frame_accuracy).unwrap_or(0.0),
                },
                steps: out.steps,
                frames_seen: out.frames_seen,
                wall_clock_sec: wall,
                curve: out.curve,
            },
            Err(Error::Diverged { step, .. }) => CompareRow {
                name: tpl.name.clone(),
                spec,
                params: param_count(&spec, false),
                outcome: RunOutcome::Diverged { step },
                steps: step,
                frames_seen: 0,
                wall_clock_sec: wall,
                curve: Vec::new(),
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    Ok(rows)
}
