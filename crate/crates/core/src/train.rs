//! The training loop: lane-based subsequence scheduling with state
//! carry-over, cross-entropy with output delay, exponential learning-rate
//! decay, and SGD in both synchronous single-worker and asynchronous
//! multi-worker (hogwild) form.
//!
//! Each worker owns `lanes_per_worker` lanes. A lane is bound to one
//! utterance at a time and yields consecutive windows of at most `t_bptt`
//! frames; cell state carries across a lane's windows and is reset when the
//! lane pulls a new utterance. The windows of one batch are processed as one
//! lane-parallel forward/backward (matrix-matrix work per time step); short
//! windows at utterance ends are padded with zero frames and masked targets,
//! which contribute nothing to loss or gradients.
//!
//! The shared parameter store is the single shared mutable object. Updates
//! are applied element-atomically without any lock over the full step:
//! concurrent readers may observe a mix of old and new elements. With one
//! worker the asynchronous path degenerates to the synchronous one,
//! bit for bit.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cells::{
    forward_batch, init_params, reset_state, ArchSpec, BatchState, CellState, ModelParams,
    StepCache,
};
use crate::data::SequenceDataset;
use crate::error::{Error, Result};
use crate::eval::frame_accuracy;
use crate::grad::{backward_batch, clip_gradients, ClipPolicy, Gradients};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Exponentially decayed learning rate with a real-valued exponent:
/// `lr(step) = lr0 * decay_factor^(step / decay_interval)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_interval: u64,
}

impl LrSchedule {
    pub fn constant(lr0: f64) -> LrSchedule {
        LrSchedule { lr0, decay_factor: 0.5, decay_interval: u64::MAX }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        self.lr0 * self.decay_factor.powf(step as f64 / self.decay_interval as f64)
    }

    pub fn validate(&self) -> Result<()> {
        // lr0 = 0 is accepted as the degenerate "never update" case.
        if !(self.lr0 >= 0.0) {
            return Err(Error::InvalidArg(format!("lr0 must be >= 0, got {}", self.lr0)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::InvalidArg(format!(
                "decay_factor must be in (0, 1], got {}",
                self.decay_factor
            )));
        }
        if self.decay_interval == 0 {
            return Err(Error::InvalidArg("decay_interval must be >= 1".into()));
        }
        Ok(())
    }
}

/// Free-function form of [`LrSchedule::lr_at`].
pub fn lr_at(schedule: &LrSchedule, step: u64) -> f64 {
    schedule.lr_at(step)
}

/// Everything one training run needs.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub arch: ArchSpec,
    pub t_bptt: usize,
    pub lanes_per_worker: usize,
    pub workers: usize,
    pub lr: LrSchedule,
    pub clip: ClipPolicy,
    pub output_delay: usize,
    pub max_steps: u64,
    /// Optional raw-frame budget; training stops once this many frames have
    /// been consumed, whichever of steps/frames comes first.
    pub max_frames: Option<u64>,
    pub eval_interval: u64,
    pub seed: u64,
    pub init_scale: f64,
    pub forget_bias: f64,
}

impl TrainConfig {
    pub fn new(arch: ArchSpec) -> TrainConfig {
        TrainConfig {
            arch,
            t_bptt: 20,
            lanes_per_worker: 4,
            workers: 1,
            lr: LrSchedule { lr0: 0.1, decay_factor: 0.9, decay_interval: 1000 },
            clip: ClipPolicy::default(),
            output_delay: 0,
            max_steps: 1000,
            max_frames: None,
            eval_interval: 100,
            seed: 1,
            init_scale: 0.04,
            forget_bias: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.lr.validate()?;
        self.clip.validate()?;
        if self.t_bptt < 1 {
            return Err(Error::InvalidArg("t_bptt must be >= 1".into()));
        }
        if self.lanes_per_worker < 1 {
            return Err(Error::InvalidArg("lanes_per_worker must be >= 1".into()));
        }
        if self.workers < 1 {
            return Err(Error::InvalidArg("workers must be >= 1".into()));
        }
        if self.max_steps < 1 {
            return Err(Error::InvalidArg("max_steps must be >= 1".into()));
        }
        if self.eval_interval < 1 {
            return Err(Error::InvalidArg("eval_interval must be >= 1".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::InvalidArg("init_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Delay targets by `d` frames: the target at time `t` is `labels[t - d]`,
/// and the first `d` frames are masked out of the loss.
pub fn apply_output_delay(labels: &[u32], d: usize) -> Vec<Option<u32>> {
    (0..labels.len()).map(|t| if t >= d { Some(labels[t - d]) } else { None }).collect()
}

/// Lock-free shared parameter store: one atomic slot per scalar, in the
/// canonical block order. Every read and write of a slot is atomic; nothing
/// orders distinct slots, so readers can see mixed versions.
pub struct ParamStore<S: Scalar> {
    spec: ArchSpec,
    slots: Vec<S::Atomic>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new(params: &ModelParams<S>) -> ParamStore<S> {
        let slots = params
            .blocks()
            .iter()
            .flat_map(|b| b.data.iter().map(|&v| S::atomic_new(v)))
            .collect();
        ParamStore { spec: *params.spec(), slots }
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    /// Copy the current values into an owned `ModelParams`. Under concurrent
    /// updates the copy may mix parameter versions (accepted behavior).
    pub fn snapshot(&self) -> ModelParams<S> {
        let mut params = ModelParams::zeros(&self.spec).expect("store spec is valid");
        let mut cursor = 0;
        for blk in params.blocks_mut() {
            for v in blk.data {
                *v = S::atomic_load(&self.slots[cursor]);
                cursor += 1;
            }
        }
        params
    }

    fn apply_scaled(&self, g: &Gradients<S>, scale: S) {
        let mut cursor = 0;
        for blk in g.blocks() {
            for &gv in blk.data {
                let slot = &self.slots[cursor];
                S::atomic_store(slot, S::atomic_load(slot) - scale * gv);
                cursor += 1;
            }
        }
    }
}

/// One SGD update: `theta <- theta - lr * g / frames`, element-wise.
pub fn sgd_step<S: Scalar>(store: &ParamStore<S>, g: &Gradients<S>, lr: f64, frames: u64) {
    assert!(frames >= 1, "sgd_step needs frames >= 1");
    store.apply_scaled(g, S::from_config(lr / frames as f64));
}

/// A training lane: one utterance slot with carried cell state.
pub struct Lane<S: Scalar> {
    pub utt: Option<usize>,
    pub cursor: usize,
    pub state: CellState<S>,
    targets: Vec<Option<u32>>,
}

/// One emitted subsequence window (metadata plus delay-adjusted targets).
#[derive(Clone, Debug, PartialEq)]
pub struct LaneWindow {
    pub lane: usize,
    pub utt: usize,
    pub start: usize,
    pub len: usize,
    pub fresh: bool,
    pub targets: Vec<Option<u32>>,
}

/// Splits the utterances of one worker's partition into per-lane windows in
/// original frame order, carrying state between a lane's windows and
/// resetting it when the lane is refilled from the next utterance.
pub struct LaneScheduler<S: Scalar> {
    spec: ArchSpec,
    t_bptt: usize,
    output_delay: usize,
    order: Vec<usize>,
    next: usize,
    pub lanes: Vec<Lane<S>>,
}

impl<S: Scalar> LaneScheduler<S> {
    pub fn new(
        spec: &ArchSpec,
        t_bptt: usize,
        output_delay: usize,
        order: Vec<usize>,
        lanes: usize,
    ) -> LaneScheduler<S> {
        LaneScheduler {
            spec: *spec,
            t_bptt,
            output_delay,
            order,
            next: 0,
            lanes: (0..lanes)
                .map(|_| Lane {
                    utt: None,
                    cursor: 0,
                    state: reset_state(spec),
                    targets: Vec::new(),
                })
                .collect(),
        }
    }

    /// Emit the next batch of windows, refilling exhausted lanes. Returns
    /// `None` when the partition is fully consumed and all lanes drained.
    pub fn advance(&mut self, ds: &SequenceDataset) -> Option<Vec<LaneWindow>> {
        let mut windows = Vec::new();
        for lane_idx in 0..self.lanes.len() {
            let lane = &mut self.lanes[lane_idx];
            let mut fresh = false;
            let exhausted = match lane.utt {
                None => true,
                Some(u) => lane.cursor >= ds.utterances[u].len(),
            };
            if exhausted {
                if self.next >= self.order.len() {
                    lane.utt = None;
                    continue;
                }
                let u = self.order[self.next];
                self.next += 1;
                lane.utt = Some(u);
                lane.cursor = 0;
                lane.state = reset_state(&self.spec);
                lane.targets = apply_output_delay(&ds.utterances[u].labels, self.output_delay);
                fresh = true;
            }
            let u = lane.utt.unwrap();
            let remaining = ds.utterances[u].len() - lane.cursor;
            let len = remaining.min(self.t_bptt);
            windows.push(LaneWindow {
                lane: lane_idx,
                utt: u,
                start: lane.cursor,
                len,
                fresh,
                targets: lane.targets[lane.cursor..lane.cursor + len].to_vec(),
            });
            lane.cursor += len;
        }
        if windows.is_empty() {
            None
        } else {
            Some(windows)
        }
    }
}

/// One curve row emitted at each evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub wall_clock_sec: f64,
    pub step: u64,
    pub frames_seen: u64,
    pub dev_frame_accuracy: f64,
    pub train_loss: f64,
}

pub const CURVE_HEADER: &str = "wall_clock_sec,step,frames_seen,dev_frame_accuracy,train_loss";

impl CurvePoint {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.wall_clock_sec, self.step, self.frames_seen, self.dev_frame_accuracy, self.train_loss
        )
    }
}

/// Callback invoked (from whichever worker crossed the evaluation boundary)
/// with each curve point and a snapshot of the parameters at that moment.
pub trait EvalObserver<S: Scalar>: Sync {
    fn on_eval(&self, point: &CurvePoint, snapshot: &ModelParams<S>);
}

/// Warm-start for resumed runs: parameters plus the step counter to continue
/// from (the counter keeps increasing monotonically across resumes).
pub struct ResumePoint<S: Scalar> {
    pub params: ModelParams<S>,
    pub step: u64,
}

#[derive(Debug)]
pub struct TrainOutcome<S: Scalar> {
    pub params: ModelParams<S>,
    pub curve: Vec<CurvePoint>,
    pub steps: u64,
    pub frames_seen: u64,
    pub wall_clock_sec: f64,
}

struct SharedRun<'a, S: Scalar> {
    cfg: &'a TrainConfig,
    store: ParamStore<S>,
    dev: &'a SequenceDataset,
    step: AtomicU64,
    frames: AtomicU64,
    loss_window: Mutex<(f64, u64)>,
    curve: Mutex<Vec<CurvePoint>>,
    stop: AtomicBool,
    failure: Mutex<Option<Error>>,
    started: Instant,
    observer: Option<&'a dyn EvalObserver<S>>,
}

impl<'a, S: Scalar> SharedRun<'a, S> {
    fn record_eval(&self, step: u64) {
        let snapshot = self.store.snapshot();
        let report = frame_accuracy(&snapshot, self.dev, self.cfg.output_delay)
            .expect("dev set validated before training");
        let (loss_sum, loss_frames) = {
            let mut acc = self.loss_window.lock().unwrap();
            let out = *acc;
            *acc = (0.0, 0);
            out
        };
        let point = CurvePoint {
            wall_clock_sec: self.started.elapsed().as_secs_f64(),
            step,
            frames_seen: self.frames.load(Ordering::Relaxed),
            dev_frame_accuracy: report.accuracy,
            train_loss: if loss_frames > 0 { loss_sum / loss_frames as f64 } else { f64::NAN },
        };
        self.curve.lock().unwrap().push(point);
        if let Some(obs) = self.observer {
            obs.on_eval(&point, &snapshot);
        }
    }

    fn fail(&self, err: Error) {
        let mut slot = self.failure.lock().unwrap();
        if slot.is_none() {
            *slot = Some(err);
        }
        self.stop.store(true, Ordering::Relaxed);
    }
}

fn epoch_rng(seed: u64, worker: usize, epoch: u64) -> ChaCha8Rng {
    let s = seed
        ^ (worker as u64).wrapping_mul(0xA076_1D64_78BD_642F)
        ^ epoch.wrapping_mul(0xE703_7ED1_A0B4_28DB);
    ChaCha8Rng::seed_from_u64(s)
}

/// Round-robin utterance assignment over a seeded shuffle, fixed for the
/// whole run; each worker reshuffles its own partition at its epoch starts.
fn partition_utterances(n: usize, workers: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut parts = vec![Vec::new(); workers];
    for (i, utt) in order.into_iter().enumerate() {
        parts[i % workers].push(utt);
    }
    parts
}

/// Forward/backward one batch of lane windows against a parameter snapshot.
/// Returns (gradients, summed loss, unmasked frames, raw frames).
fn process_batch<S: Scalar>(
    params: &ModelParams<S>,
    ds: &SequenceDataset,
    windows: &[LaneWindow],
    lanes: &mut [Lane<S>],
    act_bound: Option<S>,
) -> (Gradients<S>, S, u64, u64) {
    let spec = params.spec();
    let width = windows.len();
    let t_max = windows.iter().map(|w| w.len).max().unwrap();
    let raw: u64 = windows.iter().map(|w| w.len as u64).sum();

    let lane_states: Vec<&CellState<S>> = windows.iter().map(|w| &lanes[w.lane].state).collect();
    let mut state = BatchState::from_states(&lane_states);

    let mut caches: Vec<StepCache<S>> = Vec::with_capacity(t_max);
    let mut targets: Vec<Vec<Option<u32>>> = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let mut x = Matrix::<S>::zeros(spec.n_i, width);
        let mut tgt_row = Vec::with_capacity(width);
        for (b, w) in windows.iter().enumerate() {
            if t < w.len {
                let frame = ds.utterances[w.utt].frames.row(w.start + t);
                for (i, &v) in frame.iter().enumerate() {
                    x.set(i, b, S::from_config(v as f64));
                }
                tgt_row.push(w.targets[t]);
            } else {
                tgt_row.push(None);
            }
        }
        let (next, cache) = forward_batch(params, &state, &x, act_bound);
        state = next;
        caches.push(cache);
        targets.push(tgt_row);
    }

    let (grads, loss, unmasked) = backward_batch(params, &caches, &targets);

    // Lanes that continue their utterance always ran full windows (len ==
    // t_max); lanes that ended get reset before reuse, so writing the final
    // column back is safe for every lane.
    for (b, w) in windows.iter().enumerate() {
        lanes[w.lane].state = state.col_to_state(b);
    }

    (grads, loss, unmasked, raw)
}

fn run_worker<S: Scalar>(
    shared: &SharedRun<'_, S>,
    ds: &SequenceDataset,
    worker: usize,
    partition: &[usize],
) {
    let cfg = shared.cfg;
    let act_bound = cfg.clip.activation_bound_for(cfg.arch.kind).map(S::from_config);
    let mut epoch: u64 = 0;
    'run: loop {
        let mut order = partition.to_vec();
        order.shuffle(&mut epoch_rng(cfg.seed, worker, epoch));
        let mut sched =
            LaneScheduler::new(&cfg.arch, cfg.t_bptt, cfg.output_delay, order, cfg.lanes_per_worker);
        while let Some(windows) = sched.advance(ds) {
            if shared.stop.load(Ordering::Relaxed) {
                break 'run;
            }
            let params = shared.store.snapshot();
            let (grads, loss, unmasked, raw) =
                process_batch(&params, ds, &windows, &mut sched.lanes, act_bound);

            let loss_f = loss.to_f64().unwrap_or(f64::NAN);
            let step_index = shared.step.fetch_add(1, Ordering::Relaxed);
            let step_done = step_index + 1;
            if !loss_f.is_finite() {
                shared.fail(Error::Diverged { step: step_done, loss: loss_f });
                break 'run;
            }

            let grads = clip_gradients(grads, &cfg.clip);
            if unmasked > 0 {
                sgd_step(&shared.store, &grads, cfg.lr.lr_at(step_index), unmasked);
            }
            let frames_total = shared.frames.fetch_add(raw, Ordering::Relaxed) + raw;
            {
                let mut acc = shared.loss_window.lock().unwrap();
                acc.0 += loss_f;
                acc.1 += unmasked;
            }

            if step_done % cfg.eval_interval == 0 {
                shared.record_eval(step_done);
            }
            let frames_done = cfg.max_frames.map(|m| frames_total >= m).unwrap_or(false);
            if step_done >= cfg.max_steps || frames_done {
                shared.stop.store(true, Ordering::Relaxed);
                break 'run;
            }
        }
        if shared.stop.load(Ordering::Relaxed) {
            break;
        }
        epoch += 1;
    }
}

fn run_training<S: Scalar>(
    cfg: &TrainConfig,
    train_ds: &SequenceDataset,
    dev_ds: &SequenceDataset,
    resume: Option<ResumePoint<S>>,
    observer: Option<&dyn EvalObserver<S>>,
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    for (name, ds) in [("train", train_ds), ("dev", dev_ds)] {
        if ds.n_i != cfg.arch.n_i || ds.n_o != cfg.arch.n_o {
            return Err(Error::shape(
                "train",
                format!(
                    "{name} dataset is n_i={} n_o={} but arch needs n_i={} n_o={}",
                    ds.n_i, ds.n_o, cfg.arch.n_i, cfg.arch.n_o
                ),
            ));
        }
        if ds.utterances.is_empty() {
            return Err(Error::InvalidArg(format!("{name} dataset is empty")));
        }
    }

    let (init, start_step) = match resume {
        Some(r) => {
            if r.params.spec() != &cfg.arch {
                return Err(Error::shape(
                    "train",
                    format!("resume params are {:?}, config wants {:?}", r.params.spec(), cfg.arch),
                ));
            }
            (r.params, r.step)
        }
        None => {
            let mut p = init_params::<S>(&cfg.arch, cfg.seed, cfg.init_scale)?;
            if cfg.forget_bias != 0.0 {
                p.set_forget_bias(S::from_config(cfg.forget_bias));
            }
            (p, 0)
        }
    };

    let shared = SharedRun {
        cfg,
        store: ParamStore::new(&init),
        dev: dev_ds,
        step: AtomicU64::new(start_step),
        frames: AtomicU64::new(0),
        loss_window: Mutex::new((0.0, 0)),
        curve: Mutex::new(Vec::new()),
        stop: AtomicBool::new(false),
        failure: Mutex::new(None),
        started: Instant::now(),
        observer,
    };

    if start_step >= cfg.max_steps {
        return Err(Error::InvalidArg(format!(
            "resume step {start_step} already at or past max_steps {}",
            cfg.max_steps
        )));
    }

    let parts = partition_utterances(train_ds.utterances.len(), cfg.workers, cfg.seed);
    if cfg.workers == 1 {
        run_worker(&shared, train_ds, 0, &parts[0]);
    } else {
        std::thread::scope(|scope| {
            for (w, part) in parts.iter().enumerate() {
                let shared = &shared;
                scope.spawn(move || run_worker(shared, train_ds, w, part));
            }
        });
    }

    if let Some(err) = shared.failure.lock().unwrap().take() {
        return Err(err);
    }

    let steps = shared.step.load(Ordering::Relaxed);
    // Close the curve with a final point unless the last step already
    // produced one.
    if steps % cfg.eval_interval != 0 {
        shared.record_eval(steps);
    }

    let mut curve = shared.curve.lock().unwrap().clone();
    curve.sort_by_key(|p| p.step);
    Ok(TrainOutcome {
        params: shared.store.snapshot(),
        curve,
        steps,
        frames_seen: shared.frames.load(Ordering::Relaxed),
        wall_clock_sec: shared.started.elapsed().as_secs_f64(),
    })
}

/// Deterministic single-worker training: identical (config, datasets, seed)
/// reproduce the learning trajectory and final parameters bit for bit
/// (wall-clock readings aside).
pub fn train_sync<S: Scalar>(
    cfg: &TrainConfig,
    train_ds: &SequenceDataset,
    dev_ds: &SequenceDataset,
    resume: Option<ResumePoint<S>>,
    observer: Option<&dyn EvalObserver<S>>,
) -> Result<TrainOutcome<S>> {
    if cfg.workers != 1 {
        return Err(Error::InvalidArg(format!(
            "train_sync requires workers = 1, got {}",
            cfg.workers
        )));
    }
    run_training(cfg, train_ds, dev_ds, resume, observer)
}

/// Asynchronous multi-worker training over the shared store. Workers take
/// disjoint utterance partitions, compute window gradients against the
/// current parameters and apply updates without mutual exclusion; with
/// `workers = 1` this reproduces [`train_sync`] exactly.
pub fn train_async<S: Scalar>(
    cfg: &TrainConfig,
    train_ds: &SequenceDataset,
    dev_ds: &SequenceDataset,
    resume: Option<ResumePoint<S>>,
    observer: Option<&dyn EvalObserver<S>>,
) -> Result<TrainOutcome<S>> {
    run_training(cfg, train_ds, dev_ds, resume, observer)
}
