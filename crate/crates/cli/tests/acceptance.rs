//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers (run with `--nocapture` to see them on success).
//!
//! The tests serialize on a shared lock: several train whole models and the
//! timing criterion needs the machine to itself.

use std::sync::{Mutex, MutexGuard, PoisonError};
use std::time::Instant;

use lstmp::cells::{
    forward_sequence, init_params, param_count, reset_state, ArchSpec, ModelParams,
    Weights,
};
use lstmp::data::{
    read_dataset, write_dataset, DelayedEchoSpec, SequenceDataset, SyntheticFramesSpec,
};
use lstmp::eval::matched_budget;
use lstmp::grad::{
    backward_window, gradient_check, ClipPolicy, GRADCHECK_EPSILON, GRADCHECK_SEEDS,
};
use lstmp::linalg::Matrix;
use lstmp::train::{train_async, train_sync, LrSchedule, TrainConfig};
use lstmp::Error;
use lstmp_cli::checkpoint::{load_checkpoint, save_checkpoint};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

static LOCK: Mutex<()> = Mutex::new(());

/// Serialize the criteria (they train whole models and one of them measures
/// wall-clock); a failure elsewhere must not poison the rest of the suite.
fn lock() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(PoisonError::into_inner)
}

fn pass(criterion: u32, name: &str, detail: String) {
    println!("criterion {criterion} ({name}): PASS - {detail}");
}

fn workdir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("lstmp-acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn gradcheck_specs() -> [ArchSpec; 4] {
    [
        ArchSpec::rnn(5, 7, 6),
        ArchSpec::lstm(5, 7, 6),
        ArchSpec::lstm_rp(5, 7, 4, 6),
        ArchSpec::lstm_rp_np(5, 7, 4, 3, 6),
    ]
}

#[test]
fn criterion_1_gradient_correctness() {
    let _g = lock();
    let started = Instant::now();
    let mut worst = 0.0f64;
    for spec in gradcheck_specs() {
        let report = gradient_check(&spec, &GRADCHECK_SEEDS, 12, GRADCHECK_EPSILON, 0.0).unwrap();
        assert!(
            report.max_rel_err < 1e-5,
            "{:?}: max relative error {} >= 1e-5",
            spec.kind,
            report.max_rel_err
        );
        worst = worst.max(report.max_rel_err);
    }
    assert!(started.elapsed().as_secs() < 60, "took {:?}", started.elapsed());
    pass(
        1,
        "gradient correctness",
        format!(
            "4 architectures x {} seeds, T=12: max rel err {:.2e} < 1e-5 in {:.1}s",
            GRADCHECK_SEEDS.len(),
            worst,
            started.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_2_param_count_oracle() {
    let _g = lock();
    // worked values
    assert_eq!(param_count(&ArchSpec::lstm(40, 512, 126), false), 1_196_544);
    assert_eq!(param_count(&ArchSpec::lstm_rp(40, 1024, 256, 2000), false), 1_989_632);
    assert_eq!(
        ModelParams::<f64>::zeros(&ArchSpec::lstm(40, 512, 126)).unwrap().scalar_count(false),
        1_196_544
    );
    assert_eq!(
        ModelParams::<f64>::zeros(&ArchSpec::lstm_rp(40, 1024, 256, 2000))
            .unwrap()
            .scalar_count(false),
        1_989_632
    );

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for _ in 0..50 {
        let n_i = rng.random_range(1..48);
        let n_c = rng.random_range(1..48);
        let n_r = rng.random_range(1..32);
        let n_p = rng.random_range(1..24);
        let n_o = rng.random_range(1..64);
        for spec in [
            ArchSpec::rnn(n_i, n_c, n_o),
            ArchSpec::lstm(n_i, n_c, n_o),
            ArchSpec::lstm_rp(n_i, n_c, n_r, n_o),
            ArchSpec::lstm_rp_np(n_i, n_c, n_r, n_p, n_o),
        ] {
            let params = ModelParams::<f64>::zeros(&spec).unwrap();
            for biases in [false, true] {
                assert_eq!(
                    param_count(&spec, biases),
                    params.scalar_count(biases),
                    "formula vs instantiated for {spec:?} include_biases={biases}"
                );
            }
            checked += 1;
        }
    }
    pass(
        2,
        "parameter-count oracle",
        format!("{checked} random specs + 2 worked values: formula == instantiated count"),
    );
}

#[test]
fn criterion_3_architecture_reductions() {
    let _g = lock();
    // Recurrent projection with n_r = n_c and identity W_rm reduces to the
    // standard LSTM.
    let n_c = 6;
    let rp_spec = ArchSpec::lstm_rp(4, n_c, n_c, 5);
    let mut rp = init_params::<f64>(&rp_spec, 77, 0.3).unwrap();
    if let Weights::LstmRp { w_rm, .. } = &mut rp.weights {
        *w_rm = Matrix::identity(n_c);
    }
    let lstm_spec = ArchSpec::lstm(4, n_c, 5);
    let mut lstm = ModelParams::<f64>::zeros(&lstm_spec).unwrap();
    if let (
        Weights::LstmRp { gates: gr, w_yr, b_y: by_r, .. },
        Weights::Lstm { gates: gl, w_ym, b_y },
    ) = (&rp.weights, &mut lstm.weights)
    {
        *gl = gr.clone();
        *w_ym = w_yr.clone();
        *b_y = by_r.clone();
    }
    let mut max_diff = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let frames = Matrix::from_fn(20, 4, |_, _| rng.random_range(-1.0..=1.0));
        let (_, _, y_rp) = forward_sequence(&rp, &reset_state(&rp_spec), &frames).unwrap();
        let (_, _, y_l) = forward_sequence(&lstm, &reset_state(&lstm_spec), &frames).unwrap();
        for (a, b) in y_rp.data().iter().zip(y_l.data().iter()) {
            max_diff = max_diff.max((a - b).abs());
        }
    }
    assert!(max_diff < 1e-12, "reduction mismatch {max_diff}");

    // Dual projection equals a single stacked projection whose recurrence
    // reads only the first n_r rows.
    let (n_i, n_c, n_r, n_p, n_o) = (3, 5, 2, 3, 4);
    let np_spec = ArchSpec::lstm_rp_np(n_i, n_c, n_r, n_p, n_o);
    let np = init_params::<f64>(&np_spec, 78, 0.3).unwrap();
    let wide_spec = ArchSpec::lstm_rp(n_i, n_c, n_r + n_p, n_o);
    let mut wide = ModelParams::<f64>::zeros(&wide_spec).unwrap();
    if let (
        Weights::LstmRpNp { gates: gn, w_rm, w_pm, w_yr, w_yp, b_y: by_n },
        Weights::LstmRp { gates: gw, w_rm: w_rm_w, w_yr: w_yr_w, b_y },
    ) = (&np.weights, &mut wide.weights)
    {
        let pad =
            |m: &Matrix<f64>| Matrix::from_fn(n_c, n_r + n_p, |i, j| if j < n_r { m.get(i, j) } else { 0.0 });
        *gw = gn.clone();
        gw.w_im = pad(&gn.w_im);
        gw.w_fm = pad(&gn.w_fm);
        gw.w_cm = pad(&gn.w_cm);
        gw.w_om = pad(&gn.w_om);
        *w_rm_w = Matrix::from_fn(n_r + n_p, n_c, |i, j| {
            if i < n_r { w_rm.get(i, j) } else { w_pm.get(i - n_r, j) }
        });
        *w_yr_w = Matrix::from_fn(n_o, n_r + n_p, |i, j| {
            if j < n_r { w_yr.get(i, j) } else { w_yp.get(i, j - n_r) }
        });
        *b_y = by_n.clone();
    }
    let mut max_diff2 = 0.0f64;
    for _ in 0..100 {
        let frames = Matrix::from_fn(20, n_i, |_, _| rng.random_range(-1.0..=1.0));
        let (_, _, y_np) = forward_sequence(&np, &reset_state(&np_spec), &frames).unwrap();
        let (_, _, y_w) = forward_sequence(&wide, &reset_state(&wide_spec), &frames).unwrap();
        for (a, b) in y_np.data().iter().zip(y_w.data().iter()) {
            max_diff2 = max_diff2.max((a - b).abs());
        }
    }
    assert!(max_diff2 < 1e-12, "equivalence mismatch {max_diff2}");
    pass(
        3,
        "architecture reductions",
        format!(
            "projection reduction max |dy| {max_diff:.2e}, dual-projection equivalence max |dy| {max_diff2:.2e}, both < 1e-12 over 100 x 20-step sequences"
        ),
    );
}

#[test]
fn criterion_4_truncation_and_carry_over() {
    let _g = lock();
    use lstmp::cells::{forward_batch, BatchState};
    use lstmp::train::LaneScheduler;

    let ds = DelayedEchoSpec {
        n_symbols: 6,
        delay: 3,
        utterances: 3,
        min_len: 35,
        max_len: 60,
        seed: 44,
    }
    .generate()
    .unwrap();
    let spec = ArchSpec::lstm_rp(6, 8, 4, 6);
    let params = init_params::<f64>(&spec, 9, 0.25).unwrap();

    // windowed forward logits equal whole-sequence logits
    let mut max_diff = 0.0f64;
    for t_bptt in [1usize, 7, 20] {
        for (u, utt) in ds.utterances.iter().enumerate() {
            let frames = utt.frames.convert::<f64>();
            let (_, _, whole) = forward_sequence(&params, &reset_state(&spec), &frames).unwrap();
            let mut sched = LaneScheduler::<f64>::new(&spec, t_bptt, 0, vec![u], 1);
            let mut t_abs = 0usize;
            while let Some(ws) = sched.advance(&ds) {
                let w = &ws[0];
                let mut state = BatchState::from_states(&[&sched.lanes[0].state]);
                for t in 0..w.len {
                    let mut x = Matrix::<f64>::zeros(6, 1);
                    for (i, &v) in utt.frames.row(w.start + t).iter().enumerate() {
                        x.set(i, 0, v as f64);
                    }
                    let (next, cache) = forward_batch(&params, &state, &x, None);
                    state = next;
                    for k in 0..6 {
                        max_diff = max_diff.max((whole.get(t_abs, k) - cache.logits().get(k, 0)).abs());
                    }
                    t_abs += 1;
                }
                sched.lanes[0].state = state.col_to_state(0);
            }
            assert_eq!(t_abs, utt.len());
        }
    }
    assert!(max_diff < 1e-12, "carry-over mismatch {max_diff}");

    // T_bptt >= T: gradients from the windowed training path (scheduler +
    // lane-batched forward/backward) equal full-BPTT gradients from the
    // whole-sequence path.
    let short = DelayedEchoSpec {
        n_symbols: 6,
        delay: 3,
        utterances: 1,
        min_len: 12,
        max_len: 12,
        seed: 92,
    }
    .generate()
    .unwrap();
    let utt = &short.utterances[0];
    let targets: Vec<Option<u32>> = utt.labels.iter().map(|&l| Some(l)).collect();

    let state = reset_state(&spec);
    let (_, caches, _) =
        forward_sequence(&params, &state, &utt.frames.convert::<f64>()).unwrap();
    let (g_full, loss_full) = backward_window(&params, &caches, &targets, &state).unwrap();

    let mut sched = lstmp::train::LaneScheduler::<f64>::new(&spec, 20, 0, vec![0], 1);
    let windows = sched.advance(&short).unwrap();
    assert_eq!(windows.len(), 1);
    assert_eq!(windows[0].len, 12, "T_bptt=20 >= T=12 gives one full window");
    let mut batch_state = lstmp::cells::BatchState::from_states(&[&sched.lanes[0].state]);
    let mut batch_caches = Vec::new();
    let mut batch_targets = Vec::new();
    for t in 0..windows[0].len {
        let mut x = Matrix::<f64>::zeros(6, 1);
        for (i, &v) in utt.frames.row(t).iter().enumerate() {
            x.set(i, 0, v as f64);
        }
        let (next, cache) = forward_batch(&params, &batch_state, &x, None);
        batch_state = next;
        batch_caches.push(cache);
        batch_targets.push(vec![windows[0].targets[t]]);
    }
    let (g_win, loss_win, _) =
        lstmp::grad::backward_batch(&params, &batch_caches, &batch_targets);
    let mut max_gdiff = (loss_full - loss_win).abs();
    for (a, b) in g_full.blocks().iter().zip(g_win.blocks().iter()) {
        for (&x, &y) in a.data.iter().zip(b.data.iter()) {
            max_gdiff = max_gdiff.max((x - y).abs());
        }
    }
    assert!(max_gdiff < 1e-12, "training-path vs full-BPTT gradient diff {max_gdiff}");
    pass(
        4,
        "truncation and carry-over",
        format!("windowed vs whole logits max diff {max_diff:.2e} over T_bptt in {{1,7,20}}; full-window gradient diff {max_gdiff:.2e}"),
    );
}

#[test]
fn criterion_5_asgd_degeneracy() {
    let _g = lock();
    let started = Instant::now();
    let ds = DelayedEchoSpec {
        n_symbols: 6,
        delay: 4,
        utterances: 60,
        min_len: 20,
        max_len: 40,
        seed: 10,
    }
    .generate()
    .unwrap();
    let (train, dev) = lstmp::data::split_dataset(&ds, 0.1, 1).unwrap();
    let mut cfg = TrainConfig::new(ArchSpec::lstm(6, 24, 6));
    cfg.t_bptt = 10;
    cfg.lanes_per_worker = 4;
    cfg.lr = LrSchedule { lr0: 0.8, decay_factor: 0.9, decay_interval: 400 };
    cfg.max_steps = 1000;
    cfg.eval_interval = 250;
    cfg.seed = 19;
    cfg.init_scale = 0.2;

    let sync = train_sync::<f64>(&cfg, &train, &dev, None, None).unwrap();
    let asyn = train_async::<f64>(&cfg, &train, &dev, None, None).unwrap();
    assert_eq!(sync.steps, 1000);
    assert_eq!(sync.steps, asyn.steps);
    assert_eq!(sync.frames_seen, asyn.frames_seen);
    assert_eq!(sync.params, asyn.params, "parameters differ between sync and 1-worker async");
    assert!(started.elapsed().as_secs() < 60);
    pass(
        5,
        "ASGD degeneracy",
        format!(
            "workers=1 async == sync bitwise over 1000 steps ({} params, {:.1}s)",
            param_count(&cfg.arch, true),
            started.elapsed().as_secs_f64()
        ),
    );
}

/// Criterion-6 task: delayed echo, 8 symbols, delay 10, 2000 utterances of
/// 50..100 frames.
fn fig1_task() -> SequenceDataset {
    DelayedEchoSpec {
        n_symbols: 8,
        delay: 10,
        utterances: 2000,
        min_len: 50,
        max_len: 100,
        seed: 61,
    }
    .generate()
    .unwrap()
}

/// Training setup shared by criteria 6 and 8; tuned for the delayed-echo
/// task at the ~50k budget.
fn fig1_config(arch: ArchSpec, lr0: f64, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::new(arch);
    cfg.t_bptt = 20;
    cfg.lanes_per_worker = 4;
    cfg.output_delay = 0;
    cfg.lr = LrSchedule { lr0, decay_factor: 0.7, decay_interval: 8000 };
    cfg.max_steps = 32_000;
    cfg.eval_interval = 800;
    cfg.seed = seed;
    cfg.init_scale = 0.2;
    cfg.forget_bias = 1.0;
    cfg
}

/// The LSTM learning rate tuned (largest that still converges to 0.99+;
/// lr0 = 5 no longer does) for the criterion-6 task; the RNN uses the same
/// value, which is also inside its own stable region on this task.
const FIG1_LSTM_LR: f64 = 3.5;
const FIG1_RNN_LR: f64 = 3.5;

#[test]
fn criterion_6_fig1_style_ordering() {
    let _g = lock();
    let started = Instant::now();
    let ds = fig1_task();
    let (train, dev) = lstmp::data::split_dataset(&ds, 0.05, 1).unwrap();

    let budget = 50_000;
    let lstm_spec = matched_budget(&ArchSpec::lstm(8, 1, 8), budget).unwrap();
    let rnn_spec = matched_budget(&ArchSpec::rnn(8, 1, 8), budget).unwrap();

    let lstm_out =
        train_sync::<f64>(&fig1_config(lstm_spec, FIG1_LSTM_LR, 3), &train, &dev, None, None)
            .unwrap();
    // the RNN gets more frames than the LSTM needs for 0.95, so the
    // frames-to-threshold comparison cannot be an artifact of a short run
    let mut rnn_cfg = fig1_config(rnn_spec, FIG1_RNN_LR, 3);
    rnn_cfg.max_steps = 20_000;
    let rnn_out = train_sync::<f64>(&rnn_cfg, &train, &dev, None, None).unwrap();

    let lstm_final = lstm_out.curve.last().unwrap().dev_frame_accuracy;
    let rnn_final = rnn_out.curve.last().unwrap().dev_frame_accuracy;
    let frames_to = |curve: &[lstmp::train::CurvePoint], acc: f64| {
        curve.iter().find(|p| p.dev_frame_accuracy >= acc).map(|p| p.frames_seen)
    };
    let lstm_95 = frames_to(&lstm_out.curve, 0.95);
    let rnn_95 = frames_to(&rnn_out.curve, 0.95);

    assert!(lstm_final >= 0.99, "LSTM final accuracy {lstm_final} < 0.99");
    assert!(rnn_final < lstm_final, "RNN {rnn_final} not strictly below LSTM {lstm_final}");
    let lstm_frames = lstm_95.expect("LSTM reached 0.95");
    match rnn_95 {
        Some(rnn_frames) => assert!(
            lstm_frames < rnn_frames,
            "LSTM {lstm_frames} vs RNN {rnn_frames} frames to 0.95"
        ),
        // the RNN never got there despite consuming more frames than the
        // LSTM needed
        None => assert!(rnn_out.frames_seen > lstm_frames),
    }
    assert!(started.elapsed().as_secs() < 900, "took {:?}", started.elapsed());
    pass(
        6,
        "matched-budget LSTM vs RNN ordering",
        format!(
            "LSTM({} params) final {lstm_final:.3} >= 0.99, RNN({} params) final {rnn_final:.3}; frames to 0.95: LSTM {} vs RNN {:?}; {:.0}s",
            param_count(&lstm_spec, false),
            param_count(&rnn_spec, false),
            lstm_frames,
            rnn_95,
            started.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_7_projection_benefit() {
    let _g = lock();
    let started = Instant::now();
    // noise tuned so the nearest-mean baseline lands in 0.6..0.7
    let gen = SyntheticFramesSpec {
        n_phones: 14,
        states_per_phone: 3,
        feature_dim: 40,
        noise: 1.35,
        utterances: 800,
        min_len: 50,
        max_len: 100,
        seed: 71,
    };
    let ds = gen.generate().unwrap();
    let baseline = gen.nearest_mean_accuracy(&ds);
    assert!(
        (0.6..=0.7).contains(&baseline),
        "nearest-mean baseline {baseline} outside 0.6..0.7"
    );
    let (train, dev) = lstmp::data::split_dataset(&ds, 0.1, 2).unwrap();

    // LSTM_RP with n_c = 2n, n_r = n/2; standard LSTM matched to its budget
    let n = 48;
    let rp_spec = ArchSpec::lstm_rp(40, 2 * n, n / 2, 42);
    let budget = param_count(&rp_spec, false);
    let lstm_spec = matched_budget(&ArchSpec::lstm(40, 1, 42), budget).unwrap();

    let mut accs_rp = Vec::new();
    let mut accs_lstm = Vec::new();
    for seed in [1u64, 2, 3] {
        for (spec, accs) in [(rp_spec, &mut accs_rp), (lstm_spec, &mut accs_lstm)] {
            let mut cfg = TrainConfig::new(spec);
            cfg.t_bptt = 20;
            cfg.lanes_per_worker = 4;
            cfg.output_delay = 5;
            cfg.lr = LrSchedule { lr0: 0.3, decay_factor: 0.7, decay_interval: 3000 };
            cfg.max_steps = 8000;
            cfg.eval_interval = 2000;
            cfg.seed = seed;
            cfg.init_scale = 0.1;
            cfg.forget_bias = 1.0;
            let out = train_sync::<f64>(&cfg, &train, &dev, None, None).unwrap();
            accs.push(out.curve.last().unwrap().dev_frame_accuracy);
        }
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let rp_med = median(&mut accs_rp);
    let lstm_med = median(&mut accs_lstm);
    assert!(
        rp_med >= lstm_med - 0.02,
        "LSTM_RP median {rp_med} below LSTM median {lstm_med} - 0.02"
    );
    assert!(started.elapsed().as_secs() < 1800, "took {:?}", started.elapsed());
    pass(
        7,
        "projection benefit direction",
        format!(
            "baseline {baseline:.3}; LSTM_RP(c{}, r{}, {} params) median {rp_med:.3} vs LSTM(c{}, {} params) median {lstm_med:.3} over 3 seeds; {:.0}s",
            rp_spec.n_c,
            rp_spec.n_r.unwrap(),
            param_count(&rp_spec, false),
            lstm_spec.n_c,
            param_count(&lstm_spec, false),
            started.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_8_rnn_instability_observable() {
    let _g = lock();
    let started = Instant::now();
    let ds = fig1_task();
    let (train, dev) = lstmp::data::split_dataset(&ds, 0.05, 1).unwrap();
    let rnn_spec = matched_budget(&ArchSpec::rnn(8, 1, 8), 50_000).unwrap();

    // With default clipping the run completes.
    let mut cfg = fig1_config(rnn_spec, FIG1_LSTM_LR, 1);
    cfg.clip = ClipPolicy::default();
    cfg.max_steps = 3000;
    let clipped = train_sync::<f64>(&cfg, &train, &dev, None, None);
    assert!(clipped.is_ok(), "clipped RNN run failed: {:?}", clipped.err().map(|e| e.to_string()));

    // Clipping disabled at the LSTM-tuned learning rate: the divergence
    // detector is expected to fire on at least one of three seeds.
    //
    // Known to fail: per-frame-normalized updates keep each SGD step
    // bounded by lr/frames, the sigmoid hidden units self-saturate (their
    // derivative collapses before the backward product can amplify), and
    // the max-subtracted softmax keeps the loss finite until the target
    // log-probability underflows at a ~746-nat logit gap, which a bounded
    // random walk cannot reach at this learning rate in any practical
    // horizon. Divergence is reachable (the detector fires at lr >= ~1e4)
    // but not at the tuned rate.
    let mut diverged = 0;
    for seed in [1u64, 2, 3] {
        let mut cfg = fig1_config(rnn_spec, FIG1_LSTM_LR, seed);
        cfg.clip = ClipPolicy::disabled();
        cfg.max_steps = 8000;
        match train_sync::<f64>(&cfg, &train, &dev, None, None) {
            Err(Error::Diverged { .. }) => diverged += 1,
            Ok(_) => {}
            Err(e) => panic!("unexpected error: {e}"),
        }
    }
    assert!(
        diverged >= 1,
        "no divergence in 3 unclipped RNN runs of 8000 steps at the LSTM-tuned lr {FIG1_LSTM_LR} \
         (clipped run completes; see the decisions ledger for the stability analysis)"
    );
    assert!(started.elapsed().as_secs() < 600, "took {:?}", started.elapsed());
    pass(
        8,
        "RNN instability observability",
        format!(
            "unclipped @ lr {FIG1_LSTM_LR}: {diverged}/3 seeds diverged; default clipping completes; {:.0}s",
            started.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_9_step_cost_linear_in_params() {
    let _g = lock();
    let started = Instant::now();
    // frame task shaped like the acoustic setting: 40-dim input, 126 states
    let gen = SyntheticFramesSpec {
        n_phones: 42,
        states_per_phone: 3,
        feature_dim: 40,
        noise: 1.0,
        utterances: 24,
        min_len: 60,
        max_len: 100,
        seed: 5,
    };
    let ds = gen.generate().unwrap();
    let (train, dev) = lstmp::data::split_dataset(&ds, 0.2, 1).unwrap();

    let budgets = [250_000usize, 500_000, 1_000_000, 2_000_000];
    let mut ws = Vec::new();
    let mut times = Vec::new();
    for &budget in &budgets {
        let spec = matched_budget(&ArchSpec::lstm(40, 1, 126), budget).unwrap();
        let w = param_count(&spec, false) as f64;
        let steps = 12u64;
        let mut best = f64::INFINITY;
        for seed in [1u64, 2] {
            let mut cfg = TrainConfig::new(spec);
            cfg.t_bptt = 20;
            cfg.lanes_per_worker = 4;
            cfg.lr = LrSchedule::constant(0.05);
            cfg.max_steps = steps;
            cfg.eval_interval = steps + 1; // only the closing eval
            cfg.seed = seed;
            cfg.init_scale = 0.05;
            let t0 = Instant::now();
            let out = train_sync::<f64>(&cfg, &train, &dev, None, None).unwrap();
            assert_eq!(out.steps, steps);
            best = best.min(t0.elapsed().as_secs_f64() / steps as f64);
        }
        ws.push(w);
        times.push(best);
    }

    // least squares fit time = a*W + b and its R^2
    let n = ws.len() as f64;
    let mean_w = ws.iter().sum::<f64>() / n;
    let mean_t = times.iter().sum::<f64>() / n;
    let sxx: f64 = ws.iter().map(|w| (w - mean_w) * (w - mean_w)).sum();
    let sxy: f64 = ws.iter().zip(&times).map(|(w, t)| (w - mean_w) * (t - mean_t)).sum();
    let a = sxy / sxx;
    let b = mean_t - a * mean_w;
    let ss_res: f64 = ws.iter().zip(&times).map(|(w, t)| (t - (a * w + b)).powi(2)).sum();
    let ss_tot: f64 = times.iter().map(|t| (t - mean_t) * (t - mean_t)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    assert!(r2 >= 0.95, "R^2 {r2} < 0.95 for per-step time vs W: {ws:?} {times:?}");
    assert!(started.elapsed().as_secs() < 600, "took {:?}", started.elapsed());
    pass(
        9,
        "O(W) step cost",
        format!(
            "per-step seconds {:?} over W {:?}: linear fit R^2 = {r2:.4} >= 0.95; {:.0}s",
            times.iter().map(|t| (t * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            ws,
            started.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_10_format_round_trips() {
    let _g = lock();
    let dir = workdir("criterion10");

    // SEQD: byte-determinism, structural round-trip, distinct errors
    let ds = DelayedEchoSpec {
        n_symbols: 5,
        delay: 2,
        utterances: 8,
        min_len: 4,
        max_len: 12,
        seed: 3,
    }
    .generate()
    .unwrap();
    let p1 = dir.join("a.seqd");
    let p2 = dir.join("b.seqd");
    write_dataset(&ds, &p1).unwrap();
    write_dataset(&ds, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(read_dataset(&p1).unwrap(), ds);

    let good = std::fs::read(&p1).unwrap();
    let corrupt = dir.join("corrupt.seqd");
    let mut bad = good.clone();
    bad[0] = b'Q';
    std::fs::write(&corrupt, &bad).unwrap();
    assert!(matches!(read_dataset(&corrupt), Err(Error::BadMagic { .. })));
    let mut bad = good.clone();
    bad[4] = 99;
    std::fs::write(&corrupt, &bad).unwrap();
    assert!(matches!(read_dataset(&corrupt), Err(Error::VersionMismatch { .. })));
    std::fs::write(&corrupt, &good[..good.len() - 2]).unwrap();
    assert!(matches!(read_dataset(&corrupt), Err(Error::Truncated(_))));
    let mut bad = good.clone();
    let n = bad.len();
    bad[n - 4..].copy_from_slice(&77i32.to_le_bytes());
    std::fs::write(&corrupt, &bad).unwrap();
    assert!(matches!(read_dataset(&corrupt), Err(Error::LabelOutOfRange { label: 77, .. })));

    // Checkpoint: value-exact round-trip, byte-determinism, distinct errors
    let spec = ArchSpec::lstm_rp_np(6, 9, 4, 3, 7);
    let params = init_params::<f64>(&spec, 123, 0.2).unwrap();
    let c1 = dir.join("a.lstm");
    let c2 = dir.join("b.lstm");
    save_checkpoint(&c1, &params, 4242).unwrap();
    let (loaded, step) = load_checkpoint::<f64>(&c1).unwrap();
    assert_eq!(step, 4242);
    assert_eq!(loaded, params, "checkpoint round-trip changed values");
    save_checkpoint(&c2, &loaded, step).unwrap();
    assert_eq!(std::fs::read(&c1).unwrap(), std::fs::read(&c2).unwrap());

    let good = std::fs::read(&c1).unwrap();
    let corrupt = dir.join("corrupt.lstm");
    let mut bad = good.clone();
    bad[0] = b'Q';
    std::fs::write(&corrupt, &bad).unwrap();
    assert!(matches!(load_checkpoint::<f64>(&corrupt), Err(Error::BadMagic { .. })));
    let mut bad = good.clone();
    bad[4] = 9;
    std::fs::write(&corrupt, &bad).unwrap();
    assert!(matches!(load_checkpoint::<f64>(&corrupt), Err(Error::VersionMismatch { .. })));
    std::fs::write(&corrupt, &good[..good.len() - 3]).unwrap();
    assert!(matches!(load_checkpoint::<f64>(&corrupt), Err(Error::Truncated(_))));

    // f32 round-trip preserves values exactly (stored as f64)
    let params32 = init_params::<f32>(&spec, 9, 0.3).unwrap();
    let c3 = dir.join("c.lstm");
    save_checkpoint(&c3, &params32, 7).unwrap();
    let (loaded32, _) = load_checkpoint::<f32>(&c3).unwrap();
    assert_eq!(loaded32, params32);

    pass(10, "format round-trips", "SEQD and checkpoint byte/value exact; corruption errors distinct".into());
}
