//! End-to-end tests of the `lstmp` binary: exit codes, determinism and the
//! wire formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lstmp"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("lstmp-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn field(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} ")))
        .unwrap_or_else(|| panic!("missing field {key} in output:\n{stdout}"))
        .to_string()
}

fn gen_echo(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let path = dir.join(name);
    let out = run(bin().args([
        "gen",
        "delayed-echo",
        "--symbols",
        "4",
        "--delay",
        "2",
        "--utterances",
        "30",
        "--min-len",
        "8",
        "--max-len",
        "20",
        "--seed",
        &seed.to_string(),
        "--out",
        path.to_str().unwrap(),
    ]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn gen_is_deterministic_and_reports_stats() {
    let dir = workdir("gen");
    let a = gen_echo(&dir, "a.seqd", 9);
    let b = gen_echo(&dir, "b.seqd", 9);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let out = run(bin().args([
        "gen",
        "delayed-echo",
        "--symbols",
        "4",
        "--delay",
        "2",
        "--utterances",
        "30",
        "--min-len",
        "8",
        "--max-len",
        "20",
        "--seed",
        "9",
        "--out",
        dir.join("c.seqd").to_str().unwrap(),
    ]));
    let stdout = stdout_of(&out);
    assert_eq!(field(&stdout, "utterances"), "30");
    assert_eq!(field(&stdout, "n_i"), "4");
    assert_eq!(field(&stdout, "n_o"), "4");
}

#[test]
fn gen_missing_required_flag_is_usage_error() {
    let out = run(bin().args(["gen", "delayed-echo", "--symbols", "4"]));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).to_lowercase();
    assert!(err.contains("usage") || err.contains("required"), "{err}");
}

#[test]
fn gen_invalid_params_is_validation_error() {
    let dir = workdir("gen-invalid");
    // min_len too short for the delay
    let out = run(bin().args([
        "gen",
        "delayed-echo",
        "--symbols",
        "4",
        "--delay",
        "10",
        "--utterances",
        "5",
        "--min-len",
        "5",
        "--max-len",
        "8",
        "--seed",
        "1",
        "--out",
        dir.join("x.seqd").to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));
}

fn write_config(dir: &Path, data: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.conf");
    let text = format!(
        "arch = lstm\nn_i = 4\nn_c = 8\nn_o = 4\nt_bptt = 6\nlanes_per_worker = 2\n\
         lr0 = 0.5\nlr_decay_factor = 0.9\nlr_decay_interval = 500\nmax_steps = 40\n\
         eval_interval = 20\nseed = 3\ninit_scale = 0.2\ntrain_data = {}\ndev_fraction = 0.2\n{extra}",
        data.display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn train_writes_identical_checkpoints_across_runs() {
    let dir = workdir("train-determinism");
    let data = gen_echo(&dir, "task.seqd", 4);
    let conf = write_config(&dir, &data, "");
    for name in ["ck1.lstm", "ck2.lstm"] {
        let ck = dir.join(name);
        let out = run(bin().args([
            "train",
            conf.to_str().unwrap(),
            &format!("checkpoint_out={}", ck.display()),
        ]));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        // normalized config echo comes back and re-parses
        let stdout = stdout_of(&out);
        assert!(stdout.contains("arch = lstm"));
        assert!(stdout.contains("steps 40"));
    }
    assert_eq!(
        std::fs::read(dir.join("ck1.lstm")).unwrap(),
        std::fs::read(dir.join("ck2.lstm")).unwrap()
    );
}

#[test]
fn train_resume_continues_monotonically() {
    let dir = workdir("train-resume");
    let data = gen_echo(&dir, "task.seqd", 5);
    let conf = write_config(&dir, &data, "");
    let ck = dir.join("ck.lstm");
    let out = run(bin().args([
        "train",
        conf.to_str().unwrap(),
        &format!("checkpoint_out={}", ck.display()),
    ]));
    assert!(out.status.success());
    let out = run(bin().args([
        "train",
        conf.to_str().unwrap(),
        &format!("checkpoint_out={}", ck.display()),
        &format!("resume={}", ck.display()),
        "max_steps=70",
    ]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(field(&stdout_of(&out), "steps"), "70");
}

#[test]
fn train_zero_lr_keeps_initial_params_and_curve_file_has_rows() {
    let dir = workdir("train-zero-lr");
    let data = gen_echo(&dir, "task.seqd", 6);
    let conf = write_config(&dir, &data, "lr0 = 0\n");
    let ck = dir.join("ck.lstm");
    let curve = dir.join("curve.csv");
    let out = run(bin().args([
        "train",
        conf.to_str().unwrap(),
        &format!("checkpoint_out={}", ck.display()),
        &format!("curve_out={}", curve.display()),
    ]));
    assert!(out.status.success());

    // the checkpoint equals the untrained initialization
    let text = std::fs::read_to_string(&curve).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2, "40 steps / eval every 20: {text}");
    let accs: Vec<&str> = rows.iter().map(|r| r.split(',').nth(3).unwrap()).collect();
    assert_eq!(accs[0], accs[1], "accuracy should stay at the init model's");
}

#[test]
fn eval_reports_and_rejects_mismatched_shapes() {
    let dir = workdir("eval");
    let data = gen_echo(&dir, "task.seqd", 7);
    let conf = write_config(&dir, &data, "");
    let ck = dir.join("ck.lstm");
    let out = run(bin().args([
        "train",
        conf.to_str().unwrap(),
        &format!("checkpoint_out={}", ck.display()),
    ]));
    assert!(out.status.success());

    let out = run(bin().args([
        "eval",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]));
    assert!(out.status.success());
    let stdout = stdout_of(&out);
    let acc: f64 = field(&stdout, "accuracy").parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    // same checkpoint and data twice -> identical report
    let again = run(bin().args([
        "eval",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]));
    assert_eq!(stdout, stdout_of(&again));

    // dataset with a different n_i
    let wrong = dir.join("wrong.seqd");
    let out = run(bin().args([
        "gen",
        "delayed-echo",
        "--symbols",
        "6",
        "--delay",
        "2",
        "--utterances",
        "5",
        "--min-len",
        "6",
        "--max-len",
        "10",
        "--seed",
        "1",
        "--out",
        wrong.to_str().unwrap(),
    ]));
    assert!(out.status.success());
    let out = run(bin().args([
        "eval",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--data",
        wrong.to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_i"));
}

#[test]
fn gradcheck_passes_and_fault_injection_fails() {
    let out = run(bin().args(["gradcheck", "--seeds", "7,16"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = stdout_of(&out);
    // every architecture/block pair reported exactly once
    for arch in ["rnn", "lstm", "lstm_rp", "lstm_rp_np"] {
        let count = stdout.lines().filter(|l| l.starts_with(&format!("{arch},"))).count();
        let expected = match arch {
            "rnn" => 5,
            "lstm" => 17,
            "lstm_rp" => 18,
            "lstm_rp_np" => 20,
            _ => unreachable!(),
        };
        assert_eq!(count, expected, "{arch} block lines in:\n{stdout}");
    }

    let out = run(bin().args(["gradcheck", "--seeds", "7", "--inject-error", "0.05"]));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn params_prints_matching_counts() {
    let out = run(bin().args([
        "params", "--arch", "lstm", "--n-i", "40", "--n-c", "512", "--n-o", "126",
    ]));
    assert!(out.status.success());
    let stdout = stdout_of(&out);
    assert_eq!(field(&stdout, "formula_params"), "1196544");
    assert_eq!(field(&stdout, "instantiated_params"), "1196544");

    let out = run(bin().args([
        "params", "--arch", "lstm_rp", "--n-i", "40", "--n-c", "1024", "--n-r", "256", "--n-o",
        "2000",
    ]));
    assert_eq!(field(&stdout_of(&out), "formula_params"), "1989632");

    // degenerate RNN spec, with and without biases
    let out = run(bin().args(["params", "--arch", "rnn", "--n-i", "1", "--n-c", "1", "--n-o", "1"]));
    assert_eq!(field(&stdout_of(&out), "formula_params"), "3");
    let out = run(bin().args([
        "params", "--arch", "rnn", "--n-i", "1", "--n-c", "1", "--n-o", "1", "--include-biases",
    ]));
    let stdout = stdout_of(&out);
    assert_eq!(field(&stdout, "formula_params"), "5");
    assert_eq!(field(&stdout, "instantiated_params"), "5");

    let out = run(bin().args(["params", "--arch", "lstm", "--n-i", "0", "--n-c", "1", "--n-o", "1"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_emits_table_and_curves() {
    let dir = workdir("compare");
    let data = dir.join("task.seqd");
    let out = run(bin().args([
        "gen",
        "delayed-echo",
        "--symbols",
        "4",
        "--delay",
        "2",
        "--utterances",
        "60",
        "--min-len",
        "10",
        "--max-len",
        "20",
        "--seed",
        "2",
        "--out",
        data.to_str().unwrap(),
    ]));
    assert!(out.status.success());

    let curves = dir.join("curves");
    let out = run(bin().args([
        "compare",
        "--data",
        data.to_str().unwrap(),
        "--budget",
        "3000",
        "--frames",
        "60000",
        "--arch",
        "lstm:1.0",
        "--arch",
        "rnn:1.0",
        "--eval-interval",
        "100",
        "--out-dir",
        curves.to_str().unwrap(),
    ]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = stdout_of(&out);
    let mut lines = stdout.lines();
    assert_eq!(
        lines.next().unwrap(),
        "architecture\tparams\tfinal_dev_accuracy\tsteps\twall_clock_sec"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    for (row, name) in rows.iter().zip(["lstm", "rnn"]) {
        let cols: Vec<&str> = row.split('\t').collect();
        assert_eq!(cols[0], name);
        let params: usize = cols[1].parse().unwrap();
        assert!(params <= 3000, "budget respected: {params}");
        let curve = std::fs::read_to_string(curves.join(format!("{name}.csv"))).unwrap();
        assert!(curve.lines().count() > 1, "curve file has rows:\n{curve}");
    }
}

#[test]
fn checkpoint_corruption_errors_are_distinct() {
    let dir = workdir("ckpt-corrupt");
    let data = gen_echo(&dir, "task.seqd", 8);
    let conf = write_config(&dir, &data, "max_steps = 5\neval_interval = 5\n");
    let ck = dir.join("ck.lstm");
    let out = run(bin().args([
        "train",
        conf.to_str().unwrap(),
        &format!("checkpoint_out={}", ck.display()),
    ]));
    assert!(out.status.success());
    let good = std::fs::read(&ck).unwrap();

    let cases: Vec<(&str, Vec<u8>, &str)> = vec![
        ("magic", {
            let mut b = good.clone();
            b[0] = b'X';
            b
        }, "bad magic"),
        ("version", {
            let mut b = good.clone();
            b[4] = 7;
            b
        }, "version"),
        ("truncated", good[..good.len() - 4].to_vec(), "truncated"),
    ];
    for (label, bytes, needle) in cases {
        let bad = dir.join(format!("{label}.lstm"));
        std::fs::write(&bad, bytes).unwrap();
        let out = run(bin().args([
            "eval",
            "--checkpoint",
            bad.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
        ]));
        assert_eq!(out.status.code(), Some(2), "{label}");
        let err = String::from_utf8_lossy(&out.stderr).to_lowercase();
        assert!(err.contains(needle), "{label}: {err}");
    }
}
