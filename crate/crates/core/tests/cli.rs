use std::path::Path;
use std::process::Command;

use nalgebra::DMatrix;
use skewgibbs::chain_io::{read_chain, read_data, read_matrix};
use skewgibbs::model::DeltaLayout;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_skewgibbs"));
    c.env_remove("SKEWGIBBS_WORKERS");
    c
}

fn run(cmd: &mut Command) -> i32 {
    let out = cmd.output().expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap_or(-1)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(out: &Path, design: &str, n: usize, t: usize) {
    let code = run(bin().args([
        "gen-data",
        "--design",
        design,
        "--n",
        &n.to_string(),
        "--t",
        &t.to_string(),
        "--seed",
        "1",
        "--out",
        s(out),
    ]));
    assert_eq!(code, 0);
}

#[test]
fn gen_data_writes_observations_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "diag", 4, 10);
    let data = read_data(&dir.path().join("data.csv")).unwrap();
    assert_eq!((data.t(), data.n()), (10, 4));
    let delta = read_matrix(&dir.path().join("truth_delta.csv")).unwrap();
    assert_eq!(delta, DMatrix::from_diagonal(&nalgebra::dvector![2.0, -2.0, 2.0, -2.0]));
    assert_eq!(read_matrix(&dir.path().join("truth_omega.csv")).unwrap(), DMatrix::identity(4, 4));
}

#[test]
fn fit_writes_chain_and_means_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "diag", 4, 10);
    let cfg = dir.path().join("fit.json");
    std::fs::write(&cfg, r#"{"variant": "lt-nowi", "chain": {"burn_in": 20, "draws": 30, "thin": 3}, "seed": 9}"#)
        .unwrap();
    let data = dir.path().join("data.csv");
    let fit = |out: &Path| {
        run(bin().args(["fit", "--config", s(&cfg), "--data", s(&data), "--out", s(out)]))
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(fit(&a), 0);
    assert_eq!(fit(&b), 0);
    for f in [
        "chain.csv",
        "posterior_mean_mu.csv",
        "posterior_mean_delta.csv",
        "posterior_mean_omega.csv",
        "summary.csv",
    ] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f} differs between identical runs");
    }
    assert!(a.join("metadata.json").exists());
    let (layout, draws) = read_chain(&a.join("chain.csv")).unwrap();
    assert_eq!(layout, DeltaLayout::Lower(4));
    assert_eq!(draws.len(), 10);
    assert_eq!(draws[0].iteration, 21);
    let mean = read_matrix(&a.join("posterior_mean_delta.csv")).unwrap();
    assert_eq!(mean.shape(), (4, 4));
    assert!((0..4).all(|i| (i + 1..4).all(|j| mean[(i, j)] == 0.0)));
    let omega = read_matrix(&a.join("posterior_mean_omega.csv")).unwrap();
    assert_eq!(omega, omega.transpose());
}

#[test]
fn fit_skew_t_records_varphi() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(bin().args([
        "gen-data", "--design", "sparse", "--n", "2", "--t", "50", "--varphi", "6", "--out", s(dir.path()),
    ]));
    assert_eq!(code, 0);
    let cfg = dir.path().join("fit.json");
    std::fs::write(&cfg, r#"{"variant": "full-nowi", "tail": "skew-t", "chain": {"burn_in": 5, "draws": 10}}"#).unwrap();
    let out = dir.path().join("fit");
    let code = run(bin().args(["fit", "--config", s(&cfg), "--data", s(&dir.path().join("data.csv")), "--out", s(&out)]));
    assert_eq!(code, 0);
    let (layout, draws) = read_chain(&out.join("chain.csv")).unwrap();
    assert_eq!(layout, DeltaLayout::Full(2));
    assert!(draws.iter().all(|d| d.varphi.is_some_and(|v| v > 2.0)));
}

#[test]
fn study_writes_one_summary_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.json");
    std::fs::write(
        &cfg,
        r#"{"mode": "study", "n": 3, "t": 40, "chain": {"burn_in": 10, "draws": 20},
            "study": {"designs": ["diag", "sparse"], "reps": 1}, "workers": 2}"#,
    )
    .unwrap();
    let out = dir.path().join("study");
    assert_eq!(run(bin().args(["study", "--config", s(&cfg), "--out", s(&out)])), 0);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines[0].starts_with("design,variant,completed,failed,median_delta_loss"));
    let jobs = std::fs::read_to_string(out.join("jobs.csv")).unwrap();
    assert_eq!(jobs.lines().count(), 1 + 6);
    for v in ["full-nowi", "lt-nowi", "lt-hsghs"] {
        let m = read_matrix(&out.join("means").join(format!("diag_{v}_delta.csv"))).unwrap();
        assert_eq!(m.shape(), (3, 3));
    }
    assert_eq!(
        read_matrix(&out.join("truth").join("sparse_delta.csv")).unwrap(),
        nalgebra::dmatrix![2.0, 0.0, 0.0; -1.0, -2.0, 0.0; 0.0, -1.0, 2.0]
    );

    // Same config with a different worker count: identical tables.
    let again = dir.path().join("again");
    let code = run(bin().env("SKEWGIBBS_WORKERS", "1").args(["study", "--config", s(&cfg), "--out", s(&again)]));
    assert_eq!(code, 0);
    for f in ["jobs.csv", "summary.csv"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn summarize_computes_losses_against_truth() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "diag", 3, 60);
    let cfg = dir.path().join("fit.json");
    std::fs::write(&cfg, r#"{"chain": {"burn_in": 10, "draws": 40}}"#).unwrap();
    let fit = dir.path().join("fit");
    let code = run(bin().args(["fit", "--config", s(&cfg), "--data", s(&dir.path().join("data.csv")), "--out", s(&fit)]));
    assert_eq!(code, 0);
    let out = dir.path().join("sum");
    let code = run(bin().args([
        "summarize",
        "--chains",
        s(&fit.join("chain.csv")),
        "--out",
        s(&out),
        "--truth-delta",
        s(&dir.path().join("truth_delta.csv")),
        "--truth-omega",
        s(&dir.path().join("truth_omega.csv")),
    ]));
    assert_eq!(code, 0);
    // The summary of a written chain reproduces the fit's own posterior means.
    assert_eq!(
        read_matrix(&out.join("chain_mean_delta.csv")).unwrap(),
        read_matrix(&fit.join("posterior_mean_delta.csv")).unwrap()
    );
    let losses = std::fs::read_to_string(out.join("losses.csv")).unwrap();
    let row: Vec<&str> = losses.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "40");
    assert!(row[2].parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn exit_codes_separate_config_and_runtime_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"alpha": 1}"#).unwrap();
    let out = bin()
        .args(["fit", "--config", s(&cfg), "--data", "x.csv", "--out", s(dir.path())])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));

    assert_eq!(run(bin().args(["frobnicate"])), 1);

    let bad_data = dir.path().join("bad.csv");
    std::fs::write(&bad_data, "1,2\n3,oops\n").unwrap();
    let out = bin()
        .args(["fit", "--data", s(&bad_data), "--out", s(dir.path())])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));

    let study_cfg = dir.path().join("s.json");
    std::fs::write(&study_cfg, r#"{"study": {"reps": 1}, "n": 2, "t": 5, "chain": {"burn_in": 1, "draws": 1}}"#).unwrap();
    let code = run(bin()
        .env("SKEWGIBBS_WORKERS", "zero")
        .args(["study", "--config", s(&study_cfg), "--out", s(&dir.path().join("s"))]));
    assert_eq!(code, 1);
}
