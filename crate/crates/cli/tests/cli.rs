use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use signsteer::strategy::{PhaseKind, RunTrace};
use signsteer::GridFunction;
use signsteer_cli::output::parse_curves_dat;
use signsteer_cli::SWEEP_HEADER;
use tempfile::TempDir;

const SMALL: &str = r#"
name = "small"

[grid]
n_cells = 200

[initial]
fixture = "sin-2"

[target]
zeros = [0.56]

[strategy]
epsilon = 0.01
eta = 0.05
"#;

fn signsteer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_signsteer"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn run_in(dir: &Path, cmd: &str, config: &Path, out: &str, extra: &[&str]) -> Output {
    let out_dir = dir.join(out);
    let mut args = vec![
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    signsteer(&args)
}

#[test]
fn simulate_writes_consistent_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), "small.toml", SMALL);
    let out = run_in(tmp.path(), "simulate", &cfg, "a", &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let trace = fs::read_to_string(tmp.path().join("a/trace.csv")).unwrap();
    assert!(trace.starts_with("t,phase,round,xi_1,J_star,gap,l2_err\n"));
    let rows = RunTrace::rows_from_csv(&trace).unwrap();
    assert_eq!(rows.first().unwrap().phase, PhaseKind::Init);
    assert_eq!(rows.last().unwrap().phase, PhaseKind::Final);
    assert!(rows.windows(2).all(|w| w[1].t >= w[0].t));
    assert!((rows.last().unwrap().zeros[0] - 0.56).abs() <= 0.01);

    let blocks =
        parse_curves_dat(&fs::read_to_string(tmp.path().join("a/curves.dat")).unwrap()).unwrap();
    assert_eq!(
        blocks.iter().map(|b| b.rows.len()).sum::<usize>(),
        rows.len()
    );
    assert_eq!(blocks.last().unwrap().phase, "final");

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("a/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["n_cells"], 200);
    assert!(summary["final_l2_error"].as_f64().unwrap() <= 0.05);
    assert_eq!(
        summary["round_records"].as_array().unwrap().len(),
        summary["rounds"].as_u64().unwrap() as usize
    );
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), "small.toml", SMALL);
    for dir in ["a", "b"] {
        assert_eq!(
            code(&run_in(tmp.path(), "simulate", &cfg, dir, &["--seed", "7"])),
            0
        );
    }
    for file in ["trace.csv", "curves.dat", "summary.json"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
}

#[test]
fn invalid_scenarios_exit_with_code_2() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        (
            "count.toml",
            SMALL.replace("zeros = [0.56]", "zeros = [0.4, 0.6]"),
        ),
        (
            "signs.toml",
            SMALL.replace("zeros = [0.56]", "zeros = [0.4, 0.6]\nsigns = [1, -1, -1]"),
        ),
        (
            "unknown.toml",
            SMALL.replace("eta = 0.05", "eta = 0.05\nbogus = 1"),
        ),
        (
            "eps.toml",
            SMALL.replace("epsilon = 0.01", "epsilon = -1.0"),
        ),
        (
            "budget.toml",
            SMALL.replace("eta = 0.05", "eta = 0.05\nk_max = 1"),
        ),
        ("syntax.toml", "name = ".to_owned()),
    ];
    for (name, text) in cases {
        let cfg = scenario(tmp.path(), name, &text);
        let out = run_in(tmp.path(), "simulate", &cfg, name, &[]);
        assert_eq!(
            code(&out),
            2,
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(
            !tmp.path().join(name).join("trace.csv").exists(),
            "{name} ran"
        );
    }
    let missing = tmp.path().join("missing.toml");
    assert_eq!(code(&run_in(tmp.path(), "simulate", &missing, "m", &[])), 2);
    assert_eq!(code(&signsteer(&["simulate"])), 2);
}

#[test]
fn runtime_failures_exit_with_code_1_and_keep_the_trace() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(
        tmp.path(),
        "tight.toml",
        &SMALL.replace("eta = 0.05", "eta = 0.05\nk_max = 2"),
    );
    let out = run_in(tmp.path(), "simulate", &cfg, "f", &[]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("f/trace.csv").exists());
    let failure: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("f/failure.json")).unwrap())
            .unwrap();
    assert_eq!(failure["rounds"], 2);
    assert!(failure["error"].as_str().unwrap().contains("budget"));
}

#[test]
fn sweep_runs_every_cell() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), "small.toml", SMALL);
    let out = run_in(
        tmp.path(),
        "sweep",
        &cfg,
        "s",
        &["--n-cells", "200,240", "--eta", "0.05,0.08"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(SWEEP_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r[4] == "true"));
    for i in 0..4 {
        assert!(tmp.path().join(format!("s/cell_{i}/trace.csv")).exists());
    }
    assert_eq!(code(&run_in(tmp.path(), "sweep", &cfg, "e", &[])), 2);
}

#[test]
fn steer_requires_matching_zeros() {
    let tmp = TempDir::new().unwrap();
    let same = scenario(tmp.path(), "same.toml", &SMALL.replace("[0.56]", "[0.5]"));
    let out = run_in(
        tmp.path(),
        "steer",
        &same,
        "ok",
        &["--perturb", "0.01", "--seed", "3"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("ok/steer.json")).unwrap())
            .unwrap();
    assert!(report["report"]["slack"].as_f64().unwrap() >= 0.0);
    let state =
        GridFunction::from_csv(&fs::read_to_string(tmp.path().join("ok/state.csv")).unwrap())
            .unwrap();
    assert_eq!(state.grid().n_cells(), 200);

    let moved = scenario(tmp.path(), "moved.toml", SMALL);
    assert_eq!(code(&run_in(tmp.path(), "steer", &moved, "bad", &[])), 2);
    assert_eq!(
        code(&run_in(
            tmp.path(),
            "steer",
            &same,
            "neg",
            &["--perturb", "-1"]
        )),
        2
    );
}

#[test]
fn diffuse_decays_the_initial_state() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), "small.toml", SMALL);
    let out = run_in(
        tmp.path(),
        "diffuse",
        &cfg,
        "d",
        &["--horizon", "0.01", "--dt", "1e-4"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("d/diffuse.json")).unwrap())
            .unwrap();
    let (a, b) = (
        report["initial_l2"].as_f64().unwrap(),
        report["final_l2"].as_f64().unwrap(),
    );
    let expected = (-4.0 * std::f64::consts::PI.powi(2) * 0.01).exp();
    assert!((b / a - expected).abs() < 1e-3, "{} vs {expected}", b / a);
    let series = fs::read_to_string(tmp.path().join("d/diffuse.csv")).unwrap();
    assert!(series.lines().next().unwrap().contains("l2"));
}

#[test]
fn build_profile_has_unit_plateaus() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("p");
    let out = signsteer(&[
        "build-profile",
        "--zeros",
        "0.3,0.7",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let w =
        GridFunction::from_csv(&fs::read_to_string(out_dir.join("profile.csv")).unwrap()).unwrap();
    let at = |x: f64| w.values()[(x * w.grid().n_cells() as f64).round() as usize];
    assert!((at(0.15) - 1.0).abs() < 1e-12);
    assert!((at(0.5) + 1.0).abs() < 1e-12);
    assert!((at(0.85) - 1.0).abs() < 1e-12);

    let bad = signsteer(&[
        "build-profile",
        "--zeros",
        "0.3,0.7",
        "--signs",
        "1,1,-1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn track_follows_the_closed_form_curve() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("t");
    let out = signsteer(&["track", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("track.json")).unwrap()).unwrap();
    assert!(report["max_gap"].as_f64().unwrap() <= 1e-3);
    let overlay = fs::read_to_string(out_dir.join("overlay.csv")).unwrap();
    assert!(overlay.starts_with("t,xi_numeric,xi_exact\n"));
    assert_eq!(
        code(&signsteer(&[
            "track",
            "--fixture",
            "nope",
            "--out",
            out_dir.to_str().unwrap()
        ])),
        2
    );
}
