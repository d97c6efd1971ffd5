use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bassflow(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bassflow"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

const GAUSSIAN: [&str; 7] = ["solve", "--mu", "gaussian:0,1", "--nu", "gaussian:0,1.4142135623730951", "--n-atoms", "60"];

#[test]
fn gaussian_solve_reaches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = bassflow(&GAUSSIAN, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path());
    assert_eq!(s["termination"], "GradToleranceMet");
    assert!((s["v_final"].as_f64().unwrap() - 1.0).abs() < 2e-2);
    assert_eq!(s["convex_order"], "ordered");
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,V,grad_norm,bary_1,max_abs_z,h\n"));
    let bass = fs::read_to_string(dir.path().join("bass_measure.csv")).unwrap();
    assert_eq!(bass.lines().count(), 61);
}

#[test]
fn solve_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert_eq!(bassflow(&GAUSSIAN, d.path()).status.code(), Some(0));
    }
    for file in ["trace.csv", "bass_measure.csv", "summary.json"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn dirac_source_is_already_stationary() {
    let dir = tempfile::tempdir().unwrap();
    let o = bassflow(&["solve", "--mu", "dirac:0", "--nu", "uniform:-1,1"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(summary(dir.path())["t_final"].as_f64(), Some(0.0));
}

#[test]
fn convex_order_violation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = bassflow(&["solve", "--mu", "uniform:-2,2", "--nu", "uniform:-1,1"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(summary(dir.path())["error"]["kind"], "NotInConvexOrder");
}

#[test]
fn malformed_marginal_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = bassflow(&["solve", "--mu", "beta:1,2", "--nu", "uniform:-1,1"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(summary(dir.path())["error"]["kind"], "InvalidInput");
}

#[test]
fn time_budget_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = GAUSSIAN.to_vec();
    args.extend(["--t-max", "0.5"]);
    assert_eq!(bassflow(&args, dir.path()).status.code(), Some(2));
    assert_eq!(summary(dir.path())["termination"], "TMaxReached");
}

#[test]
fn simulate_checks_a_solved_measure() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bassflow(&GAUSSIAN, dir.path()).status.code(), Some(0));
    let mut args = GAUSSIAN.to_vec();
    args[0] = "simulate";
    args.extend(["--paths", "20000", "--write-paths", "--workers", "2"]);
    let o = bassflow(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", fs::read_to_string(dir.path().join("summary.json")).unwrap());
    let s = summary(dir.path());
    assert_eq!(s["passed"], true);
    let paths = fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    assert_eq!(paths.lines().next(), Some("path_id,t,M,B"));
    assert_eq!(paths.lines().count(), 1 + 3 * 20000);
}

#[test]
fn check_prints_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = bassflow(&["check", "--mu", "mix:0.5*dirac:-0.3+0.5*dirac:0.3", "--nu", "uniform:-1,1", "--delta", "0.35"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed, summary(dir.path()));
    assert_eq!(printed["certificate"]["l"].as_f64(), Some(1.0));
}

#[test]
fn oracle_matches_and_flags_small_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let o = bassflow(&["oracle", "--mu", "dirac:0", "--nu", "gaussian:0,1", "--n-atoms", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!((summary(dir.path())["value"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!(dir.path().join("oracle_measure.csv").exists());

    let o = bassflow(&["oracle", "--mu", "gaussian:0,1", "--nu", "gaussian:0,2", "--budget", "10"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(summary(dir.path())["budget_exhausted"], true);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("spec.toml");
    fs::write(&cfg, "mu = \"dirac:0\"\nnu = \"uniform:-1,1\"\nn_atoms = 4\n[flow]\nt_max = 3.0\n").unwrap();
    let o = bassflow(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = summary(dir.path());
    assert_eq!(s["flow"]["t_max"].as_f64(), Some(3.0));
}

// Centered clouds on a grid: μ on a 3x3 grid of spacing 0.3, ν on 5x5 of spacing 1.
fn write_grid(path: &Path, k: i32, spacing: f64) {
    let mut text = String::from("x1,x2,w\n");
    let c = (k - 1) as f64 / 2.0;
    for i in 0..k {
        for j in 0..k {
            text.push_str(&format!("{},{},1\n", (i as f64 - c) * spacing, (j as f64 - c) * spacing));
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn two_dimensional_solve() {
    let dir = tempfile::tempdir().unwrap();
    let (mu, nu) = (dir.path().join("mu.csv"), dir.path().join("nu.csv"));
    write_grid(&mu, 3, 0.3);
    write_grid(&nu, 5, 1.0);
    let mu_arg = format!("csv:{}", mu.display());
    let nu_arg = format!("csv:{}", nu.display());
    let o = bassflow(&["solve", "--mu", &mu_arg, "--nu", &nu_arg, "--tol", "1e-3", "--mc-samples", "64"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path());
    assert_eq!(s["dim"], 2);
    assert_eq!(s["hypotheses"], "unverified");
    assert!(s["barycenter_drift"].as_f64().unwrap() < 1e-10);
    let bass = fs::read_to_string(dir.path().join("bass_measure.csv")).unwrap();
    assert_eq!(bass.lines().next(), Some("x1,x2,w"));
    assert_eq!(bass.lines().count(), 10);
}
