//! End-to-end tests of the `graphnls` binary: exit codes, record contents,
//! artifact determinism, and the compare subcommand, all through the public
//! CLI surface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_graphnls");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("binary launches")
}

fn run_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(BIN)
        .args(args)
        .env(key, value)
        .output()
        .expect("binary launches")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn record(dir: &Path) -> Value {
    let text = fs::read_to_string(dir.join("record.json")).expect("record.json written");
    serde_json::from_str(&text).expect("record parses")
}

fn rf(doc: &Value, key: &str) -> f64 {
    doc["results"][key]
        .as_f64()
        .unwrap_or_else(|| panic!("results.{key} missing or non-numeric: {}", doc["results"]))
}

fn set_dir(dir: &Path) -> String {
    format!("output_dir={}", dir.display())
}

/// Small stable cubic model shared by the fast solver-backed tests.
fn small_model(dir: &Path) -> Vec<String> {
    vec![
        "--set".into(),
        set_dir(dir),
        "--set".into(),
        "n_edges=3".into(),
        "--set".into(),
        "edge_length=12".into(),
        "--set".into(),
        "cells_per_edge=400".into(),
        "--set".into(),
        "gamma=2".into(),
        "--set".into(),
        "omega=4".into(),
        "--set".into(),
        "p=3".into(),
        "--set".into(),
        "solver.tol=1e-9".into(),
    ]
}

fn run_owned(cmd: &str, args: &[String]) -> Output {
    let mut all: Vec<&str> = vec![cmd];
    all.extend(args.iter().map(|s| s.as_str()));
    run(&all)
}

#[test]
fn spectrum_record_matches_the_free_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = run(&[
        "spectrum",
        "--set",
        &set_dir(&dir),
        "--set",
        "n_edges=2",
        "--set",
        "gamma=2",
        "--set",
        "edge_length=30",
        "--set",
        "cells_per_edge=1500",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    // Two half-lines with coupling 2 bind at omega0 = (gamma/N)^2 = 1.
    let doc = record(&dir);
    let omega0 = rf(&doc, "omega0");
    assert!(
        (omega0 - 1.0).abs() <= 5e-4,
        "omega0 = {omega0}, expected 1 within discretization error"
    );
    assert!(rf(&doc, "gap") > 0.0);

    // The record lists its artifacts and they exist.
    let artifacts = doc["artifacts"].as_array().unwrap();
    assert!(artifacts.iter().any(|a| a.as_str() == Some("profile.csv")));
    for name in artifacts {
        assert!(
            dir.join(name.as_str().unwrap()).exists(),
            "artifact {name} missing"
        );
    }
}

#[test]
fn gamma_star_follows_the_cubic_reduction_and_env_root() {
    // p = 3, N = 2 halves into the full line: every gamma > 0 binds.
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("two-edges");
    let out = run(&[
        "gamma-star",
        "--set",
        &set_dir(&dir),
        "--set",
        "n_edges=2",
        "--set",
        "omega=1",
        "--set",
        "p=3",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let g2 = rf(&record(&dir), "gamma_star");
    assert!(g2.abs() <= 1e-10, "gamma_star(2,1,3) = {g2}");

    // Without output_dir the run lands under the environment root.
    let root = tmp.path().join("env-root");
    let out = run_env(
        &["gamma-star", "--set", "n_edges=3", "--set", "omega=1", "--set", "p=3"],
        "GRAPHNLS_OUT",
        root.to_str().unwrap(),
    );
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let printed = stdout(&out);
    let line = printed
        .lines()
        .find(|l| l.starts_with("record: "))
        .expect("prints the record path");
    let path = PathBuf::from(line.trim_start_matches("record: "));
    assert!(path.starts_with(&root), "record at {}", path.display());
    let doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let g3 = doc["results"]["gamma_star"].as_f64().unwrap();
    assert!(g3 > 0.5, "three edges need a positive threshold, got {g3}");
}

#[test]
fn set_overrides_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("exp.cfg");
    fs::write(&cfg_path, "command = gamma-star\nn_edges = 3\nomega = 1\np = 3\n").unwrap();
    let dir = tmp.path().join("run");
    let out = run(&[
        "gamma-star",
        "--config",
        cfg_path.to_str().unwrap(),
        "--set",
        &set_dir(&dir),
        "--set",
        "n_edges=2",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let doc = record(&dir);
    assert_eq!(doc["config"]["n_edges"].as_u64(), Some(2));
    assert!(rf(&doc, "gamma_star").abs() <= 1e-10);
}

#[test]
fn repeated_runs_are_bit_identical_and_compare_agrees() {
    let tmp = tempfile::tempdir().unwrap();
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    for dir in [&dir_a, &dir_b] {
        let out = run_owned("ground-state", &small_model(dir));
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }

    // Series artifacts reproduce byte for byte.
    assert_eq!(
        fs::read(dir_a.join("profile.csv")).unwrap(),
        fs::read(dir_b.join("profile.csv")).unwrap(),
        "profile.csv not deterministic"
    );
    assert_eq!(
        fs::read(dir_a.join("profile_edge0.dat")).unwrap(),
        fs::read(dir_b.join("profile_edge0.dat")).unwrap()
    );

    // Records agree except the timestamp and the artifact location, the two
    // fields the provenance hash excludes.
    let mut doc_a = record(&dir_a);
    let mut doc_b = record(&dir_b);
    assert_eq!(doc_a["config_hash"], doc_b["config_hash"]);
    for doc in [&mut doc_a, &mut doc_b] {
        doc["timestamp_unix"] = Value::from(0u64);
        doc["config"]["output_dir"] = Value::Null;
    }
    assert_eq!(doc_a, doc_b, "records differ beyond timestamp/output_dir");

    // And the compare subcommand sees an empty diff.
    let out = run(&[
        "compare",
        dir_a.join("record.json").to_str().unwrap(),
        dir_b.join("record.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("records agree"), "{}", stdout(&out));
}

#[test]
fn validation_failures_exit_2_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");

    let out = run(&["spectrum", "--set", &set_dir(&dir), "--set", "bogus.key=1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bogus.key"), "{}", stderr(&out));

    let out = run(&["spectrum", "--set", &set_dir(&dir), "--set", "cells_per_edge=-3"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("cells_per_edge"), "{}", stderr(&out));

    let cfg_path = tmp.path().join("exp.cfg");
    fs::write(&cfg_path, "command = spectrum\n").unwrap();
    let out = run(&["ground-state", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("command"), "{}", stderr(&out));

    // Scan window keys are validated before any compute.
    let out = run(&[
        "omega-star-scan",
        "--set",
        &set_dir(&dir),
        "--set",
        "scan.omega_lo=10",
        "--set",
        "scan.omega_hi=5",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("scan.omega_hi"), "{}", stderr(&out));
}

#[test]
fn compare_rejects_mismatched_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    let out = run(&[
        "gamma-star",
        "--set",
        &set_dir(&dir_a),
        "--set",
        "n_edges=2",
        "--set",
        "p=3",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let out = run(&[
        "spectrum",
        "--set",
        &set_dir(&dir_b),
        "--set",
        "n_edges=2",
        "--set",
        "edge_length=10",
        "--set",
        "cells_per_edge=200",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let out = run(&[
        "compare",
        dir_a.join("record.json").to_str().unwrap(),
        dir_b.join("record.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("schema mismatch"), "{}", stderr(&out));
}

#[test]
fn refinement_compare_reports_second_order_profile_gaps() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for cells in [250, 500, 1000] {
        let dir = tmp.path().join(format!("m{cells}"));
        let mut args = small_model(&dir);
        args.extend([
            "--set".to_string(),
            "edge_length=10".to_string(),
            "--set".to_string(),
            format!("cells_per_edge={cells}"),
            "--set".to_string(),
            "solver.tol=1e-10".to_string(),
        ]);
        let out = run_owned("ground-state", &args);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
        dirs.push(dir);
    }

    let linf = |a: &Path, b: &Path| -> f64 {
        let out = run(&[
            "compare",
            a.join("record.json").to_str().unwrap(),
            b.join("record.json").to_str().unwrap(),
        ]);
        // Scalar fields differ beyond the exact default tolerance, so the
        // diff report is non-empty and the exit code marks differences.
        assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));
        let text = stdout(&out);
        let line = text
            .lines()
            .find(|l| l.starts_with("profile_linf_diff"))
            .unwrap_or_else(|| panic!("no profile diff reported in:\n{text}"));
        line.split('=').nth(1).unwrap().trim().parse().unwrap()
    };

    // Successive refinements shrink the shared-node gap by the scheme order.
    let d1 = linf(&dirs[0], &dirs[1]);
    let d2 = linf(&dirs[1], &dirs[2]);
    let ratio = d1 / d2;
    assert!(
        (3.0..=5.0).contains(&ratio),
        "h vs h/2 gaps {d1:.3e}, {d2:.3e}: ratio {ratio:.2} not near 4"
    );
}

#[test]
fn evolve_blowup_guard_exits_4_but_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let mut args = small_model(&dir);
    args.extend([
        "--set".to_string(),
        "cells_per_edge=300".to_string(),
        "--set".to_string(),
        "edge_length=10".to_string(),
        "--set".to_string(),
        "evolve.amplitude=1.3".to_string(),
        "--set".to_string(),
        "evolution.dt=1e-3".to_string(),
        "--set".to_string(),
        "evolution.t_final=1.0".to_string(),
        // A hair above 1: the breathing of the scaled profile trips it fast.
        "--set".to_string(),
        "evolution.blowup_factor=1.0000001".to_string(),
    ]);
    let out = run_owned("evolve", &args);
    assert_eq!(code(&out), 4, "stderr: {}", stderr(&out));

    let doc = record(&dir);
    assert_eq!(doc["results"]["stop"].as_str(), Some("blowup"));
    assert!(rf(&doc, "stop_time") >= 0.0);
    let traj = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    assert!(traj.lines().count() >= 2, "trajectory written up to the stop");
}

#[test]
fn evolve_fixed_point_stall_exits_3_with_record() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let mut args = small_model(&dir);
    args.extend([
        "--set".to_string(),
        "cells_per_edge=300".to_string(),
        "--set".to_string(),
        "edge_length=10".to_string(),
        "--set".to_string(),
        "evolve.amplitude=2.0".to_string(),
        "--set".to_string(),
        "evolution.dt=0.5".to_string(),
        "--set".to_string(),
        "evolution.allow_large_dt=true".to_string(),
        "--set".to_string(),
        "evolution.t_final=2.0".to_string(),
        "--set".to_string(),
        "evolution.fixedpoint_max_iter=2".to_string(),
    ]);
    let out = run_owned("evolve", &args);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
    let doc = record(&dir);
    assert_eq!(doc["results"]["stop"].as_str(), Some("stall"));
    assert!(dir.join("trajectory.csv").exists());
}

#[test]
fn stable_control_instability_run_records_no_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let mut args = small_model(&dir);
    args.extend([
        "--set".to_string(),
        "edge_length=15".to_string(),
        "--set".to_string(),
        "cells_per_edge=600".to_string(),
        "--set".to_string(),
        "perturbation.lambda=1.01".to_string(),
        "--set".to_string(),
        "tube.eps=0.2".to_string(),
        "--set".to_string(),
        "evolution.dt=5e-3".to_string(),
        "--set".to_string(),
        "evolution.t_final=0.5".to_string(),
    ]);
    let out = run_owned("instability", &args);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let doc = record(&dir);
    assert_eq!(doc["results"]["outcome"].as_str(), Some("no-exit"));
    assert!(doc["results"]["exit_time"].is_null());
    assert!(rf(&doc, "initial_distance") < rf(&doc, "tube_radius"));
    assert!(dir.join("dist.dat").exists());
}

#[test]
fn noise_mode_is_reproducible_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let run_noise = |name: &str, seed: &str| -> PathBuf {
        let dir = tmp.path().join(name);
        let mut args = small_model(&dir);
        args.extend([
            "--set".to_string(),
            "perturbation.kind=noise".to_string(),
            "--set".to_string(),
            "perturbation.noise_eps=0.005".to_string(),
            "--set".to_string(),
            format!("seed={seed}"),
            "--set".to_string(),
            "tube.eps=0.5".to_string(),
            "--set".to_string(),
            "evolution.dt=5e-3".to_string(),
            "--set".to_string(),
            "evolution.t_final=0.1".to_string(),
        ]);
        let out = run_owned("instability", &args);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
        dir
    };

    let a = run_noise("seed7-a", "7");
    let b = run_noise("seed7-b", "7");
    let c = run_noise("seed8", "8");
    let read = |d: &Path| fs::read(d.join("trajectory.csv")).unwrap();
    assert_eq!(read(&a), read(&b), "same seed, different trajectory");
    assert_ne!(read(&a), read(&c), "different seed, same trajectory");
}

#[test]
fn symmetric_mode_totals_match_the_full_graph() {
    let tmp = tempfile::tempdir().unwrap();
    let dir_full = tmp.path().join("full");
    let dir_sym = tmp.path().join("sym");
    let out = run_owned("ground-state", &small_model(&dir_full));
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let out = run_owned("symmetric-mode", &small_model(&dir_sym));
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let full = record(&dir_full);
    let sym = record(&dir_sym);
    for (total_key, full_key) in [
        ("action_total", "action"),
        ("charge_total", "charge"),
        ("energy_total", "energy"),
    ] {
        let reduced = rf(&sym, total_key);
        let direct = rf(&full, full_key);
        let rel = (reduced - direct).abs() / direct.abs().max(1e-300);
        assert!(
            rel <= 1e-7,
            "{total_key} = {reduced} vs full {full_key} = {direct} (rel {rel:.2e})"
        );
    }
    // The reduction stores one edge: the profile has a single value column.
    let header = fs::read_to_string(dir_sym.join("profile.csv"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(header, "x, edge0_re, edge0_im");
}

#[test]
fn virial_check_streams_the_fixed_monitor_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let mut args = small_model(&dir);
    args.extend([
        "--set".to_string(),
        "evolution.dt=2e-3".to_string(),
        "--set".to_string(),
        "evolution.t_final=0.1".to_string(),
    ]);
    let out = run_owned("virial-check", &args);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let traj = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    assert_eq!(
        traj.lines().next().unwrap(),
        "t, E, Q, f, fprime, P, dist, theta"
    );
    let doc = record(&dir);
    for key in [
        "max_mismatch_fprime_route",
        "max_mismatch_fsecond_route",
        "max_abs_fsecond",
        "max_abs_eight_p",
    ] {
        assert!(rf(&doc, key).is_finite(), "{key} missing");
    }
}

#[test]
fn scan_without_a_crossing_reports_null_omega_star() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = run(&[
        "omega-star-scan",
        "--set",
        &set_dir(&dir),
        "--set",
        "n_edges=3",
        "--set",
        "gamma=3",
        "--set",
        "p=6",
        "--set",
        "potential.kind=inverse-power",
        "--set",
        "potential.beta=1",
        "--set",
        "potential.alpha=0.5",
        "--set",
        "omega=10",
        "--set",
        "edge_length=7.9",
        "--set",
        "cells_per_edge=500",
        "--set",
        "scan.omega_lo=20",
        "--set",
        "scan.omega_hi=25",
        "--set",
        "scan.n=3",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let doc = record(&dir);
    assert!(doc["results"]["omega_star"].is_null());
    assert_eq!(doc["results"]["crossings"].as_u64(), Some(0));
    let scan = fs::read_to_string(dir.join("scan.csv")).unwrap();
    assert_eq!(scan.lines().count(), 4, "header plus three rows:\n{scan}");
    assert!(dir.join("scan.dat").exists());
}
