//! End-to-end command-line checks: exit-code contract, output formats and
//! determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spde-hfvol"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn spde-hfvol")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_exact_config(dir: &Path, delta: f64, sigma: f64) -> PathBuf {
    let path = dir.join("sim.json");
    let cfg = serde_json::json!({
        "model": {"kappa": 1.0, "lambda": 1.0, "alpha": 1.0, "dim": 1, "noise_kind": "white_noise"},
        "scheme": {"delta": delta, "horizon": 1.0, "sites": [0.0]},
        "volatility": {"kind": "constant", "value": sigma},
        "simulator": {"kind": "exact_stationary"}
    });
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn constants_prints_reference_values() {
    let out = run(&["constants", "--alpha", "1", "--p", "2"]);
    let v = stdout_json(&out);
    let r2 = v["R_p"].as_f64().unwrap();
    assert!((r2 - 2.357_487).abs() < 1e-5, "R_p = {r2}");
    assert!(v["gamma"].as_array().unwrap().len() == 11);
    assert!(v["gamma_n"].is_null());
    let out = run(&["constants", "--alpha", "1", "--p", "4"]);
    let r4 = stdout_json(&out)["R_p"].as_f64().unwrap();
    assert!((r4 - 109.223_069).abs() < 1e-4, "R_p = {r4}");
}

#[test]
fn constants_rejects_bad_alpha_with_exit_2() {
    let out = run(&["constants", "--alpha", "2.5", "--p", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
}

#[test]
fn constants_gamma_n_needs_both_flags() {
    let out = run(&["constants", "--alpha", "1", "--p", "2", "--lambda", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "constants", "--alpha", "1", "--p", "2", "--lambda", "1", "--delta", "0.001",
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["gamma_n"].as_array().unwrap().len(), 11);
    assert_eq!(v["gamma_n"][0].as_f64().unwrap(), 1.0);
}

#[test]
fn simulate_row_count_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_exact_config(dir.path(), 2f64.powi(-8), 1.0);
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    let st = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "42",
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let st = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "42",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let a = fs::read(&out_a).unwrap();
    let b = fs::read(&out_b).unwrap();
    assert_eq!(a, b, "same seed must give identical files");
    let text = String::from_utf8(a).unwrap();
    // floor(1.0 / 2^-8) + 1 data rows + header
    assert_eq!(text.lines().count(), 256 + 2);
    assert!(text.starts_with("t,x="));
    assert!(!text.contains('\r'));
}

#[test]
fn simulate_rejects_unstable_grid_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fd.json");
    let cfg = serde_json::json!({
        "model": {"kappa": 1.0, "lambda": 1.0, "alpha": 1.0, "dim": 1, "noise_kind": "white_noise"},
        "scheme": {"delta": 0.125, "horizon": 1.0, "sites": [4.0]},
        "volatility": {"kind": "constant", "value": 1.0},
        "simulator": {"kind": "finite_difference", "grid": {
            "dt": 0.015625, "dx": 0.05, "domain_length": 8.0,
            "boundary": "dirichlet", "initial_condition": {"kind": "zero"}, "burn_in": 0.0
        }}
    });
    fs::write(&path, cfg.to_string()).unwrap();
    let out = run(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("kappa*dt/dx^2"), "stderr: {msg}");
}

#[test]
fn estimate_round_trips_the_simulated_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_exact_config(dir.path(), 2f64.powi(-12), 2.0);
    let csv = dir.path().join("path.csv");
    assert!(run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "7",
        "--out",
        csv.to_str().unwrap(),
    ])
    .status
    .success());

    let out = run(&["estimate", "--path", csv.to_str().unwrap(), "--method", "corr"]);
    let v = stdout_json(&out);
    let alpha = v["estimate"].as_f64().unwrap();
    assert!((alpha - 1.0).abs() < 0.2, "alpha estimate {alpha}");
    assert_eq!(v["degenerate"], serde_json::json!(false));

    // the reported estimate must equal the in-library value bit for bit
    let file = fs::File::open(&csv).unwrap();
    let (path, _) =
        spde_hfvol::ingest::read_path_csv(std::io::BufReader::new(file), 1e-9).unwrap();
    let lib = spde_hfvol::estimators::estimate_alpha_corr(&path, 0.95, None).unwrap();
    assert_eq!(alpha, lib.report.estimate);

    let out = run(&[
        "estimate",
        "--path",
        csv.to_str().unwrap(),
        "--method",
        "vol-known",
        "--alpha",
        "1",
        "--kappa",
        "1",
        "--p",
        "2",
    ]);
    let v = stdout_json(&out);
    let iv = v["estimate"].as_f64().unwrap();
    assert!((iv - 4.0).abs() < 0.4, "integrated volatility {iv} vs 4.0");

    let out = run(&[
        "estimate",
        "--path",
        csv.to_str().unwrap(),
        "--method",
        "vol-unknown",
        "--kappa",
        "1",
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["method"], "vol_unknown_alpha");
    assert_eq!(v["alpha_mode"]["mode"], "estimated");
}

#[test]
fn estimate_all_zero_path_is_degenerate_with_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("zero.csv");
    let mut text = String::from("t,x=0.0\n");
    for i in 0..64 {
        text.push_str(&format!("{},0.0\n", i as f64 * 0.01));
    }
    fs::write(&csv, text).unwrap();
    let out = run(&["estimate", "--path", csv.to_str().unwrap(), "--method", "cof"]);
    let v = stdout_json(&out);
    assert_eq!(v["degenerate"], serde_json::json!(true));
    assert!(v["estimate"].is_null(), "degenerate estimate serializes as null");
}

#[test]
fn estimate_rejects_irregular_grid_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "t,x=0\n0.0,1.0\n0.1,2.0\n0.3,1.5\n0.4,2.5\n").unwrap();
    let out = run(&["estimate", "--path", csv.to_str().unwrap(), "--method", "cof"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mc_config_validation_and_gates() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let out = run(&["mc", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // replications = 0 is a config error
    let zero = dir.path().join("zero.json");
    let mut cfg = mc_config(40);
    cfg["replications"] = serde_json::json!(0);
    fs::write(&zero, cfg.to_string()).unwrap();
    let out = run(&["mc", "--config", zero.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // an unattainable gate fails with exit 5 but still writes the report
    let gated = dir.path().join("gated.json");
    let mut cfg = mc_config(40);
    cfg["gates"] = serde_json::json!({"coverage_min": 1.1});
    fs::write(&gated, cfg.to_string()).unwrap();
    let report = dir.path().join("report.json");
    let out = run(&[
        "mc",
        "--config",
        gated.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(5));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["gates_passed"], serde_json::json!(false));
}

fn mc_config(replications: u64) -> serde_json::Value {
    serde_json::json!({
        "model": {"kappa": 1.0, "lambda": 1.0, "alpha": 1.0, "dim": 1, "noise_kind": "white_noise"},
        "scheme": {"delta": 0.00390625, "horizon": 1.0, "sites": [0.0]},
        "volatility": {"kind": "constant", "value": 1.0},
        "simulator": {"kind": "exact_stationary"},
        "target": {"kind": "clt_studentized", "spec": {"kind": "absolute", "p": 2.0}},
        "replications": replications,
        "master_seed": 99,
        "level": 0.95
    })
}

#[test]
fn mc_reports_and_csv_are_deterministic_across_thread_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("mc.json");
    fs::write(&cfg_path, mc_config(30).to_string()).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let report = dir.path().join(format!("report_{threads}.json"));
        let csv = dir.path().join(format!("reps_{threads}.csv"));
        let out = bin()
            .env("SPDE_HFVOL_THREADS", threads)
            .args([
                "mc",
                "--config",
                cfg_path.to_str().unwrap(),
                "--out",
                report.to_str().unwrap(),
                "--csv",
                csv.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push((fs::read(&report).unwrap(), fs::read(&csv).unwrap()));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "reports differ across thread counts");
    assert_eq!(outputs[0].1, outputs[1].1, "CSVs differ across thread counts");
    let csv_text = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert!(csv_text.starts_with("replication,estimate,studentized,ci_lo,ci_hi,hit\n"));
}

#[test]
fn bundled_acceptance_config_parses_and_runs_small() {
    // shrink the bundled CLT experiment and check the gate machinery end to end
    let bundled: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../acceptance/clt_white_p2.json"),
        )
        .unwrap(),
    )
    .unwrap();
    let mut cfg = bundled;
    cfg["replications"] = serde_json::json!(30);
    cfg["scheme"]["delta"] = serde_json::json!(0.00390625);
    cfg["gates"] = serde_json::json!({"ks_pvalue_min": 1e-6});
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("clt.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = run(&["mc", "--config", cfg_path.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["gates_passed"], serde_json::json!(true));
}
