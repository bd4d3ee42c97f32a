use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn rdlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdlab")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn only_run_dir(out: &Path) -> std::path::PathBuf {
    let mut dirs: Vec<_> = fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

#[test]
fn lemma36_terminates_in_two_steps() {
    let out = rdlab(&["constants", "lemma36", "--N", "2", "--q0", "2.5"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["terms"].as_array().unwrap().len(), 3);
    assert_eq!(v["steps_to_target"], 2.0);
}

#[test]
fn lemma36_rejects_start_at_two() {
    let out = rdlab(&["constants", "lemma36", "--N", "2", "--q0", "2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn duality_with_q2_anchor() {
    let out = rdlab(&["constants", "duality", "--a", "1", "--b", "3", "--q", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["condition_lhs"], 0.5);
    assert_eq!(v["d"], 1.0);
    assert_eq!(v["prefactor"], 4.0);
    assert_eq!(v["anchor"], "prop1.duality");
}

#[test]
fn rein_and_pn_calculators() {
    let v = stdout_json(&rdlab(&["constants", "pn", "--p0", "2.5"]));
    assert_eq!(v["n0"], 1);
    let out = rdlab(&["constants", "rein", "--N", "2", "--p", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["r_max"], "inf");
}

#[test]
fn simulate_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.toml");
    fs::write(
        &cfg,
        "amplitude = 0.3\nseed = 11\n[grid]\ndims = 2\nextents = [2.0, 2.0]\ncells = [12, 12]\n\
         [simulation]\nt_final = 0.2\ndt = 0.01\nsample_every = 2\n",
    )
    .unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let o = rdlab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        only_run_dir(&out)
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a.file_name(), b.file_name());
    for f in ["series.csv", "snapshots.bin", "report.json", "manifest.json", "config.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["partial"], false);
    assert!(manifest["anchors"].as_array().unwrap().iter().any(|x| x == "prop2.conservation"));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "amplitud = 0.3\n").unwrap();
    let o = rdlab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn equilibrium_of_four_species() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rdlab(&["equilibrium", "--averages", "1,0,1,0", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    for x in v["values"].as_array().unwrap() {
        assert!((x.as_f64().unwrap() - 0.5).abs() < 1e-10);
    }
}

#[test]
fn failed_run_leaves_partial_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rdlab(&["simulate", "--grid", "8x8", "--T", "0.1", "--dt=-1", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let dir = only_run_dir(tmp.path());
    let manifest: Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["partial"], true);
    assert!(manifest["error"].is_string());
}

#[test]
fn small_experiment_and_verify_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = rdlab(&["experiment", "prop2", "--grid", "12x12", "--T", "4", "--dt", "0.01", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout_json(&o)["fit"]["kappa2"].as_f64().unwrap() > 0.0);
    let o = rdlab(&["verify", "--grid", "16x16", "--samples", "3", "--T", "0.2", "--dt", "0.02", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["all_within_bound"], true);
}
