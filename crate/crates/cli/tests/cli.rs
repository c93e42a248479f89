use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nexdiff(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nexdiff"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("NEXDIFF_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn only_subdir(dir: &Path) -> PathBuf {
    let entries: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1, "{entries:?}");
    entries[0].clone()
}

const PLAN: &str = r#"{
  "experiment": {
    "ns": [40, 80],
    "runs_per_n": 4,
    "times": [0.1, 0.2],
    "kernel": { "family": { "type": "biot_savart" } },
    "delta_c": 1.0,
    "w": { "type": "two_piece", "a1": 1.0, "a2": -1.0 },
    "w_tilde": { "type": "constant", "c": 1.0 },
    "initial": { "type": "gaussian", "mean": [0.0, 0.0], "sigma": 1.0 },
    "pde": { "m": 64, "half_width": 8.0, "dt": 0.01 },
    "seed_base": 5,
    "dt": 0.05
  }
}"#;

#[test]
fn validate_fast_prints_a_full_table_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nexdiff(&["validate", "--fast"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().filter(|l| l.contains(" PASS ") || l.contains(" FAIL ")).collect();
    assert_eq!(rows.len(), 10, "{stdout}");
    assert!(stdout.lines().last().unwrap().ends_with("failed"));
    let dir = only_subdir(tmp.path());
    let csv = fs::read_to_string(dir.join("validation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn strict_validation_of_passing_checks_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nexdiff(&["validate", "--fast", "--strict", "--only", "3,5,9"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let out = nexdiff(&["validate", "--only", "42"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_kernel_family_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.json",
        r#"{
  "simulate": {
    "n": 10,
    "dt": 0.01,
    "T": 0.1,
    "kernel": { "regularization": { "type": "none" } },
    "weights": { "type": "constant", "c": 1.0 },
    "seed": 1,
    "initial": { "type": "gaussian", "mean": [0.0, 0.0], "sigma": 1.0 }
  }
}"#,
    );
    let out = nexdiff(&["simulate", cfg.to_str().unwrap()], &tmp.path().join("runs"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("simulate.kernel"), "{err}");
    assert!(err.contains("missing field `family`"), "{err}");
    assert!(err.contains("bad.json:6:"), "{err}");
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn malformed_and_invalid_configs_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let broken = write(tmp.path(), "broken.json", "{\n  \"simulate\": {\n    \"n\": 10,\n  }\n}\n");
    let out = nexdiff(&["simulate", broken.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.json:4:"));

    let negative = write(
        tmp.path(),
        "neg.json",
        r#"{
  "simulate": {
    "n": 10, "dt": -0.01, "T": 0.1,
    "kernel": { "family": { "type": "zero" } },
    "weights": { "type": "constant", "c": 1.0 },
    "seed": 1,
    "initial": { "type": "gaussian", "mean": [0.0, 0.0], "sigma": 1.0 }
  }
}"#,
    );
    let out = nexdiff(&["simulate", negative.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("neg.json:2: simulate:") && err.contains("dt"), "{err}");

    let out = nexdiff(&["pde", negative.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing section `pde`"));
}

#[test]
fn runtime_failures_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    // a strong vortex with a huge step violates the advective CFL bound
    let cfg = write(
        tmp.path(),
        "cfl.json",
        r#"{
  "pde": {
    "m": 64, "half_width": 4.0, "dt": 2.0, "t0": 0.1, "output_times": [4.1],
    "v0": { "type": "oseen", "circulation": 20.0, "t": 0.1 },
    "g0": { "type": "constant", "value": 1.0 },
    "require_compact_support": false
  }
}"#,
    );
    let out = nexdiff(&["pde", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CFL"));
}

#[test]
fn converge_is_byte_for_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "plan.json", PLAN);
    let mut dirs = Vec::new();
    for k in 0..2 {
        let base = tmp.path().join(format!("out{k}"));
        let out = nexdiff(&["converge", cfg.to_str().unwrap()], &base);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        dirs.push(only_subdir(&base));
    }
    for name in ["errors.csv", "diagnostics.csv"] {
        let a = fs::read(dirs[0].join(name)).unwrap();
        let b = fs::read(dirs[1].join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn report_schema_is_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "plan.json", PLAN);
    let base = tmp.path().join("out");
    let out = nexdiff(&["converge", cfg.to_str().unwrap()], &base);
    assert_eq!(out.status.code(), Some(0));
    let dir = only_subdir(&base);
    let errors = fs::read_to_string(dir.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().next().unwrap(), "N,run_count,t,phi_id,target,weak_error,stderr");
    // 2 N x 2 t x 2 targets x 14 test functions
    assert_eq!(errors.lines().count(), 1 + 112);
    let diag = fs::read_to_string(dir.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().next().unwrap(), "N,run_count,t,gamma_moment,kde_entropy,kde_fisher,tightness");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let mut keys: Vec<&str> = manifest.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    keys.sort();
    assert_eq!(
        keys,
        [
            "command",
            "config",
            "config_hash",
            "coupling",
            "outputs",
            "phi",
            "reference_wall_time_s",
            "seeds",
            "status",
            "truncated",
            "version",
            "wall_time_s",
            "wall_times_per_n"
        ]
    );
    assert_eq!(manifest["seeds"], serde_json::json!([5, 6, 7, 8]));
    assert_eq!(manifest["status"], "ok");
}

#[test]
fn environment_sets_the_output_base() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "w.json",
        r#"{ "weights_check": { "family": { "type": "two_piece", "a1": 1.0, "a2": -1.0 }, "r": [2.0, "inf"], "ns": [10, 100] } }"#,
    );
    let base = tmp.path().join("from_env");
    let out = Command::new(env!("CARGO_BIN_EXE_nexdiff"))
        .args(["weights-check", cfg.to_str().unwrap()])
        .env("NEXDIFF_OUT_DIR", &base)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let dir = only_subdir(&base);
    assert_eq!(fs::read_to_string(dir.join("wr.csv")).unwrap(), "r,N,norm\n2,10,1\n2,100,1\ninf,10,1\ninf,100,1\n");
}

#[test]
fn simulate_and_pde_write_their_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "run.json",
        r#"{
  "simulate": {
    "n": 20, "dt": 0.01, "T": 0.05,
    "kernel": { "family": { "type": "biot_savart" }, "regularization": { "type": "blob", "delta": 0.1 } },
    "weights": { "type": "two_piece", "a1": 1.0, "a2": -1.0 },
    "seed": 3,
    "initial": { "type": "gaussian", "mean": [0.0, 0.0], "sigma": 1.0 }
  },
  "pde": {
    "m": 64, "half_width": 8.0, "dt": 0.01, "t0": 0.5, "output_times": [0.6],
    "v0": { "type": "oseen", "circulation": 1.0, "t": 0.5 },
    "g0": { "type": "gaussian", "mean": [0.5, 0.0], "sigma": 0.6 }
  }
}"#,
    );
    let out = nexdiff(&["simulate", cfg.to_str().unwrap()], &tmp.path().join("s"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = only_subdir(&tmp.path().join("s"));
    let frames = nexdiff_core::io::read_frames(&mut fs::File::open(dir.join("trajectory.bin")).unwrap()).unwrap();
    assert_eq!(frames.len(), 6);
    assert_eq!(frames[5].t, 0.05);
    assert_eq!(frames[5].len(), 20);

    let out = nexdiff(&["pde", cfg.to_str().unwrap()], &tmp.path().join("p"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = only_subdir(&tmp.path().join("p"));
    let v = nexdiff_core::io::read_grid(&mut fs::File::open(dir.join("v_0.bin")).unwrap()).unwrap();
    assert_eq!((v.nx, v.ny), (64, 64));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary["oracle"][0]["oseen_relative_l2_error"].as_f64().unwrap() < 1e-3);
}
