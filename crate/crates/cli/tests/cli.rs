use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chaosjump_cli::config::parse_config;
use chaosjump_cli::output::sha256_hex;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chaosjump"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn call(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(cmd).arg("--config").arg(config).arg("--out-dir").arg(out).args(extra).output().unwrap()
}

const SMALL_SYSTEMIC: &str = "[model]\nname = \"systemic_risk\"\njump_scale = 0.5\ninitial_std = 0.5\n\
    [sim]\nT = 1.0\ndt = 0.05\nn = 4\nn_grid = [2, 4, 8]\nN_ref = 64\nR = 4\n";

#[test]
fn minimal_config_fills_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.toml", "[model]\nname = \"zero\"\n[sim]\nT = 3.0\n");
    let c = parse_config(&p).unwrap();
    assert_eq!(c.sim.dt, 3.0 / 1000.0);
    assert_eq!(c.sim.n_ref, 2048);
    assert_eq!(c.sim.replications, 64);
}

#[test]
fn zero_dt_is_rejected_by_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.toml", "[model]\nname = \"zero\"\n[sim]\nT = 1.0\ndt = 0\n");
    let out = call("simulate", &p, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sim.dt"));
}

#[test]
fn unknown_key_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.toml", "[model]\nname = \"zero\"\nfoo = 1\n[sim]\nT = 1.0\nfoo = 2\n");
    let out = call("simulate", &p, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sim.foo: unknown key"), "{err}");
    assert!(err.contains("model.foo: unknown key"), "{err}");
}

#[test]
fn missing_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = call("study", &dir.path().join("absent.toml"), &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_seed_and_thread_flags() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.toml", "[model]\nname = \"zero\"\n[sim]\nT = 1.0\n");
    let out = call("simulate", &p, &dir.path().join("o"), &["--seed-common", "0xzz"]);
    assert_eq!(out.status.code(), Some(2));
    let out = call("simulate", &p, &dir.path().join("o"), &["--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn study_on_zero_model_has_zero_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(
        dir.path(),
        "c.toml",
        "[model]\nname = \"zero\"\ninitial_std = 0.0\n[sim]\nT = 1.0\ndt = 0.1\nn_grid = [2, 4, 8]\nN_ref = 32\nR = 3\n",
    );
    let o = dir.path().join("o");
    let out = call("study", &p, &o, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(o.join("study.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,replications,path_err_sq,path_err_se,w2_err_sq,w2_err_se"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let f: Vec<f64> = row.split(',').skip(2).map(|v| v.parse().unwrap()).collect();
        assert_eq!(f, vec![0.0; 4]);
    }
}

#[test]
fn halved_lipschitz_constant_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(
        dir.path(),
        "c.toml",
        "[model]\nname = \"systemic_risk\"\ndeclared_k = 1.0\n[sim]\nT = 1.0\n[validate]\nsamples = 2000\n",
    );
    let o = dir.path().join("o");
    let out = call("validate", &p, &o, &[]);
    assert_eq!(out.status.code(), Some(1));
    let summary: Value = serde_json::from_slice(&fs::read(o.join("summary.json")).unwrap()).unwrap();
    let failing = summary["failing"].as_array().unwrap();
    assert!(failing.iter().any(|f| f.as_str().unwrap().contains("lipschitz")), "{failing:?}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL systemic_risk: lipschitz"));
}

#[test]
fn derived_constants_pass_validation() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(
        dir.path(),
        "c.toml",
        "[model]\nname = \"systemic_risk\"\n[sim]\nT = 1.0\n[validate]\nsamples = 2000\n",
    );
    let out = call("validate", &p, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn unstable_step_exits_with_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(
        dir.path(),
        "c.toml",
        "[model]\nname = \"independent_ou\"\nmean_reversion = 1000.0\n[sim]\nT = 50.0\ndt = 0.1\nn = 2\nR = 1\n",
    );
    let out = call("simulate", &p, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("divergence"));
}

#[test]
fn regime_command_needs_a_regime_model() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.toml", SMALL_SYSTEMIC);
    let out = call("regime", &p, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn regime_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(
        dir.path(),
        "c.toml",
        "[model]\nname = \"regime_switching\"\nstates = [0.0, 1.0]\nrates = [[0.0, 1.0], [2.0, 0.0]]\n\
         [sim]\nT = 10.0\ndt = 0.1\nn = 2\nR = 2\n[output]\ntrajectories = false\n",
    );
    let o = dir.path().join("o");
    assert_eq!(call("regime", &p, &o, &[]).status.code(), Some(0));
    let csv = fs::read_to_string(o.join("regime.csv")).unwrap();
    assert!(csv.starts_with("replication,time,regime_state\n0,0.0000000000000000e0,0\n"));
    assert!(!o.join("trajectories.csv").exists());
}

#[test]
fn replay_is_byte_identical_and_manifest_checksums_match() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.toml", SMALL_SYSTEMIC);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for o in [&a, &b] {
        let out = call("simulate", &p, o, &["--seed-common", "0x2a", "--seed-idio", "17"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let traj = fs::read(a.join("trajectories.csv")).unwrap();
    assert_eq!(traj, fs::read(b.join("trajectories.csv")).unwrap());
    assert!(traj.starts_with(b"replication,particle,time,coord_index,value,is_jump\n"));

    let manifest = |dir: &Path| -> Value { serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap() };
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["files"], mb["files"]);
    assert_eq!(ma["config_sha256"], Value::from(sha256_hex(&fs::read(&p).unwrap())));
    assert_eq!(ma["seeds"]["common_seed"], Value::from(42));
    for f in ma["files"].as_array().unwrap() {
        let name = f["name"].as_str().unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), sha256_hex(&fs::read(a.join(name)).unwrap()));
    }
}

#[test]
fn different_common_seed_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.toml", SMALL_SYSTEMIC);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    call("couple", &p, &a, &["--seed-common", "1"]);
    call("couple", &p, &b, &["--seed-common", "2"]);
    assert_ne!(fs::read(a.join("study.csv")).unwrap(), fs::read(b.join("study.csv")).unwrap());
}
