use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gvi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gvi")).args(args).output().expect("run gvi")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_with(config: &str, sub: &str, out: &Path, extra: &[&str]) -> Output {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    fs::write(&path, config).unwrap();
    let mut args = vec![sub, path.to_str().unwrap(), "-o", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    gvi(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_reproduces_conjugate_posterior() {
    let out = tempfile::tempdir().unwrap();
    let cfg = configs().join("solve_kl.toml");
    let o = gvi(&["solve", cfg.to_str().unwrap(), "-o", out.path().to_str().unwrap(), "--format", "pretty"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("N(0.800000, 0.200000)"), "{}", stdout(&o));
    assert!(out.path().join("solve.csv").exists());
    assert!(out.path().join("config.json").exists());
}

#[test]
fn le_cam_bound_is_two() {
    let o = gvi(&["divergence", "--kind", "lecam", "--check-bound"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "2");
    let o = gvi(&["divergence", "--kind", "kl", "--check-bound"]);
    assert_eq!(stdout(&o).trim(), "inf");
}

#[test]
fn zero_beta_is_a_config_error() {
    let out = tempfile::tempdir().unwrap();
    let o = run_with("beta = 0\n[data]\nvalues = [1.0]\n", "solve", out.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("beta > 0"), "{}", stderr(&o));
}

#[test]
fn region_needs_a_bounded_divergence() {
    let out = tempfile::tempdir().unwrap();
    let o = run_with("divergence = \"kl\"\n[data]\nvalues = [1.0]\n", "region", out.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("region requires a bounded divergence"), "{}", stderr(&o));
}

#[test]
fn every_config_error_is_reported() {
    let out = tempfile::tempdir().unwrap();
    let o = run_with(
        "sigma_p = -1\ntypo = 3\n[experiment]\nseed = 4\neps_a = 2.0\n",
        "rates",
        out.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for needle in ["sigma_p", "unknown key `typo`", "unknown key `experiment.seed`", "eps_a"] {
        assert!(err.contains(needle), "missing {needle} in {err}");
    }
}

#[test]
fn rates_are_written_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("rates_tv.toml");
    for dir in [a.path(), b.path()] {
        let o = gvi(&["rates", cfg.to_str().unwrap(), "-o", dir.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let first = fs::read(a.path().join("rates.csv")).unwrap();
    assert!(first.starts_with(b"n,eps_n,mass,slack,objective,seed\n"));
    assert_eq!(first, fs::read(b.path().join("rates.csv")).unwrap());
    assert_eq!(
        fs::read(a.path().join("config.json")).unwrap(),
        fs::read(b.path().join("config.json")).unwrap()
    );
}

#[test]
fn json_output_carries_schema_and_fingerprint() {
    let out = tempfile::tempdir().unwrap();
    let o = run_with(
        "divergence = \"tv\"\n[experiment]\nn = [10, 100]\nseeds = [1, 2]\n",
        "rates",
        out.path(),
        &["--format", "json", "--seed", "7"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.path().join("rates.json")).unwrap()).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["fingerprint"].as_str().unwrap().len(), 64);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["seed"] == 7));
}

#[test]
fn failed_contract_exits_one() {
    let out = tempfile::tempdir().unwrap();
    let o = run_with(
        "divergence = \"tv\"\n[experiment]\nn = [10, 20]\neps_c = 0.001\n",
        "rates",
        out.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("posterior rate contract violated"), "{}", stderr(&o));
    assert!(out.path().join("rates.csv").exists());
}

#[test]
fn linear_bound_schedule_is_rejected() {
    let out = tempfile::tempdir().unwrap();
    let o = run_with(
        "divergence = \"tv\"\n[schedules.bound]\nkind = \"power\"\nexponent = 1.0\n[experiment]\neps_a = 0.25\n",
        "schedule",
        out.path(),
        &[],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("does not grow"), "{}", stderr(&o));
}

#[test]
fn bundled_configs_run() {
    for (sub, file) in [
        ("region", "region_tv.toml"),
        ("concentrate", "concentrate_tv.toml"),
        ("compare", "compare_tv.toml"),
        ("schedule", "schedule_tv_sqrt_n.toml"),
        ("unbounded", "unbounded_kl.toml"),
    ] {
        let out = tempfile::tempdir().unwrap();
        let cfg = configs().join(file);
        let o = gvi(&[sub, cfg.to_str().unwrap(), "-o", out.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{sub}: {}", stderr(&o));
    }
}

#[test]
fn help_lists_config_keys() {
    let o = gvi(&["rates", "--help"]);
    let text = stdout(&o);
    for key in ["experiment.eps_a", "schedules.bound.kind", "prior.variance", "beta"] {
        assert!(text.contains(key), "help lacks {key}");
    }
}
