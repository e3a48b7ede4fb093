use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_clusterlimit");

fn example() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example.toml")
}

fn cli(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("CLUSTERLIMIT_OUT_DIR")
        .output()
        .unwrap()
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"
[grid]
n = 64
[params]
delta = 0.02
epsilon = 0.5
r = 1.0
law = "bistable"
a = 0.25
[ic]
preset = "random_fourier"
seed = 1
[step]
dt_max = 1e-2
t_end = 0.3
[sweep]
deltas = [0.1, 0.01]
{extra}
"#
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_bundled_example_succeeds() {
    let out = tempfile::tempdir().unwrap();
    let res = cli(&[
        "--quiet",
        "--out-dir",
        out.path().to_str().unwrap(),
        "simulate",
        example().to_str().unwrap(),
    ]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    for f in [
        "trajectory.csv",
        "snapshots.csv",
        "estimates.csv",
        "report.txt",
    ] {
        assert!(out.path().join(f).exists(), "{f} missing");
    }
    let traj = fs::read_to_string(out.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,mass,"));
}

#[test]
fn impossible_kappa_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "[estimates]\nkappa = 0.5");
    let res = cli(&[
        "--quiet",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "verify",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    let csv = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(csv.contains("uniform_sup,bistable,false"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&[]).status.code(), Some(1));
    let res = cli(&["frobnicate"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("Usage"));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
    assert_eq!(
        cli(&["simulate", "/nonexistent/config.toml"]).status.code(),
        Some(1)
    );
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("delta = 0.02", "delta = 1.5")
        .replace("epsilon = 0.5", "epsilon = -1.0");
    fs::write(&cfg, text).unwrap();
    let res = cli(&["simulate", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("delta must lie in [0,1)"), "{err}");
    assert!(err.contains("params.epsilon"), "{err}");
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let target = dir.path().join("from_env");
    let res = Command::new(BIN)
        .args(["--quiet", "simulate", cfg.to_str().unwrap()])
        .env("CLUSTERLIMIT_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0));
    assert!(target.join("trajectory.csv").exists());
}

#[test]
fn repeated_runs_are_byte_identical_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let res = cli(&[
            "--quiet",
            "--seed",
            seed,
            "--out-dir",
            out.to_str().unwrap(),
            "simulate",
            cfg.to_str().unwrap(),
        ]);
        assert_eq!(res.status.code(), Some(0));
        (
            fs::read(out.join("trajectory.csv")).unwrap(),
            fs::read(out.join("snapshots.csv")).unwrap(),
        )
    };
    let a = run("a", "5");
    let b = run("b", "5");
    let c = run("c", "6");
    assert_eq!(a, b);
    assert_ne!(a.1, c.1);
}

#[test]
fn sweep_report_has_one_row_per_delta_and_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "times = [0.1, 0.3]");
    let res = cli(&[
        "--quiet",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "sweep",
        cfg.to_str().unwrap(),
    ]);
    assert!(matches!(res.status.code(), Some(0) | Some(2)));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
}

#[test]
fn stability_and_mms_subcommands_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(
        dir.path(),
        "[mms]\nresolutions = [32, 64, 128]\n[stability]\netas = [1e-2, 1e-3]",
    );
    for cmd in ["stability", "mms"] {
        let res = cli(&[
            "--quiet",
            "--out-dir",
            dir.path().to_str().unwrap(),
            cmd,
            cfg.to_str().unwrap(),
        ]);
        assert!(
            matches!(res.status.code(), Some(0) | Some(2)),
            "{cmd}: {}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
    assert_eq!(
        fs::read_to_string(dir.path().join("mms.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );
    assert!(dir.path().join("stability_series.csv").exists());
}

#[test]
fn bundled_mms_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/mms.toml");
    let res = cli(&[
        "--quiet",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "mms",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0));
}
