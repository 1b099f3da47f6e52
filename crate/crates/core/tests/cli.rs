use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn tnl(dir: &Path, args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tnl"));
    cmd.current_dir(dir).args(args).env_remove("TNL_SEED").env("RUST_LOG", "warn");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn tnl")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const RATE: &str = r#"{"kind": "lln_transport", "grid": 16, "T": 0.02, "dt": 1e-3,
  "n_list": [1, 2, 4], "paths": 6, "seed": 11, "saves": 4, "output": "rate"}"#;

#[test]
fn validate_lists_every_violation() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.json",
        r#"{"kind": "clt_euler", "grid": 64, "n_list": [4, 32], "alpha": 0.5, "norms": {"beta": 0.5}}"#,
    );
    let out = tnl(tmp.path(), &["validate", &cfg], &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("n = 32"), "{err}");
    assert!(err.contains("beta"), "{err}");
}

#[test]
fn validate_accepts_minimal_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "ok.json", r#"{"kind": "lln_transport"}"#);
    let out = tnl(tmp.path(), &["validate", &cfg], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("N = 64"));
}

#[test]
fn unknown_fields_are_schema_errors() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "typo.json", r#"{"kind": "lln_transport", "gird": 32}"#);
    let out = tnl(tmp.path(), &["validate", &cfg], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("gird"));
}

#[test]
fn reruns_are_byte_identical_and_need_force() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "rate.json", RATE);
    let first = tnl(tmp.path(), &["run", &cfg], &[]);
    assert!(first.status.success(), "{}", stderr(&first));
    let dir = tmp.path().join("rate");
    for f in ["config.json", "metadata.json", "rate.json", "points.csv", "samples.csv", "rate.dat"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let samples = fs::read(dir.join("samples.csv")).unwrap();

    let refused = tnl(tmp.path(), &["run", &cfg], &[]);
    assert_eq!(refused.status.code(), Some(2));
    assert!(stderr(&refused).contains("--force"));

    let forced = tnl(tmp.path(), &["run", &cfg, "--force"], &[]);
    assert!(forced.status.success(), "{}", stderr(&forced));
    assert_eq!(fs::read(dir.join("samples.csv")).unwrap(), samples);

    let other = tnl(tmp.path(), &["run", &cfg, "--out", "elsewhere", "--threads", "2"], &[]);
    assert!(other.status.success(), "{}", stderr(&other));
    assert_eq!(fs::read(tmp.path().join("elsewhere/samples.csv")).unwrap(), samples);
}

#[test]
fn seed_env_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "rate.json", RATE);
    assert!(tnl(tmp.path(), &["run", &cfg, "--out", "a"], &[]).status.success());
    let out = tnl(tmp.path(), &["run", &cfg, "--out", "b"], &[("TNL_SEED", "99")]);
    assert!(out.status.success(), "{}", stderr(&out));
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("b/metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 99);
    assert_eq!(meta["seed_source"], "override");
    let echo: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("b/config.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 99);
    assert_ne!(
        fs::read(tmp.path().join("a/samples.csv")).unwrap(),
        fs::read(tmp.path().join("b/samples.csv")).unwrap()
    );

    let bad = tnl(tmp.path(), &["run", &cfg, "--out", "c"], &[("TNL_SEED", "abc")]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn noise_and_dual_kinds_write_check_tables() {
    let tmp = TempDir::new().unwrap();
    let noise = write(tmp.path(), "noise.json", r#"{"kind": "noise_checks", "grid": 32, "output": "noise"}"#);
    let out = tnl(tmp.path(), &["run", &noise], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = fs::read_to_string(tmp.path().join("noise/checks.csv")).unwrap();
    assert!(table.lines().count() > 4);
    assert!(!table.contains("false"), "{table}");

    let dual = write(tmp.path(), "dual.json", r#"{"kind": "dual_checks", "grid": 32, "dt": 1e-4, "output": "dual"}"#);
    let out = tnl(tmp.path(), &["run", &dual], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(tmp.path().join("dual/dual.csv").is_file());
}

#[test]
fn checks_subcommand_reports_pass_lines() {
    let tmp = TempDir::new().unwrap();
    let out = tnl(tmp.path(), &["checks", "spectral"], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{text}");

    let unknown = tnl(tmp.path(), &["checks", "everything"], &[]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let out = tnl(&dir, &["validate", path.to_str().unwrap()], &[]);
            assert!(out.status.success(), "{}: {}", path.display(), stderr(&out));
            seen += 1;
        }
    }
    assert_eq!(seen, 8);
}
