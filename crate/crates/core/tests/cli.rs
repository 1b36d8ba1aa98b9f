//! End-to-end runs of the `arnold` binary on a small configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const MU: &str = "1e-3";

fn small_args() -> Vec<String> {
    [
        "--hbar0", "2e-3", "--n-max", "80", "--n0", "40", "--k-halfwidth", "10", "--q-halfwidth", "4", "--periods", "400",
        "--set", "dynamics.fit_window=[20,200]",
        "--set", "dynamics.bootstrap=50",
        "--set", "classical.layer.points=30",
        "--set", "classical.layer.zoom_levels=0",
        "--set", "classical.layer.indicator.periods=150",
        "--set", "classical.diffusion.ensemble_size=8",
        "--set", "classical.diffusion.periods=120",
        "--set", "classical.diffusion.window=[10,100]",
        "--set", "classical.diffusion.bootstrap=50",
        "--set", "scan.mu_grid=[1e-3]",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn arnold(dir: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arnold"))
        .args(small_args())
        .arg("--output-dir")
        .arg(dir.join("out"))
        .arg("--cache-dir")
        .arg(dir.join("cache"))
        .args(extra)
        .env_remove("ARNOLD_OUTPUT_DIR")
        .env_remove("ARNOLD_CACHE_DIR")
        .output()
        .unwrap()
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "csv").then(|| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        })
        .collect()
}

fn manifest_hash(out: &Path) -> String {
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    m["config_hash"].as_str().unwrap().to_string()
}

#[test]
fn scan_is_deterministic_and_matches_individual_stages() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&arnold(a.path(), &["scan"]));
    ok(&arnold(b.path(), &["evolve", "--mu", MU]));
    ok(&arnold(b.path(), &["classical", "--mu", MU]));
    let fa = csv_files(&a.path().join("out"));
    let fb = csv_files(&b.path().join("out"));
    for name in ["evolve_1.000e-3.csv", "classical_1.000e-3.csv", "layer_1.000e-3.csv"] {
        assert!(fa.contains_key(name), "scan did not write {name}");
        assert_eq!(fa[name], fb[name], "{name} differs between scan and individual stage");
    }

    let c = tempfile::tempdir().unwrap();
    ok(&arnold(c.path(), &["scan"]));
    assert_eq!(fa, csv_files(&c.path().join("out")), "repeated scan is not byte-identical");
}

#[test]
fn every_csv_carries_the_manifest_hash() {
    let d = tempfile::tempdir().unwrap();
    ok(&arnold(d.path(), &["spectrum"]));
    ok(&arnold(d.path(), &["resonance", "--mu", MU]));
    ok(&arnold(d.path(), &["floquet", "--mu", MU]));
    let out = d.path().join("out");
    let hash = manifest_hash(&out);
    let files = csv_files(&out);
    assert!(files.len() >= 3);
    for (name, bytes) in files {
        let text = String::from_utf8(bytes).unwrap();
        let line = text.lines().find(|l| l.starts_with("# config_hash:")).unwrap_or_else(|| panic!("{name} has no hash header"));
        assert_eq!(line.trim_start_matches("# config_hash:").trim(), hash, "{name}");
    }
}

#[test]
fn scan_resumes_from_manifest() {
    let d = tempfile::tempdir().unwrap();
    let first = ok(&arnold(d.path(), &["scan"]));
    assert!(!first.contains("reused from manifest"));
    let second = ok(&arnold(d.path(), &["scan"]));
    assert!(second.contains("mu = 1e-3: reused from manifest"), "{second}");
}

#[test]
fn cached_stages_are_reused_and_corrupt_entries_recomputed() {
    let d = tempfile::tempdir().unwrap();
    let first = arnold(d.path(), &["floquet", "--mu", MU]);
    let err = String::from_utf8_lossy(&first.stderr).into_owned();
    ok(&first);
    assert!(err.contains("cache: operator mu = 1e-3 miss"), "{err}");
    let summary = ok(&first);

    let second = arnold(d.path(), &["floquet", "--mu", MU]);
    assert_eq!(ok(&second), summary);
    assert!(String::from_utf8_lossy(&second.stderr).contains("cache: operator mu = 1e-3 hit"));

    let op = fs::read_dir(d.path().join("cache"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("operator-"))
        .unwrap();
    let mut bytes = fs::read(&op).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    bytes.truncate(bytes.len() - 7);
    fs::write(&op, bytes).unwrap();
    let third = arnold(d.path(), &["floquet", "--mu", MU]);
    assert_eq!(ok(&third), summary);
    assert!(String::from_utf8_lossy(&third.stderr).contains("cache: operator mu = 1e-3 recomputed"));
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let d = tempfile::tempdir().unwrap();
    let code = |o: Output| o.status.code().unwrap();
    assert_eq!(code(arnold(d.path(), &["--set", "resonance.n0=-3", "spectrum"])), 1);
    assert_eq!(code(arnold(d.path(), &["--set", "no.such.key=1", "spectrum"])), 1);
    assert_eq!(code(arnold(d.path(), &["bogus"])), 1);
    assert_eq!(code(arnold(d.path(), &[])), 1);
    assert_eq!(code(arnold(d.path(), &["figure", "fig9"])), 1);
    assert_eq!(code(arnold(d.path(), &["--cache-only", "floquet", "--mu", MU])), 1);
    assert_eq!(code(arnold(d.path(), &["--set", "floquet.steps_per_period=4", "floquet", "--mu", MU])), 2);
    let partial = arnold(d.path(), &["--set", "resonance.q_halfwidth=2", "scan"]);
    assert!(String::from_utf8_lossy(&partial.stderr).contains("FAILED"));
    assert_eq!(code(partial), 3);
}

#[test]
fn environment_overrides_directories() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("env-out");
    let cache = d.path().join("env-cache");
    let o = Command::new(env!("CARGO_BIN_EXE_arnold"))
        .args(small_args())
        .arg("spectrum")
        .env("ARNOLD_OUTPUT_DIR", &out)
        .env("ARNOLD_CACHE_DIR", &cache)
        .current_dir(d.path())
        .output()
        .unwrap();
    ok(&o);
    assert!(out.join("spectrum.csv").exists());
    assert!(fs::read_dir(&cache).unwrap().count() > 0);
    assert!(!d.path().join("out").exists());

    let flag = d.path().join("flag-out");
    let o = Command::new(env!("CARGO_BIN_EXE_arnold"))
        .args(small_args())
        .arg("--output-dir")
        .arg(&flag)
        .arg("spectrum")
        .env("ARNOLD_OUTPUT_DIR", &out)
        .env("ARNOLD_CACHE_DIR", &cache)
        .output()
        .unwrap();
    ok(&o);
    assert!(flag.join("spectrum.csv").exists());
}

#[test]
fn print_config_round_trips_through_a_file() {
    let d = tempfile::tempdir().unwrap();
    let printed = ok(&arnold(d.path(), &["--print-config"]));
    let path = d.path().join("run.toml");
    fs::write(&path, &printed).unwrap();
    let again = Command::new(env!("CARGO_BIN_EXE_arnold")).arg("--config").arg(&path).arg("--print-config").output().unwrap();
    assert_eq!(ok(&again), printed);
}
