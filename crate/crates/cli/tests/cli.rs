use std::path::Path;
use std::process::{Command, Output};

use tweezer_rb::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tweezer-rb"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn tiny_config(dir: &Path) -> String {
    let mut c = ExperimentConfig::fig4(21);
    c.array.rows = 2;
    c.array.cols = 1;
    c.rb.strings = 2;
    c.rb.max_length = 40;
    c.rb.lengths = vec![1, 4, 12, 40];
    c.rb.shots = 16;
    c.readout.threshold_shots = 1000;
    let path = dir.join("tiny.json");
    std::fs::write(&path, c.to_json()).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn verify_tables_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify-tables", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("closure: 576/576 ok"));
    assert!(stdout.contains("5.8333π with BB1"));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn rb_is_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, w) in [(&a, "1"), (&b, "4")] {
        let out = run(&["rb", "--config", &cfg, "--out", dir.to_str().unwrap(), "--workers", w]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (fa, fb) = (read_all(&a), read_all(&b));
    assert!(fa.len() > 10);
    assert_eq!(fa, fb);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&["rb", "--config", &cfg, "--out", a.to_str().unwrap(), "--seed", "21"]);
    run(&["rb", "--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "22"]);
    assert_eq!(std::fs::read(a.join("config.json")).unwrap(), std::fs::read(tmp.path().join("tiny.json")).map(|mut v| {
        v.push(b'\n');
        v
    }).unwrap());
    assert_ne!(std::fs::read(a.join("strings.json")).unwrap(), std::fs::read(b.join("strings.json")).unwrap());
}

#[test]
fn validation_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("o");
    let o = out_dir.to_str().unwrap();
    assert_eq!(run(&["rb", "--out", o]).status.code(), Some(1));
    assert_eq!(run(&["rb", "--config", "/nonexistent.json", "--out", o]).status.code(), Some(1));
    assert_eq!(run(&["rb", "--bogus"]).status.code(), Some(1));

    let mut v: serde_json::Value = serde_json::from_str(&ExperimentConfig::desk(1).to_json()).unwrap();
    v["pulse"]["rabi_hz"] = 9600.into();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = run(&["ndro", "--config", bad.to_str().unwrap(), "--out", o]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rabi_hz"));

    let cfg = tiny_config(tmp.path());
    assert_eq!(run(&["rb", "--config", &cfg, "--out", o, "--workers", "0"]).status.code(), Some(1));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let file = tmp.path().join("occupied");
    std::fs::write(&file, b"x").unwrap();
    let out = run(&["rb", "--config", &cfg, "--out", file.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
