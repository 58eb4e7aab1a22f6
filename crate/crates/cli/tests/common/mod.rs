#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_callisense"))
}

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs `synth` into `dir` with the given extra flags; panics on failure.
pub fn synth(script: &Path, dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--script", s(script), "--out", s(dir)];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "synth failed: {}", String::from_utf8_lossy(&out.stderr));
}

/// Runs `process` on a synth directory; panics on failure.
pub fn process(dir: &Path, out: &Path, extra: &[&str]) {
    let manifest = dir.join("manifest.json");
    let mut args = vec!["process", "--manifest", s(&manifest), "--out", s(out)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "process failed: {}", String::from_utf8_lossy(&o.stderr));
}
