#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn sparse<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparse"))
        .args(args)
        .output()
        .expect("failed to launch sparse")
}

pub fn run_ok<S: AsRef<std::ffi::OsStr>>(args: &[S]) {
    let out = sparse(args);
    assert!(
        out.status.success(),
        "sparse {:?} failed: {}",
        args.iter().map(|a| a.as_ref().to_string_lossy().into_owned()).collect::<Vec<_>>(),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

pub fn bytes(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

/// Small planted train/eval splits plus similarity pairs in `dir`.
pub fn small_corpus(dir: &Path) -> (String, String, String) {
    let (train, eval, sim) = (p(dir, "train.jsonl"), p(dir, "eval.jsonl"), p(dir, "sim.jsonl"));
    let base = ["generate-synthetic", "--n", "8", "--planted", "2,5", "--magnitude", "2", "--sigma", "0.3"];
    let mut a: Vec<String> = base.iter().map(|s| s.to_string()).collect();
    a.extend(["--pairs", "60", "--seed", "1", "--out", &train, "--similarity-pairs", "40", "--similarity-out", &sim].map(String::from));
    run_ok(&a);
    let mut b: Vec<String> = base.iter().map(|s| s.to_string()).collect();
    b.extend(["--pairs", "30", "--seed", "2", "--out", &eval].map(String::from));
    run_ok(&b);
    (train, eval, sim)
}

pub fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}
