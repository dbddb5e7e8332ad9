#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const PIPELINE: [&str; 9] = [
    "synth",
    "tfidf",
    "graph",
    "walk",
    "train-embed",
    "embed",
    "build-samples",
    "train-predict",
    "evaluate",
];

/// Fresh scratch directory under the target tmp dir.
pub fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

pub fn drnews(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drnews"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs one stage and panics with its stderr on failure.
pub fn stage(dir: &Path, config: &str, name: &str, extra: &[&str]) {
    let mut args = vec![name, "--config", config, "--threads", "1"];
    args.extend_from_slice(extra);
    let out = drnews(dir, &args);
    assert!(
        out.status.success(),
        "{name} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}
