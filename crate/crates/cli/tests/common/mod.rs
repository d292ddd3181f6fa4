//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const GOLDEN_FILES: &[&str] = &[
    "synthetic.jsonl",
    "generation_log.jsonl",
    "synthesize_manifest.json",
    "profile.json",
    "profile.csv",
    "profile_manifest.json",
    "mixed.jsonl",
    "mix_manifest.json",
];

pub const GOLDEN_TARGET: &str = "weather";
pub const GOLDEN_N: usize = 200;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_domainsynth"));
    c.env("DOMAINSYNTH_LOG", "warn");
    c
}

pub fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/slurp_mini.jsonl")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn run(cmd: &mut Command) -> Result<Output, String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "{:?} exited with {}: {}",
            cmd,
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

/// synthesize (builtin model, seed 0) -> profile -> mix, all into `out`.
pub fn run_pipeline(out: &Path) -> Result<(), String> {
    let fx = fixture();
    let n = GOLDEN_N.to_string();
    run(bin()
        .args(["--seed", "0", "--jobs", "2", "--out-dir"])
        .arg(out)
        .args(["synthesize", "--source"])
        .arg(&fx)
        .args([
            "--target",
            GOLDEN_TARGET,
            "--strategy",
            "icif",
            "--demos",
            "3",
            "-n",
            &n,
        ]))?;
    run(bin()
        .args(["--seed", "0", "--out-dir"])
        .arg(out)
        .args(["profile", "--synthetic"])
        .arg(out.join("synthetic.jsonl"))
        .arg("--reference")
        .arg(&fx)
        .args(["--reference-domain", GOLDEN_TARGET]))?;
    run(bin()
        .args(["--seed", "0", "--out-dir"])
        .arg(out)
        .args(["mix", "--synthetic"])
        .arg(out.join("synthetic.jsonl"))
        .arg("--real")
        .arg(&fx)
        .args(["--target", GOLDEN_TARGET, "--real-fraction", "0.10"]))?;
    Ok(())
}

/// Names of golden files whose bytes differ from `out`. With UPDATE_GOLDEN=1
/// the golden copies are rewritten first.
pub fn golden_mismatches(out: &Path) -> Vec<String> {
    let dir = golden_dir();
    if std::env::var_os("UPDATE_GOLDEN").is_some_and(|v| v == "1") {
        std::fs::create_dir_all(&dir).unwrap();
        for f in GOLDEN_FILES {
            std::fs::copy(out.join(f), dir.join(f)).unwrap();
        }
    }
    GOLDEN_FILES
        .iter()
        .filter(|f| match (std::fs::read(out.join(f)), std::fs::read(dir.join(f))) {
            (Ok(a), Ok(b)) => a != b,
            _ => true,
        })
        .map(|f| f.to_string())
        .collect()
}
