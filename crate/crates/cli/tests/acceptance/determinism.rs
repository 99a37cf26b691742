//! Two invocations of the binary with the same configuration and seed
//! write byte-identical artifacts, whatever the number of worker threads.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Stdio};

use crate::Verdict;

pub const NAME: &str = "repeated training writes byte-identical metrics and checkpoints";

const ARGS: [&str; 7] = ["train", "--runs", "2", "--episodes", "12", "--seed", "11"];

/// Every file under `dir`, keyed by its relative path.
fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| format!("{}: {e}", d.display()))? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                let rel = path.strip_prefix(dir).expect("under dir").display().to_string();
                files.insert(rel, bytes);
            }
        }
    }
    Ok(files)
}

fn train(out: &Path, jobs: &str, shield: bool) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_safemarl"));
    cmd.args(ARGS).args(["--jobs", jobs, "--quiet", "--out"]).arg(out);
    if !shield {
        cmd.arg("--no-shield");
    }
    let status = cmd
        .env_remove("CBF_SHIELD_OUT")
        .stdout(Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("train exited with {status}"))
    }
}

pub fn check() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path();
    let mut runs = Vec::new();
    for jobs in ["1", "2"] {
        for shield in [true, false] {
            train(out, jobs, shield)?;
        }
        runs.push(snapshot(out)?);
    }
    let (first, second) = (&runs[0], &runs[1]);
    let required = ["metrics.csv", "checkpoint.bin"];
    let present = |name: &str| first.keys().filter(|k| k.ends_with(name)).count();
    if required.iter().any(|r| present(r) != 4) {
        return Err(format!(
            "expected 4 metrics files and 4 checkpoints, found {:?}",
            first.keys().collect::<Vec<_>>()
        ));
    }
    let differing: Vec<&String> = first
        .keys()
        .chain(second.keys())
        .filter(|k| first.get(*k) != second.get(*k))
        .collect();
    let detail = format!("{} files compared across two invocations", first.len());
    if differing.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; differing: {differing:?}"))
    }
}
