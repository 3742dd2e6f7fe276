#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn glcmfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glcmfuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn glcmfuse_threads(args: &[&str], threads: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glcmfuse"))
        .args(args)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> String {
    let out = glcmfuse(args);
    assert!(
        out.status.success(),
        "glcmfuse {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// `metric,value` rows of a report.
pub fn report_value(path: &Path, metric: &str) -> Option<String> {
    fs::read_to_string(path)
        .ok()?
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{metric},")).map(String::from))
}

/// Every file under `dir`, relative path to bytes, sorted.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Drops CSV columns named `elapsed_ms` (wall-clock time cannot repeat).
pub fn without_wall_clock(bytes: &[u8]) -> Vec<u8> {
    let text = String::from_utf8_lossy(bytes);
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return bytes.to_vec();
    };
    let drop: Vec<usize> = header
        .split(',')
        .enumerate()
        .filter(|(_, h)| *h == "elapsed_ms")
        .map(|(k, _)| k)
        .collect();
    if drop.is_empty() {
        return bytes.to_vec();
    }
    let keep = |l: &str| {
        l.split(',')
            .enumerate()
            .filter(|(k, _)| !drop.contains(k))
            .map(|(_, c)| c)
            .collect::<Vec<_>>()
            .join(",")
    };
    std::iter::once(keep(header))
        .chain(lines.map(keep))
        .collect::<Vec<_>>()
        .join("\n")
        .into_bytes()
}

/// Files whose only content is timing.
pub fn is_timing_file(rel: &Path) -> bool {
    rel.file_name().is_some_and(|n| n == "timing.csv")
}
