pub mod eval;
pub mod phantom;
pub mod prompt;
pub mod register;
pub mod synth;
pub mod track;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context as _;
use serde::Serialize;

use crate::fail::{code, fail};

/// `"64"` or `"64,64,48"` → three values.
pub fn parse_triple<T>(s: &str) -> Result<[T; 3], String>
where
    T: FromStr + Copy,
    T::Err: std::fmt::Display,
{
    let parts: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [v] => Ok([*v; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(format!("expected 1 or 3 comma-separated values, got {}", parts.len())),
    }
}

/// `"lo,hi"` → a range.
pub fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [a, b] => Ok([*a, *b]),
        [a] => Ok([*a, *a]),
        _ => Err("expected lo,hi".into()),
    }
}

/// `global` or `local:<radius>`.
pub fn parse_similarity(s: &str) -> Result<lesiontrack::registration::Similarity, String> {
    use lesiontrack::registration::Similarity;
    match s.split_once(':') {
        None if s == "global" => Ok(Similarity::Global),
        None if s == "local" => Ok(Similarity::Local { radius: 2 }),
        Some(("local", r)) => r
            .parse()
            .map(|radius| Similarity::Local { radius })
            .map_err(|e| format!("radius {r:?}: {e}")),
        _ => Err(format!("unknown similarity {s:?}; use global or local:<radius>")),
    }
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| fail(code::IO, format!("cannot create output directory {}: {e}", dir.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| fail(code::IO, format!("writing {}: {e}", path.display())))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| fail(code::IO, format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Resolve `p` against `base` unless it is absolute.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Fail early, before any work, when an input file is missing.
pub fn require_file(p: &Path, what: &str) -> anyhow::Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(fail(code::IO, format!("{what} {} does not exist", p.display())))
    }
}
