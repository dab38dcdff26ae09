use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::de::DeserializeOwned;
use serde_json::error::Category;

/// Reads and validates a JSON document. Syntax errors and schema violations
/// are reported with the file name and the line/column serde points at.
pub fn load<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| {
        let kind = match e.classify() {
            Category::Syntax | Category::Eof => "malformed JSON",
            Category::Data => "invalid",
            Category::Io => "unreadable",
        };
        if kind == "invalid" {
            anyhow!("{}: invalid {what}: {e}", path.display())
        } else {
            anyhow!("{}: {kind}: {e}", path.display())
        }
    })
}

/// `*.json` files of a batch directory in lexicographic order.
pub fn batch_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read batch directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(anyhow!("batch directory {} holds no .json files", dir.display()));
    }
    Ok(files)
}

fn parse_number(flag: &str, s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("{flag} must be a number, got '{s}'"))?;
    if !v.is_finite() {
        return Err(format!("{flag} must be finite"));
    }
    Ok(v)
}

pub fn positive(flag: &'static str) -> impl Fn(&str) -> std::result::Result<f64, String> + Clone + Send + Sync {
    move |s| {
        let v = parse_number(flag, s)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(format!("{flag} must be positive"))
        }
    }
}

pub fn nonnegative(flag: &'static str) -> impl Fn(&str) -> std::result::Result<f64, String> + Clone + Send + Sync {
    move |s| {
        let v = parse_number(flag, s)?;
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(format!("{flag} must be nonnegative"))
        }
    }
}
