//! Shared option plumbing: subject/run list parsing, the key=value
//! config file, and error-to-exit-code categories.

use anyhow::{anyhow, bail, Context, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Environment variable naming the dataset directory.
pub const DATA_DIR_ENV: &str = "MIGRID_DATA_DIR";

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_PARTIAL_FETCH: u8 = 4;

/// Error category determines the process exit code.
#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Data(anyhow::Error),
    PartialFetch { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::PartialFetch { .. } => EXIT_PARTIAL_FETCH,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(e) => format!("configuration error: {e:#}"),
            CliError::Data(e) => format!("data error: {e:#}"),
            CliError::PartialFetch { failed } => {
                format!("fetch completed with {failed} failed file(s)")
            }
        }
    }
}

pub fn config_err(e: anyhow::Error) -> CliError {
    CliError::Config(e)
}

pub fn data_err(e: anyhow::Error) -> CliError {
    CliError::Data(e)
}

/// Parses "1-5,8,10-12" into a sorted, deduplicated list.
pub fn parse_id_list(text: &str) -> Result<Vec<u32>> {
    let mut ids = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((lo, hi)) = part.split_once('-') {
            let lo: u32 = lo.trim().parse().context("bad range start")?;
            let hi: u32 = hi.trim().parse().context("bad range end")?;
            if lo > hi {
                bail!("range {part:?} is reversed");
            }
            ids.extend(lo..=hi);
        } else {
            ids.push(part.parse().with_context(|| format!("bad id {part:?}"))?);
        }
    }
    if ids.is_empty() {
        bail!("empty id list");
    }
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

/// Parses "10,14" into a pair.
pub fn parse_pair(text: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!("expected \"lo,hi\", got {text:?}");
    }
    Ok((
        parts[0].parse().context("bad first number")?,
        parts[1].parse().context("bad second number")?,
    ))
}

/// Plain key=value file; `#` starts a comment. Values here override the
/// corresponding command-line flags.
pub fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key=value, got {raw:?}", lineno + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Resolves the dataset directory: config file, then flag, then the
/// environment variable.
pub fn resolve_data_dir(
    overrides: &BTreeMap<String, String>,
    flag: Option<&Path>,
) -> Result<PathBuf> {
    if let Some(v) = overrides.get("data_dir") {
        return Ok(PathBuf::from(v));
    }
    if let Some(p) = flag {
        return Ok(p.to_path_buf());
    }
    if let Ok(v) = std::env::var(DATA_DIR_ENV) {
        if !v.is_empty() {
            return Ok(PathBuf::from(v));
        }
    }
    bail!("no data directory: pass --data-dir, set {DATA_DIR_ENV}, or put data_dir in the config file")
}

pub fn override_u32(overrides: &BTreeMap<String, String>, key: &str, flag: u32) -> Result<u32> {
    match overrides.get(key) {
        Some(v) => v.parse().with_context(|| format!("bad {key} in config file")),
        None => Ok(flag),
    }
}

pub fn override_u64(overrides: &BTreeMap<String, String>, key: &str, flag: u64) -> Result<u64> {
    match overrides.get(key) {
        Some(v) => v.parse().with_context(|| format!("bad {key} in config file")),
        None => Ok(flag),
    }
}

pub fn override_string(overrides: &BTreeMap<String, String>, key: &str, flag: &str) -> String {
    overrides
        .get(key)
        .cloned()
        .unwrap_or_else(|| flag.to_string())
}

pub fn override_path(
    overrides: &BTreeMap<String, String>,
    key: &str,
    flag: &Path,
) -> PathBuf {
    overrides
        .get(key)
        .map(PathBuf::from)
        .unwrap_or_else(|| flag.to_path_buf())
}

/// `S001/S001R04.edf`-style relative path for one run file.
pub fn run_file_name(subject: u32, run: u32) -> String {
    format!("S{subject:03}/S{subject:03}R{run:02}.edf")
}
