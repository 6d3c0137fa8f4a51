//! Dataset download with resumable, idempotent semantics.
//!
//! Files land as `S{sss}/S{sss}R{rr}.edf` under the data directory.
//! Existing files whose header parses are skipped, so re-running after a
//! partial fetch only downloads what is missing. At most four downloads
//! run concurrently.

use anyhow::{Context, Result};
use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use crate::config::run_file_name;

const CONCURRENT_DOWNLOADS: usize = 4;

#[derive(Debug, Default)]
pub struct FetchReport {
    pub fetched: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<(String, String)>,
}

fn is_valid_edf(path: &Path) -> bool {
    match std::fs::read(path) {
        Ok(bytes) => bytes.len() > 256 && migrid::edf_io::parse_header(&bytes).is_ok(),
        Err(_) => false,
    }
}

fn download_one(client: &reqwest::blocking::Client, url: &str, dest: &Path) -> Result<()> {
    let response = client.get(url).send().with_context(|| format!("GET {url}"))?;
    if !response.status().is_success() {
        anyhow::bail!("GET {url}: HTTP {}", response.status());
    }
    let bytes = response.bytes().with_context(|| format!("body of {url}"))?;
    migrid::edf_io::parse_header(&bytes)
        .map_err(|e| anyhow::anyhow!("{url}: response is not an EDF file: {e}"))?;
    if let Some(parent) = dest.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("mkdir {}", parent.display()))?;
    }
    std::fs::write(dest, &bytes).with_context(|| format!("write {}", dest.display()))?;
    Ok(())
}

/// Fetches every (subject, run) file that is missing or invalid.
pub fn fetch_dataset(
    base_url: &str,
    subjects: &[u32],
    runs: &[u32],
    dest: &Path,
) -> Result<FetchReport> {
    std::fs::create_dir_all(dest)
        .with_context(|| format!("destination {} is not writable", dest.display()))?;

    let mut report = FetchReport::default();
    let mut queue: VecDeque<(String, PathBuf)> = VecDeque::new();
    for &subject in subjects {
        for &run in runs {
            let rel = run_file_name(subject, run);
            let path = dest.join(&rel);
            if is_valid_edf(&path) {
                report.skipped.push(rel);
            } else {
                let url = format!("{}/{}", base_url.trim_end_matches('/'), rel);
                queue.push_back((url, path));
            }
        }
    }
    if queue.is_empty() {
        return Ok(report);
    }

    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(120))
        .connect_timeout(Duration::from_secs(15))
        .build()
        .context("HTTP client")?;

    let queue = Mutex::new(queue);
    let results: Mutex<Vec<(String, Result<()>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..CONCURRENT_DOWNLOADS.min(subjects.len() * runs.len()) {
            scope.spawn(|| loop {
                let item = queue.lock().unwrap().pop_front();
                let Some((url, path)) = item else { break };
                let outcome = download_one(&client, &url, &path);
                let rel = path
                    .strip_prefix(dest)
                    .unwrap_or(&path)
                    .to_string_lossy()
                    .into_owned();
                results.lock().unwrap().push((rel, outcome));
            });
        }
    });

    let mut results = results.into_inner().unwrap();
    results.sort_by(|a, b| a.0.cmp(&b.0));
    for (rel, outcome) in results {
        match outcome {
            Ok(()) => report.fetched.push(rel),
            Err(e) => report.failed.push((rel, format!("{e:#}"))),
        }
    }
    Ok(report)
}
