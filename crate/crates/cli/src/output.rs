//! Output files and the run manifest.
//!
//! Numbers are written as `{:.16e}` (17 significant digits), CSV files carry a
//! header row and LF line endings, and NDJSON holds one step record per line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use colltraj::{Histogram, Trajectory};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfigFile;
use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn json_num(x: f64) -> String {
    if x.is_finite() {
        num(x)
    } else {
        "null".into()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// A header plus rows of numbers.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, column: Vec<f64>) {
        self.header.push(name.into());
        self.columns.push(column);
    }

    pub fn to_csv(&self) -> String {
        let rows = self.columns.first().map_or(0, Vec::len);
        debug_assert!(self.columns.iter().all(|c| c.len() == rows));
        let mut out = self.header.join(",");
        out.push('\n');
        for r in 0..rows {
            let line: Vec<String> = self.columns.iter().map(|c| num(c[r])).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_left,bin_right,count\n");
    for (i, count) in h.counts.iter().enumerate() {
        let _ = writeln!(out, "{},{},{count}", num(h.edges[i]), num(h.edges[i + 1]));
    }
    out
}

pub fn trajectory_ndjson(t: &Trajectory, names: &[&str]) -> String {
    let mut out = String::new();
    for r in &t.records {
        let obs: Vec<String> = names
            .iter()
            .zip(&r.expectations)
            .map(|(n, v)| format!("\"{n}\":{}", json_num(*v)))
            .collect();
        let _ = writeln!(
            out,
            "{{\"trajectory\":{},\"step\":{},\"time\":{},\"label\":{},\"eigenvalue\":{},\"probability\":{},\"purity\":{},\"observables\":{{{}}}}}",
            t.index,
            r.step,
            json_num(r.time),
            r.outcome.label,
            json_num(r.outcome.eigenvalue),
            json_num(r.outcome.probability),
            json_num(r.purity),
            obs.join(",")
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub status: RunStatus,
    pub version: String,
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    pub config: RunConfigFile,
    pub started_unix: f64,
    #[serde(default)]
    pub wall_clock_seconds: Option<f64>,
    /// File name to SHA-256 of its contents.
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub summary: BTreeMap<String, f64>,
    #[serde(default)]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("manifest: {e}")))
    }
}

/// Files written by one run; removed again if the run fails.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        // track first so a half-written file is cleaned up too
        self.written.push(name.to_string());
        fs::write(self.dir.join(name), contents)?;
        Ok(())
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST), text)?;
        Ok(())
    }

    pub fn checksums(&self) -> Result<BTreeMap<String, String>, CliError> {
        self.written
            .iter()
            .map(|n| Ok((n.clone(), sha256_hex(&fs::read(self.dir.join(n))?))))
            .collect()
    }

    pub fn remove_all(&mut self) {
        for name in self.written.drain(..) {
            let _ = fs::remove_file(self.dir.join(name));
        }
    }
}
