use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use qpoisson_core::config::ComplexJson;
use qpoisson_core::linalg::{CMat, C64};

/// Output directory that remembers every artifact it wrote.
pub struct RunDir {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn artifacts(&self) -> &[String] {
        &self.artifacts
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path(name), text).with_context(|| format!("cannot write {name}"))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(name)).with_context(|| format!("cannot write {name}"))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        self.artifacts.push(name.to_string());
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub qpoisson_core: &'static str,
    pub qpoisson_cli: &'static str,
}

pub const VERSIONS: Versions = Versions {
    qpoisson_core: qpoisson_core::VERSION,
    qpoisson_cli: env!("CARGO_PKG_VERSION"),
};

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config_hash: String,
    pub versions: &'a Versions,
    pub seed: u64,
    pub budget: u64,
    pub wall_time_s: f64,
    pub complete: bool,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
    pub exit_code: u8,
}

/// Hex SHA-256 of the canonical JSON form of `value`.
pub fn config_hash(value: &serde_json::Value) -> String {
    let text = serde_json::to_string(value).expect("json value serializes");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn complex(z: C64) -> ComplexJson {
    z.into()
}

pub fn matrix(m: &CMat) -> Vec<Vec<ComplexJson>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].into()).collect())
        .collect()
}

/// One matrix entry per row: `t, i, j, re, im`.
#[derive(Debug, Serialize)]
pub struct EntryRow {
    pub t: f64,
    pub i: usize,
    pub j: usize,
    pub re: f64,
    pub im: f64,
}

pub fn entry_rows(t: f64, m: &CMat) -> Vec<EntryRow> {
    let mut rows = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            rows.push(EntryRow {
                t,
                i,
                j,
                re: m[(i, j)].re,
                im: m[(i, j)].im,
            });
        }
    }
    rows
}
