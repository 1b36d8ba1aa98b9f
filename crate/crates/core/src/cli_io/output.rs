//! CSV emission with a commented header block, and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::sha256_hex;
use crate::error::Result;

/// Fixed float format used in every CSV cell.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.12e}")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProducedFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// A CSV table: `# key: value` comment lines, then a header row and the records.
pub struct CsvTable {
    pub schema: String,
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(schema: &str, columns: &[&str]) -> Self {
        CsvTable { schema: schema.to_string(), meta: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self, config_hash: &str) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(format!("# schema: {}\n# config_hash: {config_hash}\n", self.schema).as_bytes());
        for (k, v) in &self.meta {
            out.extend_from_slice(format!("# {k}: {v}\n").as_bytes());
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))
    }

    pub fn write(&self, dir: &Path, name: &str, config_hash: &str) -> Result<ProducedFile> {
        fs::create_dir_all(dir)?;
        let bytes = self.to_bytes(config_hash)?;
        let path = dir.join(name);
        fs::write(&path, &bytes)?;
        Ok(ProducedFile { path, sha256: sha256_hex(&bytes) })
    }
}

/// Reads a CSV written by [`CsvTable`], returning `(meta, columns, rows)`.
pub fn read_csv(path: &Path) -> Result<(BTreeMap<String, String>, Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut meta = BTreeMap::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(c) = line.strip_prefix("# ") {
            if let Some((k, v)) = c.split_once(": ") {
                meta.insert(k.to_string(), v.to_string());
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let columns = r.headers()?.iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.map(|r| r.iter().map(String::from).collect())).collect::<std::result::Result<_, _>>()?;
    Ok((meta, columns, rows))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<ProducedFile> {
    fs::create_dir_all(dir)?;
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    let path = dir.join(name);
    fs::write(&path, &bytes)?;
    Ok(ProducedFile { path, sha256: sha256_hex(&bytes) })
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointStatus {
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPointRecord {
    pub mu: f64,
    pub status: PointStatus,
    pub error: Option<String>,
    pub result: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub created_unix: u64,
    pub updated_unix: u64,
    /// Output file name to SHA-256.
    pub files: BTreeMap<String, String>,
    /// Scan points keyed by the formatted coupling.
    pub scan: BTreeMap<String, ScanPointRecord>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl RunManifest {
    pub fn new(config_hash: &str) -> Self {
        let now = unix_now();
        RunManifest {
            config_hash: config_hash.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: now,
            updated_unix: now,
            files: BTreeMap::new(),
            scan: BTreeMap::new(),
        }
    }

    /// Manifest in `dir` if it belongs to `config_hash`, otherwise a fresh one.
    pub fn load_or_new(dir: &Path, config_hash: &str) -> Self {
        let path = dir.join(MANIFEST_NAME);
        fs::read(&path)
            .ok()
            .and_then(|b| serde_json::from_slice::<RunManifest>(&b).ok())
            .filter(|m| m.config_hash == config_hash)
            .unwrap_or_else(|| RunManifest::new(config_hash))
    }

    pub fn record(&mut self, f: &ProducedFile) {
        let name = f.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.files.insert(name, f.sha256.clone());
    }

    pub fn save(&mut self, dir: &Path) -> Result<()> {
        self.updated_unix = unix_now();
        write_json(dir, MANIFEST_NAME, self)?;
        Ok(())
    }
}

/// File-name tag for a coupling value, e.g. `1.250e-4`.
pub fn mu_tag(mu: f64) -> String {
    format!("{mu:.3e}")
}
