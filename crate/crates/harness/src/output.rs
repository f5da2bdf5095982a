//! CSV and JSON emission, and the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// 17 significant digits, so values survive a text round trip.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.into()
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Renders a header and rows as CSV bytes.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report serializes");
    out.push(b'\n');
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Files written by one subcommand run, in a directory of their own.
#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    written: Vec<(String, String)>,
}

impl RunDir {
    pub fn create(path: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&path)?;
        Ok(Self {
            path,
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.path.join(name), bytes)?;
        self.written.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn files(&self) -> impl Iterator<Item = PathBuf> + '_ {
        self.written.iter().map(|(n, _)| self.path.join(n))
    }
}

#[derive(Debug, Serialize)]
struct ManifestFile<'a> {
    name: &'a str,
    sha256: &'a str,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config_path: String,
    config_sha256: String,
    seed: Option<u64>,
    files: Vec<ManifestFile<'a>>,
    wall_time_seconds: f64,
}

/// Writes `manifest.json` listing every file written so far. Call last.
pub fn write_manifest(
    dir: &RunDir,
    subcommand: &str,
    config_path: &Path,
    config_bytes: &[u8],
    seed: Option<u64>,
    started: Instant,
) -> Result<PathBuf> {
    let mut files: Vec<ManifestFile> = dir
        .written
        .iter()
        .map(|(name, sha256)| ManifestFile { name, sha256 })
        .collect();
    files.sort_by(|a, b| a.name.cmp(b.name));
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        config_path: config_path.display().to_string(),
        config_sha256: sha256_hex(config_bytes),
        seed,
        files,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    let path = dir.path.join("manifest.json");
    std::fs::write(&path, json_bytes(&manifest))?;
    Ok(path)
}
