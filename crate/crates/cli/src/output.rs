//! Run directories, CSV/JSON writers and the checksum manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "ATOMNUM_OUT";
pub const DEFAULT_OUT: &str = "out";

/// Fixed-width decimal text with 9 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.8e}")
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub replicates: usize,
    pub files: Vec<FileEntry>,
    pub wall_clock_s: f64,
    pub finished_unix_s: u64,
}

/// One command's output directory, `<base>/<command>-<hash prefix>`.
///
/// Files are written by a single owner in a fixed order and recorded for the
/// manifest.
pub struct RunDir {
    root: PathBuf,
    command: String,
    config_hash: String,
    seed: u64,
    replicates: usize,
    files: Vec<FileEntry>,
    started: Instant,
}

impl RunDir {
    pub fn create(base: &Path, command: &str, config_hash: &str, seed: u64, replicates: usize) -> CliResult<Self> {
        let root = base.join(format!("{command}-{}", &config_hash[..12]));
        if root.exists() {
            fs::remove_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        }
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self {
            root,
            command: command.to_owned(),
            config_hash: config_hash.to_owned(),
            seed,
            replicates,
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(FileEntry {
            path: rel.to_owned(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    pub fn write_csv<I>(&mut self, rel: &str, header: &[&str], rows: I) -> CliResult<PathBuf>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_io = |e: csv::Error| CliError::io(self.root.join(rel), std::io::Error::other(e));
        w.write_record(header).map_err(to_io)?;
        for row in rows {
            w.write_record(&row).map_err(to_io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::io(self.root.join(rel), std::io::Error::other(e.to_string())))?;
        self.write_bytes(rel, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<PathBuf> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
        bytes.push(b'\n');
        self.write_bytes(rel, &bytes)
    }

    /// Writes `manifest.json` and returns the run directory.
    pub fn finish(self) -> CliResult<PathBuf> {
        let manifest = RunManifest {
            tool: "atomnum",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config_hash: self.config_hash,
            seed: self.seed,
            replicates: self.replicates,
            files: self.files,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            finished_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let path = self.root.join("manifest.json");
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(self.root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(num(1.0), "1.00000000e0");
        assert_eq!(num(-0.0123456789123), "-1.23456789e-2");
        assert_eq!(num(6.02214076e23), "6.02214076e23");
    }

    #[test]
    fn manifest_lists_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunDir::create(dir.path(), "test", "0123456789abcdef", 5, 1).unwrap();
        run.write_csv("a.csv", &["x"], vec![vec![num(1.5)]]).unwrap();
        run.write_json("sub/b.json", &serde_json::json!({"k": 1})).unwrap();
        let root = run.finish().unwrap();
        assert!(root.ends_with("test-0123456789ab"));
        let manifest: serde_json::Value =
            serde_json::from_slice(&fs::read(root.join("manifest.json")).unwrap()).unwrap();
        let files = manifest["files"].as_array().unwrap();
        assert_eq!(files.len(), 2);
        let csv = fs::read(root.join("a.csv")).unwrap();
        assert_eq!(csv, b"x\n1.50000000e0\n");
        assert_eq!(files[0]["sha256"], hex::encode(Sha256::digest(&csv)));
    }
}
