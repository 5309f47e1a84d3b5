//! Run-directory manifest: config hash, tool version, per-seed status and a
//! digest of every file. Deliberately free of timestamps.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use swag_core::io::{read_file, write_atomic};
use swag_core::{Error, ErrorKind, Result};

use crate::config::hex;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    /// `completed`, `halted` or `failed`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SeedRecord {
    pub fn completed(seed: u64) -> Self {
        Self {
            seed,
            status: "completed".into(),
            error: None,
        }
    }

    pub fn halted(seed: u64) -> Self {
        Self {
            seed,
            status: "halted".into(),
            error: None,
        }
    }

    pub fn failed(seed: u64, kind: ErrorKind, message: &str) -> Self {
        Self {
            seed,
            status: "failed".into(),
            error: Some(format!("{kind:?}: {message}").to_lowercase()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seeds: Vec<SeedRecord>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&read_file(&run_dir.join(MANIFEST_FILE))?)?)
    }
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::file(dir, e))? {
        let path = entry.map_err(|e| Error::file(dir, e))?.path();
        if path.is_dir() {
            walk(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
            out.push(path.strip_prefix(root).expect("walk stays under root").to_path_buf());
        }
    }
    Ok(())
}

pub fn write_manifest(run_dir: &Path, config_hash: &str, seeds: &[SeedRecord]) -> Result<Manifest> {
    let mut paths = Vec::new();
    walk(run_dir, run_dir, &mut paths)?;
    let mut files: Vec<FileEntry> = paths
        .iter()
        .map(|rel| {
            let bytes = read_file(&run_dir.join(rel))?;
            Ok(FileEntry {
                // forward slashes regardless of platform
                path: rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/"),
                bytes: bytes.len() as u64,
                sha256: hex(&Sha256::digest(&bytes)),
            })
        })
        .collect::<Result<_>>()?;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let mut seeds = seeds.to_vec();
    seeds.sort_by_key(|s| s.seed);
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config_hash.into(),
        seeds,
        files,
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_atomic(&run_dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_nested_files_sorted() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("b")).unwrap();
        fs::write(dir.path().join("b/x.txt"), "x").unwrap();
        fs::write(dir.path().join("a.txt"), "").unwrap();
        let m = write_manifest(dir.path(), "h", &[SeedRecord::completed(1)]).unwrap();
        let paths: Vec<_> = m.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, ["a.txt", "b/x.txt"]);
        assert_eq!(
            m.files[0].sha256,
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(Manifest::load(dir.path()).unwrap(), m);
        // rewriting does not list the manifest itself
        let again = write_manifest(dir.path(), "h", &[SeedRecord::completed(1)]).unwrap();
        assert_eq!(again, m);
    }
}
