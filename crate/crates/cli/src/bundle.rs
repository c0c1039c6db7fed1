//! Output directory bookkeeping: every file written is hashed into `bundle.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{input, CliError};

pub const BUNDLE_FILE: &str = "bundle.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    /// Relative to the output directory (outputs) or the manifest directory (inputs).
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub dataset: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// Stages that were skipped or degraded, in pipeline order.
    pub notices: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path, display: &str) -> Result<FileHash, CliError> {
    let bytes = fs::read(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    Ok(FileHash {
        path: display.to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Writes files under one root and remembers their hashes.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: BTreeMap<String, FileHash>,
}

impl OutputDir {
    /// Creates `root`. An existing directory must be empty, so the bundle
    /// never picks up files from an earlier run.
    pub fn create(root: &Path) -> Result<Self, CliError> {
        if root.exists() {
            let mut entries = fs::read_dir(root).map_err(|e| input(format!("{}: {e}", root.display())))?;
            if entries.next().is_some() {
                return Err(input(format!("output directory {} is not empty", root.display())));
            }
        }
        fs::create_dir_all(root).map_err(|e| input(format!("{}: {e}", root.display())))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    /// Like [`OutputDir::create`] but tolerates existing files, for single-stage commands.
    pub fn open(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| input(format!("{}: {e}", root.display())))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// `rel` uses `/` separators.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        let io = |e: std::io::Error| CliError::Stage {
            stage: "write",
            message: format!("{}: {e}", path.display()),
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        fs::write(&path, bytes).map_err(io)?;
        log::debug!("wrote {}", path.display());
        self.written.insert(
            rel.to_string(),
            FileHash {
                path: rel.to_string(),
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            },
        );
        Ok(())
    }

    pub fn written(&self) -> impl Iterator<Item = &FileHash> {
        self.written.values()
    }

    /// Writes `bundle.json` listing every file written so far, sorted by path.
    pub fn finish(
        mut self,
        dataset: String,
        config: serde_json::Value,
        inputs: Vec<FileHash>,
        notices: Vec<String>,
    ) -> Result<BundleManifest, CliError> {
        let bundle = BundleManifest {
            dataset,
            config,
            inputs,
            outputs: self.written.values().cloned().collect(),
            notices,
        };
        let json = serde_json::to_string_pretty(&bundle).expect("plain data") + "\n";
        self.write(BUNDLE_FILE, json.as_bytes())?;
        Ok(bundle)
    }
}

/// Every file under `root`, as `/`-separated relative paths in sorted order.
pub fn list_files(root: &Path) -> std::io::Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).expect("under root");
                let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                out.push(parts.join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort();
    Ok(out)
}
