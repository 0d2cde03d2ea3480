//! Output directory bookkeeping: every file written goes into the manifest
//! with its SHA-256.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    hashes: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutputDir { root: root.to_path_buf(), hashes: BTreeMap::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.hashes.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    pub fn files(&self) -> impl Iterator<Item = (&str, &str)> {
        self.hashes.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// `<sha256>  <file>` lines sorted by file name.
    pub fn finish(self) -> Result<PathBuf, CliError> {
        let mut text = format!("# {}\n", meanfield::experiments::VERSION);
        for (name, hash) in &self.hashes {
            text.push_str(&format!("{hash}  {name}\n"));
        }
        let path = self.root.join(MANIFEST);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// Entries of a manifest file, for verification.
pub fn read_manifest(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter_map(|l| l.split_once("  ").map(|(h, f)| (f.to_string(), h.to_string())))
        .collect()
}
