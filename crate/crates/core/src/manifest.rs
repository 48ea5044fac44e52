//! Reproduction records written next to every artifact set. Manifests hold
//! digests and configuration only, never timestamps, so reruns compare equal.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::prompts::template_hashes;
use crate::util::{sha256_hex, write_atomic};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Path relative to the output directory, or as given for inputs.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path, shown_as: impl Into<String>) -> io::Result<Self> {
        let data = std::fs::read(path)?;
        Ok(FileDigest {
            path: shown_as.into(),
            sha256: sha256_hex(&data),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub template_hashes: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, Value>,
}

impl Manifest {
    pub fn new(command: impl Into<String>, config_hash: impl Into<String>, seed: u64) -> Self {
        Manifest {
            command: command.into(),
            config_hash: config_hash.into(),
            seed,
            template_hashes: template_hashes(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            details: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path, shown_as: impl Into<String>) -> io::Result<()> {
        self.inputs.push(FileDigest::of(path, shown_as)?);
        Ok(())
    }

    /// Records an output under its path relative to `root`.
    pub fn output(&mut self, root: &Path, path: &Path) -> io::Result<()> {
        let rel = path.strip_prefix(root).unwrap_or(path);
        self.outputs.push(FileDigest::of(path, rel.to_string_lossy().replace('\\', "/"))?);
        Ok(())
    }

    pub fn detail(&mut self, key: impl Into<String>, value: impl Serialize) {
        self.details.insert(
            key.into(),
            serde_json::to_value(value).expect("detail serializes"),
        );
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        write_pretty(path, self)
    }
}

/// One failed unit of work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureEntry {
    /// What was being processed, e.g. `probe/history/base`.
    pub scope: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorManifest {
    pub command: String,
    pub config_hash: String,
    pub failures: Vec<FailureEntry>,
}

impl ErrorManifest {
    pub fn write(&self, path: &Path) -> io::Result<()> {
        write_pretty(path, self)
    }
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("sub/a.txt");
        write_atomic(&f, b"abc").unwrap();
        let mut m = Manifest::new("probe", "h", 1);
        m.output(dir.path(), &f).unwrap();
        assert_eq!(m.outputs[0].path, "sub/a.txt");
        assert_eq!(
            m.outputs[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(m.template_hashes.len(), 9);
        m.detail("sizes", [1, 2]);
        let path = dir.path().join("m.json");
        m.write(&path).unwrap();
        let back: Manifest = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(!String::from_utf8(std::fs::read(&path).unwrap()).unwrap().contains("time"));
    }
}
