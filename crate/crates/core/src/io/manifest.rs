use super::{read_bytes, sha256_hex, write_json, RunConfig};
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

/// Reproducibility record written by every command. It holds no timestamps,
/// so identical runs give identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub outputs: Vec<OutputRecord>,
    /// False when the command failed part way; listed outputs may then be partial.
    pub complete: bool,
    pub error: Option<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("aggcox".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert(
            "config_schema".to_string(),
            super::SCHEMA_VERSION.to_string(),
        );
        versions.insert(
            "checkpoint".to_string(),
            crate::inference::CHECKPOINT_VERSION.to_string(),
        );
        Manifest {
            command: command.to_string(),
            config_sha256: sha256_hex(config.canonical_json().as_bytes()),
            seed: config.seed,
            versions,
            outputs: Vec::new(),
            complete: false,
            error: None,
        }
    }

    /// Records a file already written, by its path relative to `root`.
    pub fn record(&mut self, root: &Path, path: &Path) -> Result<()> {
        self.outputs.push(OutputRecord {
            path: relative_to(path, root).to_string_lossy().replace('\\', "/"),
            sha256: sha256_hex(&read_bytes(path)?),
        });
        Ok(())
    }

    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("plain data"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// `path` as seen from `root`, climbing out of `root` where needed. Paths
/// with no common frame (one absolute, one relative) are returned unchanged.
fn relative_to(path: &Path, root: &Path) -> PathBuf {
    if path.is_absolute() != root.is_absolute() {
        return path.to_path_buf();
    }
    let (p, r) = (clean(path), clean(root));
    let common = p.iter().zip(&r).take_while(|(a, b)| a == b).count();
    if r[common..]
        .iter()
        .any(|c| !matches!(c, Component::Normal(_)))
    {
        return path.to_path_buf();
    }
    let mut out: PathBuf = r[common..].iter().map(|_| Component::ParentDir).collect();
    out.extend(&p[common..]);
    out
}

fn clean(p: &Path) -> Vec<Component<'_>> {
    p.components().filter(|c| *c != Component::CurDir).collect()
}
