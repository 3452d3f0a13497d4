use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Output directory under construction. Artifacts go into a hidden sibling
/// that replaces the target only on [`Staging::commit`]; dropping it
/// uncommitted removes everything written so far.
pub struct Staging {
    dir: PathBuf,
    target: PathBuf,
    committed: bool,
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self> {
        let name = target
            .file_name()
            .with_context(|| format!("output path {} has no final component", target.display()))?;
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
        let dir = parent.join(format!(".{}.staging", name.to_string_lossy()));
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::create_dir(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            target: target.to_path_buf(),
            committed: false,
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn subdir(&self, rel: &str) -> Result<PathBuf> {
        let p = self.dir.join(rel);
        std::fs::create_dir_all(&p)?;
        Ok(p)
    }

    /// Write the manifest and move the directory into place.
    pub fn commit(mut self, cfg: &ExperimentConfig, command: &str) -> Result<PathBuf> {
        let manifest = Manifest::new(cfg, command, &self.dir)?;
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(self.dir.join("manifest.json"), text)?;
        if self.target.exists() {
            std::fs::remove_dir_all(&self.target)
                .with_context(|| format!("replacing {}", self.target.display()))?;
        }
        std::fs::rename(&self.dir, &self.target)
            .with_context(|| format!("moving results to {}", self.target.display()))?;
        self.committed = true;
        Ok(self.target.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.dir);
        }
    }
}

/// Execution record; holds the full effective config so every reported
/// number can be re-derived.
#[derive(Serialize)]
struct Manifest {
    command: String,
    seed: u64,
    config_sha256: String,
    versions: BTreeMap<&'static str, &'static str>,
    config: toml::Value,
    outputs: BTreeMap<String, String>,
}

impl Manifest {
    fn new(cfg: &ExperimentConfig, command: &str, dir: &Path) -> Result<Self> {
        let mut versions = BTreeMap::new();
        versions.insert("wmlab", wmlab_version());
        versions.insert("wmlab-cli", env!("CARGO_PKG_VERSION"));
        let mut outputs = BTreeMap::new();
        hash_tree(dir, dir, &mut outputs)?;
        Ok(Self {
            command: command.into(),
            seed: cfg.seed,
            config_sha256: cfg.hash()?,
            versions,
            config: toml::Value::try_from(cfg)?,
            outputs,
        })
    }
}

fn wmlab_version() -> &'static str {
    // Both crates share the workspace version.
    env!("CARGO_PKG_VERSION")
}

fn hash_tree(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            hash_tree(root, &p, out)?;
        } else {
            let rel = p.strip_prefix(root).expect("inside root").to_string_lossy().replace('\\', "/");
            out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&p)?)));
        }
    }
    Ok(())
}
