use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use gradflow_core::io::{git_blob_hash, sha256_hex, to_canonical_json};
use serde::Serialize;
use serde_json::json;

/// Output directory that remembers what was written into it.
pub struct OutDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutDir {
    pub fn create(root: &str) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {root}"))?;
        Ok(Self {
            root: PathBuf::from(root),
            files: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, to_canonical_json(value)?.as_bytes())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// `manifest.json`: the effective configuration, its git-style content
    /// hash, the seed, a digest of every data file and the creation time.
    pub fn finish(self, command: &str, config: &toml::Table, seed: u64) -> Result<()> {
        let config_text = toml::to_string(config)?;
        let created = SystemTime::now().duration_since(UNIX_EPOCH)?.as_secs();
        let manifest = json!({
            "command": command,
            "config": config,
            "config_hash": git_blob_hash(config_text.as_bytes()),
            "seed": seed,
            "files": self.files,
            "created_unix": created,
            "version": env!("CARGO_PKG_VERSION"),
        });
        let path = self.root.join("manifest.json");
        fs::write(&path, to_canonical_json(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
