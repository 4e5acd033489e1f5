//! Run manifests and staged output directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex SHA-256 of a byte string.
pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    Ok(digest_bytes(&fs::read(path)?))
}

/// What a command read, how it was configured and what it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    /// Effective configuration, after CLI flags, params file and defaults
    /// have been merged.
    pub config: serde_json::Value,
    /// Where each configured value came from (`cli`, `params-file` or
    /// `default`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sources: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_time_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            version: crate::VERSION.to_string(),
            command: command.to_string(),
            config,
            sources: BTreeMap::new(),
            seed: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            wall_time_seconds: 0.0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Output directory that only becomes visible once every file is written.
///
/// Files go to a hidden sibling directory first. [`Staging::commit`] moves
/// them into the target (creating it if needed) and records their digests;
/// dropping an uncommitted stage removes the partial output.
#[derive(Debug)]
pub struct Staging {
    target: PathBuf,
    dir: PathBuf,
    files: Vec<String>,
    committed: bool,
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self> {
        let target = if target.file_name().is_none() { &fs::canonicalize(target)? } else { target };
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let name = target
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| Error::Argument(format!("bad output directory {}", target.display())))?;
        let mut k = 0u32;
        let dir = loop {
            let candidate = parent.join(format!(".{name}.staging-{}-{k}", std::process::id()));
            match fs::create_dir(&candidate) {
                Ok(()) => break candidate,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => k += 1,
                Err(e) => return Err(e.into()),
            }
        };
        Ok(Self { target: target.to_path_buf(), dir, files: Vec::new(), committed: false })
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    /// Path inside the stage for `name`; the file is committed with the rest.
    pub fn path(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(p, contents)?;
        Ok(())
    }

    /// Digests of the staged files keyed by name.
    pub fn digests(&self) -> Result<BTreeMap<String, String>> {
        self.files
            .iter()
            .map(|f| Ok((f.clone(), digest_file(&self.dir.join(f))?)))
            .collect()
    }

    /// Moves every staged file into the target directory.
    pub fn commit(mut self) -> Result<PathBuf> {
        fs::create_dir_all(&self.target)?;
        for f in &self.files {
            let dest = self.target.join(f);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::rename(self.dir.join(f), dest)?;
        }
        self.committed = true;
        let _ = fs::remove_dir_all(&self.dir);
        Ok(self.target.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}
