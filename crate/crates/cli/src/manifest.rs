//! Dataset manifest: one entry per utterance with its landmark file, phone
//! and word transcripts, optional manual annotations, and a train/test tag.
//! All paths are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use acsr_core::synth::Split;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<PathBuf>,
    /// Space-separated phone symbols.
    pub phones: String,
    /// Space-separated words.
    pub words: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub utterances: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(utterances: Vec<ManifestEntry>) -> Manifest {
        Manifest { version: 1, utterances }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).context("serialize manifest")?;
        std::fs::write(path, text).with_context(|| format!("write {}", path.display()))?;
        Ok(())
    }

    /// Loads and validates a manifest; referenced files must exist.
    pub fn load(path: &Path) -> Result<(Manifest, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("read manifest {}", path.display()))?;
        let manifest: Manifest =
            serde_json::from_str(&text).with_context(|| format!("parse {}", path.display()))?;
        if manifest.version != 1 {
            bail!("unsupported manifest version {}", manifest.version);
        }
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let mut seen = std::collections::HashSet::new();
        for entry in &manifest.utterances {
            if !seen.insert(&entry.id) {
                bail!("duplicate utterance id {:?}", entry.id);
            }
            for file in [&entry.landmarks, &entry.annotations].into_iter().flatten() {
                let resolved = base.join(file);
                if !resolved.exists() {
                    bail!("{}: missing file {}", entry.id, resolved.display());
                }
            }
        }
        Ok((manifest, base))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.utterances.iter().filter(move |e| e.split == split)
    }
}

impl ManifestEntry {
    pub fn phone_symbols(&self) -> Vec<&str> {
        self.phones.split_whitespace().collect()
    }
}
