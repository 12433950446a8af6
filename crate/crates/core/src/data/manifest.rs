use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_mask, load_volume, DataError, Result, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub volume: PathBuf,
    pub mask: PathBuf,
}

/// Dataset listing stored as JSON.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Free-form provenance (for example the phantom spec used).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<serde_json::Value>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| DataError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let mut m: Manifest = serde_json::from_str(&text).map_err(|e| DataError::Manifest(e.to_string()))?;
        let mut seen = std::collections::HashSet::new();
        for e in &m.entries {
            if !seen.insert(&e.id) {
                return Err(DataError::Manifest(format!("duplicate id {}", e.id)));
            }
        }
        if m.entries.is_empty() {
            return Err(DataError::Manifest("no entries".into()));
        }
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| DataError::Manifest(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| DataError::Io { path: path.display().to_string(), message: e.to_string() })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load_sample(&self, entry: &ManifestEntry) -> Result<Sample> {
        let v = load_volume(self.resolve(&entry.volume))?;
        let m = load_mask(self.resolve(&entry.mask))?;
        Sample::new(entry.id.clone(), v, m)
    }

    pub fn load_all(&self) -> Result<Vec<Sample>> {
        self.entries.iter().map(|e| self.load_sample(e)).collect()
    }
}
