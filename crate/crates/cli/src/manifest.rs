//! JSON manifests listing pictures, their optional MOS and patches.
//!
//! ```json
//! {"schema_version": 1, "seed": 7, "entries": [
//!   {"id": "a.png", "image_path": "img/a.png", "mos": 61.2,
//!    "patches": [{"scale": 0.4, "left": 3, "top": 0, "right": 43, "bottom": 30, "mos": 58.0}]}
//! ]}
//! ```
//!
//! Relative image paths are resolved against the manifest's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use patchq::{Error, Rect, Result, SCHEMA_VERSION};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchEntry {
    pub scale: f64,
    #[serde(flatten)]
    pub rect: Rect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mos: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub id: String,
    pub image_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patches: Option<Vec<PatchEntry>>,
}

impl Entry {
    /// Content id of the `k`-th patch in study tables.
    pub fn patch_id(&self, k: usize) -> String {
        format!("{}#{k}", self.id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingSummary {
    pub objective: f64,
    pub distances: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingSummary>,
    pub entries: Vec<Entry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<Entry>, seed: Option<u64>) -> Self {
        Manifest { schema_version: SCHEMA_VERSION, seed, sampling: None, entries, base_dir: PathBuf::new() }
    }

    /// Parses and validates; every referenced picture must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        let mut m: Manifest = serde_json::from_str(&text)?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Version(format!(
                "manifest schema {} but this build reads {SCHEMA_VERSION}",
                m.schema_version
            )));
        }
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        for e in &m.entries {
            let p = m.resolve(e);
            if !p.is_file() {
                return Err(Error::Validation(format!("entry {}: {} does not exist", e.id, p.display())));
            }
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(&e.id) {
                return Err(Error::Validation(format!("duplicate id {}", e.id)));
            }
            let ok = |v: Option<f64>| v.is_none_or(|m| (0.0..=100.0).contains(&m));
            if !ok(e.mos) || !e.patches.iter().flatten().all(|p| ok(p.mos)) {
                return Err(Error::Validation(format!("entry {}: MOS outside [0, 100]", e.id)));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, e: &Entry) -> PathBuf {
        if e.image_path.is_absolute() {
            e.image_path.clone()
        } else {
            self.base_dir.join(&e.image_path)
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
