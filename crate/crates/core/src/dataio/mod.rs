//! On-disk formats: feature files, manifests, dataset directories,
//! checkpoints and JSON run configuration.
//!
//! Every writer goes through [`write_atomic`] (temp file in the target
//! directory, then rename), so readers never observe partial files.

mod checkpoint;
mod dataset;
mod feature;
mod manifest;

pub use checkpoint::{encode as encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dataset::{read_dataset_dir, resolve_split, write_dataset_dir, FEATURE_EXT, MANIFEST_NAME};
pub use feature::{read_feature_file, write_feature_file, FEATURE_MAGIC};
pub use manifest::{read_manifest, write_manifest, ManifestRecord};

use crate::error::{Error, Result};
use crate::synthbench::SynthConfig;
use crate::training::TrainConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidInput, "no file name")))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// JSON run configuration. Field names mirror [`SynthConfig`] and
/// [`TrainConfig`]; missing fields take their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Benchmark configuration: library defaults, trained in f32.
    pub fn benchmark() -> Self {
        RunConfig {
            train: TrainConfig { precision: crate::training::Precision::F32, ..TrainConfig::default() },
            ..RunConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        write_atomic(path, s.as_bytes())
    }
}
