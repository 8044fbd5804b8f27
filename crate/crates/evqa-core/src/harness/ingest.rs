//! Manifest-driven store ingestion.
//!
//! A manifest names one video's artifact files. All files must agree on the
//! frame count before anything is assembled; stores longer than the frame
//! cap are truncated with a diagnostic. Frames are timestamped from the
//! manifest's sampling rate (1 fps unless overridden).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::diag::{codes, Diagnostics};
use crate::error::IngestError;
use crate::harness::formats;
use crate::types::{FrameRecord, FrameStore};

fn default_fps() -> f64 {
    1.0
}

/// Declares the artifact files for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestManifest {
    pub video_id: String,
    pub embeddings_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion_embeddings_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections_path: Option<PathBuf>,
    #[serde(default = "default_fps")]
    pub fps: f64,
}

impl IngestManifest {
    /// Parse a manifest file and resolve its paths against the manifest's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut manifest: IngestManifest =
            toml::from_str(&text).map_err(|e| IngestError::Manifest(e.to_string()))?;
        if manifest.fps <= 0.0 {
            return Err(IngestError::Manifest(format!(
                "fps must be positive, got {}",
                manifest.fps
            )));
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        fn resolve(base: &Path, p: &PathBuf) -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        }
        manifest.embeddings_path = resolve(base, &manifest.embeddings_path);
        manifest.expansion_embeddings_path = manifest
            .expansion_embeddings_path
            .as_ref()
            .map(|p| resolve(base, p));
        manifest.flow_path = manifest.flow_path.as_ref().map(|p| resolve(base, p));
        manifest.detections_path = manifest.detections_path.as_ref().map(|p| resolve(base, p));
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        let text = toml::to_string(self).map_err(|e| IngestError::Manifest(e.to_string()))?;
        std::fs::write(path, text).map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

fn check_count(path: &Path, expected: usize, got: usize) -> Result<(), IngestError> {
    if expected != got {
        return Err(IngestError::FrameCountMismatch {
            path: path.display().to_string(),
            expected,
            got,
        });
    }
    Ok(())
}

/// Load a [`FrameStore`] from a manifest.
pub fn ingest(
    manifest: &IngestManifest,
    cfg: &PipelineConfig,
    diags: &mut Diagnostics,
) -> Result<FrameStore, IngestError> {
    let embeddings = formats::read_matrix(&manifest.embeddings_path)?;
    let total = embeddings.len();
    let embedding_dim = embeddings.first().map_or(0, Vec::len);
    for (i, row) in embeddings.iter().enumerate() {
        if row.len() != embedding_dim {
            return Err(IngestError::Malformed {
                path: manifest.embeddings_path.display().to_string(),
                line: i + 1,
                reason: format!(
                    "row has dim {} while the first row has {embedding_dim}",
                    row.len()
                ),
            });
        }
    }

    let expansion = match &manifest.expansion_embeddings_path {
        Some(path) => {
            let rows = formats::read_matrix(path)?;
            check_count(path, total, rows.len())?;
            Some(rows)
        }
        None => None,
    };

    let flows = match &manifest.flow_path {
        Some(path) => {
            let values = formats::read_flow(path)?;
            // One value per frame transition.
            check_count(path, total.saturating_sub(1), values.len())?;
            Some(values)
        }
        None => None,
    };

    let detections = match &manifest.detections_path {
        Some(path) => {
            let per_frame = formats::read_detections(path)?;
            check_count(path, total, per_frame.len())?;
            Some(per_frame)
        }
        None => None,
    };

    let keep = total.min(cfg.frame_cap);
    if keep < total {
        diags.push(
            codes::TRUNCATED,
            format!(
                "{}: {total} frames truncated to the frame_cap of {keep}",
                manifest.video_id
            ),
        );
    }

    let mut detections = detections;
    let mut frames = Vec::with_capacity(keep);
    for (i, embedding) in embeddings.into_iter().take(keep).enumerate() {
        let flow_mean_mag = if i == 0 {
            None
        } else {
            flows.as_ref().map(|f| f[i - 1])
        };
        let dets = detections.as_mut().map(|d| std::mem::take(&mut d[i]));
        frames.push(FrameRecord {
            frame_index: i,
            timestamp_s: i as f64 / manifest.fps,
            embedding,
            flow_mean_mag,
            detections: dets,
        });
    }

    Ok(FrameStore {
        video_id: manifest.video_id.clone(),
        frames,
        embedding_dim,
        expansion_embeddings: expansion.map(|rows| rows.into_iter().take(keep).collect()),
    })
}
