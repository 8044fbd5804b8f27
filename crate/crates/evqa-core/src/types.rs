//! Domain types for frame artifacts and questions, plus store validation.
//!
//! A [`FrameStore`] holds the per-frame artifacts derived upstream for one
//! video: retrieval embeddings, optional appearance embeddings used by event
//! expansion, optional mean optical-flow magnitudes, and optional object
//! detections. No pixels are ever stored.

use serde::{Deserialize, Serialize};

/// Axis-aligned bounding box in normalized `[0,1]` image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }

    /// Intersection-over-union with another box.
    pub fn iou(&self, other: &BBox) -> f64 {
        let ix = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let iy = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    fn is_valid(&self) -> bool {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        in_unit(self.x_min)
            && in_unit(self.y_min)
            && in_unit(self.x_max)
            && in_unit(self.y_max)
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }
}

/// One detected object instance in one frame. `object_id` is a stable
/// identity across the frames of a video, assigned upstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub object_id: i64,
    pub label: String,
    pub bbox: BBox,
    pub confidence: f64,
}

/// One sampled video frame and its derived artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    /// Position in the sampled sequence (0-based, gap-free).
    pub frame_index: usize,
    /// Seconds from video start; strictly increasing with `frame_index`.
    pub timestamp_s: f64,
    /// Retrieval embedding for this frame.
    pub embedding: Vec<f32>,
    /// Mean optical-flow magnitude between this frame and its predecessor,
    /// in pixels/frame. Absent for frame 0 or when flow ingestion was skipped.
    pub flow_mean_mag: Option<f64>,
    /// Detections observed in this frame. `None` means detection artifacts
    /// were not ingested; `Some(vec![])` means observed with zero objects.
    pub detections: Option<Vec<Detection>>,
}

/// All derived artifacts for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStore {
    pub video_id: String,
    pub frames: Vec<FrameRecord>,
    /// Dimension of the retrieval embeddings.
    pub embedding_dim: usize,
    /// Appearance embeddings used by event expansion, parallel to `frames`.
    /// Distinct from the retrieval embeddings.
    pub expansion_embeddings: Option<Vec<Vec<f32>>>,
}

impl FrameStore {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn timestamp(&self, frame_index: usize) -> Option<f64> {
        self.frames.get(frame_index).map(|f| f.timestamp_s)
    }
}

/// One multiple-choice question over one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionInstance {
    pub question_id: String,
    pub video_id: String,
    pub question_text: String,
    /// 2 to 5 answer options, lettered A.. in order.
    pub options: Vec<String>,
    /// Ground-truth index into `options`, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_index: Option<usize>,
}

/// Reference to one frame of one video, used when talking to backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub video_id: String,
    pub frame_index: usize,
    pub timestamp_s: f64,
}

impl FrameRef {
    /// URI handed to live backends as an image-content part.
    pub fn uri(&self) -> String {
        format!("frame://{}/{}", self.video_id, self.frame_index)
    }
}

/// Render a timestamp as one-decimal seconds with an `s` suffix.
///
/// Every rendered template and narrative goes through this single formatter
/// so timestamps never drift between surfaces.
pub fn format_ts(t: f64) -> String {
    format!("{t:.1}s")
}

/// One violated invariant found by [`validate_store`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationFinding {
    /// Offending frame, when the invariant is frame-scoped.
    pub frame_index: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ValidationFinding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.frame_index {
            Some(i) => write!(f, "frame {}: {}", i, self.message),
            None => write!(f, "store: {}", self.message),
        }
    }
}

fn finding(frame_index: Option<usize>, message: impl Into<String>) -> ValidationFinding {
    ValidationFinding {
        frame_index,
        message: message.into(),
    }
}

/// Check every store and frame invariant. Returns an empty list iff all hold.
///
/// Findings are reported, never raised; the function is pure and idempotent.
/// `frame_cap` comes from the pipeline config (default 1024).
pub fn validate_store(store: &FrameStore, frame_cap: usize) -> Vec<ValidationFinding> {
    let mut out = Vec::new();

    if store.frames.len() > frame_cap {
        out.push(finding(
            None,
            format!(
                "store has {} frames, over the frame_cap of {frame_cap}",
                store.frames.len()
            ),
        ));
    }

    for (i, frame) in store.frames.iter().enumerate() {
        if frame.frame_index != i {
            out.push(finding(
                Some(i),
                format!(
                    "frame_index {} at position {i}; indices must be 0..len with no gaps",
                    frame.frame_index
                ),
            ));
        }
        if frame.timestamp_s < 0.0 {
            out.push(finding(
                Some(i),
                format!("negative timestamp {}", frame.timestamp_s),
            ));
        }
        if i > 0 {
            let prev = store.frames[i - 1].timestamp_s;
            if frame.timestamp_s <= prev {
                out.push(finding(
                    Some(i),
                    format!(
                        "timestamp {} does not strictly increase over previous {prev}",
                        frame.timestamp_s
                    ),
                ));
            }
        }
        if frame.embedding.len() != store.embedding_dim {
            out.push(finding(
                Some(i),
                format!(
                    "embedding length {} differs from store dimension {}",
                    frame.embedding.len(),
                    store.embedding_dim
                ),
            ));
        }
        if let Some(dets) = &frame.detections {
            for det in dets {
                if !det.bbox.is_valid() {
                    out.push(finding(
                        Some(i),
                        format!(
                            "object {} has an invalid bbox ({}, {}, {}, {})",
                            det.object_id,
                            det.bbox.x_min,
                            det.bbox.y_min,
                            det.bbox.x_max,
                            det.bbox.y_max
                        ),
                    ));
                }
                if !(0.0..=1.0).contains(&det.confidence) {
                    out.push(finding(
                        Some(i),
                        format!(
                            "object {} has confidence {} outside [0,1]",
                            det.object_id, det.confidence
                        ),
                    ));
                }
            }
        }
    }

    // flow_mean_mag may be absent only on frame 0 or when flow ingestion was
    // skipped for the whole store.
    let any_flow = store
        .frames
        .iter()
        .skip(1)
        .any(|f| f.flow_mean_mag.is_some());
    if any_flow {
        for frame in store.frames.iter().skip(1) {
            if frame.flow_mean_mag.is_none() {
                out.push(finding(
                    Some(frame.frame_index),
                    "flow_mean_mag missing while other frames carry flow data",
                ));
            }
        }
    }
    for frame in &store.frames {
        if let Some(m) = frame.flow_mean_mag {
            if m < 0.0 {
                out.push(finding(
                    Some(frame.frame_index),
                    format!("negative flow_mean_mag {m}"),
                ));
            }
        }
    }

    if let Some(exp) = &store.expansion_embeddings {
        if exp.len() != store.frames.len() {
            out.push(finding(
                None,
                format!(
                    "expansion_embeddings has {} rows for {} frames",
                    exp.len(),
                    store.frames.len()
                ),
            ));
        }
        if let Some(first) = exp.first() {
            let dim = first.len();
            for (i, row) in exp.iter().enumerate() {
                if row.len() != dim {
                    out.push(finding(
                        Some(i),
                        format!(
                            "expansion embedding length {} differs from first row's {dim}",
                            row.len()
                        ),
                    ));
                }
            }
        }
    }

    out
}
