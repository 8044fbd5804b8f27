//! On-disk artifact formats.
//!
//! Large numeric artifacts (embeddings, flow) use a small binary container:
//! magic `VEMB`, a u32 version, u32 dim, u32 row count, then row-major
//! 32-bit little-endian floats. Every artifact also has a line-delimited
//! JSON alternative for hand-written fixtures; readers sniff the magic bytes
//! to pick the decoder. Detections and questions are always JSONL with the
//! exact field names of their domain types.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::IngestError;
use crate::event::mean_flow_magnitude;
use crate::types::{Detection, QuestionInstance};

pub const MATRIX_MAGIC: &[u8; 4] = b"VEMB";
pub const MATRIX_VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> IngestError {
    IngestError::Malformed {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

/// Write rows to the binary matrix container. All rows must share one
/// dimension.
pub fn write_matrix(path: &Path, rows: &[Vec<f32>]) -> Result<(), IngestError> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(malformed(path, 0, "rows have mixed dimensions"));
    }
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(MATRIX_MAGIC).map_err(|e| io_err(path, e))?;
    w.write_u32::<LittleEndian>(MATRIX_VERSION)
        .map_err(|e| io_err(path, e))?;
    w.write_u32::<LittleEndian>(dim as u32)
        .map_err(|e| io_err(path, e))?;
    w.write_u32::<LittleEndian>(rows.len() as u32)
        .map_err(|e| io_err(path, e))?;
    for row in rows {
        for &v in row {
            w.write_f32::<LittleEndian>(v).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_binary_matrix(path: &Path, bytes: &[u8]) -> Result<Vec<Vec<f32>>, IngestError> {
    let mut r = &bytes[4..];
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|e| io_err(path, e))?;
    if version != MATRIX_VERSION {
        return Err(IngestError::BadVersion {
            path: path.display().to_string(),
            version,
        });
    }
    let dim = r
        .read_u32::<LittleEndian>()
        .map_err(|e| io_err(path, e))? as usize;
    let count = r
        .read_u32::<LittleEndian>()
        .map_err(|e| io_err(path, e))? as usize;
    let expected_bytes = dim * count * 4;
    if r.len() != expected_bytes {
        return Err(malformed(
            path,
            0,
            format!(
                "payload is {} bytes, header implies {expected_bytes}",
                r.len()
            ),
        ));
    }
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let mut row = vec![0f32; dim];
        r.read_f32_into::<LittleEndian>(&mut row)
            .map_err(|e| io_err(path, e))?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Deserialize, Serialize)]
struct EmbeddingLine {
    frame_index: usize,
    embedding: Vec<f32>,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, IngestError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T =
            serde_json::from_str(&line).map_err(|e| malformed(path, i + 1, e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

fn is_binary(path: &Path) -> Result<bool, IngestError> {
    let mut file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut magic = [0u8; 4];
    match file.read_exact(&mut magic) {
        Ok(()) => Ok(&magic == MATRIX_MAGIC),
        Err(_) => Ok(false), // shorter than a magic header: treat as text
    }
}

/// Read an embedding matrix, binary or JSONL. JSONL lines must carry
/// `frame_index` values 0..count in order.
pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f32>>, IngestError> {
    if is_binary(path)? {
        let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
        return read_binary_matrix(path, &bytes);
    }
    let lines: Vec<EmbeddingLine> = read_jsonl(path)?;
    for (i, line) in lines.iter().enumerate() {
        if line.frame_index != i {
            return Err(malformed(
                path,
                i + 1,
                format!("frame_index {} out of order, expected {i}", line.frame_index),
            ));
        }
    }
    Ok(lines.into_iter().map(|l| l.embedding).collect())
}

/// One flow record in JSONL form: either a precomputed mean or a raw (u, v)
/// field reduced at ingestion time.
#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum FlowLine {
    Mean {
        frame_index: usize,
        flow_mean_mag: f64,
    },
    Raw {
        frame_index: usize,
        u: Vec<f32>,
        v: Vec<f32>,
    },
}

/// Read per-transition flow magnitudes (one value per frame pair, mapped to
/// frames `1..=count`). Binary containers use dim 1 for precomputed means or
/// an even dim `2K` for raw fields laid out as K u-values then K v-values.
pub fn read_flow(path: &Path) -> Result<Vec<f64>, IngestError> {
    if is_binary(path)? {
        let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
        let rows = read_binary_matrix(path, &bytes)?;
        let dim = rows.first().map_or(1, Vec::len);
        return rows
            .iter()
            .map(|row| {
                if dim == 1 {
                    Ok(f64::from(row[0]))
                } else if dim % 2 == 0 {
                    let half = dim / 2;
                    Ok(mean_flow_magnitude(&row[..half], &row[half..]))
                } else {
                    Err(malformed(
                        path,
                        0,
                        format!("flow rows must have dim 1 or an even dim, got {dim}"),
                    ))
                }
            })
            .collect();
    }
    let lines: Vec<FlowLine> = read_jsonl(path)?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let (frame_index, value) = match line {
            FlowLine::Mean {
                frame_index,
                flow_mean_mag,
            } => (*frame_index, *flow_mean_mag),
            FlowLine::Raw { frame_index, u, v } => {
                if u.len() != v.len() {
                    return Err(malformed(path, i + 1, "u and v lengths differ"));
                }
                (*frame_index, mean_flow_magnitude(u, v))
            }
        };
        if frame_index != i + 1 {
            return Err(malformed(
                path,
                i + 1,
                format!("frame_index {frame_index} out of order, expected {}", i + 1),
            ));
        }
        out.push(value);
    }
    Ok(out)
}

/// Write per-transition flow means as JSONL (frame_index starts at 1).
pub fn write_flow_jsonl(path: &Path, means: &[f64]) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for (i, &m) in means.iter().enumerate() {
        let line = serde_json::to_string(&FlowLine::Mean {
            frame_index: i + 1,
            flow_mean_mag: m,
        })
        .expect("flow line serializes");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// One frame's detections: every ingested frame gets exactly one line, so an
/// empty list means "observed with zero objects".
#[derive(Debug, Serialize, Deserialize)]
pub struct DetectionLine {
    pub frame_index: usize,
    pub detections: Vec<Detection>,
}

/// Read per-frame detection lines, ordered 0..count.
pub fn read_detections(path: &Path) -> Result<Vec<Vec<Detection>>, IngestError> {
    let lines: Vec<DetectionLine> = read_jsonl(path)?;
    for (i, line) in lines.iter().enumerate() {
        if line.frame_index != i {
            return Err(malformed(
                path,
                i + 1,
                format!("frame_index {} out of order, expected {i}", line.frame_index),
            ));
        }
    }
    Ok(lines.into_iter().map(|l| l.detections).collect())
}

pub fn write_detections(path: &Path, per_frame: &[Vec<Detection>]) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for (i, detections) in per_frame.iter().enumerate() {
        let line = serde_json::to_string(&DetectionLine {
            frame_index: i,
            detections: detections.clone(),
        })
        .expect("detection line serializes");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_questions(path: &Path) -> Result<Vec<QuestionInstance>, IngestError> {
    read_jsonl(path)
}

pub fn write_questions(path: &Path, questions: &[QuestionInstance]) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for q in questions {
        let line = serde_json::to_string(q).expect("question serializes");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BBox;
    use tempfile::TempDir;

    #[test]
    fn matrix_binary_round_trip() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("m.bin");
        let rows = vec![vec![1.0f32, -2.5, 0.0], vec![0.25, 3.75, 9.0]];
        write_matrix(&path, &rows).unwrap();
        assert_eq!(read_matrix(&path).unwrap(), rows);
    }

    #[test]
    fn matrix_jsonl_read() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(
            &path,
            "{\"frame_index\":0,\"embedding\":[1.0,2.0]}\n{\"frame_index\":1,\"embedding\":[3.0,4.0]}\n",
        )
        .unwrap();
        assert_eq!(
            read_matrix(&path).unwrap(),
            vec![vec![1.0, 2.0], vec![3.0, 4.0]]
        );
    }

    #[test]
    fn jsonl_out_of_order_is_malformed() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, "{\"frame_index\":1,\"embedding\":[1.0]}\n").unwrap();
        assert!(matches!(
            read_matrix(&path),
            Err(IngestError::Malformed { .. })
        ));
    }

    #[test]
    fn bad_version_is_rejected() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("m.bin");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MATRIX_MAGIC);
        bytes.extend_from_slice(&7u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_matrix(&path),
            Err(IngestError::BadVersion { version: 7, .. })
        ));
    }

    #[test]
    fn flow_jsonl_round_trip_and_raw_reduction() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("flow.jsonl");
        write_flow_jsonl(&path, &[0.5, 1.25]).unwrap();
        assert_eq!(read_flow(&path).unwrap(), vec![0.5, 1.25]);

        // Raw (u, v) lines reduce through the ingestion-time reducer.
        let raw = dir.path().join("raw.jsonl");
        std::fs::write(
            &raw,
            "{\"frame_index\":1,\"u\":[3.0,3.0],\"v\":[4.0,4.0]}\n",
        )
        .unwrap();
        assert_eq!(read_flow(&raw).unwrap(), vec![5.0]);
    }

    #[test]
    fn binary_raw_flow_reduces_per_row() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("flow.bin");
        // dim 4 = K 2: u values then v values.
        write_matrix(&path, &[vec![3.0, 0.0, 4.0, 0.0]]).unwrap();
        assert_eq!(read_flow(&path).unwrap(), vec![(5.0 + 0.0) / 2.0]);
    }

    #[test]
    fn detections_round_trip() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("d.jsonl");
        let per_frame = vec![
            vec![],
            vec![Detection {
                object_id: 4,
                label: "cup".into(),
                bbox: BBox::new(0.1, 0.1, 0.3, 0.3),
                confidence: 0.75,
            }],
        ];
        write_detections(&path, &per_frame).unwrap();
        assert_eq!(read_detections(&path).unwrap(), per_frame);
    }

    #[test]
    fn questions_round_trip() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("q.jsonl");
        let questions = vec![QuestionInstance {
            question_id: "q1".into(),
            video_id: "v".into(),
            question_text: "what?".into(),
            options: vec!["a".into(), "b".into()],
            answer_index: Some(1),
        }];
        write_questions(&path, &questions).unwrap();
        assert_eq!(read_questions(&path).unwrap(), questions);
    }
}
