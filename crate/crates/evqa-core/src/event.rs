//! Key-event construction: temporal segmentation of keyframes, adaptive
//! boundary expansion driven by the spatio-temporal difference score, and the
//! boundary split used for recursive refinement.
//!
//! The difference score for a candidate frame against its inward neighbor is
//! `S = alpha * D_spatial + (1 - alpha) * D_flow`, where `D_spatial` is the
//! L1 distance between L1-normalized appearance embeddings and `D_flow` is
//! the mean optical-flow magnitude of the later frame of the pair. A
//! candidate joins the event while `S <= tau_st`, up to `l_max` frames per
//! side.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::diag::{codes, Diagnostics};
use crate::error::EventError;
use crate::types::FrameStore;

/// A temporally contiguous group of keyframes, possibly expanded with
/// boundary frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyEvent {
    pub event_id: usize,
    /// The retrieved keyframes that seeded this event.
    pub keyframe_indices: Vec<usize>,
    /// All frames after expansion: sorted, duplicate-free, superset of the
    /// keyframes. Refinement halves keep their parent's `event_id`.
    pub expanded_indices: Vec<usize>,
    pub start_s: f64,
    pub end_s: f64,
}

impl KeyEvent {
    pub fn frame_count(&self) -> usize {
        self.expanded_indices.len()
    }
}

/// Which boundary a candidate frame was probed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Audit record for one expansion candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionDiag {
    pub event_id: usize,
    pub side: Side,
    pub frame_index: usize,
    pub d_spatial: f64,
    /// Absent when the store carries no flow for this comparison; the score
    /// then degrades to the spatial term alone.
    pub d_flow: Option<f64>,
    pub s_score: f64,
    pub accepted: bool,
}

/// Group sorted keyframes into events: consecutive keyframes whose timestamp
/// gap is at most `delta_t_s` share an event; a strictly greater gap starts a
/// new one. `expanded_indices` starts out equal to the keyframes.
pub fn segment_events(keyframes: &[usize], store: &FrameStore, delta_t_s: f64) -> Vec<KeyEvent> {
    assert!(
        keyframes.windows(2).all(|w| w[0] < w[1]),
        "keyframes must be sorted ascending and duplicate-free"
    );
    assert!(
        keyframes.iter().all(|&i| i < store.len()),
        "keyframes must be valid in the store"
    );

    let mut events: Vec<Vec<usize>> = Vec::new();
    for &idx in keyframes {
        let t = store.frames[idx].timestamp_s;
        match events.last_mut() {
            Some(group) => {
                let last_t = store.frames[*group.last().unwrap()].timestamp_s;
                if t - last_t > delta_t_s {
                    events.push(vec![idx]);
                } else {
                    group.push(idx);
                }
            }
            None => events.push(vec![idx]),
        }
    }

    events
        .into_iter()
        .enumerate()
        .map(|(event_id, group)| {
            let start_s = store.frames[group[0]].timestamp_s;
            let end_s = store.frames[*group.last().unwrap()].timestamp_s;
            KeyEvent {
                event_id,
                keyframe_indices: group.clone(),
                expanded_indices: group,
                start_s,
                end_s,
            }
        })
        .collect()
}

fn l1_normalized(v: &[f32]) -> Vec<f64> {
    let norm: f64 = v.iter().map(|x| f64::from(x.abs())).sum();
    if norm > 0.0 {
        v.iter().map(|x| f64::from(*x) / norm).collect()
    } else {
        v.iter().map(|x| f64::from(*x)).collect()
    }
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Appearance difference between two frames: L1 distance of their
/// L1-normalized expansion embeddings.
pub fn spatial_diff(store: &FrameStore, i: usize, j: usize) -> Result<f64, EventError> {
    let rows = store
        .expansion_embeddings
        .as_ref()
        .ok_or(EventError::ExpansionUnavailable(i))?;
    let a = rows.get(i).ok_or(EventError::ExpansionUnavailable(i))?;
    let b = rows.get(j).ok_or(EventError::ExpansionUnavailable(j))?;
    Ok(l1_distance(&l1_normalized(a), &l1_normalized(b)))
}

/// The stored mean flow magnitude for frame `i` (the flow between `i` and
/// `i - 1`), when ingestion provided one.
pub fn flow_diff(store: &FrameStore, i: usize) -> Option<f64> {
    store.frames.get(i).and_then(|f| f.flow_mean_mag)
}

/// Ingestion-time reducer: mean per-pixel magnitude of a raw flow field.
pub fn mean_flow_magnitude(u: &[f32], v: &[f32]) -> f64 {
    assert_eq!(u.len(), v.len(), "flow field components must pair up");
    if u.is_empty() {
        return 0.0;
    }
    let total: f64 = u
        .iter()
        .zip(v)
        .map(|(x, y)| (f64::from(*x).powi(2) + f64::from(*y).powi(2)).sqrt())
        .sum();
    total / u.len() as f64
}

/// The spatio-temporal difference score.
pub fn st_score(d_spatial: f64, d_flow: f64, alpha: f64) -> f64 {
    alpha * d_spatial + (1.0 - alpha) * d_flow
}

/// Difference across one split boundary. Prefers expansion embeddings and
/// falls back to retrieval embeddings so refinement stays available on
/// stores ingested without appearance artifacts.
fn boundary_diff(store: &FrameStore, i: usize, j: usize) -> f64 {
    match spatial_diff(store, i, j) {
        Ok(d) => d,
        Err(_) => l1_distance(
            &l1_normalized(&store.frames[i].embedding),
            &l1_normalized(&store.frames[j].embedding),
        ),
    }
}

struct SideProbe {
    diag: ExpansionDiag,
}

fn probe(
    store: &FrameStore,
    cfg: &PipelineConfig,
    event_id: usize,
    side: Side,
    candidate: usize,
    inward: usize,
) -> Result<SideProbe, EventError> {
    let d_spatial = spatial_diff(store, candidate, inward)? * cfg.spatial_scale;
    // Flow for a pair of adjacent frames is stored on the later frame.
    let flow_frame = candidate.max(inward);
    let d_flow = flow_diff(store, flow_frame).map(|f| f * cfg.flow_scale);
    let s_score = match d_flow {
        Some(f) => st_score(d_spatial, f, cfg.alpha),
        None => d_spatial,
    };
    Ok(SideProbe {
        diag: ExpansionDiag {
            event_id,
            side,
            frame_index: candidate,
            d_spatial,
            d_flow,
            s_score,
            accepted: s_score <= cfg.tau_st,
        },
    })
}

/// Expand one event outward on both sides.
///
/// Each side walks one frame at a time away from the event, scoring the
/// candidate against its inward neighbor, and stops at the first score above
/// `tau_st`, after `l_max` added frames, at the video boundary, or at a frame
/// already claimed by another event. Without expansion embeddings the event
/// is returned unchanged with a diagnostic.
pub fn expand_event(
    event: &KeyEvent,
    store: &FrameStore,
    cfg: &PipelineConfig,
    claimed: &BTreeSet<usize>,
    diags: &mut Diagnostics,
) -> (KeyEvent, Vec<ExpansionDiag>) {
    if store.expansion_embeddings.is_none() {
        diags.push(
            codes::EXPANSION_UNAVAILABLE,
            format!(
                "event {}: no expansion embeddings in store; event unchanged",
                event.event_id
            ),
        );
        return (event.clone(), Vec::new());
    }

    let mut records = Vec::new();
    let mut flow_fallback = false;
    let mut left_added: Vec<usize> = Vec::new();
    let mut right_added: Vec<usize> = Vec::new();

    for side in [Side::Left, Side::Right] {
        let mut inward = match side {
            Side::Left => *event.expanded_indices.first().unwrap(),
            Side::Right => *event.expanded_indices.last().unwrap(),
        };
        for _ in 0..cfg.l_max {
            let candidate = match side {
                Side::Left => {
                    if inward == 0 {
                        break; // video boundary
                    }
                    inward - 1
                }
                Side::Right => {
                    if inward + 1 >= store.len() {
                        break;
                    }
                    inward + 1
                }
            };
            if claimed.contains(&candidate) {
                break; // owned by another event
            }
            let probe = match probe(store, cfg, event.event_id, side, candidate, inward) {
                Ok(p) => p,
                Err(e) => {
                    diags.push(codes::EXPANSION_UNAVAILABLE, e.to_string());
                    break;
                }
            };
            if probe.diag.d_flow.is_none() && !flow_fallback {
                flow_fallback = true;
                diags.push(
                    codes::FLOW_FALLBACK,
                    format!(
                        "event {}: no flow data; scoring expansion on the spatial term alone",
                        event.event_id
                    ),
                );
            }
            let accepted = probe.diag.accepted;
            records.push(probe.diag);
            if !accepted {
                break;
            }
            match side {
                Side::Left => left_added.push(candidate),
                Side::Right => right_added.push(candidate),
            }
            inward = candidate;
        }
    }

    let mut expanded: Vec<usize> = left_added
        .into_iter()
        .rev()
        .chain(event.expanded_indices.iter().copied())
        .chain(right_added)
        .collect();
    expanded.dedup();

    let start_s = store.frames[expanded[0]].timestamp_s;
    let end_s = store.frames[*expanded.last().unwrap()].timestamp_s;
    let new_event = KeyEvent {
        event_id: event.event_id,
        keyframe_indices: event.keyframe_indices.clone(),
        expanded_indices: expanded,
        start_s,
        end_s,
    };
    (new_event, records)
}

/// Expand every event in temporal order with first-come frame ownership, so
/// expansions never overlap each other or a later event's keyframes.
pub fn expand_all(
    events: &[KeyEvent],
    store: &FrameStore,
    cfg: &PipelineConfig,
    diags: &mut Diagnostics,
) -> (Vec<KeyEvent>, Vec<ExpansionDiag>) {
    let mut claimed: BTreeSet<usize> = events
        .iter()
        .flat_map(|e| e.expanded_indices.iter().copied())
        .collect();
    let mut out = Vec::with_capacity(events.len());
    let mut all_records = Vec::new();
    for event in events {
        let (expanded, records) = expand_event(event, store, cfg, &claimed, diags);
        claimed.extend(expanded.expanded_indices.iter().copied());
        all_records.extend(records);
        out.push(expanded);
    }
    (out, all_records)
}

/// Split an event into two non-empty, temporally contiguous halves at the
/// boundary with the largest appearance difference (ties break earlier).
pub fn split_event(event: &KeyEvent, store: &FrameStore) -> Result<(KeyEvent, KeyEvent), EventError> {
    let n = event.expanded_indices.len();
    if n < 2 {
        return Err(EventError::Unsplittable(event.event_id));
    }

    let mut best_boundary = 0usize;
    let mut best_diff = f64::NEG_INFINITY;
    for b in 0..n - 1 {
        let d = boundary_diff(
            store,
            event.expanded_indices[b],
            event.expanded_indices[b + 1],
        );
        if d > best_diff {
            best_diff = d;
            best_boundary = b;
        }
    }

    let make_half = |indices: &[usize]| {
        let keyframes: Vec<usize> = event
            .keyframe_indices
            .iter()
            .copied()
            .filter(|k| indices.contains(k))
            .collect();
        KeyEvent {
            event_id: event.event_id,
            keyframe_indices: keyframes,
            expanded_indices: indices.to_vec(),
            start_s: store.frames[indices[0]].timestamp_s,
            end_s: store.frames[*indices.last().unwrap()].timestamp_s,
        }
    };

    let (left, right) = event.expanded_indices.split_at(best_boundary + 1);
    Ok((make_half(left), make_half(right)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;
    use crate::types::FrameRecord;

    fn store_with(
        timestamps: &[f64],
        expansion: Option<Vec<Vec<f32>>>,
        flows: Option<Vec<Option<f64>>>,
    ) -> FrameStore {
        FrameStore {
            video_id: "v".into(),
            frames: timestamps
                .iter()
                .enumerate()
                .map(|(i, &t)| FrameRecord {
                    frame_index: i,
                    timestamp_s: t,
                    embedding: vec![1.0, 0.0],
                    flow_mean_mag: flows.as_ref().and_then(|f| f[i]),
                    detections: None,
                })
                .collect(),
            embedding_dim: 2,
            expansion_embeddings: expansion,
        }
    }

    fn uniform_store(n: usize, phi: Vec<f32>) -> FrameStore {
        let timestamps: Vec<f64> = (0..n).map(|i| i as f64).collect();
        store_with(
            &timestamps,
            Some(vec![phi; n]),
            Some(vec![Some(0.0); n]),
        )
    }

    #[test]
    fn gap_rule_groups_keyframes() {
        let store = store_with(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0], None, None);
        let events = segment_events(&[1, 2, 3, 10, 11], &store, 3.0);
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].keyframe_indices, vec![1, 2, 3]);
        assert_eq!(events[1].keyframe_indices, vec![10, 11]);
        assert_eq!(events[0].expanded_indices, events[0].keyframe_indices);
        assert_eq!(events[1].start_s, 10.0);
        assert_eq!(events[1].end_s, 11.0);
    }

    #[test]
    fn single_keyframe_is_one_event() {
        let store = store_with(&[0.0, 1.0, 2.0], None, None);
        let events = segment_events(&[1], &store, 3.0);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].keyframe_indices, vec![1]);
    }

    #[test]
    fn gap_exactly_delta_t_joins() {
        // Separation requires a strictly greater gap.
        let store = store_with(&[0.0, 1.0, 2.0, 3.0, 4.0], None, None);
        let events = segment_events(&[1, 4], &store, 3.0);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].keyframe_indices, vec![1, 4]);
    }

    #[test]
    fn spatial_diff_of_identical_frames_is_zero() {
        let store = uniform_store(3, vec![0.3, 0.7]);
        assert_eq!(spatial_diff(&store, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn spatial_diff_of_orthogonal_normalized_frames_is_two() {
        let mut store = uniform_store(2, vec![1.0, 0.0]);
        store.expansion_embeddings = Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(spatial_diff(&store, 0, 1).unwrap(), 2.0);
    }

    #[test]
    fn spatial_diff_matches_scalar_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f32> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut store = uniform_store(2, vec![0.0; 8]);
        store.expansion_embeddings = Some(vec![a.clone(), b.clone()]);

        // Oracle: normalize by the sum of absolute values, then a scalar
        // loop over element-wise absolute differences.
        let norm_a: f64 = a.iter().map(|x| f64::from(x.abs())).sum();
        let norm_b: f64 = b.iter().map(|x| f64::from(x.abs())).sum();
        let mut expected = 0.0f64;
        for k in 0..8 {
            expected += (f64::from(a[k]) / norm_a - f64::from(b[k]) / norm_b).abs();
        }
        assert_eq!(spatial_diff(&store, 0, 1).unwrap(), expected);
    }

    #[test]
    fn spatial_diff_without_embeddings_errors() {
        let store = store_with(&[0.0, 1.0], None, None);
        assert!(matches!(
            spatial_diff(&store, 0, 1),
            Err(EventError::ExpansionUnavailable(_))
        ));
    }

    #[test]
    fn flow_reducer_handles_uniform_and_mixed_fields() {
        // Uniform field u=3, v=4: every pixel magnitude is 5.
        let u = vec![3.0f32; 6];
        let v = vec![4.0f32; 6];
        assert_eq!(mean_flow_magnitude(&u, &v), 5.0);

        assert_eq!(mean_flow_magnitude(&[0.0; 4], &[0.0; 4]), 0.0);

        // 2x2 field with per-pixel magnitudes {1, 2, 3, 4}.
        let u = vec![1.0f32, 2.0, 3.0, 4.0];
        let v = vec![0.0f32; 4];
        assert_eq!(mean_flow_magnitude(&u, &v), 2.5);
    }

    #[test]
    fn st_score_arithmetic() {
        assert_eq!(st_score(1.0, 3.0, 0.5), 2.0);
        assert_eq!(st_score(4.0, 0.0, 1.0), 4.0);
        for alpha in [0.0, 0.3, 0.7, 1.0] {
            assert!((st_score(1.7, 1.7, alpha) - 1.7).abs() < 1e-12);
        }
    }

    #[test]
    fn expansion_adds_l_max_per_side_when_diffs_vanish() {
        let store = uniform_store(12, vec![0.5, 0.5]);
        let events = segment_events(&[5, 6], &store, 3.0);
        let mut diags = Diagnostics::new();
        let (expanded, records) = expand_all(&events, &store, &default_config(), &mut diags);
        assert_eq!(expanded[0].expanded_indices, vec![2, 3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(records.iter().filter(|r| r.accepted).count(), 6);
        assert_eq!(expanded[0].start_s, 2.0);
        assert_eq!(expanded[0].end_s, 9.0);
    }

    #[test]
    fn expansion_stops_at_video_boundary() {
        let store = uniform_store(6, vec![0.5, 0.5]);
        let events = segment_events(&[0, 1], &store, 3.0);
        let mut diags = Diagnostics::new();
        let (event, _) = expand_event(
            &events[0],
            &store,
            &default_config(),
            &BTreeSet::new(),
            &mut diags,
        );
        // Nothing to add on the left of frame 0.
        assert_eq!(event.expanded_indices, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn boundary_spike_rejects_first_candidate() {
        // Appearance flips and flow spikes across the 2|3 boundary.
        let mut store = uniform_store(8, vec![0.0, 1.0]);
        let rows = store.expansion_embeddings.as_mut().unwrap();
        for row in rows.iter_mut().take(3) {
            *row = vec![1.0, 0.0];
        }
        store.frames[3].flow_mean_mag = Some(4.0);
        let events = segment_events(&[3, 4], &store, 3.0);
        let mut diags = Diagnostics::new();
        let (event, records) = expand_event(
            &events[0],
            &store,
            &default_config(),
            &BTreeSet::new(),
            &mut diags,
        );
        // S = 0.5 * 2.0 + 0.5 * 4.0 = 3.0 > tau_st, so the left side stays.
        let left_rejected: Vec<_> = records
            .iter()
            .filter(|r| r.side == Side::Left)
            .collect();
        assert_eq!(left_rejected.len(), 1);
        assert!(!left_rejected[0].accepted);
        assert_eq!(left_rejected[0].frame_index, 2);
        assert_eq!(left_rejected[0].s_score, 3.0);
        assert!(event.expanded_indices.starts_with(&[3, 4]));
    }

    #[test]
    fn expansion_without_embeddings_returns_unchanged_with_diagnostic() {
        let store = store_with(&[0.0, 1.0, 2.0, 3.0], None, None);
        let events = segment_events(&[1, 2], &store, 3.0);
        let mut diags = Diagnostics::new();
        let (event, records) = expand_event(
            &events[0],
            &store,
            &default_config(),
            &BTreeSet::new(),
            &mut diags,
        );
        assert_eq!(event, events[0]);
        assert!(records.is_empty());
        assert!(diags.has_code(codes::EXPANSION_UNAVAILABLE));
    }

    #[test]
    fn missing_flow_degrades_to_spatial_with_diagnostic() {
        let mut store = uniform_store(8, vec![0.5, 0.5]);
        for frame in &mut store.frames {
            frame.flow_mean_mag = None;
        }
        let events = segment_events(&[3, 4], &store, 3.0);
        let mut diags = Diagnostics::new();
        let (event, records) = expand_event(
            &events[0],
            &store,
            &default_config(),
            &BTreeSet::new(),
            &mut diags,
        );
        assert!(diags.has_code(codes::FLOW_FALLBACK));
        assert!(records.iter().all(|r| r.d_flow.is_none()));
        assert_eq!(event.expanded_indices, vec![0, 1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn expansion_never_crosses_a_neighboring_event() {
        let store = uniform_store(12, vec![0.5, 0.5]);
        let events = segment_events(&[2, 3, 8, 9], &store, 3.0);
        assert_eq!(events.len(), 2);
        let mut diags = Diagnostics::new();
        let (expanded, _) = expand_all(&events, &store, &default_config(), &mut diags);
        // The first event reaches right up to frame 7 and claims the gap; the
        // second event cannot take frames 5..=7 back.
        assert_eq!(expanded[0].expanded_indices, vec![0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(expanded[1].expanded_indices, vec![7, 8, 9, 10, 11]);
        let a: BTreeSet<_> = expanded[0].expanded_indices.iter().collect();
        let b: BTreeSet<_> = expanded[1].expanded_indices.iter().collect();
        assert!(a.is_disjoint(&b));
    }

    #[test]
    fn split_at_max_diff_boundary() {
        // Boundary diffs {0.1, 1.9, 0.1}: split after the second frame.
        let mut store = uniform_store(4, vec![0.0; 2]);
        store.expansion_embeddings = Some(vec![
            vec![0.00, 1.00],
            vec![0.05, 0.95],
            vec![1.00, 0.00],
            vec![0.95, 0.05],
        ]);
        let events = segment_events(&[0, 1, 2, 3], &store, 3.0);
        let (left, right) = split_event(&events[0], &store).unwrap();
        assert_eq!(left.expanded_indices, vec![0, 1]);
        assert_eq!(right.expanded_indices, vec![2, 3]);
        assert_eq!(left.event_id, right.event_id);
    }

    #[test]
    fn two_frame_event_splits_into_singletons() {
        let store = uniform_store(2, vec![0.5, 0.5]);
        let events = segment_events(&[0, 1], &store, 3.0);
        let (left, right) = split_event(&events[0], &store).unwrap();
        assert_eq!(left.expanded_indices, vec![0]);
        assert_eq!(right.expanded_indices, vec![1]);
    }

    #[test]
    fn equal_diffs_split_at_first_boundary() {
        let mut store = uniform_store(4, vec![0.0; 2]);
        store.expansion_embeddings = Some(vec![
            vec![0.00, 1.00],
            vec![0.25, 0.75],
            vec![0.50, 0.50],
            vec![0.75, 0.25],
        ]);
        let events = segment_events(&[0, 1, 2, 3], &store, 3.0);
        let (left, right) = split_event(&events[0], &store).unwrap();
        assert_eq!(left.expanded_indices, vec![0]);
        assert_eq!(right.expanded_indices, vec![1, 2, 3]);
    }

    #[test]
    fn single_frame_event_is_unsplittable() {
        let store = uniform_store(2, vec![0.5, 0.5]);
        let events = segment_events(&[1], &store, 3.0);
        assert!(matches!(
            split_event(&events[0], &store),
            Err(EventError::Unsplittable(_))
        ));
    }

    #[test]
    fn split_falls_back_to_retrieval_embeddings() {
        let mut store = store_with(&[0.0, 1.0, 2.0], None, None);
        store.frames[0].embedding = vec![1.0, 0.0];
        store.frames[1].embedding = vec![1.0, 0.0];
        store.frames[2].embedding = vec![0.0, 1.0];
        let events = segment_events(&[0, 1, 2], &store, 3.0);
        let (left, right) = split_event(&events[0], &store).unwrap();
        assert_eq!(left.expanded_indices, vec![0, 1]);
        assert_eq!(right.expanded_indices, vec![2]);
    }

    use proptest::prelude::*;

    proptest! {
        // Splitting partitions the event: halves are disjoint, ordered, and
        // union back to the original frame set.
        #[test]
        fn split_partitions_the_event(seed in 0u64..300, n in 2usize..24) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let timestamps: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let expansion: Vec<Vec<f32>> = (0..n)
                .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let store = store_with(&timestamps, Some(expansion), None);
            let all: Vec<usize> = (0..n).collect();
            let event = segment_events(&all, &store, 3.0).remove(0);
            let (left, right) = split_event(&event, &store).unwrap();
            prop_assert!(!left.expanded_indices.is_empty());
            prop_assert!(!right.expanded_indices.is_empty());
            prop_assert!(
                left.expanded_indices.last().unwrap() < right.expanded_indices.first().unwrap()
            );
            let mut union = left.expanded_indices.clone();
            union.extend(&right.expanded_indices);
            prop_assert_eq!(union, event.expanded_indices);
        }
    }

    #[test]
    fn raising_tau_st_only_adds_frames() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 20;
        let timestamps: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let expansion: Vec<Vec<f32>> = (0..n)
            .map(|_| (0..4).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let flows: Vec<Option<f64>> = (0..n).map(|_| Some(rng.gen_range(0.0..4.0))).collect();
        let store = store_with(&timestamps, Some(expansion), Some(flows));
        let events = segment_events(&[9, 10], &store, 3.0);

        let mut previous: Option<BTreeSet<usize>> = None;
        for tau in [0.5, 1.0, 2.0, 4.0] {
            let mut cfg = default_config();
            cfg.tau_st = tau;
            let mut diags = Diagnostics::new();
            let (event, _) =
                expand_event(&events[0], &store, &cfg, &BTreeSet::new(), &mut diags);
            let current: BTreeSet<usize> = event.expanded_indices.iter().copied().collect();
            if let Some(prev) = previous {
                assert!(prev.is_subset(&current), "tau_st {tau} removed frames");
            }
            previous = Some(current);
        }
    }
}
