//! Naive offline reference for the gated sampler.
//!
//! Everything here is written from the definitions with plain loops and no
//! caching: every step recomputes the surprise, the packing threshold and,
//! when trimming, the threshold of every candidate removal. It shares no
//! arithmetic code with the streaming implementation, so agreement between
//! the two is a meaningful check.

#![allow(clippy::needless_range_loop)]

use crate::config::{SamplerConfig, SeedMode};
use crate::embedding::{Metric, Normalization};
use crate::frame::{FrameRecord, QuerySet};
use crate::pipeline::DecisionRecord;
use crate::sampler::Action;

fn norm2(a: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * a[i];
    }
    s.sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..a.len() {
        d += a[i] * b[i];
    }
    let c = d / (norm2(a) * norm2(b));
    c.clamp(-1.0, 1.0)
}

fn gate(frame: &[f64], queries: &[Vec<f64>], scale: f64) -> f64 {
    let logits: Vec<f64> = queries.iter().map(|q| scale * cosine(frame, q)).collect();
    let mut max = f64::NEG_INFINITY;
    for &l in &logits {
        if l > max {
            max = l;
        }
    }
    let mut denom = 0.0;
    for &l in &logits {
        denom += (l - max).exp();
    }
    100.0 * ((logits[0] - max).exp() / denom)
}

fn transform(v: &[f64], normalization: Normalization) -> Vec<f64> {
    let mut abs = vec![0.0; v.len()];
    for i in 0..v.len() {
        abs[i] = v[i].abs();
    }
    let scale = match normalization {
        Normalization::L1 => {
            let mut s = 0.0;
            for &x in &abs {
                s += x;
            }
            s
        }
        Normalization::L2 => norm2(&abs),
    };
    abs.iter().map(|x| x / scale).collect()
}

fn dist(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => {
            let mut s = 0.0;
            for i in 0..a.len() {
                s += (a[i] - b[i]) * (a[i] - b[i]);
            }
            s.sqrt()
        }
        Metric::L1 => {
            let mut s = 0.0;
            for i in 0..a.len() {
                s += (a[i] - b[i]).abs();
            }
            s
        }
        Metric::Cosine if a == b => 0.0,
        Metric::Cosine => 1.0 - cosine(a, b),
    }
}

fn gamma(set: &[(u64, Vec<f64>)], metric: Metric) -> f64 {
    if set.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..set.len() {
        let mut nearest = f64::INFINITY;
        for j in 0..set.len() {
            if j != i {
                nearest = nearest.min(dist(&set[i].1, &set[j].1, metric));
            }
        }
        total += nearest;
    }
    total / set.len() as f64
}

/// Stand-in enhancer: `None` means the enhancement failed.
pub type EnhanceFn<'a> = &'a mut dyn FnMut(&FrameRecord) -> Option<Vec<f64>>;

/// Per-frame action plus the final sample set, as frame indices.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub actions: Vec<(u64, Action)>,
    pub final_indices: Vec<u64>,
}

/// Replays the whole stream. `enhance` is consulted only for frames that
/// pass the first gate; `None` from it means the enhancer failed and the
/// frame is skipped. Pass `None` for the plain pipeline.
pub fn run_reference(
    frames: &[FrameRecord],
    queries: &QuerySet,
    config: &SamplerConfig,
    mut enhance: Option<EnhanceFn<'_>>,
) -> OracleOutcome {
    let qs: Vec<Vec<f64>> = queries.iter().map(|q| q.to_vec()).collect();
    let k = config.capacity;
    let mut set: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut offered = 0usize;
    let mut actions = Vec::with_capacity(frames.len());

    for (t, frame) in frames.iter().enumerate() {
        let mut embedding = frame.embedding.to_vec();
        let raw_seed = config.seed_mode == SeedMode::Raw && t < k;
        if !raw_seed {
            if gate(&embedding, &qs, config.softmax_scale) <= config.tau_ss {
                actions.push((frame.frame_index, Action::RejectedGate));
                continue;
            }
            if let Some(f) = enhance.as_mut() {
                match f(frame) {
                    None => {
                        actions.push((frame.frame_index, Action::EnhancementFailed));
                        continue;
                    }
                    Some(e) => {
                        if gate(&e, &qs, config.softmax_scale) <= config.tau_ses {
                            actions.push((frame.frame_index, Action::RejectedPostEnhancement));
                            continue;
                        }
                        embedding = e;
                    }
                }
            }
        }
        let feature = transform(&embedding, config.normalization);
        offered += 1;
        if offered <= k {
            set.push((frame.frame_index, feature));
            actions.push((frame.frame_index, Action::SeedFill));
            continue;
        }
        let mut alpha = f64::INFINITY;
        for (_, s) in &set {
            alpha = alpha.min(dist(&feature, s, config.metric));
        }
        if alpha > gamma(&set, config.metric) {
            set.push((frame.frame_index, feature));
            while set.len() > k {
                let mut best = (0, f64::NEG_INFINITY);
                for r in 0..set.len() {
                    let mut rest = set.clone();
                    rest.remove(r);
                    let g = gamma(&rest, config.metric);
                    if g > best.1 {
                        best = (r, g);
                    }
                }
                set.remove(best.0);
            }
            actions.push((frame.frame_index, Action::Accepted));
        } else {
            actions.push((frame.frame_index, Action::RejectedSurprise));
        }
    }

    OracleOutcome {
        actions,
        final_indices: set.into_iter().map(|(i, _)| i).collect(),
    }
}

/// Replays a decision log: the sample set it implies, in insertion order.
pub fn replay_log(log: &[DecisionRecord]) -> Vec<u64> {
    let mut set: Vec<u64> = Vec::new();
    for r in log {
        if matches!(r.decision.action, Action::SeedFill | Action::Accepted) {
            set.push(r.frame_index);
        }
        set.retain(|i| !r.decision.trimmed_frame_indices.contains(i));
    }
    set
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mismatch {
    Length {
        log: usize,
        reference: usize,
    },
    Frame {
        frame_index: u64,
        log: Action,
        reference: Action,
    },
    FrameIndex {
        position: usize,
        log: u64,
        reference: u64,
    },
    FinalSet {
        log: Vec<u64>,
        reference: Vec<u64>,
    },
}

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mismatch::Length { log, reference } => {
                write!(f, "log has {log} records, reference has {reference}")
            }
            Mismatch::Frame {
                frame_index,
                log,
                reference,
            } => write!(
                f,
                "frame {frame_index}: log {log:?}, reference {reference:?}"
            ),
            Mismatch::FrameIndex {
                position,
                log,
                reference,
            } => write!(
                f,
                "record {position}: log frame {log}, reference frame {reference}"
            ),
            Mismatch::FinalSet { log, reference } => {
                write!(f, "final set {log:?} differs from reference {reference:?}")
            }
        }
    }
}

/// First disagreement between a decision log and the reference replay.
pub fn diff(log: &[DecisionRecord], reference: &OracleOutcome) -> Option<Mismatch> {
    if log.len() != reference.actions.len() {
        return Some(Mismatch::Length {
            log: log.len(),
            reference: reference.actions.len(),
        });
    }
    for (position, (r, &(idx, action))) in log.iter().zip(&reference.actions).enumerate() {
        if r.frame_index != idx {
            return Some(Mismatch::FrameIndex {
                position,
                log: r.frame_index,
                reference: idx,
            });
        }
        if r.decision.action != action {
            return Some(Mismatch::Frame {
                frame_index: idx,
                log: r.decision.action,
                reference: action,
            });
        }
    }
    let replayed = replay_log(log);
    if replayed != reference.final_indices {
        return Some(Mismatch::FinalSet {
            log: replayed,
            reference: reference.final_indices.clone(),
        });
    }
    None
}
