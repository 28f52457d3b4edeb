//! Summary evaluation against human-picked samples.
//!
//! Each automated frame earns a semantic score (1 if it shares a label with
//! any frame the human picked) and a representative score (linear decay in
//! time to the closest label-sharing human pick, reaching zero at the window
//! width). The total is the mean over K automated frames of
//! `weight * semantic + (1 - weight) * representative`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::FrameRecord;

pub type LabelSet = BTreeSet<String>;

/// Ground-truth labels per frame index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap(BTreeMap<u64, LabelSet>);

impl LabelMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame_index: u64, labels: LabelSet) {
        self.0.insert(frame_index, labels);
    }

    pub fn get(&self, frame_index: u64) -> Result<&LabelSet> {
        self.0
            .get(&frame_index)
            .ok_or(Error::UnknownFrame(frame_index))
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &LabelSet)> {
        self.0.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(u64, LabelSet)> for LabelMap {
    fn from_iter<T: IntoIterator<Item = (u64, LabelSet)>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanSampleSet {
    pub evaluator_id: String,
    pub frame_indices: Vec<u64>,
}

/// Frame timestamps, keyed by frame index.
#[derive(Debug, Clone, Default)]
pub struct Timeline(HashMap<u64, f64>);

impl Timeline {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a FrameRecord>) -> Self {
        Self(
            records
                .into_iter()
                .map(|r| (r.frame_index, r.timestamp))
                .collect(),
        )
    }

    pub fn get(&self, frame_index: u64) -> Result<f64> {
        self.0
            .get(&frame_index)
            .copied()
            .ok_or(Error::UnknownFrame(frame_index))
    }

    /// Last timestamp minus first.
    pub fn duration(&self) -> f64 {
        let (lo, hi) = self
            .0
            .values()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
                (lo.min(t), hi.max(t))
            });
        if lo.is_finite() {
            hi - lo
        } else {
            0.0
        }
    }

    /// Default representativeness window: 10% of the stream duration.
    pub fn default_window(&self) -> Result<f64> {
        let w = 0.1 * self.duration();
        if w > 0.0 {
            Ok(w)
        } else {
            Err(Error::Config(
                "stream has zero duration; pass an explicit window".into(),
            ))
        }
    }
}

impl FromIterator<(u64, f64)> for Timeline {
    fn from_iter<T: IntoIterator<Item = (u64, f64)>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Everything a score needs besides the two frame lists.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub labels: &'a LabelMap,
    pub timeline: &'a Timeline,
    /// Samples per set (K).
    pub capacity: usize,
    /// Weight of the semantic term.
    pub weight: f64,
    /// Representativeness window in seconds.
    pub window: f64,
}

impl EvalContext<'_> {
    fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::Config("capacity must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(Error::Config(format!(
                "weight {} outside [0, 1]",
                self.weight
            )));
        }
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(Error::Config(format!(
                "window {} must be positive",
                self.window
            )));
        }
        Ok(())
    }
}

fn human_labels<'a>(human: &HumanSampleSet, labels: &'a LabelMap) -> Result<BTreeSet<&'a str>> {
    let mut union = BTreeSet::new();
    for &h in &human.frame_indices {
        union.extend(labels.get(h)?.iter().map(String::as_str));
    }
    Ok(union)
}

pub fn semantic_score(auto_frame: u64, human: &HumanSampleSet, labels: &LabelMap) -> Result<u8> {
    let own = labels.get(auto_frame)?;
    let union = human_labels(human, labels)?;
    Ok(u8::from(own.iter().any(|l| union.contains(l.as_str()))))
}

/// Best (score, human frame) over label-sharing human picks. Ties keep the
/// earliest pick in the human's list.
fn best_match(
    auto_frame: u64,
    human: &HumanSampleSet,
    labels: &LabelMap,
    timeline: &Timeline,
    window: f64,
) -> Result<Option<(f64, u64)>> {
    let own = labels.get(auto_frame)?;
    let t_auto = timeline.get(auto_frame)?;
    let mut best: Option<(f64, u64)> = None;
    for &h in &human.frame_indices {
        let theirs = labels.get(h)?;
        let t_h = timeline.get(h)?;
        if own.is_disjoint(theirs) {
            continue;
        }
        let score = (1.0 - (t_auto - t_h).abs() / window).max(0.0);
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, h));
        }
    }
    Ok(best)
}

pub fn representative_score(
    auto_frame: u64,
    human: &HumanSampleSet,
    labels: &LabelMap,
    timeline: &Timeline,
    window: f64,
) -> Result<f64> {
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::Config(format!("window {window} must be positive")));
    }
    Ok(best_match(auto_frame, human, labels, timeline, window)?.map_or(0.0, |(s, _)| s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_human_frame: Option<u64>,
    pub semantic_score: u8,
    pub representative_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrumReport {
    pub evaluator_id: String,
    pub frames: Vec<FrameScore>,
    /// Missing automated frames, each scored as zero.
    pub padded: usize,
    pub total: f64,
}

pub fn srum_score(
    auto: &[u64],
    human: &HumanSampleSet,
    ctx: &EvalContext<'_>,
) -> Result<SrumReport> {
    ctx.validate()?;
    if auto.len() > ctx.capacity {
        return Err(Error::Config(format!(
            "{} automated frames exceed capacity {}",
            auto.len(),
            ctx.capacity
        )));
    }
    if human.frame_indices.len() != ctx.capacity {
        return Err(Error::Config(format!(
            "evaluator {:?} picked {} frames, expected {}",
            human.evaluator_id,
            human.frame_indices.len(),
            ctx.capacity
        )));
    }
    let union = human_labels(human, ctx.labels)?;
    let mut frames = Vec::with_capacity(auto.len());
    let mut sum = 0.0;
    for &a in auto {
        let semantic = u8::from(
            ctx.labels
                .get(a)?
                .iter()
                .any(|l| union.contains(l.as_str())),
        );
        let matched = best_match(a, human, ctx.labels, ctx.timeline, ctx.window)?;
        let representative = matched.map_or(0.0, |(s, _)| s);
        sum += ctx.weight * f64::from(semantic) + (1.0 - ctx.weight) * representative;
        frames.push(FrameScore {
            frame_index: a,
            matched_human_frame: matched.map(|(_, h)| h),
            semantic_score: semantic,
            representative_score: representative,
        });
    }
    let padded = ctx.capacity - auto.len();
    if padded > 0 {
        log::info!(
            "scoring {} automated frames; padding {padded} with zero",
            auto.len()
        );
    }
    Ok(SrumReport {
        evaluator_id: human.evaluator_id.clone(),
        frames,
        padded,
        total: sum / ctx.capacity as f64,
    })
}

/// Leave-one-out agreement among evaluators: each evaluator's picks are
/// scored against every other evaluator, averaged, then averaged over
/// evaluators.
pub fn human_benchmark(all: &[HumanSampleSet], ctx: &EvalContext<'_>) -> Result<f64> {
    if all.len() < 2 {
        return Err(Error::TooFewEvaluators(all.len()));
    }
    let mut outer = 0.0;
    for (i, me) in all.iter().enumerate() {
        let mut inner = 0.0;
        for (j, other) in all.iter().enumerate() {
            if i != j {
                inner += srum_score(&me.frame_indices, other, ctx)?.total;
            }
        }
        outer += inner / (all.len() - 1) as f64;
    }
    Ok(outer / all.len() as f64)
}
