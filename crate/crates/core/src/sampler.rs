//! Fixed-capacity online sampler.
//!
//! A candidate is admitted when its surprise (distance to the nearest
//! member of the sample set) exceeds the packing threshold (mean
//! nearest-neighbour distance inside the set). When admission pushes the
//! set over capacity, the entry whose removal leaves the best-packed set is
//! trimmed.

use serde::{Deserialize, Serialize};

use crate::embedding::{distance, EmbeddingVector, Metric};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SampleEntry {
    pub frame_index: u64,
    pub timestamp: f64,
    /// Transformed feature the sampler compares.
    pub sampler_feature: EmbeddingVector,
    /// Embedding the feature was derived from (the enhanced one when
    /// `enhanced` is set).
    pub raw_embedding: EmbeddingVector,
    pub enhanced: bool,
}

/// Ordered (insertion order) collection of at most `capacity` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    capacity: usize,
    entries: Vec<SampleEntry>,
}

impl SampleSet {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("capacity must be at least 1".into()));
        }
        Ok(Self {
            capacity,
            entries: Vec::with_capacity(capacity + 1),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[SampleEntry] {
        &self.entries
    }

    pub fn frame_indices(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.frame_index).collect()
    }

    /// Appends without any admission test. Entries must arrive in
    /// increasing frame order.
    pub fn push(&mut self, entry: SampleEntry) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if entry.frame_index <= last.frame_index {
                return Err(Error::OutOfOrder {
                    previous: last.frame_index,
                    found: entry.frame_index,
                });
            }
            entry
                .sampler_feature
                .check_dim(last.sampler_feature.dim())?;
        }
        self.entries.push(entry);
        Ok(())
    }

    fn features(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.iter().map(|e| e.sampler_feature.as_slice())
    }
}

/// Current entries in insertion order.
pub fn summary(state: &SampleSet) -> &[SampleEntry] {
    state.entries()
}

/// Distance from `candidate` to the closest entry of the set.
pub fn surprise(candidate: &[f64], set: &SampleSet, metric: Metric) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut best = f64::INFINITY;
    for f in set.features() {
        best = best.min(distance(candidate, f, metric)?);
    }
    Ok(best)
}

fn pairwise(set: &SampleSet, metric: Metric) -> Result<Vec<Vec<f64>>> {
    let n = set.len();
    let feats: Vec<&[f64]> = set.features().collect();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let x = distance(feats[i], feats[j], metric)?;
            d[i][j] = x;
            d[j][i] = x;
        }
    }
    Ok(d)
}

/// Mean over entries of each entry's nearest-neighbour distance.
pub fn pack_threshold(set: &SampleSet, metric: Metric) -> Result<f64> {
    let n = set.len();
    if n < 2 {
        return Err(Error::GammaUndefined(n));
    }
    let d = pairwise(set, metric)?;
    let mut total = 0.0;
    for (i, row) in d.iter().enumerate() {
        let nearest = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .fold(f64::INFINITY, |m, (_, &x)| m.min(x));
        total += nearest;
    }
    Ok(total / n as f64)
}

/// Removes the one entry whose removal maximizes the packing threshold of
/// what remains; among equal candidates the oldest goes. A set left with a
/// single entry counts as having threshold 0.
pub fn trim_sample_set(set: &mut SampleSet, metric: Metric) -> Result<u64> {
    let n = set.len();
    if n <= set.capacity {
        return Err(Error::NothingToTrim {
            len: n,
            capacity: set.capacity,
        });
    }
    let victim = if n == 2 {
        0
    } else {
        let d = pairwise(set, metric)?;
        // For every entry: nearest neighbour (index, distance) and the
        // runner-up distance, so each removal is scored in O(n).
        let nn: Vec<(usize, f64, f64)> = (0..n)
            .map(|i| {
                let (mut first, mut first_d, mut second_d) =
                    (usize::MAX, f64::INFINITY, f64::INFINITY);
                for (j, &x) in d[i].iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    if x < first_d {
                        second_d = first_d;
                        first = j;
                        first_d = x;
                    } else if x < second_d {
                        second_d = x;
                    }
                }
                (first, first_d, second_d)
            })
            .collect();
        let mut best = (0, f64::NEG_INFINITY);
        for r in 0..n {
            let mut total = 0.0;
            for (i, &(first, first_d, second_d)) in nn.iter().enumerate() {
                if i != r {
                    total += if first == r { second_d } else { first_d };
                }
            }
            let gamma = total / (n - 1) as f64;
            if gamma > best.1 {
                best = (r, gamma);
            }
        }
        best.0
    };
    Ok(set.entries.remove(victim).frame_index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    SeedFill,
    Accepted,
    RejectedGate,
    RejectedSurprise,
    RejectedPostEnhancement,
    EnhancementFailed,
}

impl Action {
    /// Whether the frame reached the sampler's admission logic.
    pub fn reached_sampler(self) -> bool {
        matches!(
            self,
            Action::SeedFill | Action::Accepted | Action::RejectedSurprise
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerDecision {
    pub action: Action,
    /// Present iff the surprise test ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trimmed_frame_indices: Vec<u64>,
}

impl SamplerDecision {
    pub fn without_test(action: Action) -> Self {
        Self {
            action,
            alpha: None,
            gamma: None,
            trimmed_frame_indices: Vec::new(),
        }
    }
}

/// A sample set together with the per-run bookkeeping the admission rule
/// needs. Single writer; clone or move between threads as needed.
#[derive(Debug, Clone)]
pub struct OnlineSampler {
    set: SampleSet,
    metric: Metric,
    offered: u64,
    last_offered: Option<u64>,
    gamma: Option<f64>,
}

impl OnlineSampler {
    pub fn new(capacity: usize, metric: Metric) -> Result<Self> {
        Ok(Self {
            set: SampleSet::new(capacity)?,
            metric,
            offered: 0,
            last_offered: None,
            gamma: None,
        })
    }

    pub fn sample_set(&self) -> &SampleSet {
        &self.set
    }

    pub fn into_sample_set(self) -> SampleSet {
        self.set
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// Frames offered to `observe` so far.
    pub fn offered(&self) -> u64 {
        self.offered
    }

    fn current_gamma(&mut self) -> Result<f64> {
        if let Some(g) = self.gamma {
            return Ok(g);
        }
        let g = if self.set.len() < 2 {
            0.0
        } else {
            pack_threshold(&self.set, self.metric)?
        };
        self.gamma = Some(g);
        Ok(g)
    }

    /// Offers one candidate. The first `capacity` candidates are admitted
    /// unconditionally; later ones must satisfy surprise > threshold.
    pub fn observe(&mut self, candidate: SampleEntry) -> Result<SamplerDecision> {
        if let Some(prev) = self.last_offered {
            if candidate.frame_index <= prev {
                return Err(Error::OutOfOrder {
                    previous: prev,
                    found: candidate.frame_index,
                });
            }
        }
        if let Some(first) = self.set.entries.first() {
            candidate
                .sampler_feature
                .check_dim(first.sampler_feature.dim())?;
        }
        self.last_offered = Some(candidate.frame_index);
        self.offered += 1;

        if self.offered <= self.set.capacity as u64 {
            self.set.push(candidate)?;
            self.gamma = None;
            return Ok(SamplerDecision::without_test(Action::SeedFill));
        }

        let alpha = surprise(&candidate.sampler_feature, &self.set, self.metric)?;
        let gamma = self.current_gamma()?;
        if alpha > gamma {
            self.set.push(candidate)?;
            let mut trimmed = Vec::new();
            while self.set.len() > self.set.capacity {
                trimmed.push(trim_sample_set(&mut self.set, self.metric)?);
            }
            self.gamma = None;
            Ok(SamplerDecision {
                action: Action::Accepted,
                alpha: Some(alpha),
                gamma: Some(gamma),
                trimmed_frame_indices: trimmed,
            })
        } else {
            Ok(SamplerDecision {
                action: Action::RejectedSurprise,
                alpha: Some(alpha),
                gamma: Some(gamma),
                trimmed_frame_indices: Vec::new(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn entry(frame_index: u64, feature: &[f64]) -> SampleEntry {
        let f = EmbeddingVector::new(feature.to_vec()).unwrap();
        SampleEntry {
            frame_index,
            timestamp: frame_index as f64,
            sampler_feature: f.clone(),
            raw_embedding: f,
            enhanced: false,
        }
    }

    fn set_of(capacity: usize, feats: &[&[f64]]) -> SampleSet {
        let mut s = SampleSet::new(capacity).unwrap();
        for (i, f) in feats.iter().enumerate() {
            s.push(entry(i as u64, f)).unwrap();
        }
        s
    }

    // Exhaustive γ of the set with entry `skip` removed.
    fn gamma_without(feats: &[Vec<f64>], skip: usize, metric: Metric) -> f64 {
        let idx: Vec<usize> = (0..feats.len()).filter(|&i| i != skip).collect();
        if idx.len() < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for &i in &idx {
            let mut m = f64::INFINITY;
            for &j in &idx {
                if i != j {
                    m = m.min(distance(&feats[i], &feats[j], metric).unwrap());
                }
            }
            total += m;
        }
        total / idx.len() as f64
    }

    fn brute_force_victim(feats: &[Vec<f64>], metric: Metric) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for r in 0..feats.len() {
            let g = gamma_without(feats, r, metric);
            if g > best.1 {
                best = (r, g);
            }
        }
        best.0
    }

    #[test]
    fn surprise_examples() {
        let s = set_of(2, &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(surprise(&[1.0, 0.0], &s, Metric::Euclidean).unwrap(), 0.0);

        let cand = [0.8f64, 0.2];
        let expected = [[1.0f64, 0.0], [0.0, 1.0]]
            .iter()
            .map(|f| ((cand[0] - f[0]).powi(2) + (cand[1] - f[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(surprise(&cand, &s, Metric::Euclidean).unwrap(), expected);

        let single = set_of(1, &[&[0.0, 0.0, 0.0]]);
        let d = surprise(&[0.3, 0.0, 0.0], &single, Metric::Euclidean).unwrap();
        assert!((d - 0.3).abs() < 1e-15);

        let empty = SampleSet::new(3).unwrap();
        assert!(matches!(
            surprise(&[1.0], &empty, Metric::L1),
            Err(Error::EmptySampleSet)
        ));
    }

    #[test]
    fn pack_threshold_examples() {
        let two = set_of(2, &[&[0.0], &[0.5]]);
        assert_eq!(pack_threshold(&two, Metric::Euclidean).unwrap(), 0.5);

        // gaps 0.2 / 0.2 / 0.4: every point's nearest neighbour is 0.2 away
        let three = set_of(3, &[&[0.0], &[0.2], &[0.4]]);
        let g = pack_threshold(&three, Metric::L1).unwrap();
        assert!((g - 0.2).abs() < 1e-15);

        let p: &[f64] = &[0.3, 0.7];
        let same = set_of(4, &[p; 4]);
        assert_eq!(pack_threshold(&same, Metric::Euclidean).unwrap(), 0.0);

        let one = set_of(1, &[&[1.0]]);
        assert!(matches!(
            pack_threshold(&one, Metric::Euclidean),
            Err(Error::GammaUndefined(1))
        ));
    }

    #[test]
    fn trim_removes_older_duplicate() {
        // capacity 3, four entries, entries 1 and 3 identical
        let mut s = set_of(3, &[&[0.0, 0.0], &[5.0, 5.0], &[10.0, 0.0], &[5.0, 5.0]]);
        assert_eq!(trim_sample_set(&mut s, Metric::Euclidean).unwrap(), 1);
        assert_eq!(s.frame_indices(), vec![0, 2, 3]);
        assert!(matches!(
            trim_sample_set(&mut s, Metric::Euclidean),
            Err(Error::NothingToTrim {
                len: 3,
                capacity: 3
            })
        ));
    }

    #[test]
    fn trim_loop_reaches_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let feats: Vec<Vec<f64>> = (0..9)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let refs: Vec<&[f64]> = feats.iter().map(|f| f.as_slice()).collect();
        let mut s = set_of(6, &refs);
        let mut removed = Vec::new();
        while s.len() > s.capacity() {
            removed.push(trim_sample_set(&mut s, Metric::Euclidean).unwrap());
        }
        assert_eq!(removed.len(), 3);
        assert_eq!(s.len(), 6);
    }

    #[test]
    fn trim_down_to_singleton_drops_oldest() {
        let mut s = set_of(1, &[&[0.0], &[1.0]]);
        assert_eq!(trim_sample_set(&mut s, Metric::L1).unwrap(), 0);
        assert_eq!(s.frame_indices(), vec![1]);
    }

    #[test]
    fn trim_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..500 {
            let n = rng.random_range(3..=11);
            let dim = rng.random_range(1..=8);
            let metric = Metric::ALL[case % 3];
            let mut feats: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
                .collect();
            if case % 5 == 0 {
                // planted duplicate to exercise tie-breaking
                let src = rng.random_range(0..n);
                let dst = rng.random_range(0..n);
                feats[dst] = feats[src].clone();
            }
            let refs: Vec<&[f64]> = feats.iter().map(|f| f.as_slice()).collect();
            let mut s = set_of(n - 1, &refs);
            let removed = trim_sample_set(&mut s, metric).unwrap();
            assert_eq!(
                removed as usize,
                brute_force_victim(&feats, metric),
                "case {case}"
            );
        }
    }

    #[test]
    fn seed_fill_then_surprise() {
        let mut sampler = OnlineSampler::new(3, Metric::L1).unwrap();
        let feats: [&[f64]; 3] = [&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]];
        for (i, f) in feats.iter().enumerate() {
            let d = sampler.observe(entry(i as u64, f)).unwrap();
            assert_eq!(d.action, Action::SeedFill);
            assert!(d.alpha.is_none() && d.gamma.is_none());
        }
        let before = sampler.sample_set().clone();
        let d = sampler.observe(entry(3, &[0.5, 0.5])).unwrap();
        assert_eq!(d.action, Action::RejectedSurprise);
        assert_eq!(d.alpha, Some(0.0));
        assert_eq!(sampler.sample_set(), &before);
    }

    #[test]
    fn accepted_candidate_triggers_trim() {
        let mut sampler = OnlineSampler::new(2, Metric::Euclidean).unwrap();
        sampler.observe(entry(0, &[0.0])).unwrap();
        sampler.observe(entry(1, &[0.1])).unwrap();
        // dropping 0.1 leaves the wider pair {0, 5}
        let d = sampler.observe(entry(2, &[5.0])).unwrap();
        assert_eq!(d.action, Action::Accepted);
        assert_eq!(d.trimmed_frame_indices, vec![1]);
        assert_eq!(sampler.sample_set().frame_indices(), vec![0, 2]);
    }

    #[test]
    fn capacity_one_accepts_any_distinct_frame() {
        let mut sampler = OnlineSampler::new(1, Metric::Euclidean).unwrap();
        sampler.observe(entry(0, &[0.0])).unwrap();
        let same = sampler.observe(entry(1, &[0.0])).unwrap();
        assert_eq!(same.action, Action::RejectedSurprise);
        assert_eq!(same.gamma, Some(0.0));
        let d = sampler.observe(entry(2, &[1e-9])).unwrap();
        assert_eq!(d.action, Action::Accepted);
        assert_eq!(sampler.sample_set().frame_indices(), vec![2]);
    }

    #[test]
    fn out_of_order_is_rejected() {
        let mut sampler = OnlineSampler::new(2, Metric::Euclidean).unwrap();
        sampler.observe(entry(5, &[0.0])).unwrap();
        assert!(matches!(
            sampler.observe(entry(5, &[1.0])),
            Err(Error::OutOfOrder {
                previous: 5,
                found: 5
            })
        ));
        assert!(matches!(
            sampler.observe(entry(6, &[1.0, 2.0])),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn summary_preserves_offer_order() {
        let mut sampler = OnlineSampler::new(3, Metric::Euclidean).unwrap();
        assert!(summary(sampler.sample_set()).is_empty());
        for i in [4u64, 7, 9] {
            sampler.observe(entry(i, &[i as f64])).unwrap();
        }
        let got: Vec<u64> = summary(sampler.sample_set())
            .iter()
            .map(|e| e.frame_index)
            .collect();
        assert_eq!(got, vec![4, 7, 9]);
    }

    fn stream() -> impl Strategy<Value = (usize, Vec<Vec<f64>>)> {
        (1usize..7).prop_flat_map(|k| {
            (
                Just(k),
                prop::collection::vec(prop::collection::vec(0.01f64..1.0, 3), 1..60),
            )
        })
    }

    proptest! {
        #[test]
        fn capacity_and_packing_invariants((k, feats) in stream(), metric_ix in 0usize..3) {
            let metric = Metric::ALL[metric_ix];
            let mut sampler = OnlineSampler::new(k, metric).unwrap();
            let mut offered = Vec::new();
            for (i, f) in feats.iter().enumerate() {
                let full_before = sampler.sample_set().len() == k;
                let gamma_before = if k >= 2 && full_before {
                    Some(pack_threshold(sampler.sample_set(), metric).unwrap())
                } else {
                    None
                };
                // duplicate of a current member must be rejected
                if sampler.offered() >= k as u64 && i % 7 == 3 {
                    let dup = sampler.sample_set().entries()[0].sampler_feature.to_vec();
                    let idx = 3 * i as u64 + 1;
                    let d = sampler.observe(entry(idx, &dup)).unwrap();
                    prop_assert_eq!(d.action, Action::RejectedSurprise);
                    offered.push(idx);
                }
                let idx = 3 * i as u64 + 2;
                let d = sampler.observe(entry(idx, f)).unwrap();
                offered.push(idx);
                prop_assert!(sampler.sample_set().len() <= k);
                if let (Action::Accepted, Some(g0)) = (d.action, gamma_before) {
                    let g1 = pack_threshold(sampler.sample_set(), metric).unwrap();
                    prop_assert!(g1 >= g0 - 1e-12, "γ fell from {} to {}", g0, g1);
                }
            }
            for e in sampler.sample_set().entries() {
                prop_assert!(offered.contains(&e.frame_index));
            }
        }
    }
}
