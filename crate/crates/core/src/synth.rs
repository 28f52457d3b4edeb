//! Seeded synthetic streams with planted semantic clusters and murk.
//!
//! Frames come from clusters. "Target" clusters are what the positive query
//! asks for; "distractor" clusters are what the negative query describes.
//! The stream walks through clusters in segments of random length, so each
//! cluster occupies one or more contiguous stretches of time.
//!
//! Queries are built the way image-text embeddings tend to look: a large
//! shared component, a small component pointing at the mean target (or
//! distractor) center, and a small query-private component. Cosine gaps
//! between the two queries are therefore small and the scaled softmax lands
//! in the 0-100 range where thresholds like 40 or 70 matter.
//!
//! Murk blends every clean embedding toward a common unit vector:
//! `murky = (1 - m) * clean + m * murk`. The murk vector leans toward the
//! positive query and away from the negative one by `murk_query_bias`,
//! modelling the way murky water makes a relevance classifier over-eager on
//! empty frames.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::frame::{FrameRecord, QuerySet};
use crate::srum::{HumanSampleSet, LabelMap, LabelSet};

const CENTER_RETRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub dim: usize,
    pub n_frames: usize,
    pub n_target_clusters: usize,
    pub n_distractor_clusters: usize,
    /// Upper bound on the pairwise cosine between cluster centers.
    pub max_center_cosine: f64,
    /// Segment length bounds, in frames.
    pub dwell_min: usize,
    pub dwell_max: usize,
    /// Norm scale of the per-frame gaussian noise added to the center
    /// (per-component deviation is `noise_sigma / sqrt(dim)`).
    pub noise_sigma: f64,
    pub fps: f64,
    pub murk_level: f64,
    pub murk_query_bias: f64,
    pub query_common: f64,
    pub query_signal: f64,
    pub query_private: f64,
    pub n_humans: usize,
    /// Standard deviation of a synthetic evaluator's pick around the middle
    /// of a segment, in seconds.
    pub human_jitter_seconds: f64,
    /// Picks per synthetic evaluator.
    pub capacity: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 64,
            n_frames: 600,
            n_target_clusters: 6,
            n_distractor_clusters: 3,
            max_center_cosine: 0.7,
            dwell_min: 20,
            dwell_max: 60,
            noise_sigma: 0.5,
            fps: 5.0,
            murk_level: 0.0,
            murk_query_bias: 0.15,
            query_common: 1.0,
            query_signal: 0.05,
            query_private: 0.05,
            n_humans: 5,
            human_jitter_seconds: 2.0,
            capacity: 6,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Synth(m));
        if self.dim < 2 || self.dim > u16::MAX as usize {
            return bad(format!("dim {} outside [2, 65535]", self.dim));
        }
        if self.n_frames == 0 {
            return bad("n_frames must be positive".into());
        }
        if self.n_target_clusters == 0 {
            return bad("need at least one target cluster".into());
        }
        if !(-1.0..=1.0).contains(&self.max_center_cosine) {
            return bad(format!(
                "max_center_cosine {} outside [-1, 1]",
                self.max_center_cosine
            ));
        }
        if self.dwell_min == 0 || self.dwell_max < self.dwell_min {
            return bad(format!(
                "bad dwell range [{}, {}]",
                self.dwell_min, self.dwell_max
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!(
                "noise_sigma {} must be non-negative",
                self.noise_sigma
            ));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps {} must be positive", self.fps));
        }
        if !(0.0..1.0).contains(&self.murk_level) {
            return Err(Error::MurkLevel(self.murk_level));
        }
        if !(self.human_jitter_seconds.is_finite() && self.human_jitter_seconds >= 0.0) {
            return bad("human_jitter_seconds must be non-negative".into());
        }
        if self.capacity == 0 {
            return bad("capacity must be positive".into());
        }
        Ok(())
    }

    pub fn n_clusters(&self) -> usize {
        self.n_target_clusters + self.n_distractor_clusters
    }

    pub fn is_target(&self, cluster: usize) -> bool {
        cluster < self.n_target_clusters
    }

    pub fn cluster_name(&self, cluster: usize) -> String {
        if self.is_target(cluster) {
            format!("species-{cluster}")
        } else {
            format!("background-{}", cluster - self.n_target_clusters)
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Synth(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Synth(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }
}

/// A contiguous run of frames drawn from one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub cluster: usize,
    /// First frame index.
    pub start: u64,
    /// One past the last frame index.
    pub end: u64,
}

#[derive(Debug, Clone)]
pub struct SynthStream {
    pub spec: SynthSpec,
    /// Frames as observed (murk applied).
    pub murky: Vec<FrameRecord>,
    /// The same frames without murk.
    pub clean: Vec<FrameRecord>,
    pub labels: LabelMap,
    pub queries: QuerySet,
    pub murk_vector: EmbeddingVector,
    pub centers: Vec<EmbeddingVector>,
    pub segments: Vec<Segment>,
    pub humans: Vec<HumanSampleSet>,
}

impl SynthStream {
    pub fn cluster_of(&self, frame_index: u64) -> usize {
        self.segments
            .iter()
            .find(|s| (s.start..s.end).contains(&frame_index))
            .map(|s| s.cluster)
            .expect("frame index inside stream")
    }
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if v.iter().any(|&x| x != 0.0) {
            return unit(v);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(acc: &mut [f64], k: f64, x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += k * b;
    }
}

/// `(1 - m) * embedding + m * murk_vector`.
pub fn apply_murk(
    embedding: &[f64],
    murk_vector: &[f64],
    murk_level: f64,
) -> Result<EmbeddingVector> {
    if !(0.0..1.0).contains(&murk_level) {
        return Err(Error::MurkLevel(murk_level));
    }
    if embedding.len() != murk_vector.len() {
        return Err(Error::DimMismatch {
            expected: murk_vector.len(),
            found: embedding.len(),
        });
    }
    EmbeddingVector::new(
        embedding
            .iter()
            .zip(murk_vector)
            .map(|(e, m)| (1.0 - murk_level) * e + murk_level * m)
            .collect(),
    )
}

fn centers(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(spec.n_clusters());
    for k in 0..spec.n_clusters() {
        let mut placed = false;
        for _ in 0..CENTER_RETRIES {
            let c = gaussian_unit(rng, spec.dim);
            if out.iter().all(|o| dot(o, &c) <= spec.max_center_cosine) {
                out.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Synth(format!(
                "could not place center {k} with pairwise cosine <= {} in dim {}",
                spec.max_center_cosine, spec.dim
            )));
        }
    }
    Ok(out)
}

fn schedule(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Segment> {
    let n = spec.n_frames as u64;
    let mut order: Vec<usize> = (0..spec.n_clusters()).collect();
    // Fisher-Yates so every cluster shows up early at least once.
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut segments = Vec::new();
    let mut start = 0u64;
    let mut next = order.into_iter();
    let mut prev: Option<usize> = None;
    while start < n {
        let cluster = next.next().unwrap_or_else(|| {
            if spec.n_clusters() == 1 {
                return 0;
            }
            loop {
                let c = rng.random_range(0..spec.n_clusters());
                if Some(c) != prev {
                    return c;
                }
            }
        });
        let dwell = rng.random_range(spec.dwell_min..=spec.dwell_max) as u64;
        let end = (start + dwell).min(n);
        segments.push(Segment {
            cluster,
            start,
            end,
        });
        prev = Some(cluster);
        start = end;
    }
    segments
}

fn humans(spec: &SynthSpec, segments: &[Segment], rng: &mut ChaCha8Rng) -> Vec<HumanSampleSet> {
    let targets: Vec<usize> = (0..spec.n_target_clusters)
        .filter(|&c| segments.iter().any(|s| s.cluster == c))
        .collect();
    if targets.is_empty() {
        return Vec::new();
    }
    let jitter = Normal::new(0.0, spec.human_jitter_seconds * spec.fps).expect("finite jitter");
    (0..spec.n_humans)
        .map(|h| {
            let mut picks: Vec<u64> = (0..spec.capacity)
                .map(|j| {
                    let cluster = targets[j % targets.len()];
                    let own: Vec<&Segment> =
                        segments.iter().filter(|s| s.cluster == cluster).collect();
                    let seg = own[rng.random_range(0..own.len())];
                    let mid = (seg.start + seg.end - 1) as f64 / 2.0;
                    let at = (mid + jitter.sample(rng)).round();
                    at.clamp(seg.start as f64, (seg.end - 1) as f64) as u64
                })
                .collect();
            picks.sort_unstable();
            HumanSampleSet {
                evaluator_id: format!("synthetic-{h}"),
                frame_indices: picks,
            }
        })
        .collect()
}

pub fn generate_stream(spec: &SynthSpec) -> Result<SynthStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;
    let centers = centers(spec, &mut rng)?;

    let shared = gaussian_unit(&mut rng, dim);
    let private_pos = gaussian_unit(&mut rng, dim);
    let private_neg = gaussian_unit(&mut rng, dim);
    let mean_dir = |range: std::ops::Range<usize>| -> Option<Vec<f64>> {
        if range.is_empty() {
            return None;
        }
        let mut acc = vec![0.0; dim];
        for c in &centers[range] {
            axpy(&mut acc, 1.0, c);
        }
        Some(unit(acc))
    };
    let build_query = |semantic: Option<Vec<f64>>, private: &[f64]| {
        let mut q = vec![0.0; dim];
        axpy(&mut q, spec.query_common, &shared);
        if let Some(s) = semantic {
            axpy(&mut q, spec.query_signal, &s);
        }
        axpy(&mut q, spec.query_private, private);
        EmbeddingVector::new(unit(q)).map(|v| v.rounded_to_f32())
    };
    let positive = build_query(mean_dir(0..spec.n_target_clusters), &private_pos)?;
    let negative = build_query(
        mean_dir(spec.n_target_clusters..spec.n_clusters()),
        &private_neg,
    )?;
    let queries = QuerySet::new(positive, vec![negative])?;

    // Random direction with its query-difference component replaced by a
    // fixed lean, so the gate bias is the same for every seed.
    let lean = unit(
        queries
            .positive()
            .iter()
            .zip(queries.negatives()[0].iter())
            .map(|(p, n)| p - n)
            .collect(),
    );
    let mut murk = gaussian_unit(&mut rng, dim);
    let along = dot(&murk, &lean);
    axpy(&mut murk, -along, &lean);
    murk = unit(murk);
    axpy(&mut murk, spec.murk_query_bias, &lean);
    let murk_vector = EmbeddingVector::new(unit(murk))?.rounded_to_f32();

    let segments = schedule(spec, &mut rng);
    let noise = Normal::new(0.0, spec.noise_sigma / (dim as f64).sqrt()).expect("finite sigma");
    let mut murky = Vec::with_capacity(spec.n_frames);
    let mut clean = Vec::with_capacity(spec.n_frames);
    let mut labels = LabelMap::new();
    for seg in &segments {
        let name: LabelSet = [spec.cluster_name(seg.cluster)].into_iter().collect();
        for idx in seg.start..seg.end {
            let mut v = centers[seg.cluster].clone();
            for x in v.iter_mut() {
                *x += noise.sample(&mut rng);
            }
            let clean_vec = EmbeddingVector::new(unit(v))?.rounded_to_f32();
            let murky_vec = apply_murk(&clean_vec, &murk_vector, spec.murk_level)?.rounded_to_f32();
            let t = idx as f64 / spec.fps;
            let mut c = FrameRecord::new(idx, t, clean_vec);
            c.labels = Some(name.clone());
            let mut m = FrameRecord::new(idx, t, murky_vec);
            m.labels = Some(name.clone());
            clean.push(c);
            murky.push(m);
            labels.insert(idx, name.clone());
        }
    }
    let humans = humans(spec, &segments, &mut rng);

    Ok(SynthStream {
        spec: spec.clone(),
        murky,
        clean,
        labels,
        queries,
        murk_vector,
        centers: centers
            .into_iter()
            .map(EmbeddingVector::new)
            .collect::<Result<_>>()?,
        segments,
        humans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine_similarity;
    use crate::enhance::mock_demurk;

    fn spec(seed: u64, murk: f64) -> SynthSpec {
        SynthSpec {
            seed,
            murk_level: murk,
            n_frames: 600,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn zero_murk_streams_coincide() {
        let s = generate_stream(&spec(3, 0.0)).unwrap();
        assert_eq!(s.murky, s.clean);
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate_stream(&spec(11, 0.5)).unwrap();
        let b = generate_stream(&spec(11, 0.5)).unwrap();
        assert_eq!(a.murky, b.murky);
        assert_eq!(a.humans, b.humans);
        let c = generate_stream(&spec(12, 0.5)).unwrap();
        assert_ne!(a.murky, c.murky);
    }

    #[test]
    fn centers_respect_separation() {
        let s = generate_stream(&spec(5, 0.0)).unwrap();
        for i in 0..s.centers.len() {
            for j in (i + 1)..s.centers.len() {
                let c = cosine_similarity(&s.centers[i], &s.centers[j]).unwrap();
                assert!(c <= 0.7);
            }
        }
    }

    #[test]
    fn infeasible_separation_errors() {
        let bad = SynthSpec {
            dim: 2,
            max_center_cosine: -0.9,
            ..spec(0, 0.0)
        };
        assert!(matches!(generate_stream(&bad), Err(Error::Synth(_))));
    }

    #[test]
    fn every_cluster_appears_and_labels_cover_stream() {
        let s = generate_stream(&spec(8, 0.25)).unwrap();
        for c in 0..s.spec.n_clusters() {
            assert!(s.segments.iter().any(|seg| seg.cluster == c));
        }
        assert_eq!(s.labels.len(), 600);
        assert_eq!(s.segments.last().unwrap().end, 600);
        for f in &s.murky {
            let name = s.spec.cluster_name(s.cluster_of(f.frame_index));
            assert!(s.labels.get(f.frame_index).unwrap().contains(&name));
        }
    }

    #[test]
    fn humans_pick_one_frame_per_target_cluster() {
        let s = generate_stream(&spec(2, 0.0)).unwrap();
        assert_eq!(s.humans.len(), 5);
        for h in &s.humans {
            assert_eq!(h.frame_indices.len(), 6);
            let mut clusters: Vec<usize> =
                h.frame_indices.iter().map(|&i| s.cluster_of(i)).collect();
            clusters.sort_unstable();
            assert_eq!(clusters, vec![0, 1, 2, 3, 4, 5]);
        }
    }

    #[test]
    fn murk_round_trip() {
        let e = [0.3, -0.1, 0.8];
        let m = [0.0, 1.0, 0.0];
        assert_eq!(apply_murk(&e, &m, 0.0).unwrap().as_slice(), &e);
        let murky = apply_murk(&e, &m, 0.4).unwrap();
        let back = mock_demurk(&murky, &m, 0.4).unwrap();
        for (a, b) in back.iter().zip(&e) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(matches!(apply_murk(&e, &m, 1.0), Err(Error::MurkLevel(_))));
    }

    #[test]
    fn spec_file_round_trip() {
        let s = spec(42, 0.25);
        assert_eq!(SynthSpec::from_toml_str(&s.to_toml_string()).unwrap(), s);
        assert!(SynthSpec::from_toml_str("murk_level = 1.0").is_err());
        assert!(SynthSpec::from_toml_str("bogus = 1").is_err());
    }
}
