//! Query-conditioned relevance gate.
//!
//! A frame's score is the softmax probability, over all queries, that the
//! positive query is the best description of it. Cosines are multiplied by
//! a scale before the softmax and the result is reported on a 0-100 scale so
//! it can be compared with thresholds such as 40 or 70.

use serde::{Deserialize, Serialize};

use crate::embedding::cosine_similarity;
use crate::error::{Error, Result};
use crate::frame::QuerySet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateScore {
    /// 100 × softmax component of the positive query.
    pub value: f64,
    pub positive_cosine: f64,
    /// Cosine against every query, positive first.
    pub per_query_cosines: Vec<f64>,
}

impl GateScore {
    /// Softmax components of all queries (positive first), summing to one.
    pub fn components(&self, scale: f64) -> Vec<f64> {
        softmax(&self.per_query_cosines, scale)
    }
}

fn softmax(cosines: &[f64], scale: f64) -> Vec<f64> {
    let max = cosines
        .iter()
        .map(|c| scale * c)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = cosines.iter().map(|c| (scale * c - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Score from already-computed cosines, positive query first.
pub fn score_from_cosines(cosines: &[f64], scale: f64) -> Result<f64> {
    if cosines.len() < 2 {
        return Err(Error::EmptyNegatives);
    }
    Ok(100.0 * softmax(cosines, scale)[0])
}

pub fn gate_score(frame_embedding: &[f64], queries: &QuerySet, scale: f64) -> Result<GateScore> {
    let per_query_cosines = queries
        .iter()
        .map(|q| cosine_similarity(frame_embedding, q))
        .collect::<Result<Vec<_>>>()?;
    let value = score_from_cosines(&per_query_cosines, scale)?;
    Ok(GateScore {
        value,
        positive_cosine: per_query_cosines[0],
        per_query_cosines,
    })
}

/// Strict threshold test: only scores above `tau` pass.
pub fn passes_gate(score: &GateScore, tau: f64) -> bool {
    score.value > tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingVector;
    use proptest::prelude::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    fn score(value: f64) -> GateScore {
        GateScore {
            value,
            positive_cosine: 0.0,
            per_query_cosines: vec![],
        }
    }

    #[test]
    fn dominant_logit() {
        let q = QuerySet::new(v(&[1.0, 0.0]), vec![v(&[0.0, 1.0])]).unwrap();
        let s = gate_score(&[1.0, 0.0], &q, 100.0).unwrap();
        assert!((s.value - 100.0).abs() < 1e-6);
        assert_eq!(s.positive_cosine, 1.0);
    }

    #[test]
    fn equal_cosines_split_evenly() {
        let q = QuerySet::new(v(&[1.0, 0.0]), vec![v(&[0.0, 1.0])]).unwrap();
        for scale in [0.5, 1.0, 100.0, 1000.0] {
            let s = gate_score(&[1.0, 1.0], &q, scale).unwrap();
            assert_eq!(s.value, 50.0);
        }
    }

    #[test]
    fn three_query_reference_value() {
        // 100 e^30 / (e^30 + e^25 + e^20), evaluated at 50 significant digits.
        let expected = 99.326_235_684_217_44;
        let got = score_from_cosines(&[0.30, 0.25, 0.20], 100.0).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-9);
    }

    #[test]
    fn strict_threshold() {
        assert!(!passes_gate(&score(70.0), 70.0));
        assert!(passes_gate(&score(70.01), 70.0));
        assert!(!passes_gate(&score(39.9), 40.0));
    }

    #[test]
    fn errors() {
        let q = QuerySet::new(v(&[1.0, 0.0]), vec![v(&[0.0, 1.0])]).unwrap();
        assert!(matches!(
            gate_score(&[0.0, 0.0], &q, 100.0),
            Err(Error::DegenerateEmbedding)
        ));
        assert!(matches!(
            gate_score(&[1.0, 0.0, 0.0], &q, 100.0),
            Err(Error::DimMismatch { .. })
        ));
        assert!(matches!(
            score_from_cosines(&[0.5], 100.0),
            Err(Error::EmptyNegatives)
        ));
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let s = score_from_cosines(&[1.0, -1.0], 1e6).unwrap();
        assert_eq!(s, 100.0);
        let s = score_from_cosines(&[-1.0, 1.0], 1e6).unwrap();
        assert_eq!(s, 0.0);
    }

    fn cosines() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, 2..8)
    }

    proptest! {
        #[test]
        fn components_sum_to_one(c in cosines(), scale in 0.1f64..200.0) {
            let total: f64 = softmax(&c, scale).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn raising_positive_cosine_raises_score(c in cosines(), bump in 0.01f64..0.5) {
            // Keep logits moderate so the increase is visible in f64.
            let scale = 5.0;
            let before = score_from_cosines(&c, scale).unwrap();
            let mut raised = c.clone();
            raised[0] += bump;
            let after = score_from_cosines(&raised, scale).unwrap();
            prop_assert!(after > before);
        }

        #[test]
        fn argmax_is_scale_invariant(c in cosines(), scale in 0.1f64..200.0) {
            let best = c
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            let comps = softmax(&c, scale);
            prop_assert!(comps.iter().all(|&p| p <= comps[best]));
        }

        #[test]
        fn extra_negative_never_raises_score(c in cosines(), extra in -1.0f64..1.0, scale in 0.1f64..200.0) {
            let before = score_from_cosines(&c, scale).unwrap();
            let mut more = c.clone();
            more.push(extra);
            let after = score_from_cosines(&more, scale).unwrap();
            prop_assert!(after <= before * (1.0 + 1e-12));
        }
    }
}
