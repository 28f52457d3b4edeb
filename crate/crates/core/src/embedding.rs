//! Embedding vectors, the similarity/distance primitives, and the feature
//! transform applied to frame embeddings before they reach the sampler.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed-dimension vector of finite reals.
///
/// Values are held as `f64`. The on-disk stream format stores `f32`, so a
/// vector read from disk round-trips exactly.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyEmbedding);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() == expected {
            Ok(())
        } else {
            Err(Error::DimMismatch {
                expected,
                found: self.dim(),
            })
        }
    }

    /// Rounds every component to the nearest `f32`, i.e. what the vector
    /// becomes after a trip through the stream file format.
    pub fn rounded_to_f32(&self) -> Self {
        Self(self.0.iter().map(|&v| f64::from(v as f32)).collect())
    }
}

impl Deref for EmbeddingVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

impl fmt::Debug for EmbeddingVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 6;
        write!(f, "EmbeddingVector[{}](", self.dim())?;
        for (i, v) in self.0.iter().take(SHOWN).enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.dim() > SHOWN {
            f.write_str(", ...")?;
        }
        f.write_str(")")
    }
}

fn same_dim(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::DimMismatch {
            expected: a.len(),
            found: b.len(),
        })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    same_dim(a, b)?;
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// How the absolute-valued feature is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Components sum to one.
    #[default]
    L1,
    /// Unit euclidean length.
    L2,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Self::L1),
            "l2" => Ok(Self::L2),
            other => Err(Error::Config(format!(
                "unknown normalization {other:?} (expected l1 or l2)"
            ))),
        }
    }
}

/// Maps an image embedding into the sampler's feature space: elementwise
/// absolute value followed by normalization.
pub fn sampler_transform(v: &[f64], normalization: Normalization) -> Result<EmbeddingVector> {
    let abs: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let scale = match normalization {
        Normalization::L1 => abs.iter().sum::<f64>(),
        Normalization::L2 => dot(&abs, &abs).sqrt(),
    };
    if scale == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    EmbeddingVector::new(abs.into_iter().map(|x| x / scale).collect())
}

/// Distance used by the surprise score, the packing threshold and trimming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
    L1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Euclidean, Metric::Cosine, Metric::L1];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
            Metric::L1 => "l1",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Self::Euclidean),
            "cosine" => Ok(Self::Cosine),
            "l1" => Ok(Self::L1),
            other => Err(Error::Config(format!(
                "unknown metric {other:?} (expected euclidean, cosine or l1)"
            ))),
        }
    }
}

pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    same_dim(a, b)?;
    Ok(match metric {
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        // rounding would otherwise leave a duplicate a hair away from itself
        Metric::Cosine if a == b => {
            cosine_similarity(a, b)?;
            0.0
        }
        Metric::Cosine => 1.0 - cosine_similarity(a, b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(
            EmbeddingVector::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
        assert!(matches!(
            EmbeddingVector::new(vec![f64::INFINITY]),
            Err(Error::NonFinite(0))
        ));
        assert!(matches!(
            EmbeddingVector::new(vec![]),
            Err(Error::EmptyEmbedding)
        ));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // 0.6*0.8 + 0.8*0.6 over unit norms
        let c = cosine_similarity(&[0.6, 0.8], &[0.8, 0.6]).unwrap();
        assert!((c - 0.96).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::DegenerateEmbedding)
        ));
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(Error::DimMismatch {
                expected: 1,
                found: 2
            })
        ));
    }

    #[test]
    fn transform_examples() {
        let t = |x: &[f64]| {
            sampler_transform(x, Normalization::L1)
                .unwrap()
                .into_inner()
        };
        assert_eq!(t(&[3.0, -1.0]), vec![0.75, 0.25]);
        assert_eq!(t(&[0.0, -2.0]), vec![0.0, 1.0]);
        assert_eq!(t(&[1.0, 1.0, -2.0]), vec![0.25, 0.25, 0.5]);
        assert!(matches!(
            sampler_transform(&[0.0, 0.0], Normalization::L1),
            Err(Error::DegenerateEmbedding)
        ));
    }

    #[test]
    fn transform_l2() {
        let t = sampler_transform(&[3.0, -4.0], Normalization::L2).unwrap();
        assert_eq!(t.as_slice(), &[0.6, 0.8]);
    }

    #[test]
    fn distance_examples() {
        let d = distance(&[1.0, 0.0], &[0.0, 1.0], Metric::Euclidean).unwrap();
        assert_eq!(d, 2f64.sqrt());
        let d = distance(&[0.75, 0.25], &[0.25, 0.75], Metric::L1).unwrap();
        assert_eq!(d, 1.0);
        for m in Metric::ALL {
            assert_eq!(distance(&[0.3, -0.2], &[0.3, -0.2], m).unwrap(), 0.0);
        }
        // collinear, same direction: cosine distance vanishes
        assert!(
            distance(&[1.0, 2.0], &[2.0, 4.0], Metric::Cosine)
                .unwrap()
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("cosine".parse::<Metric>().unwrap(), Metric::Cosine);
        assert!("manhattan".parse::<Metric>().is_err());
        assert_eq!("l2".parse::<Normalization>().unwrap(), Normalization::L2);
    }

    #[test]
    fn f32_rounding_is_idempotent() {
        let x = v(&[0.1, 1.0 / 3.0]);
        let once = x.rounded_to_f32();
        assert_ne!(once, x);
        assert_eq!(once.rounded_to_f32(), once);
    }

    fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, dim)
            .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-6))
    }

    proptest! {
        #[test]
        fn transform_is_idempotent(x in nonzero_vec(8)) {
            let once = sampler_transform(&x, Normalization::L1).unwrap();
            let twice = sampler_transform(&once, Normalization::L1).unwrap();
            for (a, b) in once.iter().zip(twice.iter()) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
            prop_assert!(once.iter().all(|&c| (0.0..=1.0).contains(&c)));
        }

        #[test]
        fn transform_ignores_positive_scale(x in nonzero_vec(8), k in 0.01f64..100.0) {
            let a = sampler_transform(&x, Normalization::L1).unwrap();
            let scaled: Vec<f64> = x.iter().map(|v| v * k).collect();
            let b = sampler_transform(&scaled, Normalization::L1).unwrap();
            for (p, q) in a.iter().zip(b.iter()) {
                prop_assert!((p - q).abs() <= 1e-12);
            }
        }

        #[test]
        fn distances_symmetric_and_non_negative(a in nonzero_vec(6), b in nonzero_vec(6)) {
            for m in Metric::ALL {
                let ab = distance(&a, &b, m).unwrap();
                let ba = distance(&b, &a, m).unwrap();
                prop_assert_eq!(ab, ba);
                prop_assert!(ab >= 0.0);
                if m != Metric::Cosine && a != b {
                    prop_assert!(ab > 0.0);
                }
            }
        }
    }
}
