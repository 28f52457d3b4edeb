use std::collections::BTreeSet;

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

/// One frame of the input stream, reduced to its image embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u64,
    /// Seconds since the start of the stream.
    pub timestamp: f64,
    pub embedding: EmbeddingVector,
    /// Ground-truth annotations. Only the evaluator looks at these.
    pub labels: Option<BTreeSet<String>>,
}

impl FrameRecord {
    pub fn new(frame_index: u64, timestamp: f64, embedding: EmbeddingVector) -> Self {
        Self {
            frame_index,
            timestamp,
            embedding,
            labels: None,
        }
    }
}

/// One positive query and at least one negative query, all embedded in the
/// same space as the frames.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    positive: EmbeddingVector,
    negatives: Vec<EmbeddingVector>,
}

impl QuerySet {
    pub fn new(positive: EmbeddingVector, negatives: Vec<EmbeddingVector>) -> Result<Self> {
        if negatives.is_empty() {
            return Err(Error::EmptyNegatives);
        }
        for n in &negatives {
            n.check_dim(positive.dim())?;
        }
        if positive.norm() == 0.0 || negatives.iter().any(|n| n.norm() == 0.0) {
            return Err(Error::DegenerateEmbedding);
        }
        Ok(Self {
            positive,
            negatives,
        })
    }

    pub fn positive(&self) -> &EmbeddingVector {
        &self.positive
    }

    pub fn negatives(&self) -> &[EmbeddingVector] {
        &self.negatives
    }

    pub fn dim(&self) -> usize {
        self.positive.dim()
    }

    /// Number of queries, positive included.
    pub fn len(&self) -> usize {
        1 + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All queries, positive first.
    pub fn iter(&self) -> impl Iterator<Item = &EmbeddingVector> {
        std::iter::once(&self.positive).chain(self.negatives.iter())
    }
}
