//! Enhancement back-ends for the enhanced pipeline.
//!
//! Enhancement happens in embedding space: an enhancer receives a frame and
//! returns the embedding of its enhanced version.

use std::collections::HashMap;
use std::iter::Peekable;

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::frame::FrameRecord;

pub use crate::plugin::SubprocessEnhancer;

pub trait Enhancer {
    fn enhance(&mut self, frame: &FrameRecord) -> Result<EmbeddingVector>;

    fn name(&self) -> &str;
}

impl<E: Enhancer + ?Sized> Enhancer for Box<E> {
    fn enhance(&mut self, frame: &FrameRecord) -> Result<EmbeddingVector> {
        (**self).enhance(frame)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Returns the frame's own embedding.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityEnhancer;

impl Enhancer for IdentityEnhancer {
    fn enhance(&mut self, frame: &FrameRecord) -> Result<EmbeddingVector> {
        Ok(frame.embedding.clone())
    }

    fn name(&self) -> &str {
        "identity"
    }
}

/// Inverse of the synthetic murk blend
/// `murky = (1 - level) * clean + level * murk_vector`.
pub fn mock_demurk(
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
    let keep = 1.0 - murk_level;
    EmbeddingVector::new(
        embedding
            .iter()
            .zip(murk_vector)
            .map(|(e, m)| (e - murk_level * m) / keep)
            .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct DemurkEnhancer {
    murk_vector: EmbeddingVector,
    murk_level: f64,
}

impl DemurkEnhancer {
    pub fn new(murk_vector: EmbeddingVector, murk_level: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&murk_level) {
            return Err(Error::MurkLevel(murk_level));
        }
        Ok(Self {
            murk_vector,
            murk_level,
        })
    }
}

impl Enhancer for DemurkEnhancer {
    fn enhance(&mut self, frame: &FrameRecord) -> Result<EmbeddingVector> {
        mock_demurk(&frame.embedding, &self.murk_vector, self.murk_level)
    }

    fn name(&self) -> &str {
        "demurk"
    }
}

/// Looks enhanced embeddings up in a second stream aligned by frame index.
///
/// Requests must come in increasing frame order; the backing stream is
/// consumed lazily.
pub struct AlignedStreamEnhancer<I: Iterator<Item = Result<FrameRecord>>> {
    records: Peekable<I>,
}

impl<I: Iterator<Item = Result<FrameRecord>>> AlignedStreamEnhancer<I> {
    pub fn new(records: I) -> Self {
        Self {
            records: records.peekable(),
        }
    }
}

impl<I: Iterator<Item = Result<FrameRecord>>> Enhancer for AlignedStreamEnhancer<I> {
    fn enhance(&mut self, frame: &FrameRecord) -> Result<EmbeddingVector> {
        let missing = || Error::Enhancer {
            frame_index: frame.frame_index,
            reason: "no matching record in the aligned stream".into(),
        };
        loop {
            match self.records.peek() {
                None => return Err(missing()),
                Some(Err(_)) => {
                    let err = self.records.next().unwrap().unwrap_err();
                    return Err(Error::Enhancer {
                        frame_index: frame.frame_index,
                        reason: err.to_string(),
                    });
                }
                Some(Ok(r)) if r.frame_index < frame.frame_index => {
                    self.records.next();
                }
                Some(Ok(r)) if r.frame_index == frame.frame_index => {
                    return Ok(self.records.next().unwrap().unwrap().embedding);
                }
                Some(Ok(_)) => return Err(missing()),
            }
        }
    }

    fn name(&self) -> &str {
        "aligned"
    }
}

/// In-memory lookup table of enhanced embeddings.
#[derive(Debug, Clone, Default)]
pub struct TableEnhancer {
    table: HashMap<u64, EmbeddingVector>,
}

impl TableEnhancer {
    pub fn new(records: impl IntoIterator<Item = FrameRecord>) -> Self {
        Self {
            table: records
                .into_iter()
                .map(|r| (r.frame_index, r.embedding))
                .collect(),
        }
    }
}

impl Enhancer for TableEnhancer {
    fn enhance(&mut self, frame: &FrameRecord) -> Result<EmbeddingVector> {
        self.table
            .get(&frame.frame_index)
            .cloned()
            .ok_or_else(|| Error::Enhancer {
                frame_index: frame.frame_index,
                reason: "no entry in enhancement table".into(),
            })
    }

    fn name(&self) -> &str {
        "table"
    }
}
