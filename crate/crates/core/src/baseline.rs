//! Reference samplers to compare the gated pipelines against.

use crate::config::SamplerConfig;
use crate::embedding::{sampler_transform, EmbeddingVector, Normalization};
use crate::error::{Error, Result};
use crate::frame::FrameRecord;
use crate::sampler::{OnlineSampler, SampleEntry, SampleSet};

fn entry(frame: &FrameRecord, normalization: Normalization) -> Result<SampleEntry> {
    Ok(SampleEntry {
        frame_index: frame.frame_index,
        timestamp: frame.timestamp,
        sampler_feature: sampler_transform(&frame.embedding, normalization)?,
        raw_embedding: frame.embedding.clone(),
        enhanced: false,
    })
}

/// `capacity` frames at evenly spaced positions `floor(i * n / capacity)`.
/// Streams shorter than `capacity` are returned whole.
pub fn baseline_uniform(stream: &[FrameRecord], capacity: usize) -> Result<SampleSet> {
    let mut set = SampleSet::new(capacity)?;
    let n = stream.len();
    let picks: Vec<usize> = if n <= capacity {
        (0..n).collect()
    } else {
        (0..capacity).map(|i| i * n / capacity).collect()
    };
    for p in picks {
        set.push(entry(&stream[p], Normalization::default())?)?;
    }
    Ok(set)
}

/// The sampler alone, offered every frame: no semantic gate.
pub fn baseline_surprise_only(stream: &[FrameRecord], config: &SamplerConfig) -> Result<SampleSet> {
    config.validate()?;
    let mut sampler = OnlineSampler::new(config.capacity, config.metric)?;
    for frame in stream {
        entry(frame, config.normalization)
            .and_then(|e| sampler.observe(e))
            .map_err(|e| e.at_frame(frame.frame_index))?;
    }
    Ok(sampler.into_sample_set())
}

/// Replaces every embedding by `f(frame)`, e.g. to feed enhanced frames to a
/// baseline.
pub fn map_embeddings(
    stream: &[FrameRecord],
    mut f: impl FnMut(&FrameRecord) -> Result<EmbeddingVector>,
) -> Result<Vec<FrameRecord>> {
    stream
        .iter()
        .map(|r| {
            let embedding = f(r).map_err(|e| e.at_frame(r.frame_index))?;
            if embedding.dim() != r.embedding.dim() {
                return Err(Error::DimMismatch {
                    expected: r.embedding.dim(),
                    found: embedding.dim(),
                }
                .at_frame(r.frame_index));
            }
            Ok(FrameRecord {
                embedding,
                ..r.clone()
            })
        })
        .collect()
}
