//! Semantic-gated online frame sampling for underwater video streams.
//!
//! Frames arrive as embeddings. A softmax over query similarities gates out
//! irrelevant frames; the survivors feed a fixed-capacity sampler that keeps
//! a frame only when it is farther from the current set than the set's own
//! mean nearest-neighbour spacing. An optional enhancement step can clean up
//! murky frames between the gate and the sampler.

pub mod baseline;
pub mod compare;
pub mod config;
pub mod embedding;
pub mod enhance;
pub mod error;
pub mod format;
pub mod frame;
pub mod gate;
pub mod oracle;
pub mod pipeline;
pub mod plugin;
pub mod sampler;
pub mod sidecar;
pub mod srum;
pub mod synth;

pub use config::{FailurePolicy, Regime, SamplerConfig, SeedMode};
pub use embedding::{
    cosine_similarity, distance, sampler_transform, EmbeddingVector, Metric, Normalization,
};
pub use enhance::{DemurkEnhancer, Enhancer, IdentityEnhancer};
pub use error::{Error, Result};
pub use frame::{FrameRecord, QuerySet};
pub use gate::{gate_score, passes_gate, GateScore};
pub use pipeline::{
    run_merlion, run_merlion_e, run_staged, DecisionRecord, PipelineStats, RunOutput,
};
pub use sampler::{Action, OnlineSampler, SampleEntry, SampleSet, SamplerDecision};
pub use srum::{HumanSampleSet, LabelMap, LabelSet, SrumReport};
