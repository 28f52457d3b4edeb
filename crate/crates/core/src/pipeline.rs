//! End-to-end runs: gate → (optional enhancement and re-gate) → sampler.
//!
//! Per-frame work is split in two halves. The front half (gating and
//! enhancement) needs only the queries and the enhancer, so it can run on
//! its own thread; the back half applies the result to the sampler and must
//! see frames in stream order. [`run_staged`] connects the halves with a
//! bounded channel, [`run_merlion`] and [`run_merlion_e`] run them inline.
//! Both produce identical output.

use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::config::{FailurePolicy, SamplerConfig, SeedMode};
use crate::embedding::{sampler_transform, EmbeddingVector};
use crate::enhance::Enhancer;
use crate::error::{Error, Result};
use crate::frame::{FrameRecord, QuerySet};
use crate::gate::{gate_score, passes_gate};
use crate::sampler::{Action, OnlineSampler, SampleEntry, SampleSet, SamplerDecision};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub frames_seen: u64,
    pub gate_passed: u64,
    pub enhancement_calls: u64,
    pub enhancement_failures: u64,
    pub ses_rejections: u64,
    pub seeded: u64,
    pub accepted: u64,
    pub rejected_surprise: u64,
    pub trims: u64,
}

impl PipelineStats {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("stats serialize")
    }
}

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub frame_index: u64,
    /// Gate score of the frame as streamed. Absent for frames admitted by a
    /// raw seed fill.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate_score: Option<f64>,
    /// Gate score of the enhanced embedding, when enhancement ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enhanced_score: Option<f64>,
    #[serde(flatten)]
    pub decision: SamplerDecision,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub samples: SampleSet,
    pub stats: PipelineStats,
    pub log: Vec<DecisionRecord>,
}

/// Result of the front half for one frame.
#[derive(Debug)]
struct Staged {
    frame_index: u64,
    gate_score: Option<f64>,
    enhanced_score: Option<f64>,
    enhancer_called: bool,
    outcome: FrontOutcome,
}

#[derive(Debug)]
enum FrontOutcome {
    RejectedGate,
    RejectedPostEnhancement,
    EnhancementFailed,
    /// Admitted by the raw seed fill, bypassing the gate.
    Seed(SampleEntry),
    /// Passed every gate; on its way to the sampler.
    Candidate(SampleEntry),
}

struct Front<'a, E: Enhancer + ?Sized> {
    queries: &'a QuerySet,
    config: &'a SamplerConfig,
    enhancer: Option<&'a mut E>,
    seen: u64,
    last_index: Option<u64>,
}

impl<E: Enhancer + ?Sized> Front<'_, E> {
    fn entry(
        &self,
        frame: &FrameRecord,
        embedding: EmbeddingVector,
        enhanced: bool,
    ) -> Result<SampleEntry> {
        Ok(SampleEntry {
            frame_index: frame.frame_index,
            timestamp: frame.timestamp,
            sampler_feature: sampler_transform(&embedding, self.config.normalization)?,
            raw_embedding: embedding,
            enhanced,
        })
    }

    fn process(&mut self, frame: FrameRecord) -> Result<Staged> {
        let idx = frame.frame_index;
        self.stage(frame).map_err(|e| e.at_frame(idx))
    }

    fn stage(&mut self, frame: FrameRecord) -> Result<Staged> {
        if let Some(prev) = self.last_index {
            if frame.frame_index <= prev {
                return Err(Error::OutOfOrder {
                    previous: prev,
                    found: frame.frame_index,
                });
            }
        }
        self.last_index = Some(frame.frame_index);
        frame.embedding.check_dim(self.queries.dim())?;
        self.seen += 1;
        let mut staged = Staged {
            frame_index: frame.frame_index,
            gate_score: None,
            enhanced_score: None,
            enhancer_called: false,
            outcome: FrontOutcome::RejectedGate,
        };

        if self.config.seed_mode == SeedMode::Raw && self.seen <= self.config.capacity as u64 {
            let entry = self.entry(&frame, frame.embedding.clone(), false)?;
            staged.outcome = FrontOutcome::Seed(entry);
            return Ok(staged);
        }

        let score = gate_score(&frame.embedding, self.queries, self.config.softmax_scale)?;
        staged.gate_score = Some(score.value);
        if !passes_gate(&score, self.config.tau_ss) {
            return Ok(staged);
        }

        let mut embedding = frame.embedding.clone();
        let mut enhanced = false;
        if let Some(enhancer) = self.enhancer.as_deref_mut() {
            staged.enhancer_called = true;
            let result = enhancer
                .enhance(&frame)
                .and_then(|e| e.check_dim(self.queries.dim()).map(|()| e));
            let e = match result {
                Ok(e) => e,
                Err(err) => match self.config.enhancer_failure_policy {
                    FailurePolicy::Abort => return Err(err),
                    FailurePolicy::Skip => {
                        log::warn!("skipping frame {}: {err}", frame.frame_index);
                        staged.outcome = FrontOutcome::EnhancementFailed;
                        return Ok(staged);
                    }
                },
            };
            let score = gate_score(&e, self.queries, self.config.softmax_scale)?;
            staged.enhanced_score = Some(score.value);
            if !passes_gate(&score, self.config.tau_ses) {
                staged.outcome = FrontOutcome::RejectedPostEnhancement;
                return Ok(staged);
            }
            embedding = e;
            enhanced = true;
        }
        staged.outcome = FrontOutcome::Candidate(self.entry(&frame, embedding, enhanced)?);
        Ok(staged)
    }
}

struct Back {
    sampler: OnlineSampler,
    stats: PipelineStats,
    log: Vec<DecisionRecord>,
}

impl Back {
    fn new(config: &SamplerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            sampler: OnlineSampler::new(config.capacity, config.metric)?,
            stats: PipelineStats::default(),
            log: Vec::new(),
        })
    }

    fn apply(&mut self, staged: Staged) -> Result<()> {
        let stats = &mut self.stats;
        stats.frames_seen += 1;
        let gated = !matches!(
            staged.outcome,
            FrontOutcome::RejectedGate | FrontOutcome::Seed(_)
        );
        if gated {
            stats.gate_passed += 1;
        }
        if staged.enhancer_called {
            stats.enhancement_calls += 1;
        }
        let decision = match staged.outcome {
            FrontOutcome::RejectedGate => SamplerDecision::without_test(Action::RejectedGate),
            FrontOutcome::RejectedPostEnhancement => {
                stats.ses_rejections += 1;
                SamplerDecision::without_test(Action::RejectedPostEnhancement)
            }
            FrontOutcome::EnhancementFailed => {
                stats.enhancement_failures += 1;
                SamplerDecision::without_test(Action::EnhancementFailed)
            }
            FrontOutcome::Seed(entry) | FrontOutcome::Candidate(entry) => {
                let d = self
                    .sampler
                    .observe(entry)
                    .map_err(|e| e.at_frame(staged.frame_index))?;
                match d.action {
                    Action::SeedFill => stats.seeded += 1,
                    Action::Accepted => stats.accepted += 1,
                    Action::RejectedSurprise => stats.rejected_surprise += 1,
                    _ => unreachable!("sampler only seeds, accepts or rejects"),
                }
                stats.trims += d.trimmed_frame_indices.len() as u64;
                d
            }
        };
        self.log.push(DecisionRecord {
            frame_index: staged.frame_index,
            gate_score: staged.gate_score,
            enhanced_score: staged.enhanced_score,
            decision,
        });
        Ok(())
    }

    fn finish(self) -> RunOutput {
        RunOutput {
            samples: self.sampler.into_sample_set(),
            stats: self.stats,
            log: self.log,
        }
    }
}

fn run_inline<I>(
    stream: I,
    queries: &QuerySet,
    config: &SamplerConfig,
    enhancer: Option<&mut dyn Enhancer>,
) -> Result<RunOutput>
where
    I: IntoIterator<Item = Result<FrameRecord>>,
{
    let mut back = Back::new(config)?;
    let mut front = Front {
        queries,
        config,
        enhancer,
        seen: 0,
        last_index: None,
    };
    for frame in stream {
        back.apply(front.process(frame?)?)?;
    }
    Ok(back.finish())
}

/// Plain pipeline: gate, then sampler.
pub fn run_merlion<I>(stream: I, queries: &QuerySet, config: &SamplerConfig) -> Result<RunOutput>
where
    I: IntoIterator<Item = Result<FrameRecord>>,
{
    run_inline(stream, queries, config, None)
}

/// Enhanced pipeline: frames passing the gate are enhanced, re-scored and
/// must clear `tau_ses` before the enhanced embedding goes to the sampler.
/// The enhancer never sees a frame that failed the first gate.
pub fn run_merlion_e<I>(
    stream: I,
    queries: &QuerySet,
    config: &SamplerConfig,
    enhancer: &mut dyn Enhancer,
) -> Result<RunOutput>
where
    I: IntoIterator<Item = Result<FrameRecord>>,
{
    run_inline(stream, queries, config, Some(enhancer))
}

/// Same as [`run_merlion`] / [`run_merlion_e`], with gating and enhancement
/// on a worker thread feeding the sampler through a queue of `queue_depth`
/// frames.
pub fn run_staged<I>(
    stream: I,
    queries: &QuerySet,
    config: &SamplerConfig,
    enhancer: Option<&mut (dyn Enhancer + Send)>,
    queue_depth: usize,
) -> Result<RunOutput>
where
    I: IntoIterator<Item = Result<FrameRecord>>,
    I::IntoIter: Send,
{
    let mut back = Back::new(config)?;
    let stream = stream.into_iter();
    let (tx, rx) = mpsc::sync_channel::<Result<Staged>>(queue_depth.max(1));
    thread::scope(|scope| {
        scope.spawn(move || {
            let mut front = Front {
                queries,
                config,
                enhancer,
                seen: 0,
                last_index: None,
            };
            for frame in stream {
                let staged = frame.and_then(|f| front.process(f));
                let failed = staged.is_err();
                if tx.send(staged).is_err() || failed {
                    break;
                }
            }
        });
        // Dropping `rx` on error unblocks and stops the producer.
        for staged in rx {
            back.apply(staged?)?;
        }
        Ok(())
    })?;
    Ok(back.finish())
}
