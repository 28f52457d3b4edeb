//! Side-by-side SRUM comparison on synthetic streams across murk levels.

use std::fmt;

use crate::baseline::{baseline_surprise_only, map_embeddings};
use crate::config::{Regime, SamplerConfig};
use crate::enhance::{mock_demurk, DemurkEnhancer};
use crate::error::Result;
use crate::pipeline::{run_merlion, run_merlion_e, PipelineStats};
use crate::srum::{human_benchmark, srum_score, EvalContext, HumanSampleSet, Timeline};
use crate::synth::{generate_stream, SynthSpec, SynthStream};

/// Regimes and the murk level each one is simulated at.
pub const DEFAULT_REGIMES: [(Regime, f64); 3] = [
    (Regime::Clear, 0.0),
    (Regime::Moderate, 0.25),
    (Regime::Low, 0.5),
];

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MethodScores {
    pub merlion: f64,
    pub merlion_e: f64,
    pub surprise_only: f64,
    pub surprise_only_enhanced: f64,
    pub human: f64,
}

impl MethodScores {
    fn add(&mut self, o: &Self) {
        self.merlion += o.merlion;
        self.merlion_e += o.merlion_e;
        self.surprise_only += o.surprise_only;
        self.surprise_only_enhanced += o.surprise_only_enhanced;
        self.human += o.human;
    }

    fn scale(&mut self, k: f64) {
        self.merlion *= k;
        self.merlion_e *= k;
        self.surprise_only *= k;
        self.surprise_only_enhanced *= k;
        self.human *= k;
    }
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub scores: MethodScores,
    pub merlion_stats: PipelineStats,
    pub merlion_e_stats: PipelineStats,
}

#[derive(Debug, Clone)]
pub struct RegimeResult {
    pub regime: Regime,
    pub murk_level: f64,
    pub seeds: Vec<SeedResult>,
    /// Per-method mean over seeds.
    pub mean: MethodScores,
}

#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub rows: Vec<RegimeResult>,
}

impl ComparisonTable {
    pub fn row(&self, regime: Regime) -> Option<&RegimeResult> {
        self.rows.iter().find(|r| r.regime == regime)
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>5} {:>8} {:>10} {:>9} {:>11} {:>7}",
            "regime", "murk", "MERLION", "MERLION-E", "surprise", "surprise+E", "human"
        )?;
        for r in &self.rows {
            let m = &r.mean;
            writeln!(
                f,
                "{:<10} {:>5.2} {:>8.4} {:>10.4} {:>9.4} {:>11.4} {:>7.4}",
                r.regime.name(),
                r.murk_level,
                m.merlion,
                m.merlion_e,
                m.surprise_only,
                m.surprise_only_enhanced,
                m.human
            )?;
        }
        Ok(())
    }
}

fn mean_srum(auto: &[u64], humans: &[HumanSampleSet], ctx: &EvalContext<'_>) -> Result<f64> {
    let mut total = 0.0;
    for h in humans {
        total += srum_score(auto, h, ctx)?.total;
    }
    Ok(total / humans.len() as f64)
}

/// Runs all four samplers on one generated stream.
pub fn evaluate_stream(stream: &SynthStream, regime: Regime) -> Result<SeedResult> {
    let spec = &stream.spec;
    let m = spec.murk_level;
    let plain = SamplerConfig {
        capacity: spec.capacity,
        ..SamplerConfig::for_regime(regime)
    };
    let enhanced = SamplerConfig {
        tau_ss: regime.tau_ss_enhanced(),
        tau_ses: regime.tau_ses(),
        ..plain.clone()
    };
    let frames = || stream.murky.iter().cloned().map(Ok);

    let merlion = run_merlion(frames(), &stream.queries, &plain)?;
    let mut enhancer = DemurkEnhancer::new(stream.murk_vector.clone(), m)?;
    let merlion_e = run_merlion_e(frames(), &stream.queries, &enhanced, &mut enhancer)?;
    let open = SamplerConfig {
        tau_ss: 0.0,
        ..plain.clone()
    };
    let surprise = baseline_surprise_only(&stream.murky, &open)?;
    let demurked = map_embeddings(&stream.murky, |r| {
        mock_demurk(&r.embedding, &stream.murk_vector, m)
    })?;
    let surprise_e = baseline_surprise_only(&demurked, &open)?;

    let timeline = Timeline::from_records(&stream.murky);
    let ctx = EvalContext {
        labels: &stream.labels,
        timeline: &timeline,
        capacity: spec.capacity,
        weight: plain.srum_weight,
        window: timeline.default_window()?,
    };
    let humans = &stream.humans;
    Ok(SeedResult {
        seed: spec.seed,
        scores: MethodScores {
            merlion: mean_srum(&merlion.samples.frame_indices(), humans, &ctx)?,
            merlion_e: mean_srum(&merlion_e.samples.frame_indices(), humans, &ctx)?,
            surprise_only: mean_srum(&surprise.frame_indices(), humans, &ctx)?,
            surprise_only_enhanced: mean_srum(&surprise_e.frame_indices(), humans, &ctx)?,
            human: human_benchmark(humans, &ctx)?,
        },
        merlion_stats: merlion.stats,
        merlion_e_stats: merlion_e.stats,
    })
}

/// For each regime, generates one stream per seed at that regime's murk
/// level (everything else from `base`) and averages the scores.
pub fn compare_runs(
    base: &SynthSpec,
    regimes: &[(Regime, f64)],
    seeds: &[u64],
) -> Result<ComparisonTable> {
    let mut rows = Vec::with_capacity(regimes.len());
    for &(regime, murk_level) in regimes {
        let results: Vec<Result<SeedResult>> = std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .iter()
                .map(|&seed| {
                    scope.spawn(move || {
                        let spec = SynthSpec {
                            seed,
                            murk_level,
                            ..base.clone()
                        };
                        evaluate_stream(&generate_stream(&spec)?, regime)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker panicked"))
                .collect()
        });
        let seeds = results.into_iter().collect::<Result<Vec<_>>>()?;
        let mut mean = MethodScores::default();
        for s in &seeds {
            mean.add(&s.scores);
        }
        mean.scale(1.0 / seeds.len().max(1) as f64);
        rows.push(RegimeResult {
            regime,
            murk_level,
            seeds,
            mean,
        });
    }
    Ok(ComparisonTable { rows })
}
