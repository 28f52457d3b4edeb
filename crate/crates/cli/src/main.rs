use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use merlion_core::compare::{compare_runs, DEFAULT_REGIMES};
use merlion_core::enhance::{AlignedStreamEnhancer, DemurkEnhancer, SubprocessEnhancer};
use merlion_core::format::{read_all, read_queries, read_stream, write_queries, write_stream};
use merlion_core::srum::{human_benchmark, srum_score, EvalContext, FrameScore, Timeline};
use merlion_core::synth::{generate_stream, SynthSpec};
use merlion_core::{
    oracle, run_staged, sidecar, Enhancer, Error, FailurePolicy, FrameRecord, Metric,
    Normalization, Regime, Result, RunOutput, SamplerConfig, SeedMode,
};
use serde::Serialize;

/// Semantic-gated online frame sampling.
#[derive(Parser)]
#[command(name = "merlion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gate a stream and sample it.
    Run(RunArgs),
    /// Gate, enhance, re-gate and sample.
    RunE(RunEArgs),
    /// Score a summary against human picks.
    Eval(EvalArgs),
    /// Write a synthetic stream with labels, queries and evaluators.
    Synth(SynthArgs),
    /// Recompute a run offline and compare it with its decision log.
    Oracle(OracleArgs),
    /// Compare the samplers on synthetic streams across murk levels.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SamplerArgs {
    /// Embedding stream (.mef).
    #[arg(long)]
    stream: PathBuf,
    /// Query file: positive query first, then negatives.
    #[arg(long)]
    queries: PathBuf,
    /// Sampler config (TOML). Flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset thresholds for a visibility regime.
    #[arg(long)]
    regime: Option<Regime>,
    #[arg(long)]
    tau_ss: Option<f64>,
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    normalization: Option<Normalization>,
    #[arg(long)]
    softmax_scale: Option<f64>,
    #[arg(long)]
    seed_mode: Option<SeedMode>,
    /// Frames buffered between the gating and sampling stages.
    #[arg(long, default_value_t = 64)]
    queue_depth: usize,
}

#[derive(Args)]
struct EnhancerArgs {
    #[arg(long)]
    tau_ses: Option<f64>,
    /// aligned:PATH, subprocess:CMD or demurk.
    #[arg(long)]
    enhancer: String,
    /// Murk vector for `demurk` (.mef with one record).
    #[arg(long)]
    murk_vector: Option<PathBuf>,
    #[arg(long)]
    murk_level: Option<f64>,
    #[arg(long)]
    failure_policy: Option<FailurePolicy>,
    #[arg(long)]
    enhancer_timeout_ms: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Output directory for decisions.jsonl, summary.txt and stats.toml.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunEArgs {
    #[command(flatten)]
    sampler: SamplerArgs,
    #[command(flatten)]
    enhancer: EnhancerArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Summary (one frame index per line).
    #[arg(long)]
    auto: PathBuf,
    #[arg(long)]
    humans: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Stream supplying frame timestamps.
    #[arg(long)]
    stream: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    weight: f64,
    /// Representativeness window in seconds [default: 10% of stream duration].
    #[arg(long)]
    window: Option<f64>,
    /// Samples per set [default: size of the first human set].
    #[arg(long)]
    capacity: Option<usize>,
    /// Score against this evaluator only.
    #[arg(long)]
    evaluator: Option<String>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthOverrides {
    /// Generator spec (TOML). Flags override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n_frames: Option<usize>,
    #[arg(long)]
    murk_level: Option<f64>,
}

impl SynthOverrides {
    fn resolve(&self) -> Result<SynthSpec> {
        let mut spec = match &self.spec {
            Some(p) => SynthSpec::load(p)?,
            None => SynthSpec::default(),
        };
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        if let Some(v) = self.dim {
            spec.dim = v;
        }
        if let Some(v) = self.n_frames {
            spec.n_frames = v;
        }
        if let Some(v) = self.murk_level {
            spec.murk_level = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    spec: SynthOverrides,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Decision log of the run being checked.
    #[arg(long)]
    log: PathBuf,
    /// Set when the run used enhancement.
    #[arg(long)]
    enhancer: Option<String>,
    #[arg(long)]
    tau_ses: Option<f64>,
    #[arg(long)]
    murk_vector: Option<PathBuf>,
    #[arg(long)]
    murk_level: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    spec: SynthOverrides,
    /// Number of seeds per regime, counting up from the spec's seed.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
}

fn config_for(args: &SamplerArgs, enhanced: bool) -> Result<SamplerConfig> {
    let mut c = match &args.config {
        Some(p) => SamplerConfig::load(p)?,
        None => SamplerConfig::default(),
    };
    if let Some(r) = args.regime {
        c.tau_ss = if enhanced {
            r.tau_ss_enhanced()
        } else {
            r.tau_ss()
        };
        c.tau_ses = r.tau_ses();
    }
    if let Some(v) = args.tau_ss {
        c.tau_ss = v;
    }
    if let Some(v) = args.capacity {
        c.capacity = v;
    }
    if let Some(v) = args.metric {
        c.metric = v;
    }
    if let Some(v) = args.normalization {
        c.normalization = v;
    }
    if let Some(v) = args.softmax_scale {
        c.softmax_scale = v;
    }
    if let Some(v) = args.seed_mode {
        c.seed_mode = v;
    }
    Ok(c)
}

fn apply_enhancer_flags(c: &mut SamplerConfig, e: &EnhancerArgs) -> Result<()> {
    if let Some(v) = e.tau_ses {
        c.tau_ses = v;
    }
    if let Some(v) = e.failure_policy {
        c.enhancer_failure_policy = v;
    }
    if let Some(v) = e.enhancer_timeout_ms {
        c.enhancer_timeout_ms = v;
    }
    c.validate()
}

fn build_enhancer(
    spec: &str,
    murk_vector: Option<&Path>,
    murk_level: Option<f64>,
    timeout: Duration,
) -> Result<Box<dyn Enhancer + Send>> {
    if let Some(path) = spec.strip_prefix("aligned:") {
        return Ok(Box::new(AlignedStreamEnhancer::new(read_stream(path)?)));
    }
    if let Some(cmd) = spec.strip_prefix("subprocess:") {
        return Ok(Box::new(SubprocessEnhancer::new(cmd, timeout)));
    }
    if spec == "demurk" {
        let path = murk_vector.ok_or_else(|| Error::Config("demurk needs --murk-vector".into()))?;
        let level = murk_level.ok_or_else(|| Error::Config("demurk needs --murk-level".into()))?;
        let murk = read_all(path)?.into_iter().next().ok_or_else(|| {
            Error::Config(format!("{}: murk vector file is empty", path.display()))
        })?;
        return Ok(Box::new(DemurkEnhancer::new(murk.embedding, level)?));
    }
    Err(Error::Config(format!(
        "unknown enhancer {spec:?}; expected aligned:PATH, subprocess:CMD or demurk"
    )))
}

fn write_outputs(out: &Path, run: &RunOutput, config: &SamplerConfig) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    sidecar::write_decision_log(&run.log, out.join("decisions.jsonl"))?;
    sidecar::write_summary(&run.samples.frame_indices(), out.join("summary.txt"))?;
    let stats = out.join("stats.toml");
    fs::write(&stats, run.stats.to_toml_string()).map_err(|e| io_err(&stats, e))?;
    let cfg = out.join("config.toml");
    fs::write(&cfg, config.to_toml_string()).map_err(|e| io_err(&cfg, e))?;
    let s = &run.stats;
    println!(
        "{} frames, {} passed the gate, {} enhanced, {} kept: {:?}",
        s.frames_seen,
        s.gate_passed,
        s.enhancement_calls,
        run.samples.len(),
        run.samples.frame_indices()
    );
    Ok(())
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.into(),
        source: e,
    }
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let config = config_for(&a.sampler, false)?;
    config.validate()?;
    let queries = read_queries(&a.sampler.queries)?;
    let run = run_staged(
        read_stream(&a.sampler.stream)?,
        &queries,
        &config,
        None,
        a.sampler.queue_depth,
    )?;
    write_outputs(&a.out, &run, &config)
}

fn cmd_run_e(a: RunEArgs) -> Result<()> {
    let mut config = config_for(&a.sampler, true)?;
    apply_enhancer_flags(&mut config, &a.enhancer)?;
    let queries = read_queries(&a.sampler.queries)?;
    let mut enhancer = build_enhancer(
        &a.enhancer.enhancer,
        a.enhancer.murk_vector.as_deref(),
        a.enhancer.murk_level,
        config.enhancer_timeout(),
    )?;
    let run = run_staged(
        read_stream(&a.sampler.stream)?,
        &queries,
        &config,
        Some(&mut *enhancer),
        a.sampler.queue_depth,
    )?;
    write_outputs(&a.out, &run, &config)
}

#[derive(Serialize)]
struct EvalReport {
    capacity: usize,
    weight: f64,
    window: f64,
    /// Mean total over the evaluators scored.
    mean_total: f64,
    /// Leave-one-out agreement among all evaluators, when there are two or more.
    #[serde(skip_serializing_if = "Option::is_none")]
    human_score: Option<f64>,
    evaluator: Vec<EvaluatorReport>,
}

#[derive(Serialize)]
struct EvaluatorReport {
    id: String,
    total: f64,
    padded: usize,
    frames: Vec<FrameScore>,
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let auto = sidecar::read_summary(&a.auto)?;
    let humans = sidecar::read_humans(&a.humans)?;
    let labels = sidecar::read_labels(&a.labels)?;
    let records = read_all(&a.stream)?;
    let timeline = Timeline::from_records(&records);
    let first = humans
        .first()
        .ok_or_else(|| Error::Config(format!("{}: no evaluators", a.humans.display())))?;
    let capacity = a.capacity.unwrap_or(first.frame_indices.len());
    let window = match a.window {
        Some(w) => w,
        None => timeline.default_window()?,
    };
    let ctx = EvalContext {
        labels: &labels,
        timeline: &timeline,
        capacity,
        weight: a.weight,
        window,
    };
    let selected: Vec<_> = match &a.evaluator {
        Some(id) => {
            let h: Vec<_> = humans.iter().filter(|h| &h.evaluator_id == id).collect();
            if h.is_empty() {
                return Err(Error::Config(format!("no evaluator {id:?}")));
            }
            h
        }
        None => humans.iter().collect(),
    };
    let mut evaluator = Vec::new();
    for h in selected {
        let r = srum_score(&auto, h, &ctx)?;
        evaluator.push(EvaluatorReport {
            id: r.evaluator_id,
            total: r.total,
            padded: r.padded,
            frames: r.frames,
        });
    }
    let mean_total = evaluator.iter().map(|e| e.total).sum::<f64>() / evaluator.len() as f64;
    let human_score = if humans.len() >= 2 {
        Some(human_benchmark(&humans, &ctx)?)
    } else {
        None
    };
    let report = EvalReport {
        capacity,
        weight: a.weight,
        window,
        mean_total,
        human_score,
        evaluator,
    };
    let text = toml::to_string(&report).expect("report serializes");
    print!("{text}");
    if let Some(out) = &a.out {
        fs::write(out, &text).map_err(|e| io_err(out, e))?;
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let spec = a.spec.resolve()?;
    let s = generate_stream(&spec)?;
    let out = &a.out;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_stream(&s.murky, spec.dim, out.join("stream.mef"))?;
    write_stream(&s.clean, spec.dim, out.join("clean.mef"))?;
    write_queries(&s.queries, out.join("queries.mef"))?;
    write_stream(
        &[FrameRecord::new(0, 0.0, s.murk_vector.clone())],
        spec.dim,
        out.join("murk.mef"),
    )?;
    sidecar::write_labels(&s.labels, out.join("labels.jsonl"))?;
    sidecar::write_humans(&s.humans, out.join("humans.jsonl"))?;
    let spec_path = out.join("spec.toml");
    fs::write(&spec_path, spec.to_toml_string()).map_err(|e| io_err(&spec_path, e))?;
    println!(
        "{} frames, {} segments, {} evaluators written to {}",
        s.murky.len(),
        s.segments.len(),
        s.humans.len(),
        out.display()
    );
    Ok(())
}

/// Exit status 1 signals a mismatch.
fn cmd_oracle(a: OracleArgs) -> Result<bool> {
    let mut config = config_for(&a.sampler, a.enhancer.is_some())?;
    if let Some(v) = a.tau_ses {
        config.tau_ses = v;
    }
    config.validate()?;
    let queries = read_queries(&a.sampler.queries)?;
    let frames = read_all(&a.sampler.stream)?;
    let log = sidecar::read_decision_log(&a.log)?;
    let reference = match &a.enhancer {
        None => oracle::run_reference(&frames, &queries, &config, None),
        Some(spec) => {
            let mut enhancer = build_enhancer(
                spec,
                a.murk_vector.as_deref(),
                a.murk_level,
                config.enhancer_timeout(),
            )?;
            let mut f = |r: &FrameRecord| enhancer.enhance(r).ok().map(|v| v.into_inner());
            oracle::run_reference(&frames, &queries, &config, Some(&mut f))
        }
    };
    match oracle::diff(&log, &reference) {
        None => {
            println!("MATCH");
            Ok(true)
        }
        Some(m) => {
            println!("MISMATCH: {m}");
            Ok(false)
        }
    }
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let base = a.spec.resolve()?;
    let seeds: Vec<u64> = (0..a.seeds).map(|i| base.seed + i).collect();
    let table = compare_runs(&base, &DEFAULT_REGIMES, &seeds)?;
    print!("{table}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MERLION_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a).map(|()| true),
        Command::RunE(a) => cmd_run_e(a).map(|()| true),
        Command::Eval(a) => cmd_eval(a).map(|()| true),
        Command::Synth(a) => cmd_synth(a).map(|()| true),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Bench(a) => cmd_bench(a).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
