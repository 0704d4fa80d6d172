use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use neuresonance::analysis::{analyze_dir, AnalysisConfig};
use neuresonance::bench::{run_bench, MIN_UPDATES};
use neuresonance::config::EngineConfig;
use neuresonance::core::Participant;
use neuresonance::engine::runner::{run, RunOptions, Source};
use neuresonance::session::{Condition, Modality};
use neuresonance::stream::replay::Pacing;
use neuresonance::stream::synth::{synth_session, ArtifactBurst, SynthConfig, TrialPlan};

#[derive(Parser)]
#[command(name = "neuresonance", version, about = "Dual-EEG inter-brain synchrony engine")]
struct Cli {
    /// Seed for the synthetic source.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Engine configuration (TOML). Defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a session from a synthetic, recorded or network source.
    Run(RunArgs),
    /// Analyse a recording and write report.json and report.csv.
    Analyze(AnalyzeArgs),
    /// Write a synthetic recording.
    Synth(SynthArgs),
    /// Measure per-update latency against the budgets.
    Bench {
        /// Metric updates to time
        #[arg(long, default_value_t = MIN_UPDATES)]
        updates: usize,
    },
}

#[derive(Args)]
struct SourceArgs {
    /// Generate synthetic data.
    #[arg(long, group = "source")]
    synth: bool,
    /// Replay a recording directory.
    #[arg(long, group = "source", value_name = "DIR")]
    replay: Option<PathBuf>,
    /// Accept wire frames on this TCP address.
    #[arg(long, group = "source", value_name = "ADDR")]
    listen: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Pacing: `batch`, or a speed such as `1x` or `2x`.
    #[arg(long, default_value = "1x")]
    speed: String,
    /// Synthetic session length in seconds.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// Initial synthetic coupling κ.
    #[arg(long, default_value_t = 0.0)]
    coupling: f64,
    /// Artifact burst `start_s:duration_s:A|B` (repeatable).
    #[arg(long, value_name = "SPEC")]
    burst: Vec<String>,
    /// Open a single trial of this condition for the whole run.
    #[arg(long, value_name = "CONDITION")]
    trial: Option<Condition>,
    /// Force a feedback modality instead of following the trial condition
    #[arg(long)]
    modality: Option<Modality>,
    /// Recording directory.
    #[arg(long, value_name = "DIR", default_value = "recordings")]
    record: PathBuf,
    /// Do not record.
    #[arg(long, conflicts_with = "record")]
    no_record: bool,
    /// Session id; also names the recording subdirectory
    #[arg(long, default_value = "session")]
    session: String,
    /// Stop after this many wall-clock seconds.
    #[arg(long, value_name = "SECONDS")]
    max_wall: Option<f64>,
    /// Send OSC metric packets over UDP to this address
    #[arg(long, value_name = "HOST:PORT")]
    osc: Option<String>,
    /// Haptic band REST endpoint
    #[arg(long, value_name = "URL")]
    haptic: Option<String>,
    /// Serve the console control socket on this address
    #[arg(long, value_name = "HOST:PORT")]
    control: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Recording directory
    recording: PathBuf,
    /// Output directory; defaults to the recording directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reject epochs scoring above median + k·MAD
    #[arg(long, default_value_t = 3.0)]
    threshold_k: f64,
    /// Also report theta, alpha and beta separately.
    #[arg(long)]
    per_band: bool,
    /// Use the causal (live) filter instead of zero-phase.
    #[arg(long)]
    causal: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output recording directory.
    #[arg(long)]
    out: PathBuf,
    /// Trial `Label:kappa:seconds` (repeatable), e.g. `Non-sync:0:30`.
    #[arg(long, value_name = "TRIAL")]
    plan: Vec<TrialPlan>,
    /// Length of the single trial written when no plan is given
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// Coupling κ of that trial
    #[arg(long, default_value_t = 0.0)]
    coupling: f64,
    /// Condition of that trial
    #[arg(long, default_value = "Visual")]
    condition: Condition,
    /// Artifact burst `start_s:duration_s:A|B` (repeatable)
    #[arg(long, value_name = "SPEC")]
    burst: Vec<String>,
}

fn parse_burst(spec: &str) -> Result<ArtifactBurst> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, duration, who] = parts[..] else {
        bail!("burst must be start_s:duration_s:A|B, got {spec:?}");
    };
    let participant = match who {
        "A" | "a" => Participant::A,
        "B" | "b" => Participant::B,
        other => bail!("unknown participant {other:?}"),
    };
    Ok(ArtifactBurst {
        start_s: start.parse().context("burst start")?,
        duration_s: duration.parse().context("burst duration")?,
        participant,
    })
}

fn load_config(path: Option<&PathBuf>) -> Result<EngineConfig> {
    match path {
        Some(p) => EngineConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(EngineConfig::default()),
    }
}

fn synth_config(cli_seed: u64, config: &EngineConfig, duration: f64, coupling: f64, bursts: &[String]) -> Result<SynthConfig> {
    Ok(SynthConfig {
        duration_s: duration,
        sample_rate: config.sample_rate,
        channel_count: config.channel_count,
        motion_rate: config.motion.sample_rate,
        coupling,
        seed: cli_seed,
        artifact_schedule: bursts.iter().map(|b| parse_burst(b)).collect::<Result<_>>()?,
        ..Default::default()
    })
}

fn cmd_run(cli: &Cli, args: &RunArgs) -> Result<ExitCode> {
    let mut config = load_config(cli.config.as_ref())?;
    if args.osc.is_some() {
        config.endpoints.osc = args.osc.clone();
    }
    if args.haptic.is_some() {
        config.endpoints.haptic = args.haptic.clone();
    }
    if args.control.is_some() {
        config.endpoints.control = args.control.clone();
    }
    if args.modality.is_some() {
        config.modality = args.modality;
    }
    let pacing = Pacing::parse(&args.speed).with_context(|| format!("bad speed {:?}", args.speed))?;
    let source = match (&args.source.replay, &args.source.listen) {
        (Some(dir), _) => Source::Replay(dir.clone()),
        (_, Some(addr)) => Source::Tcp(addr.clone()),
        _ => Source::Synth(synth_config(cli.seed, &config, args.duration, args.coupling, &args.burst)?),
    };
    let record = (!args.no_record).then(|| args.record.join(&args.session));
    let options = RunOptions {
        pacing,
        record: record.clone(),
        session_id: args.session.clone(),
        auto_trial: args.trial,
        max_wall: args.max_wall.map(Duration::from_secs_f64),
        ..Default::default()
    };
    let summary = run(config, source, options)?;
    let c = summary.counters;
    println!(
        "{} updates ({} valid, {} held, {} invalid) in {:.1} s",
        summary.updates.len(),
        c.valid,
        c.held,
        c.invalid,
        summary.wall.as_secs_f64()
    );
    if let Some(latency) = &summary.latency {
        println!("{}", serde_json::to_string_pretty(latency)?);
    }
    if summary.queue_drops > 0 {
        println!("{} frames dropped by back-pressure", summary.queue_drops);
    }
    if let Some(dir) = record {
        println!("recorded to {}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(cli: &Cli, args: &AnalyzeArgs) -> Result<ExitCode> {
    let engine = load_config(cli.config.as_ref())?;
    let mut config = AnalysisConfig::from_engine(&engine);
    config.threshold_k = args.threshold_k;
    config.per_band = args.per_band;
    if args.causal {
        config = config.causal();
    }
    let report = analyze_dir(&args.recording, &config)?;
    let out = args.out.clone().unwrap_or_else(|| args.recording.clone());
    let (json, csv) = report.write(&out)?;
    for t in &report.trials {
        println!(
            "trial {:>3} {:<12} {:>3}/{:<3} valid  {}  pooled {}",
            t.trial_id,
            t.condition.label(),
            t.valid,
            t.analyzable,
            if t.trial_valid { "kept    " } else { "rejected" },
            t.pooled_ccorr.map_or("-".into(), |v| format!("{v:.4}")),
        );
    }
    for c in &report.conditions {
        println!("{:<12} mean pooled {:.4} over {} trials", c.condition.label(), c.mean_pooled_ccorr, c.valid_trials);
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    println!("wrote {} and {}", json.display(), csv.display());
    if report.all_rejected() {
        eprintln!("warning: every trial was rejected");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Result<ExitCode> {
    let engine = load_config(cli.config.as_ref())?;
    let synth = synth_config(cli.seed, &engine, args.duration, args.coupling, &args.burst)?;
    let plan = if args.plan.is_empty() {
        vec![TrialPlan {
            condition: args.condition,
            coupling: args.coupling,
            seconds: args.duration,
        }]
    } else {
        args.plan.clone()
    };
    let recording = synth_session(&synth, &plan)?;
    recording.save(&args.out)?;
    println!(
        "wrote {} frames, {} trials to {}",
        recording.frames.len(),
        plan.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(cli: &Cli, updates: usize) -> Result<ExitCode> {
    let config = load_config(cli.config.as_ref())?;
    let report = run_bench(config, updates, cli.seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!(
        "compute p95 {:.2} ms (budget {} ms), motion p95 {:.3} ms (budget {} ms), {} updates: {}",
        report.compute.p95,
        report.budget_ms,
        report.motion.p95,
        report.motion_budget_ms,
        report.updates,
        if report.passed() { "PASS" } else { "FAIL" }
    );
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Run(args) => cmd_run(&cli, args),
        Cmd::Analyze(args) => cmd_analyze(&cli, args),
        Cmd::Synth(args) => cmd_synth(&cli, args),
        Cmd::Bench { updates } => cmd_bench(&cli, *updates),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
