//! `rusleep` command line: train sleep-control policies, evaluate
//! checkpoints with greedy rollouts, and analyze slot traces.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use rusleep_core::reward::Regime;
use rusleep_core::run::{self, FileConfig, RunConfig};

/// Environment variable that overrides the output directory of every verb.
const OUT_DIR_VAR: &str = "RUSLEEP_OUT";

#[derive(Parser)]
#[command(name = "rusleep", version, about = "Radio-unit sleep-control simulator and TD3 trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write checkpoints, per-episode CSV, per-slot
    /// trace, and a JSON report.
    Train(TrainArgs),
    /// Roll out a checkpoint greedily across seeds and report means with
    /// 95% confidence intervals.
    Evaluate(EvaluateArgs),
    /// Compute power-cycling counts and the sleep-mode distribution from a
    /// trace CSV.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Reward regime: rm100, rm10, markov, or lagrangian.
    #[arg(long, visible_alias = "reward")]
    regime: Option<String>,
    /// Number of training episodes.
    #[arg(long)]
    episodes: Option<u32>,
    /// Slots per episode.
    #[arg(long)]
    steps: Option<u32>,
    /// Master seed for the run.
    #[arg(long)]
    seed: Option<u64>,
    /// TOML configuration file (scenario space, TD3, run settings).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long, default_value = "out/train")]
    out: PathBuf,
    /// Skip the per-slot trace CSV.
    #[arg(long)]
    no_trace: bool,
    /// Checkpoint cadence in episodes (0 disables intermediate ones).
    #[arg(long)]
    checkpoint_every: Option<u32>,
    /// Progress line cadence in episodes (0 is silent).
    #[arg(long, default_value_t = 100)]
    progress_every: u32,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Explicit comma-separated seed list (overrides --seed/--n-seeds).
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// First seed of a contiguous sweep.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of seeds in the sweep.
    #[arg(long, default_value_t = 20)]
    n_seeds: u64,
    /// Output directory for evaluation.json, eval_seeds.csv, and trace.csv.
    #[arg(long, default_value = "out/eval")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Per-slot trace CSV written by `train` or `evaluate`.
    #[arg(long)]
    trace: PathBuf,
    /// TOML configuration file; fixes the number of sleep modes.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for analysis.json.
    #[arg(long, default_value = "out/analysis")]
    out: PathBuf,
}

fn resolve_out(cli_out: PathBuf) -> PathBuf {
    match std::env::var_os(OUT_DIR_VAR) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cli_out,
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => FileConfig::default(),
    };
    let regime_name = args
        .regime
        .or(file.run.regime.clone())
        .unwrap_or_else(|| "rm10".to_string());
    let regime: Regime = regime_name.parse()?;

    let mut config = RunConfig::new(regime, resolve_out(args.out));
    config.space = file.scenario;
    config.td3 = file.td3;
    if let Some(v) = file.run.episodes {
        config.episodes = v;
    }
    if let Some(v) = file.run.steps_per_episode {
        config.steps_per_episode = v;
    }
    if let Some(v) = file.run.checkpoint_every {
        config.checkpoint_every = v;
    }
    if let Some(v) = file.run.write_trace {
        config.write_trace = v;
    }
    if let Some(v) = file.run.seed {
        config.seed = v;
    }
    // Command-line flags win over the file.
    if let Some(v) = args.episodes {
        config.episodes = v;
    }
    if let Some(v) = args.steps {
        config.steps_per_episode = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.checkpoint_every {
        config.checkpoint_every = v;
    }
    if args.no_trace {
        config.write_trace = false;
    }
    config.progress_every = args.progress_every;

    eprintln!(
        "training {} for {} episodes x {} steps (seed {}) -> {}",
        regime,
        config.episodes,
        config.steps_per_episode,
        config.seed,
        config.out_dir.display()
    );
    let summary = run::train(&config)?;
    let last = summary.episodes.last().expect("at least one episode");
    println!(
        "done: final episode mean_ee {:.4}, rho_d {:+.4}, rho_m {:+.4}",
        last.mean_ee, last.mean_rho_d, last.mean_rho_m
    );
    println!("checkpoint: {}", summary.checkpoint.display());
    println!("episodes:   {}", summary.episodes_csv.display());
    if let Some(trace) = &summary.trace_csv {
        println!("trace:      {}", trace.display());
    }
    println!("report:     {}", summary.report.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let seeds: Vec<u64> = if args.seeds.is_empty() {
        (args.seed..args.seed + args.n_seeds).collect()
    } else {
        args.seeds
    };
    if seeds.is_empty() {
        bail!("no seeds to evaluate");
    }
    let out = resolve_out(args.out);
    let report = run::evaluate(&args.checkpoint, &seeds, Some(&out))?;
    let fmt = |s: &run::CiStat| {
        if s.degenerate {
            format!("{:.4} (single seed)", s.mean)
        } else {
            format!("{:.4} +/- {:.4}", s.mean, s.half_width)
        }
    };
    println!("regime {} over {} seeds:", report.regime, report.n_seeds);
    println!("  energy efficiency: {}", fmt(&report.ee));
    println!("  drop rate:         {}", fmt(&report.drop_rate));
    println!("  throughput (Mbps): {}", fmt(&report.throughput_mbps));
    println!("written to {}", out.display());
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let n_modes = match &args.config {
        Some(path) => Some(FileConfig::load(path)?.scenario.sleep_modes.len()),
        None => None,
    };
    let out = resolve_out(args.out);
    let report = run::analyze(&args.trace, n_modes, Some(&out))?;
    println!(
        "{} episodes, {} RUs: {} mode changes total ({:.2} per episode)",
        report.n_episodes, report.g_rus, report.total_changes, report.mean_changes_per_episode
    );
    for (g, row) in report.sm_distribution.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|p| format!("{p:.3}")).collect();
        println!("  ru{g} mode occupancy: [{}]", cells.join(", "));
    }
    println!("written to {}", out.join("analysis.json").display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Analyze(args) => analyze(args),
    }
}
