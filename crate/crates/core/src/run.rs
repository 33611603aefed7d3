//! Run orchestration: the training loop, greedy checkpoint evaluation with
//! confidence intervals, and trace analyses (power cycling and sleep-mode
//! distributions).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::env::SleepEnv;
use crate::error::{Error, Result};
use crate::model::ScenarioSpace;
use crate::par;
use crate::reward::{LagrangeState, Regime};
use crate::td3::{checkpoint, Mlp, Td3Agent, Td3Config, Transition};
use crate::trace::{
    read_trace, EpisodeRow, EpisodeWriter, TraceRow, TraceWriter, EPISODE_SCHEMA_VERSION,
};

/// Root of the plain-text (TOML) configuration file: scenario space, TD3
/// hyperparameters, and run settings. Every section and field is optional;
/// omitted fields take the defaults documented in the README.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct FileConfig {
    pub scenario: ScenarioSpace,
    pub td3: Td3Config,
    pub run: RunSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RunSection {
    pub regime: Option<String>,
    pub episodes: Option<u32>,
    pub steps_per_episode: Option<u32>,
    pub checkpoint_every: Option<u32>,
    pub write_trace: Option<bool>,
    pub seed: Option<u64>,
}

impl FileConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: FileConfig = toml::from_str(text)?;
        config.scenario.validate()?;
        config.td3.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// Full description of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub regime: Regime,
    pub episodes: u32,
    pub steps_per_episode: u32,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub space: ScenarioSpace,
    pub td3: Td3Config,
    /// Checkpoint cadence in episodes; 0 disables intermediate checkpoints.
    pub checkpoint_every: u32,
    pub write_trace: bool,
    /// Print a progress line every N episodes; 0 is silent.
    pub progress_every: u32,
}

impl RunConfig {
    pub fn new(regime: Regime, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            regime,
            episodes: 5_000,
            steps_per_episode: 30,
            seed: 0,
            out_dir: out_dir.into(),
            space: ScenarioSpace::default(),
            td3: Td3Config::default(),
            checkpoint_every: 500,
            write_trace: true,
            progress_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes < 1 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if self.steps_per_episode < 1 {
            return Err(Error::Config("steps_per_episode must be at least 1".into()));
        }
        self.space.validate()?;
        self.td3.validate()
    }
}

/// Artifacts produced by [`train`].
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub episodes: Vec<EpisodeRow>,
    pub checkpoint: PathBuf,
    pub episodes_csv: PathBuf,
    pub trace_csv: Option<PathBuf>,
    pub report: PathBuf,
    pub final_lagrange: LagrangeState,
}

#[derive(Debug, Serialize)]
struct TrainReport<'a> {
    schema_version: u32,
    regime: &'a str,
    episodes: u32,
    steps_per_episode: u32,
    seed: u64,
    elapsed_seconds: f64,
    mean_ee_last_100: f64,
    mean_rho_d_last_100: f64,
    mean_rho_m_last_100: f64,
    lambda_d: f64,
    lambda_m: f64,
    checkpoint: &'a Path,
    episodes_csv: &'a Path,
    trace_csv: Option<&'a Path>,
}

fn checkpoint_meta(config: &RunConfig, episodes_trained: u32, lagrange: &LagrangeState) -> serde_json::Value {
    json!({
        "regime": config.regime.name(),
        "space": config.space,
        "steps_per_episode": config.steps_per_episode,
        "run_seed": config.seed,
        "episodes_trained": episodes_trained,
        "lagrange": lagrange,
    })
}

/// Run the full training loop and persist every artifact into `out_dir`.
pub fn train(config: &RunConfig) -> Result<TrainSummary> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let started = Instant::now();

    let mut env = SleepEnv::new(config.space.clone(), config.regime, config.steps_per_episode)?;
    // One stream drives agent seeding and per-episode scenario seeds.
    let mut meta_rng = ChaCha8Rng::seed_from_u64(config.seed);
    meta_rng.set_stream(2);
    let agent_seed: u64 = meta_rng.gen();
    let mut agent = Td3Agent::new(env.obs_dim(), env.action_dim(), config.td3, agent_seed)?;

    let episodes_csv = config.out_dir.join("episodes.csv");
    let mut episode_writer = EpisodeWriter::create(&episodes_csv)?;
    let trace_csv = config.write_trace.then(|| config.out_dir.join("trace.csv"));
    let mut trace_writer = match &trace_csv {
        Some(path) => Some(TraceWriter::create(path, config.space.g_rus)?),
        None => None,
    };

    let granularity = config.regime.rm_granularity();
    let mut episode_rows: Vec<EpisodeRow> = Vec::with_capacity(config.episodes as usize);

    for episode in 0..config.episodes {
        let episode_seed: u64 = meta_rng.gen();
        let mut obs = env.reset(episode_seed)?;

        let steps = config.steps_per_episode;
        let mut sum_reward = 0.0;
        let mut sum_rho_d = 0.0;
        let mut sum_rho_m = 0.0;
        let mut sat_d = 0u32;
        let mut sat_m = 0u32;
        let mut sm_changes = 0u64;
        let mut prev_modes: Option<Vec<usize>> = None;
        let mut final_rho = (0.0, 0.0);

        for _ in 0..steps {
            let obs_vec = obs.to_vec();
            let action = agent.select_action(&obs_vec, true);
            let result = env.step(&action)?;
            let info = &result.info;

            sum_reward += result.reward;
            sum_rho_d += info.rho_d;
            sum_rho_m += info.rho_m;
            final_rho = (info.rho_d, info.rho_m);
            if let (Some(l), Some(state)) = (granularity, info.rm_drop) {
                sat_d += (state == l) as u32;
            }
            if let (Some(l), Some(state)) = (granularity, info.rm_throughput) {
                sat_m += (state == l) as u32;
            }
            if let Some(prev) = &prev_modes {
                sm_changes += prev
                    .iter()
                    .zip(&info.outcome.ru_modes)
                    .filter(|(a, b)| a != b)
                    .count() as u64;
            }
            prev_modes = Some(info.outcome.ru_modes.clone());

            if let Some(writer) = &mut trace_writer {
                writer.write(&TraceRow {
                    episode,
                    seed: episode_seed,
                    slot: info.outcome.slot,
                    ee: info.ee,
                    rho_d: info.rho_d,
                    rho_m: info.rho_m,
                    rm_d: info.rm_drop,
                    rm_m: info.rm_throughput,
                    reward: result.reward,
                    power_actual_w: info.outcome.power_actual_w,
                    power_all_active_w: info.outcome.power_all_active_w,
                    switch_energy_j: info.outcome.switch_energy_j,
                    served_bits_deadline: info.outcome.served_bits_deadline,
                    served_bits_constant: info.outcome.served_bits_constant,
                    dropped_packets: info.outcome.dropped_packets,
                    arrivals: info.outcome.per_user_arrivals.iter().map(|&a| a as u64).sum(),
                    mean_drop_rate: info.metrics.mean_drop_rate,
                    mean_throughput_mbps: info.metrics.mean_throughput_mbps,
                    ru_modes: info.outcome.ru_modes.clone(),
                })?;
            }

            // Truncation is not a terminal state: keep bootstrapping.
            agent.observe(Transition {
                obs: obs_vec,
                action,
                reward: result.reward,
                next_obs: result.observation.to_vec(),
                done: false,
            });
            agent.update()?;
            obs = result.observation;
        }

        let steps_f = steps as f64;
        let mean_rho_d = sum_rho_d / steps_f;
        let mean_rho_m = sum_rho_m / steps_f;
        if config.regime == Regime::Lagrangian {
            env.lagrange.update(mean_rho_d, mean_rho_m);
        }

        let metrics = env.metrics();
        let row = EpisodeRow {
            schema_version: EPISODE_SCHEMA_VERSION,
            episode,
            seed: episode_seed,
            steps,
            mean_ee: metrics.mean_ee,
            mean_rho_d,
            mean_rho_m,
            final_rho_d: final_rho.0,
            final_rho_m: final_rho.1,
            mean_reward: sum_reward / steps_f,
            total_reward: sum_reward,
            mean_drop_rate: metrics.mean_drop_rate,
            mean_throughput_mbps: metrics.mean_throughput_mbps,
            cum_switch_energy_j: metrics.cum_switch_energy_j,
            lambda_d: (config.regime == Regime::Lagrangian).then_some(env.lagrange.lambda_d),
            lambda_m: (config.regime == Regime::Lagrangian).then_some(env.lagrange.lambda_m),
            rm_saturation_d: granularity.map(|_| sat_d as f64 / steps_f),
            rm_saturation_m: granularity.map(|_| sat_m as f64 / steps_f),
            sm_changes,
        };
        episode_writer.write(&row)?;
        episode_rows.push(row);

        if config.progress_every > 0 && (episode + 1) % config.progress_every == 0 {
            let last = episode_rows.last().unwrap();
            eprintln!(
                "episode {:>6}/{}: mean_ee {:.3} rho_d {:+.3} rho_m {:+.3} reward {:+.3}",
                episode + 1,
                config.episodes,
                last.mean_ee,
                last.mean_rho_d,
                last.mean_rho_m,
                last.mean_reward
            );
        }
        if config.checkpoint_every > 0
            && (episode + 1) % config.checkpoint_every == 0
            && episode + 1 < config.episodes
        {
            let path = config.out_dir.join(format!("checkpoint_ep{}.bin", episode + 1));
            checkpoint::save(&path, &agent, checkpoint_meta(config, episode + 1, &env.lagrange))?;
        }
    }

    episode_writer.finish()?;
    if let Some(writer) = trace_writer {
        writer.finish()?;
    }

    let checkpoint_path = config.out_dir.join("checkpoint.bin");
    checkpoint::save(
        &checkpoint_path,
        &agent,
        checkpoint_meta(config, config.episodes, &env.lagrange),
    )?;

    let tail = episode_rows.iter().rev().take(100).collect::<Vec<_>>();
    let tail_mean = |f: fn(&EpisodeRow) -> f64| tail.iter().map(|r| f(r)).sum::<f64>() / tail.len() as f64;
    let report_path = config.out_dir.join("report.json");
    let report = TrainReport {
        schema_version: 1,
        regime: config.regime.name(),
        episodes: config.episodes,
        steps_per_episode: config.steps_per_episode,
        seed: config.seed,
        elapsed_seconds: started.elapsed().as_secs_f64(),
        mean_ee_last_100: tail_mean(|r| r.mean_ee),
        mean_rho_d_last_100: tail_mean(|r| r.mean_rho_d),
        mean_rho_m_last_100: tail_mean(|r| r.mean_rho_m),
        lambda_d: env.lagrange.lambda_d,
        lambda_m: env.lagrange.lambda_m,
        checkpoint: &checkpoint_path,
        episodes_csv: &episodes_csv,
        trace_csv: trace_csv.as_deref(),
    };
    let file = fs::File::create(&report_path).map_err(|e| Error::io(&report_path, e))?;
    serde_json::to_writer_pretty(file, &report)?;

    Ok(TrainSummary {
        episodes: episode_rows,
        checkpoint: checkpoint_path,
        episodes_csv,
        trace_csv,
        report: report_path,
        final_lagrange: env.lagrange,
    })
}

/// Mean with a 95% normal-approximation confidence half-width. Degenerate
/// (flagged, zero width) when fewer than two samples exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiStat {
    pub mean: f64,
    pub half_width: f64,
    pub degenerate: bool,
}

pub fn ci_stat(samples: &[f64]) -> CiStat {
    let n = samples.len();
    assert!(n >= 1, "ci_stat needs at least one sample");
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return CiStat {
            mean,
            half_width: 0.0,
            degenerate: true,
        };
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    CiStat {
        mean,
        half_width: 1.96 * var.sqrt() / (n as f64).sqrt(),
        degenerate: false,
    }
}

/// Greedy rollout metrics for one evaluation seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSeedResult {
    pub schema_version: u32,
    pub seed: u64,
    pub mean_ee: f64,
    pub mean_drop_rate: f64,
    pub mean_throughput_mbps: f64,
    pub final_rho_d: f64,
    pub final_rho_m: f64,
    pub total_reward: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub regime: String,
    pub n_seeds: usize,
    pub ee: CiStat,
    pub drop_rate: CiStat,
    pub throughput_mbps: CiStat,
    pub per_seed: Vec<EvalSeedResult>,
}

fn greedy_rollout(
    actor: &Mlp,
    space: &ScenarioSpace,
    regime: Regime,
    steps: u32,
    lagrange: LagrangeState,
    seed: u64,
) -> Result<(EvalSeedResult, Vec<TraceRow>)> {
    let mut env = SleepEnv::new(space.clone(), regime, steps)?;
    env.lagrange = lagrange;
    let mut obs = env.reset(seed)?;
    let mut total_reward = 0.0;
    let mut final_rho = (0.0, 0.0);
    let mut rows = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let action = actor.forward(&obs.to_vec());
        let result = env.step(&action)?;
        let info = &result.info;
        total_reward += result.reward;
        final_rho = (info.rho_d, info.rho_m);
        rows.push(TraceRow {
            episode: 0, // rewritten by the caller to the seed index
            seed,
            slot: info.outcome.slot,
            ee: info.ee,
            rho_d: info.rho_d,
            rho_m: info.rho_m,
            rm_d: info.rm_drop,
            rm_m: info.rm_throughput,
            reward: result.reward,
            power_actual_w: info.outcome.power_actual_w,
            power_all_active_w: info.outcome.power_all_active_w,
            switch_energy_j: info.outcome.switch_energy_j,
            served_bits_deadline: info.outcome.served_bits_deadline,
            served_bits_constant: info.outcome.served_bits_constant,
            dropped_packets: info.outcome.dropped_packets,
            arrivals: info.outcome.per_user_arrivals.iter().map(|&a| a as u64).sum(),
            mean_drop_rate: info.metrics.mean_drop_rate,
            mean_throughput_mbps: info.metrics.mean_throughput_mbps,
            ru_modes: info.outcome.ru_modes.clone(),
        });
        obs = result.observation;
    }
    let metrics = env.metrics();
    Ok((
        EvalSeedResult {
            schema_version: 1,
            seed,
            mean_ee: metrics.mean_ee,
            mean_drop_rate: metrics.mean_drop_rate,
            mean_throughput_mbps: metrics.mean_throughput_mbps,
            final_rho_d: final_rho.0,
            final_rho_m: final_rho.1,
            total_reward,
        },
        rows,
    ))
}

/// Evaluate a checkpoint with greedy (noise-free) rollouts, one fresh
/// scenario per seed, and report means with 95% confidence intervals.
/// Seeds fan out over workers when the `parallel` feature is enabled.
pub fn evaluate(checkpoint_path: &Path, seeds: &[u64], out_dir: Option<&Path>) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(Error::Config("evaluation needs at least one seed".into()));
    }
    let (agent, meta) = checkpoint::load(checkpoint_path, seeds[0])?;
    let regime: Regime = meta
        .get("regime")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Checkpoint("checkpoint meta lacks a regime".into()))?
        .parse()?;
    let space: ScenarioSpace = serde_json::from_value(
        meta.get("space")
            .cloned()
            .ok_or_else(|| Error::Checkpoint("checkpoint meta lacks the scenario space".into()))?,
    )?;
    let steps = meta
        .get("steps_per_episode")
        .and_then(|v| v.as_u64())
        .unwrap_or(30) as u32;
    let lagrange: LagrangeState = meta
        .get("lagrange")
        .cloned()
        .map(serde_json::from_value)
        .transpose()?
        .unwrap_or_default();
    let expected_dim = crate::env::Observation::dim(space.g_rus, regime.uses_rm());
    if agent.obs_dim != expected_dim {
        return Err(Error::Checkpoint(format!(
            "checkpoint expects {}-dimensional observations but the scenario space implies {}",
            agent.obs_dim, expected_dim
        )));
    }

    let actor = &agent.actor;
    let results: Vec<Result<(EvalSeedResult, Vec<TraceRow>)>> = par::map_collect(seeds, |&seed| {
        greedy_rollout(actor, &space, regime, steps, lagrange, seed)
    });
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut all_rows = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let (result, mut rows) = r?;
        for row in &mut rows {
            row.episode = i as u32;
        }
        per_seed.push(result);
        all_rows.extend(rows);
    }

    let collect = |f: fn(&EvalSeedResult) -> f64| per_seed.iter().map(f).collect::<Vec<_>>();
    let report = EvalReport {
        schema_version: 1,
        regime: regime.name().to_string(),
        n_seeds: per_seed.len(),
        ee: ci_stat(&collect(|r| r.mean_ee)),
        drop_rate: ci_stat(&collect(|r| r.mean_drop_rate)),
        throughput_mbps: ci_stat(&collect(|r| r.mean_throughput_mbps)),
        per_seed,
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json_path = dir.join("evaluation.json");
        let file = fs::File::create(&json_path).map_err(|e| Error::io(&json_path, e))?;
        serde_json::to_writer_pretty(file, &report)?;

        let csv_path = dir.join("eval_seeds.csv");
        let csv_file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        let mut w = csv::Writer::from_writer(csv_file);
        for row in &report.per_seed {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::Trace(format!("flush failed: {e}")))?;

        let mut trace = TraceWriter::create(&dir.join("trace.csv"), space.g_rus)?;
        for row in &all_rows {
            trace.write(row)?;
        }
        trace.finish()?;
    }
    Ok(report)
}

/// Mode-change counts for one episode of a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeCycling {
    pub episode: u32,
    /// Mode changes per RU between consecutive slots.
    pub per_ru: Vec<u64>,
    /// Sum over RUs.
    pub total: u64,
    /// Slots in which at least one RU changed mode.
    pub any_change_slots: u64,
}

/// Count mode changes between consecutive slots, grouped by episode.
/// Episode boundaries never count as changes.
pub fn analyze_power_cycling(rows: &[TraceRow]) -> Vec<EpisodeCycling> {
    let mut out: Vec<EpisodeCycling> = Vec::new();
    let mut prev: Option<(u32, &Vec<usize>)> = None;
    for row in rows {
        if out.last().map(|e| e.episode) != Some(row.episode) {
            out.push(EpisodeCycling {
                episode: row.episode,
                per_ru: vec![0; row.ru_modes.len()],
                total: 0,
                any_change_slots: 0,
            });
            prev = None;
        }
        if let Some((prev_episode, prev_modes)) = prev {
            debug_assert_eq!(prev_episode, row.episode);
            let entry = out.last_mut().unwrap();
            let mut any = false;
            for (g, (a, b)) in prev_modes.iter().zip(&row.ru_modes).enumerate() {
                if a != b {
                    entry.per_ru[g] += 1;
                    entry.total += 1;
                    any = true;
                }
            }
            entry.any_change_slots += any as u64;
        }
        prev = Some((row.episode, &row.ru_modes));
    }
    out
}

/// Fraction of slots each RU spent in each mode: a row-stochastic
/// `G x n_modes` matrix.
pub fn sm_distribution(rows: &[TraceRow], n_modes: usize) -> Vec<Vec<f64>> {
    if rows.is_empty() {
        return Vec::new();
    }
    let g_rus = rows[0].ru_modes.len();
    let mut counts = vec![vec![0u64; n_modes]; g_rus];
    for row in rows {
        for (g, &mode) in row.ru_modes.iter().enumerate() {
            counts[g][mode.min(n_modes - 1)] += 1;
        }
    }
    counts
        .into_iter()
        .map(|ru| {
            let total = ru.iter().sum::<u64>() as f64;
            ru.into_iter().map(|c| c as f64 / total).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub n_episodes: usize,
    pub g_rus: usize,
    pub n_modes: usize,
    pub per_episode: Vec<EpisodeCycling>,
    pub total_changes: u64,
    pub mean_changes_per_episode: f64,
    /// Row-stochastic per-RU mode occupancy.
    pub sm_distribution: Vec<Vec<f64>>,
}

/// Read a trace and compute both analyses. `n_modes` defaults to the
/// deepest mode observed plus one.
pub fn analyze(trace_path: &Path, n_modes: Option<usize>, out_dir: Option<&Path>) -> Result<AnalysisReport> {
    let rows = read_trace(trace_path)?;
    if rows.is_empty() {
        return Err(Error::Trace("trace is empty".into()));
    }
    let observed_deepest = rows
        .iter()
        .flat_map(|r| r.ru_modes.iter().copied())
        .max()
        .unwrap_or(0);
    let n_modes = n_modes.unwrap_or(observed_deepest + 1).max(observed_deepest + 1);
    let per_episode = analyze_power_cycling(&rows);
    let total_changes: u64 = per_episode.iter().map(|e| e.total).sum();
    let report = AnalysisReport {
        schema_version: 1,
        n_episodes: per_episode.len(),
        g_rus: rows[0].ru_modes.len(),
        n_modes,
        mean_changes_per_episode: total_changes as f64 / per_episode.len() as f64,
        total_changes,
        per_episode,
        sm_distribution: sm_distribution(&rows, n_modes),
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("analysis.json");
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::to_writer_pretty(file, &report)?;
    }
    Ok(report)
}
