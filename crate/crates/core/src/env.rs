//! Episode-oriented environment: seeded resets that sample a fresh scenario,
//! continuous actions discretised to sleep-mode levels, reward dispensing
//! per regime, and truncation after a fixed number of slots.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::{self, RunningMetrics};
use crate::model::{make_scenario, ScenarioSpace};
use crate::reward::{reward_lagrangian, reward_markov, reward_rm, LagrangeState, Regime};
use crate::rm::{ConstraintKind, ConstraintRM};
use crate::sim::{Simulator, SlotOutcome};
use crate::td3::discretize;

/// Structured observation; see [`Observation::to_vec`] for the flat layout
/// fed to the policy. Every component lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Summed offered load of the deadline group, normalised by the
    /// scenario-space maximum.
    pub load_deadline: f64,
    /// Summed offered load of the constant-rate group, likewise normalised.
    pub load_constant: f64,
    /// Mean channel state of the deadline group.
    pub chan_deadline: f64,
    /// Mean channel state of the constant-rate group.
    pub chan_constant: f64,
    /// Previous-slot group drop rate.
    pub drop_now: f64,
    /// Previous-slot group served throughput over the per-user ceiling.
    pub thr_now: f64,
    /// Current mode of each RU over the deepest mode.
    pub ru_modes: Vec<f64>,
    /// Constraint-machine coordinates, present under RM regimes.
    pub rm_coords: Option<(f64, f64)>,
}

impl Observation {
    /// Flat layout: six scalars, then one entry per RU, then the two
    /// machine coordinates when an RM regime is active.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(6 + self.ru_modes.len() + 2);
        v.extend_from_slice(&[
            self.load_deadline,
            self.load_constant,
            self.chan_deadline,
            self.chan_constant,
            self.drop_now,
            self.thr_now,
        ]);
        v.extend_from_slice(&self.ru_modes);
        if let Some((u_d, u_m)) = self.rm_coords {
            v.push(u_d);
            v.push(u_m);
        }
        v
    }

    pub fn dim(g_rus: usize, uses_rm: bool) -> usize {
        6 + g_rus + if uses_rm { 2 } else { 0 }
    }
}

/// Everything a step reports besides observation, reward, and done.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub outcome: SlotOutcome,
    pub metrics: RunningMetrics,
    pub ee: f64,
    pub rho_d: f64,
    pub rho_m: f64,
    pub rm_drop: Option<usize>,
    pub rm_throughput: Option<usize>,
    /// True on the final slot of the episode. Truncation, not a terminal
    /// state: bootstrap across it when training.
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// The sleep-control environment. One instance per training loop;
/// instances are independent and safe to run in parallel workers.
#[derive(Debug, Clone)]
pub struct SleepEnv {
    pub space: ScenarioSpace,
    pub regime: Regime,
    pub steps_per_episode: u32,
    /// Multipliers for the Lagrangian regime. Owned logically by the
    /// training loop, which updates them between episodes.
    pub lagrange: LagrangeState,
    sim: Option<Simulator>,
    metrics: RunningMetrics,
    rm_drop: Option<ConstraintRM>,
    rm_throughput: Option<ConstraintRM>,
    rng: ChaCha8Rng,
    step_in_episode: u32,
}

impl SleepEnv {
    pub fn new(space: ScenarioSpace, regime: Regime, steps_per_episode: u32) -> Result<Self> {
        space.validate()?;
        if steps_per_episode == 0 {
            return Err(Error::Config("steps_per_episode must be positive".into()));
        }
        Ok(SleepEnv {
            space,
            regime,
            steps_per_episode,
            lagrange: LagrangeState::default(),
            sim: None,
            metrics: RunningMetrics {
                slots_elapsed: 0,
                mean_drop_rate: 0.0,
                mean_throughput_mbps: 0.0,
                mean_ee: 0.0,
                cum_switch_energy_j: 0.0,
                mu_max_mbps: 1.0,
            },
            rm_drop: None,
            rm_throughput: None,
            rng: ChaCha8Rng::seed_from_u64(0),
            step_in_episode: 0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        Observation::dim(self.space.g_rus, self.regime.uses_rm())
    }

    pub fn action_dim(&self) -> usize {
        self.space.g_rus
    }

    /// Sample a new scenario from the seed and start a fresh episode:
    /// queues empty, RUs active, metrics zeroed, machines at the initial
    /// state.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let config = make_scenario(seed, &self.space)?;
        // Stream 0 is the scenario sampler; the episode gets stream 1.
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.rng.set_stream(1);
        self.metrics = RunningMetrics::new(&config);
        self.sim = Some(Simulator::new(config, &mut self.rng));
        if let Some(granularity) = self.regime.rm_granularity() {
            self.rm_drop = Some(ConstraintRM::new(granularity, ConstraintKind::Drop));
            self.rm_throughput = Some(ConstraintRM::new(granularity, ConstraintKind::Throughput));
        } else {
            self.rm_drop = None;
            self.rm_throughput = None;
        }
        self.step_in_episode = 0;
        Ok(self.build_observation(None))
    }

    /// Advance one slot under a continuous action in the unit cube.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.sim.is_none() {
            return Err(Error::Contract("step called before reset".into()));
        }
        if self.step_in_episode >= self.steps_per_episode {
            return Err(Error::Contract("episode already finished; call reset".into()));
        }
        if action.len() != self.action_dim() || action.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Contract(format!(
                "action must be {} components in [0, 1], got {action:?}",
                self.action_dim()
            )));
        }

        let deepest = self.sim.as_ref().unwrap().config.deepest_mode();
        let levels = discretize(action, deepest);
        let sim = self.sim.as_mut().unwrap();
        let outcome = sim.step(&levels, &mut self.rng)?;
        let (drop_limit, min_throughput) = {
            let config = &self.sim.as_ref().unwrap().config;
            self.metrics.update(&outcome, config)?;
            (config.drop_limit, config.min_throughput_mbps)
        };

        let ee = metrics::energy_efficiency(outcome.power_all_active_w, outcome.power_actual_w)?;
        let rho_d = self.metrics.drop_violation(drop_limit);
        let rho_m = self.metrics.throughput_violation(min_throughput)?;

        let (rm_reward_d, rm_reward_m) = match (&mut self.rm_drop, &mut self.rm_throughput) {
            (Some(rm_d), Some(rm_m)) => (Some(rm_d.step(rho_d)), Some(rm_m.step(rho_m))),
            _ => (None, None),
        };

        let reward = match self.regime {
            Regime::Markov => reward_markov(ee, rho_d, rho_m),
            Regime::Lagrangian => reward_lagrangian(ee, rho_d, rho_m, &self.lagrange),
            Regime::Rm100 | Regime::Rm10 => {
                reward_rm(ee, rm_reward_d.unwrap(), rm_reward_m.unwrap())
            }
        };

        self.step_in_episode += 1;
        let truncated = self.step_in_episode == self.steps_per_episode;
        let observation = self.build_observation(Some(&outcome));
        Ok(StepResult {
            observation,
            reward,
            done: truncated,
            info: StepInfo {
                metrics: self.metrics,
                ee,
                rho_d,
                rho_m,
                rm_drop: self.rm_drop.map(|rm| rm.current),
                rm_throughput: self.rm_throughput.map(|rm| rm.current),
                truncated,
                outcome,
            },
        })
    }

    fn build_observation(&self, last: Option<&SlotOutcome>) -> Observation {
        let sim = self.sim.as_ref().expect("reset before observing");
        let config = &sim.config;
        let unit = |v: f64| v.clamp(0.0, 1.0);

        let load = |n_users: usize, max_mbps: f64| {
            if max_mbps == 0.0 {
                0.0
            } else {
                unit(n_users as f64 * config.per_user_load_mbps / max_mbps)
            }
        };
        let chan_mean = |range: std::ops::Range<usize>| {
            let n = range.len().max(1) as f64;
            range.map(|u| sim.queues[u].channel_state.as_f64()).sum::<f64>() / n
        };
        let (drop_now, thr_now) = match last {
            None => (0.0, 0.0),
            Some(outcome) => (
                unit(metrics::slot_drop_stat(outcome, config)),
                unit(metrics::slot_throughput_stat(outcome, config) / self.metrics.mu_max_mbps),
            ),
        };
        let deepest = config.deepest_mode() as f64;
        let ru_modes = sim.rus.iter().map(|r| r.current_mode as f64 / deepest).collect();
        let rm_coords = match (&self.rm_drop, &self.rm_throughput) {
            (Some(d), Some(m)) => Some((
                d.current as f64 / d.granularity as f64,
                m.current as f64 / m.granularity as f64,
            )),
            _ => None,
        };
        Observation {
            load_deadline: load(config.n_deadline, config.max_load_deadline_mbps),
            load_constant: load(config.n_constant, config.max_load_constant_mbps),
            chan_deadline: chan_mean(sim.deadline_users()),
            chan_constant: chan_mean(sim.constant_users()),
            drop_now,
            thr_now,
            ru_modes,
            rm_coords,
        }
    }

    /// The scenario of the current episode (after a reset).
    pub fn scenario(&self) -> Option<&crate::model::ScenarioConfig> {
        self.sim.as_ref().map(|s| &s.config)
    }

    pub fn metrics(&self) -> &RunningMetrics {
        &self.metrics
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn env(regime: Regime) -> SleepEnv {
        SleepEnv::new(ScenarioSpace::default(), regime, 30).unwrap()
    }

    #[test]
    fn reset_is_deterministic_and_initial_state_is_clean() {
        let mut a = env(Regime::Rm10);
        let mut b = env(Regime::Rm10);
        let oa = a.reset(42).unwrap();
        let ob = b.reset(42).unwrap();
        assert_eq!(oa, ob);
        assert_eq!(oa.rm_coords, Some((0.0, 0.0)));
        assert!(oa.ru_modes.iter().all(|&m| m == 0.0));
        assert_eq!(oa.drop_now, 0.0);
        assert_eq!(oa.thr_now, 0.0);
    }

    #[test]
    fn episode_truncates_at_step_limit() {
        let mut e = env(Regime::Markov);
        e.reset(1).unwrap();
        for step in 1..=30 {
            let r = e.step(&[0.0; 4]).unwrap();
            assert_eq!(r.done, step == 30);
        }
        assert!(e.step(&[0.0; 4]).is_err());
    }

    #[test]
    fn out_of_range_action_rejected() {
        let mut e = env(Regime::Markov);
        e.reset(1).unwrap();
        assert!(e.step(&[0.0, 0.0, 0.0, 1.5]).is_err());
        assert!(e.step(&[0.0, 0.0, -0.1, 0.0]).is_err());
        assert!(e.step(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn observation_dim_depends_on_regime() {
        assert_eq!(env(Regime::Markov).obs_dim(), 10);
        assert_eq!(env(Regime::Lagrangian).obs_dim(), 10);
        assert_eq!(env(Regime::Rm10).obs_dim(), 12);
        let mut e = env(Regime::Rm100);
        let obs = e.reset(5).unwrap();
        assert_eq!(obs.to_vec().len(), 12);
    }

    #[test]
    fn markov_reward_with_no_violations_is_ee() {
        // Zero traffic and no throughput floor: violations are negative
        // (slack), so the Markov reward is EE plus the slack terms.
        let space = ScenarioSpace {
            load_mbps: (0.0, 0.0),
            min_throughput_mbps: 0.0,
            ..ScenarioSpace::default()
        };
        let mut e = SleepEnv::new(space, Regime::Markov, 30).unwrap();
        e.reset(3).unwrap();
        let r = e.step(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        let expected = r.info.ee - r.info.rho_d - r.info.rho_m;
        assert_eq!(r.reward, expected);
        assert!(r.info.rho_d < 0.0 && r.info.rho_m <= 0.0);
    }

    #[test]
    fn rm_regime_reward_uses_machine_states() {
        let mut e = env(Regime::Rm10);
        e.reset(9).unwrap();
        let r = e.step(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        let (d, m) = (r.info.rm_drop.unwrap(), r.info.rm_throughput.unwrap());
        let expected = r.info.ee - d as f64 / 10.0 - m as f64 / 10.0;
        assert!((r.reward - expected).abs() < 1e-12);
    }

    #[test]
    fn observation_components_stay_in_unit_interval() {
        // 100 seeds x 10 episodes x 100 slots = 1e5 random-action slots.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xfeed);
        let mut e = SleepEnv::new(ScenarioSpace::default(), Regime::Rm10, 100).unwrap();
        for seed in 0..100u64 {
            for episode in 0..10u64 {
                let mut obs = e.reset(seed * 1_000 + episode).unwrap();
                for _ in 0..100 {
                    for v in obs.to_vec() {
                        assert!((0.0..=1.0).contains(&v), "component {v} out of range");
                    }
                    let action: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..=1.0)).collect();
                    let r = e.step(&action).unwrap();
                    obs = r.observation;
                }
            }
        }
    }

    #[test]
    fn replaying_actions_reproduces_rewards_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let mut first = env(Regime::Rm100);
        first.reset(123).unwrap();
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        for _ in 0..30 {
            let action: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..=1.0)).collect();
            let r = first.step(&action).unwrap();
            actions.push(action);
            rewards.push(r.reward);
        }
        let mut second = env(Regime::Rm100);
        second.reset(123).unwrap();
        for (action, expected) in actions.iter().zip(&rewards) {
            let r = second.step(action).unwrap();
            assert_eq!(r.reward.to_bits(), expected.to_bits());
        }
    }

    #[test]
    fn lagrangian_reward_tracks_multipliers() {
        let mut e = env(Regime::Lagrangian);
        e.lagrange.lambda_d = 2.0;
        e.lagrange.lambda_m = 3.0;
        e.reset(4).unwrap();
        let r = e.step(&[0.5, 0.5, 0.5, 0.5]).unwrap();
        let expected = r.info.ee - 2.0 * r.info.rho_d - 3.0 * r.info.rho_m;
        assert!((r.reward - expected).abs() < 1e-12);
    }
}
