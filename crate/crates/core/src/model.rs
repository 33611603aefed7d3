//! Domain types and stochastic primitives: sleep-mode tables, radio-unit
//! state, the two-state fading channel, per-user queues, and seeded scenario
//! sampling.
//!
//! Units follow the config surface everywhere: durations in microseconds,
//! powers in watts, energies in joules, loads in Mbit/s. One Mbit/s equals
//! one bit per microsecond, so `load_mbps * slot_us` is bits per slot.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};

/// One entry of the sleep-mode table. Index 0 is the active mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SleepModeSpec {
    /// Mode index h in 0..=H.
    pub index: usize,
    /// Radio power draw while in this mode.
    pub power_w: f64,
    /// Sleep duration before wake-up begins (0 for active).
    pub duration_us: f64,
    /// Wake-up (switching) latency after the sleep duration elapses.
    pub switch_latency_us: f64,
    /// One-shot energy charged when the switch to active completes.
    ///
    /// Defaults to zero: the switching interval is already billed at idle
    /// power in the slot accounting, and a non-zero value here would count
    /// the same joules twice. Set it if the ramp energy exceeds idle-power
    /// draw over the latency.
    pub switch_energy_j: f64,
}

/// Validated sleep-mode table, indexed by mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SleepModeSpec>", into = "Vec<SleepModeSpec>")]
pub struct SleepModeTable {
    modes: Vec<SleepModeSpec>,
}

impl SleepModeTable {
    pub fn new(modes: Vec<SleepModeSpec>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Config("sleep-mode table is empty".into()));
        }
        let active = &modes[0];
        if active.duration_us != 0.0 || active.switch_latency_us != 0.0 || active.switch_energy_j != 0.0 {
            return Err(Error::Config(
                "active mode must have zero duration, latency, and switch energy".into(),
            ));
        }
        for (h, m) in modes.iter().enumerate() {
            if m.index != h {
                return Err(Error::Config(format!(
                    "sleep mode at position {h} has index {}",
                    m.index
                )));
            }
            if !(m.power_w > 0.0) || !m.duration_us.is_finite() || !m.switch_latency_us.is_finite() {
                return Err(Error::Config(format!("sleep mode {h} has non-finite or non-positive fields")));
            }
            if m.switch_energy_j < 0.0 {
                return Err(Error::Config(format!("sleep mode {h} has negative switch energy")));
            }
        }
        for h in 1..modes.len() {
            if modes[h].power_w >= modes[h - 1].power_w {
                return Err(Error::Config(format!(
                    "power must strictly decrease with sleep depth (mode {h})"
                )));
            }
            if h >= 2
                && (modes[h].duration_us <= modes[h - 1].duration_us
                    || modes[h].switch_latency_us <= modes[h - 1].switch_latency_us)
            {
                return Err(Error::Config(format!(
                    "duration and latency must strictly increase with sleep depth (mode {h})"
                )));
            }
            if modes[h].duration_us <= 0.0 || modes[h].switch_latency_us <= 0.0 {
                return Err(Error::Config(format!("sleep mode {h} must have positive duration and latency")));
            }
        }
        Ok(SleepModeTable { modes })
    }

    /// Default table: idle 100 W; four sleep modes at 50/30/15/5 W with
    /// durations 71 us / 1 ms / 10 ms / 1 s and latencies of half each.
    /// The power column is a documented default, not a measured value.
    pub fn default_table() -> Self {
        let spec = |index, power_w, duration_us: f64, switch_latency_us: f64| SleepModeSpec {
            index,
            power_w,
            duration_us,
            switch_latency_us,
            switch_energy_j: 0.0,
        };
        SleepModeTable::new(vec![
            spec(0, 100.0, 0.0, 0.0),
            spec(1, 50.0, 71.0, 35.5),
            spec(2, 30.0, 1_000.0, 500.0),
            spec(3, 15.0, 10_000.0, 5_000.0),
            spec(4, 5.0, 1_000_000.0, 500_000.0),
        ])
        .expect("default table is valid")
    }

    pub fn deepest(&self) -> usize {
        self.modes.len() - 1
    }

    pub fn get(&self, h: usize) -> &SleepModeSpec {
        &self.modes[h]
    }

    pub fn idle_power_w(&self) -> f64 {
        self.modes[0].power_w
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SleepModeSpec> {
        self.modes.iter()
    }
}

impl TryFrom<Vec<SleepModeSpec>> for SleepModeTable {
    type Error = Error;
    fn try_from(modes: Vec<SleepModeSpec>) -> Result<Self> {
        SleepModeTable::new(modes)
    }
}

impl From<SleepModeTable> for Vec<SleepModeSpec> {
    fn from(t: SleepModeTable) -> Self {
        t.modes
    }
}

/// Per-radio-unit mode timeline state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuState {
    /// 1-based radio-unit id.
    pub ru_id: usize,
    /// Current mode h; 0 means active.
    pub current_mode: usize,
    /// Sleep time left before the wake-up phase starts.
    pub remaining_sleep_us: f64,
    /// Wake-up time left; runs after the sleep phase drains.
    pub remaining_switch_us: f64,
}

impl RuState {
    pub fn active(ru_id: usize) -> Self {
        RuState {
            ru_id,
            current_mode: 0,
            remaining_sleep_us: 0.0,
            remaining_switch_us: 0.0,
        }
    }

    pub fn is_active(&self) -> bool {
        self.current_mode == 0
    }

    /// Put the unit into sleep mode `h` (callers ensure it is active).
    pub fn enter_mode(&mut self, spec: &SleepModeSpec) {
        debug_assert!(self.is_active());
        self.current_mode = spec.index;
        self.remaining_sleep_us = spec.duration_us;
        self.remaining_switch_us = spec.switch_latency_us;
    }
}

/// Gilbert-Elliot transition probabilities, per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub p_good_to_bad: f64,
    pub p_bad_to_good: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_good_to_bad", self.p_good_to_bad),
            ("p_bad_to_good", self.p_bad_to_good),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Long-run fraction of slots spent in the Good state.
    pub fn stationary_good(&self) -> f64 {
        let denom = self.p_good_to_bad + self.p_bad_to_good;
        if denom == 0.0 {
            // Both states absorbing; convention: stay where you start.
            1.0
        } else {
            self.p_bad_to_good / denom
        }
    }
}

/// Two-state fading channel condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelState {
    Bad,
    Good,
}

impl ChannelState {
    pub fn as_f64(self) -> f64 {
        match self {
            ChannelState::Bad => 0.0,
            ChannelState::Good => 1.0,
        }
    }

    pub fn is_good(self) -> bool {
        matches!(self, ChannelState::Good)
    }
}

/// Advance one user channel by one slot.
pub fn channel_step(state: ChannelState, params: ChannelParams, rng: &mut impl Rng) -> ChannelState {
    match state {
        ChannelState::Good => {
            if rng.gen_bool(params.p_good_to_bad) {
                ChannelState::Bad
            } else {
                ChannelState::Good
            }
        }
        ChannelState::Bad => {
            if rng.gen_bool(params.p_bad_to_good) {
                ChannelState::Good
            } else {
                ChannelState::Bad
            }
        }
    }
}

/// A queued packet. `deadline_slot` is `None` for the synthetic head packet
/// of constant-rate users, which never expires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub arrival_slot: u64,
    pub deadline_slot: Option<u64>,
    pub size_bits: u64,
}

/// Traffic class of a user queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueKind {
    Deadline,
    ConstantRate,
}

/// Per-user FIFO queue plus the user's channel state.
#[derive(Debug, Clone)]
pub struct UserQueue {
    /// 1-based user id; deadline users come first.
    pub user_id: usize,
    pub kind: QueueKind,
    pub buffer: VecDeque<Packet>,
    pub channel_state: ChannelState,
}

impl UserQueue {
    pub fn new(user_id: usize, kind: QueueKind, channel_state: ChannelState) -> Self {
        UserQueue {
            user_id,
            kind,
            buffer: VecDeque::new(),
            channel_state,
        }
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }
}

/// How group violation statistics aggregate over users.
///
/// `Mean` keeps the violation signals inside (-1, 1); `Sum` aggregates the
/// raw per-user sums and is provided as an escape hatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ViolationAveraging {
    #[default]
    Mean,
    Sum,
}

/// The sampling space scenarios are drawn from, plus every fixed parameter.
/// This is the root of the plain-text configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpace {
    /// Inclusive range for the number of deadline-constrained users.
    pub n_deadline: (u32, u32),
    /// Inclusive range for the number of constant-rate users.
    pub n_constant: (u32, u32),
    /// Uniform range for the per-user offered load in Mbit/s.
    pub load_mbps: (f64, f64),
    /// Common packet deadline T, in slots.
    pub deadline_slots: u64,
    /// Buffer size B, in packets.
    pub buffer_size: usize,
    pub channel: ChannelParams,
    pub sleep_modes: SleepModeTable,
    /// Number of radio units G.
    pub g_rus: usize,
    /// Slot duration, microseconds.
    pub slot_us: f64,
    pub packet_bits: u64,
    /// Transmit power under a Good channel.
    pub tx_power_low_w: f64,
    /// Transmit power under a Bad channel.
    pub tx_power_high_w: f64,
    /// Allowed packet drop rate D.
    pub drop_limit: f64,
    /// Minimum required per-user throughput, Mbit/s.
    pub min_throughput_mbps: f64,
    pub violation_averaging: ViolationAveraging,
}

impl Default for ScenarioSpace {
    fn default() -> Self {
        ScenarioSpace {
            n_deadline: (4, 5),
            n_constant: (10, 60),
            load_mbps: (0.1, 0.2),
            deadline_slots: 5,
            buffer_size: 10,
            channel: ChannelParams {
                p_good_to_bad: 0.1,
                p_bad_to_good: 0.3,
            },
            sleep_modes: SleepModeTable::default_table(),
            g_rus: 4,
            slot_us: 10_000.0,
            packet_bits: 12_000,
            tx_power_low_w: 10.0,
            tx_power_high_w: 20.0,
            drop_limit: 0.1,
            min_throughput_mbps: 0.05,
            violation_averaging: ViolationAveraging::Mean,
        }
    }
}

impl ScenarioSpace {
    pub fn validate(&self) -> Result<()> {
        let ensure = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.into()))
            }
        };
        ensure(self.n_deadline.0 <= self.n_deadline.1, "n_deadline range has lo > hi")?;
        ensure(self.n_constant.0 <= self.n_constant.1, "n_constant range has lo > hi")?;
        ensure(
            self.load_mbps.0 <= self.load_mbps.1 && self.load_mbps.0 >= 0.0,
            "load_mbps range malformed",
        )?;
        ensure(self.n_deadline.0 >= 1, "need at least one deadline user")?;
        ensure(self.n_constant.0 >= 1, "need at least one constant-rate user")?;
        ensure(self.deadline_slots >= 2, "deadline_slots must be at least 2 for packets to be servable")?;
        ensure(self.buffer_size >= 1, "buffer_size must be at least 1")?;
        self.channel.validate()?;
        ensure(self.g_rus >= 1, "g_rus must be at least 1")?;
        ensure(self.slot_us > 0.0, "slot_us must be positive")?;
        ensure(self.packet_bits > 0, "packet_bits must be positive")?;
        ensure(
            self.tx_power_low_w >= 0.0 && self.tx_power_high_w >= self.tx_power_low_w,
            "tx powers malformed (need 0 <= low <= high)",
        )?;
        ensure(
            self.drop_limit > 0.0 && self.drop_limit < 1.0,
            "drop_limit must lie in (0, 1)",
        )?;
        let mu_max = self.packet_bits as f64 / self.slot_us;
        ensure(
            self.min_throughput_mbps >= 0.0 && self.min_throughput_mbps < mu_max,
            "min_throughput_mbps must lie in [0, packet_bits / slot_us)",
        )?;
        // Bernoulli arrival probability must be a probability at the top of
        // the load range.
        let p_max = self.load_mbps.1 * self.slot_us / self.packet_bits as f64;
        ensure(
            p_max <= 1.0,
            &format!("arrival probability load*slot/packet = {p_max} exceeds 1 at the top of the load range"),
        )?;
        Ok(())
    }

    /// Load the space from a TOML key-value file (see README for schema).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let space: ScenarioSpace = toml::from_str(text)?;
        space.validate()?;
        Ok(space)
    }
}

/// A concrete sampled scenario; fixed for the duration of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_deadline: usize,
    pub n_constant: usize,
    pub per_user_load_mbps: f64,
    pub deadline_slots: u64,
    pub buffer_size: usize,
    pub channel: ChannelParams,
    pub sleep_modes: SleepModeTable,
    pub g_rus: usize,
    pub slot_us: f64,
    pub packet_bits: u64,
    pub tx_power_low_w: f64,
    pub tx_power_high_w: f64,
    pub drop_limit: f64,
    pub min_throughput_mbps: f64,
    pub violation_averaging: ViolationAveraging,
    pub seed: u64,
    /// Observation normalisation constants, taken from the sampling space.
    pub max_load_deadline_mbps: f64,
    pub max_load_constant_mbps: f64,
}

impl ScenarioConfig {
    pub fn n_users(&self) -> usize {
        self.n_deadline + self.n_constant
    }

    /// Bernoulli arrival probability per deadline user per slot. Constant
    /// once the scenario is sampled.
    pub fn arrival_prob(&self) -> f64 {
        self.per_user_load_mbps * self.slot_us / self.packet_bits as f64
    }

    /// Deepest sleep-mode index H.
    pub fn deepest_mode(&self) -> usize {
        self.sleep_modes.deepest()
    }
}

/// Sample a scenario. Pure function of `(seed, space)`.
pub fn make_scenario(seed: u64, space: &ScenarioSpace) -> Result<ScenarioConfig> {
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_deadline = rng.gen_range(space.n_deadline.0..=space.n_deadline.1) as usize;
    let n_constant = rng.gen_range(space.n_constant.0..=space.n_constant.1) as usize;
    let per_user_load_mbps = if space.load_mbps.0 == space.load_mbps.1 {
        space.load_mbps.0
    } else {
        rng.gen_range(space.load_mbps.0..space.load_mbps.1)
    };
    Ok(ScenarioConfig {
        n_deadline,
        n_constant,
        per_user_load_mbps,
        deadline_slots: space.deadline_slots,
        buffer_size: space.buffer_size,
        channel: space.channel,
        sleep_modes: space.sleep_modes.clone(),
        g_rus: space.g_rus,
        slot_us: space.slot_us,
        packet_bits: space.packet_bits,
        tx_power_low_w: space.tx_power_low_w,
        tx_power_high_w: space.tx_power_high_w,
        drop_limit: space.drop_limit,
        min_throughput_mbps: space.min_throughput_mbps,
        violation_averaging: space.violation_averaging,
        seed,
        max_load_deadline_mbps: space.n_deadline.1 as f64 * space.load_mbps.1,
        max_load_constant_mbps: space.n_constant.1 as f64 * space.load_mbps.1,
    })
}

/// Draw one Bernoulli arrival for a deadline queue.
pub fn arrival_draw(config: &ScenarioConfig, rng: &mut impl Rng) -> bool {
    let p = config.arrival_prob();
    debug_assert!((0.0..=1.0).contains(&p));
    rng.gen_bool(p)
}

/// Power required for a successful transmission under the given channel
/// condition. A scheduled transmission always spends exactly this power.
pub fn required_tx_power(channel_state: ChannelState, config: &ScenarioConfig) -> f64 {
    match channel_state {
        ChannelState::Bad => config.tx_power_high_w,
        ChannelState::Good => config.tx_power_low_w,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_is_valid_and_monotone() {
        let t = SleepModeTable::default_table();
        assert_eq!(t.deepest(), 4);
        assert_eq!(t.get(3).duration_us, 10_000.0);
        assert_eq!(t.get(1).switch_latency_us, 35.5);
        for h in 1..t.len() {
            assert!(t.get(h).power_w < t.idle_power_w());
        }
    }

    #[test]
    fn table_rejects_non_monotone_power() {
        let mut modes: Vec<SleepModeSpec> = SleepModeTable::default_table().into();
        modes[2].power_w = 60.0; // above SM1
        assert!(SleepModeTable::new(modes).is_err());
    }

    #[test]
    fn scenario_is_deterministic_in_seed() {
        let space = ScenarioSpace::default();
        let a = make_scenario(7, &space).unwrap();
        let b = make_scenario(7, &space).unwrap();
        assert_eq!(a, b);
        let c = make_scenario(8, &space).unwrap();
        assert!(a.seed != c.seed);
    }

    #[test]
    fn scenario_respects_ranges() {
        let space = ScenarioSpace::default();
        for seed in 0..200 {
            let s = make_scenario(seed, &space).unwrap();
            assert!(s.n_deadline == 4 || s.n_deadline == 5);
            assert!((10..=60).contains(&s.n_constant));
            assert!((0.1..=0.2).contains(&s.per_user_load_mbps));
        }
    }

    #[test]
    fn degenerate_ranges_give_point_values() {
        let space = ScenarioSpace {
            n_deadline: (4, 4),
            n_constant: (4, 4),
            load_mbps: (0.15, 0.15),
            ..ScenarioSpace::default()
        };
        let s = make_scenario(123, &space).unwrap();
        assert_eq!(s.n_deadline, 4);
        assert_eq!(s.n_constant, 4);
        assert_eq!(s.per_user_load_mbps, 0.15);
    }

    #[test]
    fn malformed_ranges_rejected() {
        let space = ScenarioSpace {
            n_deadline: (5, 4),
            ..ScenarioSpace::default()
        };
        assert!(make_scenario(0, &space).is_err());
    }

    #[test]
    fn arrival_probability_formula() {
        let space = ScenarioSpace {
            load_mbps: (0.15, 0.15),
            ..ScenarioSpace::default()
        };
        let s = make_scenario(0, &space).unwrap();
        // 0.15 Mbps * 10 ms / 12000 bits
        assert!((s.arrival_prob() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn overload_rejected_at_config_time() {
        let space = ScenarioSpace {
            load_mbps: (0.1, 2.0), // p would reach 1.67
            ..ScenarioSpace::default()
        };
        assert!(space.validate().is_err());
    }

    #[test]
    fn channel_absorbing_and_forced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stay = ChannelParams {
            p_good_to_bad: 0.0,
            p_bad_to_good: 0.3,
        };
        for _ in 0..100 {
            assert_eq!(channel_step(ChannelState::Good, stay, &mut rng), ChannelState::Good);
        }
        let force = ChannelParams {
            p_good_to_bad: 0.1,
            p_bad_to_good: 1.0,
        };
        for _ in 0..100 {
            assert_eq!(channel_step(ChannelState::Bad, force, &mut rng), ChannelState::Good);
        }
    }

    #[test]
    fn channel_stationary_distribution() {
        let params = ChannelParams {
            p_good_to_bad: 0.1,
            p_bad_to_good: 0.3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut state = ChannelState::Good;
        let mut good: u64 = 0;
        let n = 1_000_000;
        for _ in 0..n {
            state = channel_step(state, params, &mut rng);
            good += state.is_good() as u64;
        }
        let frac = good as f64 / n as f64;
        assert!((frac - params.stationary_good()).abs() < 0.01, "frac = {frac}");
    }

    #[test]
    fn arrival_rate_matches_probability() {
        let space = ScenarioSpace {
            load_mbps: (0.15, 0.15),
            ..ScenarioSpace::default()
        };
        let cfg = make_scenario(3, &space).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| arrival_draw(&cfg, &mut rng)).count();
        let rate = hits as f64 / n as f64;
        assert!((rate - 0.125).abs() < 0.005, "rate = {rate}");
    }

    #[test]
    fn zero_load_never_arrives() {
        let space = ScenarioSpace {
            load_mbps: (0.0, 0.0),
            min_throughput_mbps: 0.0,
            ..ScenarioSpace::default()
        };
        let cfg = make_scenario(3, &space).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!((0..1000).all(|_| !arrival_draw(&cfg, &mut rng)));
    }

    #[test]
    fn tx_power_by_channel_state() {
        let cfg = make_scenario(0, &ScenarioSpace::default()).unwrap();
        assert_eq!(required_tx_power(ChannelState::Bad, &cfg), 20.0);
        assert_eq!(required_tx_power(ChannelState::Good, &cfg), 10.0);
    }

    #[test]
    fn space_roundtrips_through_toml() {
        let space = ScenarioSpace::default();
        let text = toml::to_string(&space).unwrap();
        let back = ScenarioSpace::from_toml_str(&text).unwrap();
        assert_eq!(space, back);
    }
}
