//! Within-episode running averages and the violation signals derived from
//! them: energy efficiency, drop-rate violation, and throughput violation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ScenarioConfig, ViolationAveraging};
use crate::sim::SlotOutcome;

/// Running per-episode averages. Reset with every new scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunningMetrics {
    pub slots_elapsed: u64,
    /// Running mean of the per-slot deadline-group drop rate.
    pub mean_drop_rate: f64,
    /// Running mean of the per-slot constant-group served throughput, Mbit/s.
    pub mean_throughput_mbps: f64,
    /// Running mean of per-slot energy efficiency.
    pub mean_ee: f64,
    pub cum_switch_energy_j: f64,
    /// Per-user throughput ceiling, Mbit/s.
    pub mu_max_mbps: f64,
}

/// Per-user throughput ceiling: one packet per slot under the
/// one-packet-per-RU service rule.
pub fn max_throughput(config: &ScenarioConfig) -> f64 {
    config.packet_bits as f64 / config.slot_us
}

/// Relative energy saving against the all-active counterfactual.
pub fn energy_efficiency(w0: f64, w: f64) -> Result<f64> {
    if !(w0 > 0.0) {
        return Err(Error::Contract(format!("all-active power must be positive, got {w0}")));
    }
    if !(0.0..=w0).contains(&w) {
        return Err(Error::Contract(format!("actual power {w} outside [0, {w0}]")));
    }
    Ok((w0 - w) / w0)
}

/// Group drop rate for one slot: per-user drop rates aggregated over the
/// deadline users by the configured averaging.
pub fn slot_drop_stat(outcome: &SlotOutcome, config: &ScenarioConfig) -> f64 {
    let sum: f64 = (0..config.n_deadline).map(|u| outcome.drop_rate(u)).sum();
    match config.violation_averaging {
        ViolationAveraging::Mean => sum / config.n_deadline as f64,
        ViolationAveraging::Sum => sum,
    }
}

/// Group served throughput for one slot in Mbit/s, aggregated over the
/// constant-rate users by the configured averaging.
pub fn slot_throughput_stat(outcome: &SlotOutcome, config: &ScenarioConfig) -> f64 {
    let sum: f64 = (config.n_deadline..config.n_users())
        .map(|u| outcome.per_user_served_bits[u] as f64 / config.slot_us)
        .sum();
    match config.violation_averaging {
        ViolationAveraging::Mean => sum / config.n_constant as f64,
        ViolationAveraging::Sum => sum,
    }
}

impl RunningMetrics {
    pub fn new(config: &ScenarioConfig) -> Self {
        RunningMetrics {
            slots_elapsed: 0,
            mean_drop_rate: 0.0,
            mean_throughput_mbps: 0.0,
            mean_ee: 0.0,
            cum_switch_energy_j: 0.0,
            mu_max_mbps: max_throughput(config),
        }
    }

    /// Fold one slot into the running means.
    pub fn update(&mut self, outcome: &SlotOutcome, config: &ScenarioConfig) -> Result<()> {
        let drop_stat = slot_drop_stat(outcome, config);
        let throughput_stat = slot_throughput_stat(outcome, config);
        let ee = energy_efficiency(outcome.power_all_active_w, outcome.power_actual_w)?;
        self.slots_elapsed += 1;
        let n = self.slots_elapsed as f64;
        self.mean_drop_rate += (drop_stat - self.mean_drop_rate) / n;
        self.mean_throughput_mbps += (throughput_stat - self.mean_throughput_mbps) / n;
        self.mean_ee += (ee - self.mean_ee) / n;
        self.cum_switch_energy_j += outcome.switch_energy_j;
        Ok(())
    }

    /// Drop-rate violation: observed running drop rate minus the allowed
    /// rate D. Negative while the constraint is satisfied.
    pub fn drop_violation(&self, drop_limit: f64) -> f64 {
        self.mean_drop_rate - drop_limit
    }

    /// Throughput violation: required minus served throughput, normalised
    /// by the ceiling. Clamped into the open interval above -1.
    pub fn throughput_violation(&self, min_throughput_mbps: f64) -> Result<f64> {
        if !(self.mu_max_mbps > 0.0) {
            return Err(Error::Config(format!(
                "mu_max must be positive, got {}",
                self.mu_max_mbps
            )));
        }
        let raw = (min_throughput_mbps - self.mean_throughput_mbps) / self.mu_max_mbps;
        Ok(raw.max((-1.0f64).next_up()))
    }
}
