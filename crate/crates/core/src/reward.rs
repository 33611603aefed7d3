//! Per-slot reward variants and the Lagrange multiplier state for the
//! dual-ascent baseline.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Reward regime selected for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Reward-machine reward with granularity 100.
    Rm100,
    /// Reward-machine reward with granularity 10.
    Rm10,
    /// Plain Markovian reward.
    Markov,
    /// Markovian reward weighted by dual-ascent multipliers.
    Lagrangian,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Rm100, Regime::Rm10, Regime::Markov, Regime::Lagrangian];

    /// Machine granularity, for the regimes that track one.
    pub fn rm_granularity(self) -> Option<usize> {
        match self {
            Regime::Rm100 => Some(100),
            Regime::Rm10 => Some(10),
            Regime::Markov | Regime::Lagrangian => None,
        }
    }

    pub fn uses_rm(self) -> bool {
        self.rm_granularity().is_some()
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Rm100 => "rm100",
            Regime::Rm10 => "rm10",
            Regime::Markov => "markov",
            Regime::Lagrangian => "lagrangian",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "rm100" => Ok(Regime::Rm100),
            "rm10" => Ok(Regime::Rm10),
            "markov" => Ok(Regime::Markov),
            "lagrangian" => Ok(Regime::Lagrangian),
            other => Err(Error::Config(format!(
                "unknown regime {other:?}; expected rm100, rm10, markov, or lagrangian"
            ))),
        }
    }
}

/// Markovian reward: energy efficiency minus both instantaneous violations.
pub fn reward_markov(ee: f64, rho_d: f64, rho_m: f64) -> f64 {
    ee - rho_d - rho_m
}

/// Reward-machine reward: energy efficiency plus both machine-state rewards.
pub fn reward_rm(ee: f64, r_d: f64, r_m: f64) -> f64 {
    debug_assert!((-1.0..=0.0).contains(&r_d) && (-1.0..=0.0).contains(&r_m));
    ee + r_d + r_m
}

/// Lagrangian reward: violations weighted by the current multipliers.
pub fn reward_lagrangian(ee: f64, rho_d: f64, rho_m: f64, lag: &LagrangeState) -> f64 {
    ee - lag.lambda_d * rho_d - lag.lambda_m * rho_m
}

/// Dual variables for the two constraints, updated once per episode by
/// projected ascent on the episode-mean violations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangeState {
    pub lambda_d: f64,
    pub lambda_m: f64,
    /// Ascent rate per episode.
    pub lr: f64,
}

impl Default for LagrangeState {
    fn default() -> Self {
        LagrangeState {
            lambda_d: 0.0,
            lambda_m: 0.0,
            lr: 0.01,
        }
    }
}

impl LagrangeState {
    /// One projected dual-ascent step: `lambda <- max(0, lambda + lr * rho)`.
    pub fn update(&mut self, episode_mean_rho_d: f64, episode_mean_rho_m: f64) {
        self.lambda_d = (self.lambda_d + self.lr * episode_mean_rho_d).max(0.0);
        self.lambda_m = (self.lambda_m + self.lr * episode_mean_rho_m).max(0.0);
    }
}
