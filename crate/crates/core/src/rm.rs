//! Reward-machine automata: a generic finite-state machine with integer
//! labels and per-state rewards, and the concrete constraint machines used
//! for the drop-rate and throughput constraints.
//!
//! A constraint machine has states `u_0..u_L`. Each slot, the violation
//! signal is quantised to an integer label `round(L * rho)` and the machine
//! walks by that amount, clamped to `[0, L]`. The state reward is `-l/L`,
//! read at the successor state so the first violating step is already
//! penalised. The saturation state `u_L` is ordinary: the machine can walk
//! back down, and episodes never terminate on machine state.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Quantise a violation signal to an integer label, rounding half away
/// from zero.
pub fn quantize(rho: f64, granularity: usize) -> i64 {
    debug_assert!(granularity >= 1);
    (granularity as f64 * rho).round() as i64
}

/// Clamped-addition transition over states `0..=granularity`.
pub fn rm_transition(state: usize, delta: i64, granularity: usize) -> usize {
    (state as i64 + delta).clamp(0, granularity as i64) as usize
}

/// State reward `-l/L`; zero at the initial state, -1 at saturation.
pub fn rm_reward(state: usize, granularity: usize) -> f64 {
    debug_assert!(state <= granularity);
    -(state as f64) / granularity as f64
}

/// Append the two machine coordinates, scaled to `[0, 1]`, to an
/// observation vector.
pub fn augment(mut observation: Vec<f64>, u_d: usize, u_m: usize, granularity: usize) -> Vec<f64> {
    observation.push(u_d as f64 / granularity as f64);
    observation.push(u_m as f64 / granularity as f64);
    observation
}

/// Which constraint a machine tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    Drop,
    Throughput,
}

/// Cursor over the constraint machine for one constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintRM {
    /// Number of distinguishable violation levels L.
    pub granularity: usize,
    /// Current state index in `0..=granularity`.
    pub current: usize,
    pub kind: ConstraintKind,
}

impl ConstraintRM {
    pub fn new(granularity: usize, kind: ConstraintKind) -> Self {
        assert!(granularity >= 1);
        ConstraintRM {
            granularity,
            current: 0,
            kind,
        }
    }

    /// Quantise the violation, walk, and read the successor-state reward.
    pub fn step(&mut self, rho: f64) -> f64 {
        let delta = quantize(rho, self.granularity);
        self.current = rm_transition(self.current, delta, self.granularity);
        rm_reward(self.current, self.granularity)
    }

    pub fn reset(&mut self) {
        self.current = 0;
    }

    pub fn at_saturation(&self) -> bool {
        self.current == self.granularity
    }
}

type TransitionFn = Box<dyn Fn(usize, i64) -> usize + Send + Sync>;
type RewardFn = Box<dyn Fn(usize) -> f64 + Send + Sync>;

/// Generic reward machine: states `0..n_states`, initial state 0, a set of
/// terminal states, an integer-labelled transition function, and a
/// state-reward function.
pub struct RewardMachine {
    pub n_states: usize,
    pub initial: usize,
    pub terminal: BTreeSet<usize>,
    transition: TransitionFn,
    state_reward: RewardFn,
}

impl RewardMachine {
    pub fn new(
        n_states: usize,
        terminal: BTreeSet<usize>,
        transition: TransitionFn,
        state_reward: RewardFn,
    ) -> Self {
        RewardMachine {
            n_states,
            initial: 0,
            terminal,
            transition,
            state_reward,
        }
    }

    /// The clamped-walk constraint machine as a generic reward machine.
    /// Its terminal set is empty: saturation does not end an episode.
    pub fn constraint(granularity: usize) -> Self {
        RewardMachine::new(
            granularity + 1,
            BTreeSet::new(),
            Box::new(move |state, delta| rm_transition(state, delta, granularity)),
            Box::new(move |state| rm_reward(state, granularity)),
        )
    }

    /// One transition with successor-state reward; terminal states absorb
    /// with zero reward.
    pub fn step(&self, state: usize, label: i64) -> (usize, f64) {
        debug_assert!(state < self.n_states);
        if self.terminal.contains(&state) {
            return (state, 0.0);
        }
        let next = (self.transition)(state, label);
        debug_assert!(next < self.n_states);
        (next, (self.state_reward)(next))
    }
}
