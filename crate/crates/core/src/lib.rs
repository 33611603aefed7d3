//! Time-slotted sleep-control simulator for a radio base station with
//! independently controllable radio units, plus a self-contained TD3 learner
//! and reward-machine constraint tracking.
//!
//! The crate is organised around one simulated base station: [`model`] holds
//! the domain types and stochastic primitives, [`sim`] advances the system
//! slot by slot, [`metrics`] keeps running QoS averages, [`rm`] and [`reward`]
//! turn constraint violations into reward signals, [`td3`] learns sleep
//! policies, [`env`] ties everything into an episodic reset/step API, and
//! [`run`] orchestrates training, evaluation, and trace analysis.
//!
//! With the default `parallel` feature, evaluation sweeps and batched
//! gradient math fan out over rayon. Results are bit-identical to the
//! sequential fallback (`--no-default-features`): reductions use fixed chunk
//! boundaries and a fixed summation order.

pub mod env;
pub mod error;
pub mod metrics;
pub mod model;
pub mod par;
pub mod reward;
pub mod rm;
pub mod run;
pub mod sim;
pub mod td3;
pub mod trace;

pub use error::{Error, Result};
