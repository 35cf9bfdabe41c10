//! Discrete-time simulator for two-layer device-to-device relaying in dense
//! indoor THz rooms.
//!
//! Devices with line of sight to the access point (Layer 1) act as learning
//! agents that decide, one shadowed device at a time, whether to open a relay
//! link. Agents share a linear Q-function and are coordinated through the
//! access point, which tracks coverage flags and hands out rewards.
//!
//! Module map:
//!
//! - [`link_budget`]: THz radio model (gain, spreading and absorption loss,
//!   achievable rate, beamwidth and range solvers).
//! - [`environment`]: room geometry, mobility, line of sight, layer split.
//! - [`agents`]: features, linear Q-values, action selection, TD updates,
//!   rewards and policy merging.
//! - [`simulation`]: episode loop and the central / no-relay baselines.
//! - [`metrics`]: per-episode records, aggregation and CSV/JSON output.
//! - [`cli`]: the `udld` command line front end.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod cli;
pub mod config;
pub mod environment;
pub mod error;
pub mod figdata;
pub mod link_budget;
pub mod matching;
pub mod metrics;
pub mod simulation;
pub mod sweep;

pub use config::SimConfig;
pub use error::{Error, Result};
