//! Heuristic optimizers and heuristic-aided learning for phase control of a
//! reconfigurable intelligent surface (RIS) in a multi-user downlink.
//!
//! The crate is organised bottom-up:
//!
//! * [`sysmodel`] draws Rician channels and evaluates the zero-forcing sum-rate
//!   of a grouped, discrete phase configuration.
//! * [`search`] and [`metaheuristics`] are the classical optimizers (exhaustive,
//!   random, greedy, local search, PSO, GA, tabu).
//! * [`matching`] solves association problems with externalities by swap matching.
//! * [`nn`], [`drl`] and [`heuristic_drl`] implement a small DQN stack and the
//!   greedy-pruned action space variant.
//! * [`supervised`] and [`hierarchical`] are the heuristic-labelled predictor and
//!   the two-timescale controller.
//! * [`harness`] runs the seeded, replicated experiment recipes used by the CLI.

pub mod drl;
pub mod error;
pub mod harness;
pub mod heuristic_drl;
pub mod hierarchical;
pub mod matching;
pub mod metaheuristics;
pub mod nn;
pub mod search;
pub mod supervised;
pub mod sysmodel;

pub use error::{Error, Result};
pub use search::{OnOffMask, SearchResult};
pub use sysmodel::{ChannelRealization, PhaseConfig, RateObjective, RateResult, SystemConfig};

use rand::SeedableRng;

/// Deterministic random stream used throughout the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
