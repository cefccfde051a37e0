//! Cooperative optimal-mining model for proof-of-work blockchains.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! parts of the model:
//!
//! * [`model`]: environment and player parameters, the effective block value.
//! * [`equilibrium`]: the closed-form per-state equilibrium, the participation
//!   threshold, greedy active-set selection and a best-response oracle.
//! * [`stochastic`]: per-state expected utilities over the arrival/departure
//!   chain and its stationary occupancy.
//! * [`pool`]: the pool sub-game fixed point, work distribution, the protocol
//!   game, reward shares and the cooperation/desertion scenario evaluator.
//! * [`dilemma`]: social-dilemma payoff vectors and fair zero-determinant
//!   strategies.
//! * [`simulate`]: the seeded Monte Carlo engine for the repeated dilemma.
//!
//! File formats, the command-line interface and thread pools live in the
//! companion `coopmine` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dilemma;
pub mod equilibrium;
pub mod model;
mod numeric;
pub mod pool;
pub mod simulate;
pub mod stochastic;

pub use dilemma::{CoplayerPayoffs, DilemmaError, DilemmaPayoffs, MemoryOne, PhiInterval, ZdStrategy};
pub use equilibrium::{EquilibriumError, EquilibriumSolution, OracleGrid, Participation, PlayerOutcome};
pub use model::{effective_reward, validate_env, GameEnv, GameState, PlayerSpec, ValidatedEnv, ValidationError};
pub use pool::{PoolError, PoolSpec, RewardShares, WorkAssignment};
pub use simulate::{SimConfig, SimError, SimTrajectory, StrategyGroup};
pub use stochastic::{ClassChain, StochasticError, UtilityTable};

/// Minutes in a (365-day) year; converts per-minute power to annual energy.
pub const MINUTES_PER_YEAR: f64 = 525_600.0;
