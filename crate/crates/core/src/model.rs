//! Parameters of the mining game and the effective block value they imply.
//!
//! Units follow one convention throughout: money in dollars, power in kWh/min,
//! time in minutes.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;

/// Global environment shared by every player of one game.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GameEnv {
    /// Fixed block reward (BTC).
    pub block_reward: f64,
    /// Currency conversion rate ($/BTC).
    pub exchange_rate: f64,
    /// Proof-of-work resolution rate (blocks/min).
    pub pow_rate: f64,
    /// Average fee per transaction (BTC).
    pub tx_fee: f64,
    /// Power of the nonstrategic players (kWh/min).
    pub nonstrategic_power: f64,
    /// Average energy efficiency of the nonstrategic players.
    pub nonstrategic_efficiency: f64,
}

impl GameEnv {
    /// Efficiency-weighted nonstrategic power, `k_l * l`.
    pub fn nonstrategic_effective_power(&self) -> f64 {
        self.nonstrategic_efficiency * self.nonstrategic_power
    }

    /// Same environment with the nonstrategic pool extended by `power` at
    /// efficiency `efficiency`; the average efficiency is re-weighted.
    pub fn with_extra_nonstrategic(&self, power: f64, efficiency: f64) -> GameEnv {
        let total = self.nonstrategic_power + power;
        let mut env = *self;
        if total > 0.0 {
            env.nonstrategic_efficiency =
                (self.nonstrategic_effective_power() + efficiency * power) / total;
        }
        env.nonstrategic_power = total;
        env
    }
}

/// One strategic actor: a pool in the pool sub-game, a miner in the protocol
/// game or a solo miner.
#[derive(Clone, Debug, PartialEq)]
pub struct PlayerSpec {
    pub id: String,
    /// Marginal cost ($ per kWh/min per min).
    pub cost: f64,
    /// Energy efficiency factor (relative).
    pub efficiency: f64,
    /// Transactions per block.
    pub transactions: f64,
    /// Propagation delay factor (min/transaction).
    pub delay: f64,
    /// Arrival rate (1/min).
    pub arrival_rate: f64,
    /// Departure rate (1/min).
    pub departure_rate: f64,
    /// Maximum computing power (kWh/min).
    pub capacity: f64,
}

impl PlayerSpec {
    /// A player with the given cost and efficiency, an empty block, static
    /// presence and unlimited capacity.
    pub fn new(id: impl Into<String>, cost: f64, efficiency: f64) -> Self {
        Self {
            id: id.into(),
            cost,
            efficiency,
            transactions: 0.0,
            delay: 0.0,
            arrival_rate: 0.0,
            departure_rate: 0.0,
            capacity: f64::INFINITY,
        }
    }

    pub fn with_block(mut self, transactions: f64, delay: f64) -> Self {
        self.transactions = transactions;
        self.delay = delay;
        self
    }

    pub fn with_rates(mut self, arrival: f64, departure: f64) -> Self {
        self.arrival_rate = arrival;
        self.departure_rate = departure;
        self
    }

    pub fn with_capacity(mut self, capacity: f64) -> Self {
        self.capacity = capacity;
        self
    }

    /// Cost per unit of efficiency; players are ranked by this ratio.
    pub fn cost_ratio(&self) -> f64 {
        self.cost / self.efficiency
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut errors = ValidationError::default();
        non_negative(&mut errors, "c", self.cost);
        positive(&mut errors, "k", self.efficiency);
        non_negative(&mut errors, "t", self.transactions);
        non_negative(&mut errors, "z", self.delay);
        non_negative(&mut errors, "lambda", self.arrival_rate);
        non_negative(&mut errors, "mu", self.departure_rate);
        if self.capacity.is_nan() || self.capacity < 0.0 {
            errors.push("capacity", "must be non-negative");
        }
        errors.into_result(())
    }
}

/// Ordering used everywhere players are ranked: ascending `c/k`, ties broken
/// on the identifier.
pub(crate) fn by_cost_ratio(a: &PlayerSpec, b: &PlayerSpec) -> core::cmp::Ordering {
    a.cost_ratio()
        .total_cmp(&b.cost_ratio())
        .then_with(|| a.id.cmp(&b.id))
}

/// A [`GameEnv`] whose invariants have been checked.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidatedEnv(GameEnv);

impl ValidatedEnv {
    pub fn into_inner(self) -> GameEnv {
        self.0
    }
}

impl Deref for ValidatedEnv {
    type Target = GameEnv;

    fn deref(&self) -> &GameEnv {
        &self.0
    }
}

/// One violated invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: &'static str,
}

/// Every invariant violated by a parameter set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl ValidationError {
    fn push(&mut self, field: &'static str, message: &'static str) {
        self.violations.push(Violation { field, message });
    }

    fn into_result<T>(self, value: T) -> Result<T, ValidationError> {
        if self.violations.is_empty() {
            Ok(value)
        } else {
            Err(self)
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{} {}", v.field, v.message)?;
        }
        Ok(())
    }
}

impl core::error::Error for ValidationError {}

fn positive(errors: &mut ValidationError, field: &'static str, v: f64) {
    if !(v > 0.0) || !v.is_finite() {
        errors.push(field, "must be positive");
    }
}

fn non_negative(errors: &mut ValidationError, field: &'static str, v: f64) {
    if !(v >= 0.0) || !v.is_finite() {
        errors.push(field, "must be non-negative");
    }
}

/// Checks the environment invariants, reporting every violation.
pub fn validate_env(env: GameEnv) -> Result<ValidatedEnv, ValidationError> {
    let mut errors = ValidationError::default();
    non_negative(&mut errors, "r", env.block_reward);
    positive(&mut errors, "tau", env.exchange_rate);
    positive(&mut errors, "beta", env.pow_rate);
    non_negative(&mut errors, "theta", env.tx_fee);
    non_negative(&mut errors, "l", env.nonstrategic_power);
    positive(&mut errors, "k_l", env.nonstrategic_efficiency);
    errors.into_result(ValidatedEnv(env))
}

/// Value in dollars of a block mined by `player`: `τ(r + θt)e^{-βzt}`.
///
/// The fee term grows with the block's transaction count while the orphan
/// risk from propagation delay discounts it exponentially.
pub fn effective_reward(player: &PlayerSpec, env: &GameEnv) -> f64 {
    let t = player.transactions;
    env.exchange_rate
        * (env.block_reward + env.tx_fee * t)
        * libm::exp(-env.pow_rate * player.delay * t)
}

/// The sets `Ŝ ⊆ S ⊆ U` of one state of the game, as indices into
/// `registered`.
#[derive(Clone, Debug, PartialEq)]
pub struct GameState {
    registered: Vec<PlayerSpec>,
    present: Vec<usize>,
    active: Vec<usize>,
}

/// Error building a [`GameState`].
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum StateError {
    #[error("present index {0} is not a registered player")]
    UnknownPlayer(usize),
    #[error("player {0} is listed as present twice")]
    Duplicate(usize),
    #[error("active player {0} is not present")]
    ActiveNotPresent(usize),
}

impl GameState {
    /// A state with the given present players and an empty active set.
    pub fn new(registered: Vec<PlayerSpec>, mut present: Vec<usize>) -> Result<Self, StateError> {
        present.sort_unstable();
        for w in present.windows(2) {
            if w[0] == w[1] {
                return Err(StateError::Duplicate(w[0]));
            }
        }
        if let Some(&bad) = present.iter().find(|&&i| i >= registered.len()) {
            return Err(StateError::UnknownPlayer(bad));
        }
        Ok(Self { registered, present, active: Vec::new() })
    }

    pub fn with_active(mut self, mut active: Vec<usize>) -> Result<Self, StateError> {
        active.sort_unstable();
        if let Some(&bad) = active.iter().find(|i| self.present.binary_search(i).is_err()) {
            return Err(StateError::ActiveNotPresent(bad));
        }
        active.dedup();
        self.active = active;
        Ok(self)
    }

    pub fn registered(&self) -> &[PlayerSpec] {
        &self.registered
    }

    pub fn present(&self) -> impl Iterator<Item = &PlayerSpec> {
        self.present.iter().map(|&i| &self.registered[i])
    }

    pub fn active(&self) -> impl Iterator<Item = &PlayerSpec> {
        self.active.iter().map(|&i| &self.registered[i])
    }

    pub fn present_indices(&self) -> &[usize] {
        &self.present
    }

    pub fn active_indices(&self) -> &[usize] {
        &self.active
    }

    /// Players registered but not present (`U \ S`).
    pub fn absent(&self) -> impl Iterator<Item = &PlayerSpec> {
        self.registered
            .iter()
            .enumerate()
            .filter(|(i, _)| self.present.binary_search(i).is_err())
            .map(|(_, p)| p)
    }
}
