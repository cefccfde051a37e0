//! Per-state equilibrium investments.
//!
//! In a state with active set `Ŝ`, every active player `i` invests
//!
//! ```text
//! x_i = max(ψ/k_i · (1 − ψ·w_i), 0),    w_i = c_i / (k_i β R_i)
//! ```
//!
//! where `R_i` is the player's [`effective_reward`] and `ψ` (the
//! efficiency-weighted network power) is the positive root of
//! `W ψ² − (|Ŝ| − 1) ψ − k_l l = 0` with `W = Σ_{j∈Ŝ} w_j`.
//!
//! [`best_response_oracle`] maximises a single player's static payoff
//! numerically and is independent of the closed form; it is what the tests
//! use to check it.

use alloc::string::String;
use alloc::vec::Vec;

use crate::model::{by_cost_ratio, effective_reward, GameEnv, PlayerSpec, ValidatedEnv};
use crate::numeric::golden_section_max;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EquilibriumError {
    #[error("the active set is empty")]
    EmptyActiveSet,
    #[error("player {0} has zero marginal cost")]
    ZeroCost(String),
    #[error("player {0} has a non-positive effective block reward")]
    NonPositiveReward(String),
    #[error("invalid oracle grid: {0}")]
    DegenerateGrid(&'static str),
}

/// A player reduced to the quantities the closed form needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Contender {
    pub cost: f64,
    pub efficiency: f64,
    /// `β R_i`, the player's reward flow per unit of win probability.
    pub beta_reward: f64,
    /// `w_i = c_i / (k_i β R_i)`.
    pub weight: f64,
}

impl Contender {
    pub(crate) fn new(player: &PlayerSpec, env: &GameEnv) -> Result<Self, EquilibriumError> {
        if !(player.cost > 0.0) {
            return Err(EquilibriumError::ZeroCost(player.id.clone()));
        }
        let beta_reward = env.pow_rate * effective_reward(player, env);
        if !(beta_reward > 0.0) || !beta_reward.is_finite() {
            return Err(EquilibriumError::NonPositiveReward(player.id.clone()));
        }
        Ok(Self {
            cost: player.cost,
            efficiency: player.efficiency,
            beta_reward,
            weight: player.cost / (player.efficiency * beta_reward),
        })
    }

    pub(crate) fn cost_ratio(&self) -> f64 {
        self.cost / self.efficiency
    }

    /// Closed-form investment given the network's `ψ`.
    pub(crate) fn investment(&self, psi: f64) -> f64 {
        (psi / self.efficiency * (1.0 - psi * self.weight)).max(0.0)
    }
}

/// Running sums over an active set; `ψ` is a function of these alone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct ActiveAggregate {
    pub count: f64,
    pub weight: f64,
    /// `k_l l`.
    pub base: f64,
}

impl ActiveAggregate {
    pub(crate) fn empty(env: &GameEnv) -> Self {
        Self { count: 0.0, weight: 0.0, base: env.nonstrategic_effective_power() }
    }

    pub(crate) fn add(&mut self, c: &Contender, multiplicity: f64) {
        self.count += multiplicity;
        self.weight += c.weight * multiplicity;
    }

    /// `ψ` of this set. With no strategic player it is just `k_l l`.
    pub(crate) fn psi(&self) -> f64 {
        if self.count == 0.0 {
            return self.base;
        }
        let m1 = self.count - 1.0;
        let disc = m1 * m1 + 4.0 * self.base * self.weight;
        (m1 + libm::sqrt(disc)) / (2.0 * self.weight)
    }

    /// Participation test of a candidate against this set: `c/k < βR/ψ`.
    pub(crate) fn admits(&self, c: &Contender) -> bool {
        c.cost_ratio() * self.psi() < c.beta_reward
    }
}

/// Greedy admission in ascending `w = c/(kβR)`; `order` must already be
/// sorted.
/// Returns how many of each entry's `multiplicity` members were admitted and
/// the final aggregate. Admission stops at the first rejection.
pub(crate) fn admit_greedy(
    entries: impl IntoIterator<Item = (Contender, usize)>,
    env: &GameEnv,
) -> (Vec<usize>, ActiveAggregate) {
    let mut agg = ActiveAggregate::empty(env);
    let mut admitted = Vec::new();
    let mut stopped = false;
    for (c, mult) in entries {
        if stopped {
            admitted.push(0);
            continue;
        }
        // The threshold only tightens as identical members join, so the
        // admitted count of a class is found by bisection.
        let fits = |extra: usize| {
            if extra == 0 {
                return true;
            }
            let mut probe = agg;
            probe.count = agg.count + (extra - 1) as f64;
            probe.weight = agg.weight + c.weight * (extra - 1) as f64;
            probe.admits(&c)
        };
        let (mut lo, mut hi) = (0usize, mult);
        if fits(hi) {
            lo = hi;
        } else {
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if fits(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        agg.add(&c, lo as f64);
        admitted.push(lo);
        if lo < mult {
            stopped = true;
        }
    }
    (admitted, agg)
}

fn contenders(players: &[PlayerSpec], env: &GameEnv) -> Result<Vec<Contender>, EquilibriumError> {
    players.iter().map(|p| Contender::new(p, env)).collect()
}

fn aggregate_of(cs: &[Contender], env: &GameEnv) -> ActiveAggregate {
    let mut agg = ActiveAggregate::empty(env);
    for c in cs {
        agg.add(c, 1.0);
    }
    agg
}

/// Efficiency-weighted network power `ψ` of the given active set.
pub fn psi(active: &[PlayerSpec], env: &ValidatedEnv) -> Result<f64, EquilibriumError> {
    if active.is_empty() {
        return Err(EquilibriumError::EmptyActiveSet);
    }
    let cs = contenders(active, env)?;
    Ok(aggregate_of(&cs, env).psi())
}

/// Outcome for one player of a static game.
#[derive(Clone, Debug, PartialEq)]
pub struct PlayerOutcome {
    pub id: String,
    /// kWh/min.
    pub investment: f64,
    pub win_prob: f64,
    /// $ per block.
    pub expected_reward: f64,
    pub expected_cost: f64,
    pub expected_utility: f64,
}

impl PlayerOutcome {
    /// Expected utility over expected cost; `None` when nothing is spent.
    pub fn roi(&self) -> Option<f64> {
        (self.expected_cost > 0.0).then(|| self.expected_utility / self.expected_cost)
    }
}

/// Equilibrium of one state of the static game (no arrivals or departures).
#[derive(Clone, Debug, PartialEq)]
pub struct EquilibriumSolution {
    /// `ψ` from the closed form over the provided active set.
    pub psi: f64,
    /// Realised efficiency-weighted power `Σ k_j x_j + k_l l`; equals `psi`
    /// unless the zero clamp bound for some player.
    pub effective_power: f64,
    /// Plain (unweighted) power `Σ x_j + l`.
    pub network_power: f64,
    /// Win probability of the nonstrategic players taken together.
    pub nonstrategic_share: f64,
    pub players: Vec<PlayerOutcome>,
}

impl EquilibriumSolution {
    pub fn get(&self, id: &str) -> Option<&PlayerOutcome> {
        self.players.iter().find(|p| p.id == id)
    }
}

/// Win probability of effective power `part` out of `total`; zero when no
/// power is invested at all.
pub(crate) fn share(part: f64, total: f64) -> f64 {
    if total > 0.0 {
        part / total
    } else {
        0.0
    }
}

/// Closed-form equilibrium over the given active set. The zero clamp is
/// applied but the set itself is not revised; use [`active_set`] to choose it.
pub fn equilibrium_strategy(
    active: &[PlayerSpec],
    env: &ValidatedEnv,
) -> Result<EquilibriumSolution, EquilibriumError> {
    if active.is_empty() {
        return Err(EquilibriumError::EmptyActiveSet);
    }
    let cs = contenders(active, env)?;
    let psi = aggregate_of(&cs, env).psi();
    let investments: Vec<f64> = cs.iter().map(|c| c.investment(psi)).collect();
    Ok(static_outcomes(active, &investments, env, psi))
}

/// Static payoffs of the given investments; `psi` is recorded as given.
pub(crate) fn static_outcomes(
    players: &[PlayerSpec],
    investments: &[f64],
    env: &GameEnv,
    psi: f64,
) -> EquilibriumSolution {
    let base = env.nonstrategic_effective_power();
    let effective_power =
        players.iter().zip(investments).map(|(p, x)| p.efficiency * x).sum::<f64>() + base;
    let network_power = investments.iter().sum::<f64>() + env.nonstrategic_power;
    let outcomes = players
        .iter()
        .zip(investments)
        .map(|(p, &x)| {
            let win_prob = share(p.efficiency * x, effective_power);
            let expected_reward = win_prob * effective_reward(p, env);
            let expected_cost = p.cost * x / env.pow_rate;
            PlayerOutcome {
                id: p.id.clone(),
                investment: x,
                win_prob,
                expected_reward,
                expected_cost,
                expected_utility: expected_reward - expected_cost,
            }
        })
        .collect();
    EquilibriumSolution {
        psi,
        effective_power,
        network_power,
        nonstrategic_share: share(base, effective_power),
        players: outcomes,
    }
}

/// Result of the participation test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Participation {
    /// Largest `c/k` at which the candidate still invests; infinite when the
    /// active set has no power at all.
    pub threshold: f64,
    pub participates: bool,
}

/// Tests whether `candidate` invests positive power against `active`:
/// `c/k < β R_candidate / ψ(active)`.
pub fn participation_condition(
    candidate: &PlayerSpec,
    active: &[PlayerSpec],
    env: &ValidatedEnv,
) -> Result<Participation, EquilibriumError> {
    if active.is_empty() {
        return Err(EquilibriumError::EmptyActiveSet);
    }
    let cand = Contender::new(candidate, env)?;
    let psi = aggregate_of(&contenders(active, env)?, env).psi();
    let threshold = if psi > 0.0 { cand.beta_reward / psi } else { f64::INFINITY };
    Ok(Participation { threshold, participates: cand.cost_ratio() < threshold })
}

/// Admission order: ascending `w = c/(kβR)`, then `c/k` and id. With equal
/// effective rewards this is the `c/k` order.
pub(crate) fn by_weight(a: (&Contender, &PlayerSpec), b: (&Contender, &PlayerSpec)) -> core::cmp::Ordering {
    a.0.weight.total_cmp(&b.0.weight).then_with(|| by_cost_ratio(a.1, b.1))
}

/// Indices of the active set chosen by greedy admission in ascending
/// `w = c/(kβR)`, in admission order.
pub fn active_indices(candidates: &[PlayerSpec], env: &ValidatedEnv) -> Result<Vec<usize>, EquilibriumError> {
    let cs = contenders(candidates, env)?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| by_weight((&cs[a], &candidates[a]), (&cs[b], &candidates[b])));
    let (admitted, _) = admit_greedy(order.iter().map(|&i| (cs[i], 1)), env);
    Ok(order.into_iter().zip(admitted).filter(|&(_, n)| n == 1).map(|(i, _)| i).collect())
}

/// The players that invest positive power, chosen greedily in ascending
/// `w = c/(kβR)`: each candidate is tested against the set admitted so far and the
/// procedure stops at the first rejection.
pub fn active_set(candidates: &[PlayerSpec], env: &ValidatedEnv) -> Result<Vec<PlayerSpec>, EquilibriumError> {
    Ok(active_indices(candidates, env)?.into_iter().map(|i| candidates[i].clone()).collect())
}

/// Search settings for [`best_response_oracle`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleGrid {
    pub upper: f64,
    /// Coarse scan points over `[0, upper]`, endpoints included.
    pub points: usize,
    /// Final bracket width of the golden-section refinement.
    pub width: f64,
}

impl OracleGrid {
    /// Default search over `[0, 2ψ]`.
    pub fn covering(psi: f64) -> Self {
        Self { upper: 2.0 * psi, points: 10_001, width: 1e-8 }
    }

    /// A range containing every possible best response of `player`:
    /// `βR/(4c)` is the largest best response over all opponent powers.
    pub fn best_response_range(player: &PlayerSpec, env: &GameEnv) -> Self {
        let bound = env.pow_rate * effective_reward(player, env) / (4.0 * player.cost);
        Self { upper: bound * 1.01, points: 10_001, width: 1e-8 }
    }

    fn check(&self) -> Result<(), EquilibriumError> {
        if self.points < 3 {
            return Err(EquilibriumError::DegenerateGrid("fewer than 3 points"));
        }
        if !(self.upper > 0.0) || !self.upper.is_finite() {
            return Err(EquilibriumError::DegenerateGrid("upper bound must be positive and finite"));
        }
        if !(self.width > 0.0) {
            return Err(EquilibriumError::DegenerateGrid("refinement width must be positive"));
        }
        Ok(())
    }
}

/// Numerical best response of `player` to the opponents' investments.
///
/// Maximises `Z(x) = k x/(k x + O)·R − c x/β` where `O` is the opponents'
/// efficiency-weighted power plus `k_l l`. When `O = 0` any positive
/// investment wins outright and the grid's smallest positive point is
/// returned.
pub fn best_response_oracle(
    player: &PlayerSpec,
    others: &[(PlayerSpec, f64)],
    env: &ValidatedEnv,
    grid: &OracleGrid,
) -> Result<f64, EquilibriumError> {
    grid.check()?;
    let reward = effective_reward(player, env);
    let opponents: f64 = others.iter().map(|(p, x)| p.efficiency * x).sum::<f64>()
        + env.nonstrategic_effective_power();
    let k = player.efficiency;
    let per_block_cost = player.cost / env.pow_rate;
    let step = grid.upper / (grid.points - 1) as f64;
    if opponents <= 0.0 {
        return Ok(step);
    }
    let payoff = |x: f64| k * x / (k * x + opponents) * reward - per_block_cost * x;
    let mut best = (0usize, payoff(0.0));
    for i in 1..grid.points {
        let z = payoff(step * i as f64);
        if z > best.1 {
            best = (i, z);
        }
    }
    let lo = step * best.0.saturating_sub(1) as f64;
    let hi = step * (best.0 + 1).min(grid.points - 1) as f64;
    // Z(a) − Z(b) = (a − b)·[k O R/((k a + O)(k b + O)) − c/β], free of the
    // cancellation that comparing two nearly equal payoffs would suffer.
    let better = |a: f64, b: f64| {
        let slope = k * opponents * reward / ((k * a + opponents) * (k * b + opponents)) - per_block_cost;
        (a - b) * slope > 0.0
    };
    let width = grid.width.max(4.0 * f64::EPSILON * hi);
    Ok(golden_section_max(lo, hi, width, better))
}

/// Outcome of [`best_response_dynamics`].
#[derive(Clone, Debug, PartialEq)]
pub struct BestResponsePath {
    pub investments: Vec<f64>,
    pub rounds: usize,
    pub converged: bool,
    /// Step toward the best response used in the last round.
    pub relaxation: f64,
}

/// Smallest step toward the best response.
const MIN_RELAXATION: f64 = 1.0 / 16.0;
/// Rounds without a new smallest residual before the step is halved.
const PATIENCE: usize = 8;

/// Round-robin (Gauss–Seidel) best-response iteration using the numerical
/// oracle, starting from `start`. Each player moves `ω` of the way to its
/// best response. `ω` starts at 1 and is halved whenever the largest
/// residual `|BR(x) − x| / max(x, 1)` has gone [`PATIENCE`] rounds without
/// a new minimum, since full steps can cycle when costs differ. Stops once
/// the residual is at most `tolerance`.
pub fn best_response_dynamics(
    players: &[PlayerSpec],
    start: &[f64],
    env: &ValidatedEnv,
    tolerance: f64,
    max_rounds: usize,
) -> Result<BestResponsePath, EquilibriumError> {
    assert_eq!(players.len(), start.len());
    let mut x = start.to_vec();
    let grids: Vec<OracleGrid> = players.iter().map(|p| OracleGrid::best_response_range(p, env)).collect();
    let mut others: Vec<(PlayerSpec, f64)> = Vec::with_capacity(players.len());
    let mut relaxation = 1.0;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for round in 1..=max_rounds {
        let mut residual = 0.0f64;
        for i in 0..players.len() {
            others.clear();
            others.extend(
                players.iter().zip(&x).enumerate().filter(|(j, _)| *j != i).map(|(_, (p, &xj))| (p.clone(), xj)),
            );
            let target = best_response_oracle(&players[i], &others, env, &grids[i])?;
            residual = residual.max((target - x[i]).abs() / x[i].max(1.0));
            x[i] += relaxation * (target - x[i]);
        }
        if residual <= tolerance {
            return Ok(BestResponsePath { investments: x, rounds: round, converged: true, relaxation });
        }
        if residual < best {
            best = residual;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled == PATIENCE {
                relaxation = (relaxation / 2.0).max(MIN_RELAXATION);
                best = residual;
                stalled = 0;
            }
        }
    }
    Ok(BestResponsePath { investments: x, rounds: max_rounds, converged: false, relaxation })
}
