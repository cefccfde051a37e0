//! Expected utilities over the arrival/departure process.
//!
//! Strategic players are aggregated into classes of identical profiles; a
//! state is the vector of per-class present counts. In state `s` the process
//! leaves at total rate
//!
//! ```text
//! D(s) = β + Σ_c (N_c − n_c) λ_c + Σ_c n_c μ_c
//! ```
//!
//! and a player's expected utility satisfies
//!
//! ```text
//! D(s) R(s) − Σ_c (N_c − n_c) λ_c R(s + e_c) − Σ_c n_c μ_c R(s − e_c)
//!     = β · share(s) · R_eff − c · x(s)
//! ```
//!
//! States are numbered in mixed radix with class 0 as the fastest digit, so
//! the system is banded with half-bandwidth equal to the last class's stride
//! (tridiagonal for a single class) and is solved directly.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::equilibrium::{admit_greedy, by_weight, share, Contender, EquilibriumError};
use crate::model::{effective_reward, GameEnv, PlayerSpec, ValidatedEnv};
use crate::numeric::{log_sum_exp, BandMatrix};

/// Default limit on the number of states of a chain.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Limit on the band storage (entries) of the direct solve.
const BAND_ENTRY_CAP: usize = 1 << 26;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum StochasticError {
    #[error("a chain needs at least one class")]
    NoClasses,
    #[error("state space of {states} states exceeds the cap of {cap}")]
    StateSpaceTooLarge { states: u128, cap: usize },
    #[error("band of the linear system is too wide for a direct solve ({entries} entries)")]
    BandTooWide { entries: u128 },
    #[error("the utility system is singular")]
    Singular,
    #[error("the arrival/departure process is reducible: {0:?}")]
    Reducible(Vec<ReducibleClass>),
    #[error("strategy table has {got} entries, expected {expected}")]
    StrategyShape { expected: usize, got: usize },
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

/// How a class breaks irreducibility of the occupancy process.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReducibleClass {
    /// No arrivals: the class drains to zero members and stays there.
    AbsorbingAt { class: usize, count: usize },
    /// Neither arrivals nor departures: every count is absorbing.
    Frozen { class: usize },
}

/// Identical strategic players sharing one profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainClass {
    pub profile: PlayerSpec,
    /// Members of the universal set `U` with this profile.
    pub registered: usize,
}

/// The product state space of per-class present counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassChain {
    classes: Vec<ChainClass>,
    strides: Vec<usize>,
    states: usize,
}

/// Enumerates the state space of `classes`, failing beyond `cap` states.
pub fn build_chain(classes: Vec<ChainClass>, cap: usize) -> Result<ClassChain, StochasticError> {
    if classes.is_empty() {
        return Err(StochasticError::NoClasses);
    }
    let mut strides = Vec::with_capacity(classes.len());
    let mut states: u128 = 1;
    for c in &classes {
        strides.push(states as usize);
        states *= c.registered as u128 + 1;
        if states > cap as u128 {
            return Err(StochasticError::StateSpaceTooLarge { states, cap });
        }
    }
    Ok(ClassChain { classes, strides, states: states as usize })
}

impl ClassChain {
    pub fn classes(&self) -> &[ChainClass] {
        &self.classes
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    /// Present members of `class` in `state`.
    pub fn count(&self, state: usize, class: usize) -> usize {
        (state / self.strides[class]) % (self.classes[class].registered + 1)
    }

    pub fn counts(&self, state: usize) -> Vec<usize> {
        (0..self.classes.len()).map(|c| self.count(state, c)).collect()
    }

    /// State index of the given per-class counts.
    pub fn index(&self, counts: &[usize]) -> Option<usize> {
        if counts.len() != self.classes.len() {
            return None;
        }
        let mut idx = 0;
        for ((n, class), stride) in counts.iter().zip(&self.classes).zip(&self.strides) {
            if *n > class.registered {
                return None;
            }
            idx += n * stride;
        }
        Some(idx)
    }

    /// Rate at which an absent member of `class` arrives: `(N − n) λ`.
    pub fn arrival_rate(&self, state: usize, class: usize) -> f64 {
        let c = &self.classes[class];
        (c.registered - self.count(state, class)) as f64 * c.profile.arrival_rate
    }

    /// Rate at which a present member of `class` leaves: `n μ`.
    pub fn departure_rate(&self, state: usize, class: usize) -> f64 {
        self.count(state, class) as f64 * self.classes[class].profile.departure_rate
    }

    /// Total rate `D(s)` of leaving `state`, the block being found included.
    pub fn exit_rate(&self, state: usize, pow_rate: f64) -> f64 {
        pow_rate
            + (0..self.classes.len())
                .map(|c| self.arrival_rate(state, c) + self.departure_rate(state, c))
                .sum::<f64>()
    }

    fn half_bandwidth(&self) -> usize {
        self.classes
            .iter()
            .zip(&self.strides)
            .filter(|(c, _)| c.registered > 0)
            .map(|(_, s)| *s)
            .max()
            .unwrap_or(0)
    }
}

/// Per-state, per-class investments and the resulting effective power.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyTable {
    classes: usize,
    investments: Vec<f64>,
    effective_power: Vec<f64>,
}

impl StrategyTable {
    /// Arbitrary per-state investments (`investments[state * classes + class]`).
    pub fn new(chain: &ClassChain, env: &GameEnv, investments: Vec<f64>) -> Result<Self, StochasticError> {
        let classes = chain.classes.len();
        let expected = chain.states * classes;
        if investments.len() != expected {
            return Err(StochasticError::StrategyShape { expected, got: investments.len() });
        }
        let base = env.nonstrategic_effective_power();
        let effective_power = (0..chain.states)
            .map(|s| {
                base + (0..classes)
                    .map(|c| {
                        chain.count(s, c) as f64
                            * chain.classes[c].profile.efficiency
                            * investments[s * classes + c]
                    })
                    .sum::<f64>()
            })
            .collect();
        Ok(Self { classes, investments, effective_power })
    }

    pub fn investment(&self, state: usize, class: usize) -> f64 {
        self.investments[state * self.classes + class]
    }

    /// `Σ k x + k_l l` in `state`.
    pub fn effective_power(&self, state: usize) -> f64 {
        self.effective_power[state]
    }
}

/// Markov-perfect strategy: in every state, the greedy active set among the
/// present players and the closed-form investments over it. Classes absent
/// from a state invest nothing there.
pub fn mpe_strategy(chain: &ClassChain, env: &ValidatedEnv) -> Result<StrategyTable, StochasticError> {
    let k = chain.classes.len();
    let contenders: Vec<Contender> = chain
        .classes
        .iter()
        .map(|c| Contender::new(&c.profile, env))
        .collect::<Result<_, _>>()?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        by_weight((&contenders[a], &chain.classes[a].profile), (&contenders[b], &chain.classes[b].profile))
    });
    let mut investments = vec![0.0; chain.states * k];
    for s in 0..chain.states {
        let entries = order.iter().map(|&c| (contenders[c], chain.count(s, c)));
        let (admitted, agg) = admit_greedy(entries, env);
        let psi = agg.psi();
        for (&c, &n) in order.iter().zip(&admitted) {
            if n > 0 {
                investments[s * k + c] = contenders[c].investment(psi);
            }
        }
    }
    StrategyTable::new(chain, env, investments)
}

/// A nonstrategic participant: always present, fixed investment, part of
/// the environment's `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedContributor {
    pub profile: PlayerSpec,
    pub investment: f64,
}

/// Expected reward, cost and utility of one player from one state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Valuation {
    pub reward: f64,
    pub cost: f64,
}

impl Valuation {
    pub fn utility(&self) -> f64 {
        self.reward - self.cost
    }

    /// Expected utility over expected cost.
    pub fn roi(&self) -> Option<f64> {
        (self.cost > 0.0).then(|| self.utility() / self.cost)
    }
}

/// Solved expected utilities for every state, for each class representative
/// and each fixed contributor.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityTable {
    subjects: usize,
    classes: usize,
    reward: Vec<f64>,
    cost: Vec<f64>,
    labels: Vec<String>,
}

impl UtilityTable {
    fn subject(&self, state: usize, subject: usize) -> Valuation {
        let i = subject * (self.reward.len() / self.subjects) + state;
        Valuation { reward: self.reward[i], cost: self.cost[i] }
    }

    pub fn class(&self, state: usize, class: usize) -> Valuation {
        assert!(class < self.classes, "class index out of range");
        self.subject(state, class)
    }

    pub fn fixed(&self, state: usize, index: usize) -> Valuation {
        self.subject(state, self.classes + index)
    }

    /// Identifier of each subject: class profiles, then fixed contributors.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Solves the expected-utility recursion for every state under `strategy`.
pub fn expected_utilities(
    chain: &ClassChain,
    strategy: &StrategyTable,
    env: &ValidatedEnv,
    fixed: &[FixedContributor],
) -> Result<UtilityTable, StochasticError> {
    let n = chain.states;
    let bw = chain.half_bandwidth();
    let entries = n as u128 * (2 * bw as u128 + 1);
    if entries > BAND_ENTRY_CAP as u128 {
        return Err(StochasticError::BandTooWide { entries });
    }
    let mut m = BandMatrix::zeros(n, bw, bw);
    for s in 0..n {
        m.add(s, s, chain.exit_rate(s, env.pow_rate));
        for c in 0..chain.classes.len() {
            let stride = chain.strides[c];
            let up = chain.arrival_rate(s, c);
            if up > 0.0 {
                m.add(s, s + stride, -up);
            }
            let down = chain.departure_rate(s, c);
            if down > 0.0 {
                m.add(s, s - stride, -down);
            }
        }
    }
    let lu = m.factor().ok_or(StochasticError::Singular)?;

    let subjects = chain.classes.len() + fixed.len();
    let mut reward = vec![0.0; subjects * n];
    let mut cost = vec![0.0; subjects * n];
    let mut labels = Vec::with_capacity(subjects);
    let beta = env.pow_rate;
    for (j, class) in chain.classes.iter().enumerate() {
        let value = effective_reward(&class.profile, env);
        let (r, c) = (&mut reward[j * n..(j + 1) * n], &mut cost[j * n..(j + 1) * n]);
        for s in 0..n {
            let x = strategy.investment(s, j);
            r[s] = beta * share(class.profile.efficiency * x, strategy.effective_power(s)) * value;
            c[s] = class.profile.cost * x;
        }
        lu.solve_in_place(r);
        lu.solve_in_place(c);
        labels.push(class.profile.id.clone());
    }
    for (i, f) in fixed.iter().enumerate() {
        let j = chain.classes.len() + i;
        let value = effective_reward(&f.profile, env);
        let (r, c) = (&mut reward[j * n..(j + 1) * n], &mut cost[j * n..(j + 1) * n]);
        for s in 0..n {
            r[s] = beta * share(f.profile.efficiency * f.investment, strategy.effective_power(s)) * value;
            c[s] = f.profile.cost * f.investment;
        }
        lu.solve_in_place(r);
        lu.solve_in_place(c);
        labels.push(f.profile.id.clone());
    }
    Ok(UtilityTable { subjects, classes: chain.classes.len(), reward, cost, labels })
}

/// Long-run occupancy of the arrival/departure process (the block-finding
/// rate plays no part).
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryDistribution {
    /// Probability of every state of the chain.
    pub probabilities: Vec<f64>,
    /// Per-class marginal law over present counts.
    pub marginals: Vec<Vec<f64>>,
}

impl StationaryDistribution {
    /// Probability that `class` has between `lo` and `hi` members present.
    pub fn mass_between(&self, class: usize, lo: usize, hi: usize) -> f64 {
        let m = &self.marginals[class];
        m.iter().enumerate().filter(|(n, _)| (lo..=hi).contains(n)).map(|(_, p)| p).sum()
    }
}

/// Stationary law of the occupancy process.
///
/// Classes move independently, so the law is the product of per-class
/// birth–death laws, each obtained from detailed balance
/// `π(n)(N − n)λ = π(n + 1)(n + 1)μ` in log space.
pub fn stationary_distribution(chain: &ClassChain) -> Result<StationaryDistribution, StochasticError> {
    let mut reducible = Vec::new();
    for (i, c) in chain.classes.iter().enumerate() {
        if c.registered == 0 {
            continue;
        }
        let (lam, mu) = (c.profile.arrival_rate, c.profile.departure_rate);
        match (lam > 0.0, mu > 0.0) {
            (true, true) => {}
            (false, true) => reducible.push(ReducibleClass::AbsorbingAt { class: i, count: 0 }),
            (true, false) => reducible.push(ReducibleClass::AbsorbingAt { class: i, count: c.registered }),
            (false, false) => reducible.push(ReducibleClass::Frozen { class: i }),
        }
    }
    if !reducible.is_empty() {
        return Err(StochasticError::Reducible(reducible));
    }
    let marginals: Vec<Vec<f64>> = chain
        .classes
        .iter()
        .map(|c| {
            let big_n = c.registered;
            let (lam, mu) = (c.profile.arrival_rate, c.profile.departure_rate);
            let mut log_w = Vec::with_capacity(big_n + 1);
            log_w.push(0.0);
            for n in 0..big_n {
                let up = libm::log((big_n - n) as f64 * lam);
                let down = libm::log((n + 1) as f64 * mu);
                log_w.push(log_w[n] + up - down);
            }
            let norm = log_sum_exp(&log_w);
            log_w.iter().map(|w| libm::exp(w - norm)).collect()
        })
        .collect();
    let probabilities = (0..chain.states)
        .map(|s| (0..chain.classes.len()).map(|c| marginals[c][chain.count(s, c)]).product())
        .collect();
    Ok(StationaryDistribution { probabilities, marginals })
}
