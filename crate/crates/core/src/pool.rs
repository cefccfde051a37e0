//! Pools: work distribution, the pool sub-game fixed point, the protocol
//! game, reward shares and the cooperation/desertion scenarios.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::equilibrium::{
    active_indices, equilibrium_strategy, share, static_outcomes, EquilibriumError, EquilibriumSolution,
    PlayerOutcome,
};
use crate::numeric::rel_diff;
use crate::model::{by_cost_ratio, effective_reward, GameEnv, PlayerSpec, ValidatedEnv};
use crate::stochastic::{
    build_chain, expected_utilities, mpe_strategy, ChainClass, FixedContributor, StochasticError, Valuation,
    DEFAULT_STATE_CAP,
};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PoolError {
    #[error("pool {0} has no connected member")]
    NoMembers(String),
    #[error("pool {pool}: connection flags ({flags}) do not match members ({members})")]
    MembershipMismatch { pool: String, members: usize, flags: usize },
    #[error("work target {0} is not a finite non-negative number")]
    InvalidTarget(f64),
    #[error("capacity {available} is below the work target {required}")]
    InsufficientCapacity { required: f64, available: f64 },
    #[error("pool fixed point did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("pool reward must be positive, got {0}")]
    NonPositiveReward(f64),
    #[error("no connected miner of pool {0} takes part in the protocol game")]
    EmptyProtocolGame(String),
    #[error("reference miner {id} has {what}")]
    InvalidReference { id: String, what: &'static str },
    #[error("no protocol result for miner {0}")]
    MissingMiner(String),
    #[error("miner {id} declared strategic but its capacity {capacity} is below its investment {investment}")]
    InconsistentRole { id: String, capacity: f64, investment: f64 },
    #[error("unknown profile index {0}")]
    UnknownProfile(usize),
    #[error("profile {0} has no connected miner")]
    EmptyProfile(String),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Stochastic(#[from] StochasticError),
}

/// A pool: its registered members, which of them are connected, and the
/// block it assembles.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolSpec {
    pub id: String,
    pub members: Vec<PlayerSpec>,
    pub connected: Vec<bool>,
    /// Transactions per block `t_p`.
    pub transactions: f64,
    /// Propagation delay per transaction `z_p` (minutes).
    pub delay: f64,
}

impl PoolSpec {
    /// A pool with every member connected and an empty block.
    pub fn new(id: impl Into<String>, members: Vec<PlayerSpec>) -> Self {
        let connected = vec![true; members.len()];
        Self { id: id.into(), members, connected, transactions: 0.0, delay: 0.0 }
    }

    pub fn with_connected(mut self, connected: Vec<bool>) -> Self {
        self.connected = connected;
        self
    }

    pub fn with_block(mut self, transactions: f64, delay: f64) -> Self {
        self.transactions = transactions;
        self.delay = delay;
        self
    }

    fn check(&self) -> Result<(), PoolError> {
        if self.connected.len() != self.members.len() {
            return Err(PoolError::MembershipMismatch {
                pool: self.id.clone(),
                members: self.members.len(),
                flags: self.connected.len(),
            });
        }
        if !self.connected.iter().any(|c| *c) {
            return Err(PoolError::NoMembers(self.id.clone()));
        }
        Ok(())
    }

    pub fn connected_indices(&self) -> impl Iterator<Item = usize> + Clone + '_ {
        self.connected.iter().enumerate().filter(|(_, c)| **c).map(|(i, _)| i)
    }

    /// Sum of connected members' capacities.
    pub fn capacity(&self) -> f64 {
        self.connected_indices().map(|i| self.members[i].capacity).sum()
    }
}

/// Work per member and the contribution-weighted pool aggregates.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkAssignment {
    /// Power per member, aligned with the member list it was built from.
    pub work: Vec<f64>,
    pub total: f64,
    /// `c_p = Σ c_i x_i / Σ x_i`.
    pub cost: f64,
    /// `k_p = Σ k_i x_i / Σ x_i`.
    pub efficiency: f64,
}

fn weighted_means<'a>(members: impl Iterator<Item = (&'a PlayerSpec, f64)> + Clone) -> (f64, f64) {
    let total: f64 = members.clone().map(|(_, w)| w).sum();
    if total > 0.0 && total.is_finite() {
        let c = members.clone().map(|(p, w)| p.cost * w).sum::<f64>() / total;
        let k = members.map(|(p, w)| p.efficiency * w).sum::<f64>() / total;
        (c, k)
    } else {
        let n = members.clone().count() as f64;
        let c = members.clone().map(|(p, _)| p.cost).sum::<f64>() / n;
        let k = members.map(|(p, _)| p.efficiency).sum::<f64>() / n;
        (c, k)
    }
}

/// Spreads `target` over `members` by water-filling in tiers of equal
/// `c/k`, cheapest tier first. A tier is filled to a common level, each
/// member capped at its capacity, and the next tier only receives work once
/// every member of the current one is at capacity.
pub fn distribute_work(members: &[PlayerSpec], target: f64) -> Result<WorkAssignment, PoolError> {
    if !(target >= 0.0) || !target.is_finite() {
        return Err(PoolError::InvalidTarget(target));
    }
    let available: f64 = members.iter().map(|m| m.capacity).sum();
    if available < target {
        return Err(PoolError::InsufficientCapacity { required: target, available });
    }
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| by_cost_ratio(&members[a], &members[b]));
    let mut work = vec![0.0; members.len()];
    let mut remaining = target;
    let mut start = 0;
    while start < order.len() && remaining > 0.0 {
        let ratio = members[order[start]].cost_ratio();
        let end = start + order[start..].iter().take_while(|&&i| members[i].cost_ratio() == ratio).count();
        let mut tier: Vec<usize> = order[start..end].to_vec();
        tier.sort_by(|&a, &b| members[a].capacity.partial_cmp(&members[b].capacity).unwrap_or(Ordering::Equal));
        let mut level = None;
        for (j, &i) in tier.iter().enumerate() {
            let cap = members[i].capacity;
            let left = (tier.len() - j) as f64;
            if cap * left > remaining {
                level = Some((j, remaining / left));
                break;
            }
            work[i] = cap;
            remaining -= cap;
        }
        if let Some((j, l)) = level {
            for &i in &tier[j..] {
                work[i] = l;
            }
            remaining = 0.0;
        }
        start = end;
    }
    let (cost, efficiency) = weighted_means(members.iter().zip(work.iter().copied()));
    Ok(WorkAssignment { total: work.iter().sum(), work, cost, efficiency })
}

/// Work assignment over a pool's connected members, aligned with
/// `pool.members` (disconnected members get nothing).
pub fn assign_pool(pool: &PoolSpec, target: f64) -> Result<WorkAssignment, PoolError> {
    pool.check()?;
    let idx: Vec<usize> = pool.connected_indices().collect();
    let connected: Vec<PlayerSpec> = idx.iter().map(|&i| pool.members[i].clone()).collect();
    let inner = distribute_work(&connected, target)?;
    let mut work = vec![0.0; pool.members.len()];
    for (w, &i) in inner.work.iter().zip(&idx) {
        work[i] = *w;
    }
    Ok(WorkAssignment { work, ..inner })
}

/// Options of the pool fixed point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointOptions {
    /// Relative tolerance on `c_p`, `k_p` and `x_p*`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Weight kept on the previous aggregates, in `[0, 1)`.
    pub damping: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 1000, damping: 0.0 }
    }
}

/// Converged pool sub-game.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolSolution {
    /// Outcomes of the pools (in input order) followed by the solo players.
    pub solution: EquilibriumSolution,
    /// The pools as single players, with their converged aggregates.
    pub pool_players: Vec<PlayerSpec>,
    pub assignments: Vec<WorkAssignment>,
    pub iterations: usize,
}

impl PoolSolution {
    pub fn pool(&self, index: usize) -> &PlayerOutcome {
        &self.solution.players[index]
    }

    pub fn solo(&self, index: usize) -> &PlayerOutcome {
        &self.solution.players[self.pool_players.len() + index]
    }
}

fn pool_player(pool: &PoolSpec, cost: f64, efficiency: f64) -> PlayerSpec {
    PlayerSpec::new(pool.id.clone(), cost, efficiency).with_block(pool.transactions, pool.delay)
}

/// Solves the static game among `players` after greedy active-set selection;
/// excluded players get a zero outcome.
pub fn solve_with_selection(players: &[PlayerSpec], env: &ValidatedEnv) -> Result<EquilibriumSolution, PoolError> {
    let active = active_indices(players, env)?;
    let mut investments = vec![0.0; players.len()];
    let psi = if active.is_empty() {
        env.nonstrategic_effective_power()
    } else {
        let chosen: Vec<PlayerSpec> = active.iter().map(|&i| players[i].clone()).collect();
        let sol = equilibrium_strategy(&chosen, env)?;
        for (&i, o) in active.iter().zip(&sol.players) {
            investments[i] = o.investment;
        }
        sol.psi
    };
    Ok(static_outcomes(players, &investments, env, psi))
}

/// Alternates pool aggregates, the pool sub-game among the pools and the
/// solo strategic players, and work redistribution until the aggregates and
/// pool investments settle.
pub fn pool_fixed_point(
    pools: &[PoolSpec],
    solo: &[PlayerSpec],
    env: &ValidatedEnv,
    options: FixedPointOptions,
) -> Result<PoolSolution, PoolError> {
    for p in pools {
        p.check()?;
    }
    let start: Vec<(f64, f64)> = pools
        .iter()
        .map(|p| weighted_means(p.connected_indices().map(|i| (&p.members[i], p.members[i].capacity))))
        .collect();
    pool_fixed_point_from(pools, solo, env, options, start)
}

/// [`pool_fixed_point`] started from the given `(c_p, k_p)` of every pool.
pub fn pool_fixed_point_from(
    pools: &[PoolSpec],
    solo: &[PlayerSpec],
    env: &ValidatedEnv,
    options: FixedPointOptions,
    mut aggregates: Vec<(f64, f64)>,
) -> Result<PoolSolution, PoolError> {
    for p in pools {
        p.check()?;
    }
    let mut last_x: Option<Vec<f64>> = None;
    for iteration in 1..=options.max_iterations {
        let pool_players: Vec<PlayerSpec> =
            pools.iter().zip(&aggregates).map(|(p, &(c, k))| pool_player(p, c, k)).collect();
        let mut players = pool_players.clone();
        players.extend_from_slice(solo);
        let solution = solve_with_selection(&players, env)?;
        let assignments: Vec<WorkAssignment> = pools
            .iter()
            .zip(&solution.players)
            .map(|(p, o)| assign_pool(p, o.investment))
            .collect::<Result<_, _>>()?;
        let x: Vec<f64> = solution.players[..pools.len()].iter().map(|o| o.investment).collect();
        let settled = aggregates.iter().zip(&assignments).all(|(&(c, k), a)| {
            rel_diff(a.cost, c) <= options.tolerance && rel_diff(a.efficiency, k) <= options.tolerance
        }) && last_x.as_ref().is_none_or(|old| {
            old.iter().zip(&x).all(|(o, n)| rel_diff(*n, *o) <= options.tolerance)
        });
        if settled {
            return Ok(PoolSolution { solution, pool_players, assignments, iterations: iteration });
        }
        let d = options.damping;
        for (agg, a) in aggregates.iter_mut().zip(&assignments) {
            *agg = ((1.0 - d) * a.cost + d * agg.0, (1.0 - d) * a.efficiency + d * agg.1);
        }
        last_x = Some(x);
    }
    Err(PoolError::NoConvergence(options.max_iterations))
}

/// How a connected miner takes part in the protocol game.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolRole {
    /// Plays the per-state equilibrium.
    Strategic,
    /// Contributes its full capacity to `l`.
    Nonstrategic,
    /// Too expensive to invest at all.
    Excluded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolMiner {
    /// Index into the pool's member list.
    pub member: usize,
    pub role: ProtocolRole,
    /// Investment in the current state.
    pub investment: f64,
    pub valuation: Valuation,
}

impl ProtocolMiner {
    pub fn roi(&self) -> f64 {
        self.valuation.roi().unwrap_or(0.0)
    }
}

/// Protocol-game results for a pool's connected miners.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolOutcome {
    pub miners: Vec<ProtocolMiner>,
    /// The game's environment (`r` = pool reward, `l` = nonstrategic capacity).
    pub env: GameEnv,
    pub registered_strategic: usize,
    pub connected_strategic: usize,
    pub states: usize,
}

impl ProtocolOutcome {
    pub fn miner(&self, member: usize) -> Option<&ProtocolMiner> {
        self.miners.iter().find(|m| m.member == member)
    }
}

fn protocol_profile(p: &PlayerSpec) -> PlayerSpec {
    let mut q = p.clone();
    q.transactions = 0.0;
    q.delay = 0.0;
    q
}

fn class_key(p: &PlayerSpec) -> [u64; 4] {
    [p.cost.to_bits(), p.efficiency.to_bits(), p.arrival_rate.to_bits(), p.departure_rate.to_bits()]
}

/// Intra-pool competition for `pool_reward` with `τ = 1`, no fees and no
/// delay. Registered members able to afford the equilibrium investment at
/// full attendance play it state by state; connected members that cannot
/// invest their capacity as fixed power when that is profitable.
pub fn protocol_game(
    pool: &PoolSpec,
    pool_reward: f64,
    pow_rate: f64,
    state_cap: usize,
) -> Result<ProtocolOutcome, PoolError> {
    pool.check()?;
    if !(pool_reward > 0.0) || !pool_reward.is_finite() {
        return Err(PoolError::NonPositiveReward(pool_reward));
    }
    let members: Vec<PlayerSpec> = pool.members.iter().map(protocol_profile).collect();
    let base = GameEnv {
        block_reward: pool_reward,
        exchange_rate: 1.0,
        pow_rate,
        tx_fee: 0.0,
        nonstrategic_power: 0.0,
        nonstrategic_efficiency: 1.0,
    };
    let mut roles: Vec<ProtocolRole> = vec![ProtocolRole::Strategic; members.len()];
    let env = loop {
        let fixed: Vec<usize> = (0..members.len())
            .filter(|&i| roles[i] == ProtocolRole::Nonstrategic && pool.connected[i])
            .collect();
        let (l, k_l) = fixed_power(&members, &fixed);
        let env = crate::model::validate_env(GameEnv { nonstrategic_power: l, nonstrategic_efficiency: k_l, ..base })
            .map_err(|_| PoolError::NonPositiveReward(pool_reward))?;
        let strategic: Vec<usize> = (0..members.len()).filter(|&i| roles[i] == ProtocolRole::Strategic).collect();
        let players: Vec<PlayerSpec> = strategic.iter().map(|&i| members[i].clone()).collect();
        let full = solve_with_selection(&players, &env)?;
        let mut changed = false;
        for (&i, o) in strategic.iter().zip(&full.players) {
            if o.investment > members[i].capacity {
                roles[i] = ProtocolRole::Nonstrategic;
                changed = true;
            }
        }
        for &i in &fixed {
            let p = &members[i];
            let beta_reward = env.pow_rate * effective_reward(p, &env);
            if !(p.cost_ratio() * full.psi < beta_reward) {
                roles[i] = ProtocolRole::Excluded;
                changed = true;
            }
        }
        if !changed {
            break env;
        }
    };

    // Chain classes of strategic members, grouped by their dynamic profile.
    let mut class_of: BTreeMap<[u64; 4], usize> = BTreeMap::new();
    let mut classes: Vec<ChainClass> = Vec::new();
    let mut present: Vec<usize> = Vec::new();
    let mut member_class = vec![usize::MAX; members.len()];
    for (i, p) in members.iter().enumerate() {
        if roles[i] != ProtocolRole::Strategic {
            continue;
        }
        let c = *class_of.entry(class_key(p)).or_insert_with(|| {
            classes.push(ChainClass { profile: p.clone(), registered: 0 });
            present.push(0);
            classes.len() - 1
        });
        classes[c].registered += 1;
        if pool.connected[i] {
            present[c] += 1;
        }
        member_class[i] = c;
    }
    let mut fixed_groups: BTreeMap<([u64; 4], u64), usize> = BTreeMap::new();
    let mut fixed: Vec<FixedContributor> = Vec::new();
    let mut member_fixed = vec![usize::MAX; members.len()];
    for (i, p) in members.iter().enumerate() {
        if roles[i] == ProtocolRole::Nonstrategic && pool.connected[i] {
            let key = (class_key(p), p.capacity.to_bits());
            let g = *fixed_groups.entry(key).or_insert_with(|| {
                fixed.push(FixedContributor { profile: p.clone(), investment: p.capacity });
                fixed.len() - 1
            });
            member_fixed[i] = g;
        }
    }
    let connected_strategic: usize = present.iter().sum();
    if connected_strategic == 0 && fixed.is_empty() {
        return Err(PoolError::EmptyProtocolGame(pool.id.clone()));
    }

    let registered_strategic = classes.iter().map(|c| c.registered).sum();
    let (valuations, state, states) = if classes.is_empty() {
        // No strategic class: a single static state.
        let dummy = ChainClass { profile: fixed[0].profile.clone(), registered: 0 };
        let chain = build_chain(vec![dummy], state_cap)?;
        let strategy = crate::stochastic::StrategyTable::new(&chain, &env, vec![0.0])?;
        (expected_utilities(&chain, &strategy, &env, &fixed)?, 0, 1)
    } else {
        let chain = build_chain(classes, state_cap)?;
        let strategy = mpe_strategy(&chain, &env)?;
        let table = expected_utilities(&chain, &strategy, &env, &fixed)?;
        let state = chain.index(&present).expect("present counts are within registered");
        let states = chain.state_count();
        let invest: Vec<f64> = (0..chain.classes().len()).map(|c| strategy.investment(state, c)).collect();
        for (i, c) in member_class.iter().enumerate() {
            if *c != usize::MAX && pool.connected[i] && invest[*c] == 0.0 {
                roles[i] = ProtocolRole::Excluded;
            }
        }
        let miners = collect_miners(pool, &roles, &member_class, &member_fixed, &fixed, &table, state, |c| invest[c]);
        return Ok(ProtocolOutcome { miners, env: *env, registered_strategic, connected_strategic, states });
    };
    let miners = collect_miners(pool, &roles, &member_class, &member_fixed, &fixed, &valuations, state, |_| 0.0);
    Ok(ProtocolOutcome { miners, env: *env, registered_strategic, connected_strategic, states })
}

fn fixed_power(members: &[PlayerSpec], fixed: &[usize]) -> (f64, f64) {
    let l: f64 = fixed.iter().map(|&i| members[i].capacity).sum();
    if l > 0.0 {
        (l, fixed.iter().map(|&i| members[i].efficiency * members[i].capacity).sum::<f64>() / l)
    } else {
        (0.0, 1.0)
    }
}

#[allow(clippy::too_many_arguments)]
fn collect_miners(
    pool: &PoolSpec,
    roles: &[ProtocolRole],
    member_class: &[usize],
    member_fixed: &[usize],
    fixed: &[FixedContributor],
    table: &crate::stochastic::UtilityTable,
    state: usize,
    invest: impl Fn(usize) -> f64,
) -> Vec<ProtocolMiner> {
    let zero = Valuation { reward: 0.0, cost: 0.0 };
    pool.connected_indices()
        .map(|i| {
            let (investment, valuation) = match roles[i] {
                ProtocolRole::Strategic => (invest(member_class[i]), table.class(state, member_class[i])),
                ProtocolRole::Nonstrategic => {
                    (fixed[member_fixed[i]].investment, table.fixed(state, member_fixed[i]))
                }
                ProtocolRole::Excluded => (0.0, zero),
            };
            ProtocolMiner { member: i, role: roles[i], investment, valuation }
        })
        .collect()
}

/// Which work enters the cost term of a miner's reward fraction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AlphaCostBasis {
    /// Work assigned by [`distribute_work`]; fractions then sum to one.
    #[default]
    Assigned,
    /// The miner's investment in the protocol game.
    ProtocolInvestment,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinerShare {
    /// Index into the pool's member list.
    pub member: usize,
    pub assigned_work: f64,
    pub relative_cost: f64,
    pub relative_roi: f64,
    /// Normalized `I^C · I^ROI`.
    pub composite: f64,
    pub alpha: f64,
}

/// Reward fractions of a pool's connected miners.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardShares {
    pub miners: Vec<MinerShare>,
    /// Member used as the reference for relative rates.
    pub reference: usize,
    /// Pool utility `R_p` in the pool sub-game.
    pub pool_utility: f64,
    /// `E[r]_p = R_p + c_p x_p / β`.
    pub pool_reward: f64,
}

impl RewardShares {
    pub fn miner(&self, member: usize) -> Option<&MinerShare> {
        self.miners.iter().find(|m| m.member == member)
    }

    /// A miner's expected utility from the pool, `𝕀_i R_p`.
    pub fn utility(&self, member: usize) -> Option<f64> {
        self.miner(member).map(|m| m.composite * self.pool_utility)
    }
}

/// Reward fractions from relative costs of the assigned work and relative
/// protocol-game ROIs. `reference` defaults to the connected member with the
/// smallest `c/k` (ties by id).
pub fn reward_shares(
    pool: &PoolSpec,
    assignment: &WorkAssignment,
    protocol: &ProtocolOutcome,
    outcome: &PlayerOutcome,
    pow_rate: f64,
    basis: AlphaCostBasis,
    reference: Option<usize>,
) -> Result<RewardShares, PoolError> {
    pool.check()?;
    let connected: Vec<usize> = pool.connected_indices().collect();
    let reference = match reference {
        Some(r) => r,
        None => *connected
            .iter()
            .min_by(|&&a, &&b| by_cost_ratio(&pool.members[a], &pool.members[b]))
            .expect("checked non-empty"),
    };
    let roi_of = |i: usize| -> Result<f64, PoolError> {
        protocol.miner(i).map(|m| m.roi()).ok_or_else(|| PoolError::MissingMiner(pool.members[i].id.clone()))
    };
    let ref_id = || pool.members[reference].id.clone();
    let ref_cost = pool.members[reference].cost * assignment.work[reference];
    if !(ref_cost > 0.0) {
        return Err(PoolError::InvalidReference { id: ref_id(), what: "zero cost" });
    }
    let ref_roi = roi_of(reference)?;
    if ref_roi == 0.0 || !ref_roi.is_finite() {
        return Err(PoolError::InvalidReference { id: ref_id(), what: "zero ROI" });
    }
    let mut miners = Vec::with_capacity(connected.len());
    for &i in &connected {
        let relative_cost = pool.members[i].cost * assignment.work[i] / ref_cost;
        let relative_roi = roi_of(i)? / ref_roi;
        miners.push(MinerShare {
            member: i,
            assigned_work: assignment.work[i],
            relative_cost,
            relative_roi,
            composite: relative_cost * relative_roi,
            alpha: 0.0,
        });
    }
    let norm: f64 = miners.iter().map(|m| m.composite).sum();
    let pool_utility = outcome.expected_utility;
    let pool_reward = pool_utility + assignment.cost * assignment.total / pow_rate;
    for m in &mut miners {
        m.composite /= norm;
        let x = match basis {
            AlphaCostBasis::Assigned => m.assigned_work,
            AlphaCostBasis::ProtocolInvestment => protocol.miner(m.member).map_or(0.0, |p| p.investment),
        };
        m.alpha = (m.composite * pool_utility + pool.members[m.member].cost * x / pow_rate) / pool_reward;
    }
    Ok(RewardShares { miners, reference, pool_utility, pool_reward })
}

/// A miner's part in the pool sub-game outside its pools.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SoloRole<'a> {
    /// A strategic player; the outcome is its own in the solved sub-game.
    Strategic(&'a PlayerOutcome),
    /// Part of `l` with a fixed investment in the solved sub-game.
    Nonstrategic { investment: f64, solution: &'a EquilibriumSolution },
    Absent,
}

/// A miner's standing in one pool: `𝕀_i` and the pool's utility `R_p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Membership {
    pub composite: f64,
    pub pool_utility: f64,
}

/// Expected utility of a nonstrategic investment against a solved sub-game.
pub fn nonstrategic_utility(miner: &PlayerSpec, investment: f64, solution: &EquilibriumSolution, env: &GameEnv) -> f64 {
    share(miner.efficiency * investment, solution.effective_power) * effective_reward(miner, env)
        - miner.cost * investment / env.pow_rate
}

/// Sum of a miner's pool utilities and its solo utility.
pub fn miner_total_utility(
    miner: &PlayerSpec,
    memberships: &[Membership],
    role: SoloRole<'_>,
    env: &GameEnv,
) -> Result<f64, PoolError> {
    let pools: f64 = memberships.iter().map(|m| m.composite * m.pool_utility).sum();
    let solo = match role {
        SoloRole::Strategic(o) => {
            if o.investment > miner.capacity {
                return Err(PoolError::InconsistentRole {
                    id: miner.id.clone(),
                    capacity: miner.capacity,
                    investment: o.investment,
                });
            }
            o.expected_utility
        }
        SoloRole::Nonstrategic { investment, solution } => nonstrategic_utility(miner, investment, solution, env),
        SoloRole::Absent => 0.0,
    };
    Ok(pools + solo)
}

/// Roles settled for solo miners next to a set of pools.
#[derive(Clone, Debug, PartialEq)]
pub enum SettledRole {
    /// Index among the strategic solo players of the pool solution.
    Strategic(usize),
    Nonstrategic(f64),
    Absent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoloSettlement {
    pub pools: PoolSolution,
    pub roles: Vec<SettledRole>,
    /// Environment with the nonstrategic solo capacity added to `l`.
    pub env: GameEnv,
    /// Expected utility of each solo candidate.
    pub utilities: Vec<f64>,
}

/// Places solo candidates in the pool sub-game: strategic while their
/// capacity covers their equilibrium investment, otherwise in `l` at full
/// capacity when that is profitable, otherwise out.
pub fn settle_solo(
    pools: &[PoolSpec],
    candidates: &[PlayerSpec],
    env: &ValidatedEnv,
    options: FixedPointOptions,
) -> Result<SoloSettlement, PoolError> {
    #[derive(Clone, Copy, PartialEq)]
    enum R {
        S,
        N,
        A,
    }
    let mut roles = vec![R::S; candidates.len()];
    loop {
        let mut game_env: GameEnv = **env;
        for (p, _) in candidates.iter().zip(&roles).filter(|(_, r)| **r == R::N) {
            game_env = game_env.with_extra_nonstrategic(p.capacity, p.efficiency);
        }
        let game_env = crate::model::validate_env(game_env).expect("adding power keeps the environment valid");
        let strategic: Vec<usize> = (0..candidates.len()).filter(|&i| roles[i] == R::S).collect();
        let solo: Vec<PlayerSpec> = strategic.iter().map(|&i| candidates[i].clone()).collect();
        let pools_sol = pool_fixed_point(pools, &solo, &game_env, options)?;
        let mut changed = false;
        for (j, &i) in strategic.iter().enumerate() {
            if pools_sol.solo(j).investment > candidates[i].capacity {
                roles[i] = R::N;
                changed = true;
            }
        }
        for i in 0..candidates.len() {
            if roles[i] == R::N {
                let p = &candidates[i];
                let beta_reward = game_env.pow_rate * effective_reward(p, &game_env);
                if !(p.cost_ratio() * pools_sol.solution.psi < beta_reward) {
                    roles[i] = R::A;
                    changed = true;
                }
            }
        }
        if changed {
            continue;
        }
        let mut settled = Vec::with_capacity(candidates.len());
        let mut utilities = Vec::with_capacity(candidates.len());
        let mut next = 0;
        for (i, p) in candidates.iter().enumerate() {
            match roles[i] {
                R::S => {
                    utilities.push(pools_sol.solo(next).expected_utility);
                    settled.push(SettledRole::Strategic(next));
                    next += 1;
                }
                R::N => {
                    utilities.push(nonstrategic_utility(p, p.capacity, &pools_sol.solution, &game_env));
                    settled.push(SettledRole::Nonstrategic(p.capacity));
                }
                R::A => {
                    utilities.push(0.0);
                    settled.push(SettledRole::Absent);
                }
            }
        }
        return Ok(SoloSettlement { pools: pools_sol, roles: settled, env: *game_env, utilities });
    }
}

/// Options of the full pool pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineOptions {
    pub fixed_point: FixedPointOptions,
    pub state_cap: usize,
    pub alpha_basis: AlphaCostBasis,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { fixed_point: FixedPointOptions::default(), state_cap: DEFAULT_STATE_CAP, alpha_basis: AlphaCostBasis::Assigned }
    }
}

/// Protocol game and reward shares of one pool.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolEvaluation {
    pub protocol: ProtocolOutcome,
    pub shares: RewardShares,
}

/// Everything the pipeline computes for a network of pools and solo miners.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkEvaluation {
    pub settlement: SoloSettlement,
    /// `None` for pools that invest nothing.
    pub pools: Vec<Option<PoolEvaluation>>,
}

impl NetworkEvaluation {
    /// Expected utility of a connected pool member, `𝕀_i R_p`.
    pub fn member_utility(&self, pool: usize, member: usize) -> f64 {
        self.pools[pool].as_ref().and_then(|e| e.shares.utility(member)).unwrap_or(0.0)
    }
}

/// Runs the pool fixed point, the protocol game and reward sharing.
pub fn evaluate_network(
    pools: &[PoolSpec],
    solo: &[PlayerSpec],
    env: &ValidatedEnv,
    options: PipelineOptions,
) -> Result<NetworkEvaluation, PoolError> {
    let settlement = settle_solo(pools, solo, env, options.fixed_point)?;
    let beta = env.pow_rate;
    let evals = pools
        .iter()
        .enumerate()
        .map(|(i, pool)| {
            let outcome = settlement.pools.pool(i);
            if outcome.investment <= 0.0 {
                return Ok(None);
            }
            let assignment = &settlement.pools.assignments[i];
            let protocol = protocol_game(pool, outcome.expected_reward, beta, options.state_cap)?;
            let shares = reward_shares(pool, assignment, &protocol, outcome, beta, options.alpha_basis, None)?;
            Ok(Some(PoolEvaluation { protocol, shares }))
        })
        .collect::<Result<Vec<_>, PoolError>>()?;
    Ok(NetworkEvaluation { settlement, pools: evals })
}

/// Members of one profile inside a pool.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberGroup {
    /// Index into [`ScenarioNetwork::profiles`].
    pub profile: usize,
    pub registered: usize,
    pub connected: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolLayout {
    pub id: String,
    pub transactions: f64,
    pub delay: f64,
    pub groups: Vec<MemberGroup>,
}

/// Pools described by miner profiles, for the scenario evaluator.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioNetwork {
    pub env: ValidatedEnv,
    /// Miner profiles; the id names the profile.
    pub profiles: Vec<PlayerSpec>,
    pub pools: Vec<PoolLayout>,
    pub options: PipelineOptions,
}

/// Where a scenario's miners stand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Every connected miner cooperates.
    MutualCooperation,
    /// `count` connected miners of `profile` leave their pools (one per
    /// pool, in pool order) and mine solo.
    Desertion { profile: usize, count: usize },
    /// Every connected miner mines solo.
    MutualDesertion,
}

/// Mean utilities per profile in a scenario; `None` where the profile has no
/// miner in that position.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioUtilities {
    pub cooperator: Vec<Option<f64>>,
    pub deserter: Vec<Option<f64>>,
}

impl ScenarioNetwork {
    fn check_profile(&self, p: usize) -> Result<(), PoolError> {
        if p < self.profiles.len() {
            Ok(())
        } else {
            Err(PoolError::UnknownProfile(p))
        }
    }

    /// Expands the layouts into pools with members `{pool}/{profile}/{i}`
    /// and the profile of every member.
    pub fn pool_specs(&self) -> Result<(Vec<PoolSpec>, Vec<Vec<usize>>), PoolError> {
        let mut pools = Vec::with_capacity(self.pools.len());
        let mut profiles = Vec::with_capacity(self.pools.len());
        for layout in &self.pools {
            let mut members = Vec::new();
            let mut connected = Vec::new();
            let mut of = Vec::new();
            for g in &layout.groups {
                self.check_profile(g.profile)?;
                let profile = &self.profiles[g.profile];
                for i in 0..g.registered {
                    let mut m = profile.clone();
                    m.id = format!("{}/{}/{}", layout.id, profile.id, i);
                    members.push(m);
                    connected.push(i < g.connected);
                    of.push(g.profile);
                }
            }
            pools.push(
                PoolSpec::new(layout.id.clone(), members)
                    .with_connected(connected)
                    .with_block(layout.transactions, layout.delay),
            );
            profiles.push(of);
        }
        Ok((pools, profiles))
    }

    /// Mean utilities per profile in `scenario`.
    pub fn scenario_utilities(&self, scenario: Scenario) -> Result<ScenarioUtilities, PoolError> {
        let (mut pools, mut profile_of) = self.pool_specs()?;
        let n = self.profiles.len();
        let mut coop = vec![(0.0, 0usize); n];
        let mut desert = vec![(0.0, 0usize); n];
        let mut skip_pools: Vec<usize> = Vec::new();
        let mut solo: Vec<PlayerSpec> = Vec::new();
        let mut solo_profile: Vec<usize> = Vec::new();
        match scenario {
            Scenario::MutualCooperation => {}
            Scenario::Desertion { profile, count } => {
                self.check_profile(profile)?;
                let mut left = count;
                while left > 0 {
                    let mut progressed = false;
                    for (pi, pool) in pools.iter_mut().enumerate() {
                        if left == 0 {
                            break;
                        }
                        let pick = (0..pool.members.len()).find(|&m| pool.connected[m] && profile_of[pi][m] == profile);
                        if let Some(m) = pick {
                            solo.push(pool.members.remove(m));
                            pool.connected.remove(m);
                            profile_of[pi].remove(m);
                            solo_profile.push(profile);
                            if !skip_pools.contains(&pi) {
                                skip_pools.push(pi);
                            }
                            left -= 1;
                            progressed = true;
                        }
                    }
                    if !progressed {
                        return Err(PoolError::EmptyProfile(self.profiles[profile].id.clone()));
                    }
                }
            }
            Scenario::MutualDesertion => {
                for (pi, pool) in pools.iter().enumerate() {
                    for m in pool.connected_indices() {
                        solo.push(pool.members[m].clone());
                        solo_profile.push(profile_of[pi][m]);
                    }
                }
                pools.clear();
            }
        }
        let eval = evaluate_network(&pools, &solo, &self.env, self.options)?;
        for (pi, pool) in pools.iter().enumerate() {
            if skip_pools.contains(&pi) && skip_pools.len() < pools.len() {
                continue;
            }
            for m in pool.connected_indices() {
                let e = &mut coop[profile_of[pi][m]];
                e.0 += eval.member_utility(pi, m);
                e.1 += 1;
            }
        }
        for (u, &p) in eval.settlement.utilities.iter().zip(&solo_profile) {
            desert[p].0 += u;
            desert[p].1 += 1;
        }
        let mean = |v: Vec<(f64, usize)>| v.into_iter().map(|(s, c)| (c > 0).then(|| s / c as f64)).collect();
        Ok(ScenarioUtilities { cooperator: mean(coop), deserter: mean(desert) })
    }

    /// Cooperation/desertion utilities and dilemma ratios of every profile.
    pub fn scenario_table(&self) -> Result<Vec<ProfileRow>, PoolError> {
        let (pools, profile_of) = self.pool_specs()?;
        let full = evaluate_network(&pools, &[], &self.env, self.options)?;
        let cooperation = self.scenario_utilities(Scenario::MutualCooperation)?;
        let desertion = self.scenario_utilities(Scenario::MutualDesertion)?;
        let mut rows = Vec::with_capacity(self.profiles.len());
        for (p, profile) in self.profiles.iter().enumerate() {
            let mut connected = 0usize;
            let mut work = 0.0;
            for (pi, pool) in pools.iter().enumerate() {
                for m in pool.connected_indices().filter(|&m| profile_of[pi][m] == p) {
                    connected += 1;
                    work += full.settlement.pools.assignments[pi].work[m];
                }
            }
            if connected == 0 {
                return Err(PoolError::EmptyProfile(profile.id.clone()));
            }
            let one = self.scenario_utilities(Scenario::Desertion { profile: p, count: 1 })?;
            let two = self.scenario_utilities(Scenario::Desertion { profile: p, count: 2 })?;
            let missing = || PoolError::EmptyProfile(profile.id.clone());
            let a_top = cooperation.cooperator[p].ok_or_else(missing)?;
            let a_next = one.cooperator[p].ok_or_else(missing)?;
            let b_top = one.deserter[p].ok_or_else(missing)?;
            let b_next = two.deserter[p].ok_or_else(missing)?;
            let b_bottom = desertion.deserter[p].ok_or_else(missing)?;
            rows.push(ProfileRow {
                profile: profile.id.clone(),
                connected,
                capacity: profile.capacity,
                assigned_work: work / connected as f64,
                a_top,
                a_next,
                b_top,
                b_next,
                b_bottom,
            });
        }
        Ok(rows)
    }
}

/// One profile's utilities across the cooperation scenarios.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileRow {
    pub profile: String,
    /// Connected miners of the profile over all pools.
    pub connected: usize,
    pub capacity: f64,
    /// Mean assigned work under mutual cooperation.
    pub assigned_work: f64,
    /// Cooperator utility when everyone cooperates.
    pub a_top: f64,
    /// Cooperator utility when one miner of the profile deserts.
    pub a_next: f64,
    /// Deserter utility when everyone else cooperates.
    pub b_top: f64,
    /// Deserter utility when a second miner of the profile also deserts.
    pub b_next: f64,
    /// Utility when every miner is solo.
    pub b_bottom: f64,
}

impl ProfileRow {
    pub fn sdp1_cooperate(&self) -> f64 {
        self.a_top / self.a_next
    }

    pub fn sdp1_desert(&self) -> f64 {
        self.b_top / self.b_next
    }

    pub fn sdp2(&self) -> f64 {
        self.b_top / self.a_top
    }

    pub fn sdp3(&self) -> f64 {
        self.a_top / self.b_bottom
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{reference_env, reference_pool};
    use crate::model::validate_env;
    use proptest::prelude::*;

    fn miner(id: &str, c: f64, k: f64, cap: f64) -> PlayerSpec {
        PlayerSpec::new(id, c, k).with_capacity(cap)
    }

    /// The reference pools, each made of identical miners without a
    /// capacity limit.
    fn reference_pool_specs() -> Vec<PoolSpec> {
        (0..10)
            .map(|i| {
                let p = reference_pool(i);
                let members = (0..4).map(|j| miner(&format!("{}/m{j}", p.id), p.cost, p.efficiency, f64::INFINITY)).collect();
                PoolSpec::new(p.id.clone(), members).with_block(p.transactions, p.delay)
            })
            .collect()
    }

    #[test]
    fn single_member_takes_all_work() {
        let a = distribute_work(&[miner("a", 0.001, 1.0, 10.0)], 7.5).unwrap();
        assert_eq!(a.work, vec![7.5]);
        assert_eq!((a.cost, a.efficiency, a.total), (0.001, 1.0, 7.5));
    }

    #[test]
    fn equal_ratios_split_evenly() {
        let a = distribute_work(&[miner("a", 0.001, 1.0, 100.0), miner("b", 0.002, 2.0, 100.0)], 30.0).unwrap();
        assert_eq!(a.work, vec![15.0, 15.0]);
    }

    #[test]
    fn small_miners_are_capped_and_the_rest_level() {
        let mut members: Vec<PlayerSpec> = (0..500).map(|i| miner(&format!("s{i}"), 0.0007, 1.0, 20.0)).collect();
        for (n, cap) in [(300, 2000.0), (200, 3000.0), (50, 5000.0)] {
            members.extend((0..n).map(|i| miner(&format!("c{cap}-{i}"), 0.0007, 1.0, cap)));
        }
        let a = distribute_work(&members, 759_174.692).unwrap();
        for (m, w) in members.iter().zip(&a.work) {
            if m.capacity == 20.0 {
                assert_eq!(*w, 20.0);
            } else {
                assert!((w - 1362.136).abs() < 0.01, "{w}");
            }
        }
        assert!((a.total - 759_174.692).abs() <= 1e-9 * 759_174.692);
    }

    #[test]
    fn cheaper_tier_saturates_first() {
        let members = [miner("x", 0.002, 1.0, 10.0), miner("y", 0.001, 1.0, 4.0), miner("z", 0.001, 1.0, 6.0)];
        let a = distribute_work(&members, 12.0).unwrap();
        assert_eq!(a.work, vec![2.0, 4.0, 6.0]);
        assert!((a.cost - (0.004 + 0.004 + 0.006) / 12.0).abs() < 1e-15);
        let a = distribute_work(&members, 7.0).unwrap();
        assert_eq!(a.work, vec![0.0, 3.5, 3.5]);
    }

    #[test]
    fn insufficient_capacity_is_an_error() {
        let err = distribute_work(&[miner("a", 0.001, 1.0, 10.0), miner("b", 0.001, 1.0, 5.0)], 16.0).unwrap_err();
        assert_eq!(err, PoolError::InsufficientCapacity { required: 16.0, available: 15.0 });
        assert_eq!(distribute_work(&[], -1.0).unwrap_err(), PoolError::InvalidTarget(-1.0));
    }

    proptest! {
        #[test]
        fn water_filling_prefers_low_ratios(
            raw in prop::collection::vec((1u32..5, 1u32..4, 1.0f64..50.0), 1..12),
            frac in 0.0f64..1.0,
        ) {
            let members: Vec<PlayerSpec> = raw
                .iter()
                .enumerate()
                .map(|(i, &(c, k, cap))| miner(&format!("m{i:02}"), c as f64 * 1e-3, k as f64, cap))
                .collect();
            let total_cap: f64 = members.iter().map(|m| m.capacity).sum();
            let target = frac * total_cap;
            let a = distribute_work(&members, target).unwrap();
            prop_assert!((a.total - target).abs() <= 1e-9 * total_cap);
            let ratio_cost = |w: &[f64]| members.iter().zip(w).map(|(m, x)| m.cost_ratio() * x).sum::<f64>();
            let base = ratio_cost(&a.work);
            for i in 0..members.len() {
                prop_assert!(a.work[i] >= 0.0 && a.work[i] <= members[i].capacity * (1.0 + 1e-12));
                for j in 0..members.len() {
                    // Shifting work towards a higher ratio never lowers the
                    // ratio-weighted cost.
                    if members[i].cost_ratio() < members[j].cost_ratio() && a.work[i] > 0.0 {
                        let eps = a.work[i].min(members[j].capacity - a.work[j]).min(1e-3);
                        if eps > 0.0 {
                            let mut w = a.work.clone();
                            w[i] -= eps;
                            w[j] += eps;
                            prop_assert!(ratio_cost(&w) >= base - 1e-12);
                        }
                    }
                    if members[i].cost_ratio() < members[j].cost_ratio() && a.work[j] > 0.0 {
                        prop_assert!(a.work[i] >= members[i].capacity * (1.0 - 1e-12));
                    }
                }
            }
        }
    }

    #[test]
    fn reference_pools_converge_in_one_iteration() {
        let env = validate_env(reference_env()).unwrap();
        let sol = pool_fixed_point(&reference_pool_specs(), &[], &env, FixedPointOptions::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        for i in 0..10 {
            assert!((sol.pool(i).investment - 759_174.7).abs() < 0.1);
            assert!((sol.pool(i).expected_utility - 535.60).abs() < 0.01);
            assert!((sol.pool(i).expected_reward - 5849.82).abs() < 0.01);
        }
    }

    #[test]
    fn lone_pool_without_outside_power_invests_nothing() {
        let mut env = reference_env();
        env.nonstrategic_power = 0.0;
        let env = validate_env(env).unwrap();
        let sol = pool_fixed_point(&reference_pool_specs()[..1], &[], &env, FixedPointOptions::default()).unwrap();
        assert_eq!(sol.pool(0).investment, 0.0);
        assert!(sol.assignments[0].work.iter().all(|w| *w == 0.0));
    }

    fn tiered_pools() -> Vec<PoolSpec> {
        let a = PoolSpec::new(
            "a",
            vec![miner("a/0", 0.0006, 1.0, 300_000.0), miner("a/1", 0.0008, 1.0, 2_000_000.0), miner("a/2", 0.0009, 1.2, 2_000_000.0)],
        )
        .with_block(2100.0, 0.005 / 60.0);
        let b = PoolSpec::new(
            "b",
            vec![miner("b/0", 0.0007, 0.9, 500_000.0), miner("b/1", 0.0007, 1.1, 200_000.0), miner("b/2", 0.001, 1.0, 3_000_000.0)],
        )
        .with_block(1500.0, 0.004 / 60.0);
        vec![a, b]
    }

    #[test]
    fn tiered_pools_satisfy_weighted_means_and_psi_identity() {
        let env = validate_env(reference_env()).unwrap();
        let pools = tiered_pools();
        let sol = pool_fixed_point(&pools, &[], &env, FixedPointOptions::default()).unwrap();
        let mut effective = env.nonstrategic_effective_power();
        for (i, pool) in pools.iter().enumerate() {
            let a = &sol.assignments[i];
            let x: f64 = a.work.iter().sum();
            let c: f64 = pool.members.iter().zip(&a.work).map(|(m, w)| m.cost * w).sum::<f64>() / x;
            let k: f64 = pool.members.iter().zip(&a.work).map(|(m, w)| m.efficiency * w).sum::<f64>() / x;
            assert!((x - sol.pool(i).investment).abs() <= 1e-9 * x);
            assert!((c - sol.pool_players[i].cost).abs() <= 1e-9 * c);
            assert!((k - sol.pool_players[i].efficiency).abs() <= 1e-9 * k);
            effective += k * x;
        }
        assert!((effective - sol.solution.psi).abs() <= 1e-9 * effective);
    }

    #[test]
    fn fixed_point_is_idempotent() {
        let env = validate_env(reference_env()).unwrap();
        let pools = tiered_pools();
        let first = pool_fixed_point(&pools, &[], &env, FixedPointOptions::default()).unwrap();
        let start = first.assignments.iter().map(|a| (a.cost, a.efficiency)).collect();
        let again = pool_fixed_point_from(&pools, &[], &env, FixedPointOptions::default(), start).unwrap();
        assert_eq!(again.iterations, 1);
        for i in 0..pools.len() {
            assert!(rel_diff(again.pool(i).investment, first.pool(i).investment) <= 1e-10);
            assert!(rel_diff(again.pool_players[i].cost, first.pool_players[i].cost) <= 1e-10);
        }
    }

    #[test]
    fn protocol_game_is_symmetric_for_identical_static_miners() {
        let members = (0..5).map(|i| miner(&format!("m{i}"), 0.0007, 1.0, 1e9)).collect();
        let pool = PoolSpec::new("p", members);
        let out = protocol_game(&pool, 5849.82, 0.1, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(out.states, 6);
        let first = &out.miners[0];
        assert_eq!(first.role, ProtocolRole::Strategic);
        for m in &out.miners {
            assert_eq!(m.valuation, first.valuation);
            assert_eq!(m.roi(), first.roi());
        }
    }

    /// One pool of the reference network.
    fn reference_pool_members() -> PoolSpec {
        let net = fixtures::reference_network();
        net.pool_specs().unwrap().0.remove(0)
    }

    #[test]
    fn protocol_game_reference_investments() {
        let pool = reference_pool_members();
        let out = protocol_game(&pool, 5849.82, 0.1, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(out.states, 601);
        assert_eq!((out.registered_strategic, out.connected_strategic), (600, 550));
        assert_eq!(out.env.nonstrategic_power, 10_000.0);
        // m identical players against l: ψ solves (m w) ψ² − (m − 1) ψ − l = 0.
        let w = 0.0007 / (0.1 * 5849.82);
        let m = 550.0;
        let psi = ((m - 1.0) + libm::sqrt((m - 1.0) * (m - 1.0) + 4.0 * 10_000.0 * m * w)) / (2.0 * m * w);
        let x = psi * (1.0 - psi * w);
        let strategic = out.miners.iter().find(|m| m.role == ProtocolRole::Strategic).unwrap();
        assert!((strategic.investment - x).abs() < 1e-6 * x);
        assert!((x - 1498.5).abs() < 0.1);
        let small = out.miners.iter().find(|m| m.role == ProtocolRole::Nonstrategic).unwrap();
        assert_eq!(small.investment, 20.0);
        assert_eq!(out.miners.iter().filter(|m| m.role == ProtocolRole::Nonstrategic).count(), 500);
        assert!(strategic.roi() > small.roi());
    }

    #[test]
    fn protocol_game_rejects_bad_reward() {
        let pool = reference_pool_members();
        assert_eq!(protocol_game(&pool, 0.0, 0.1, 10).unwrap_err(), PoolError::NonPositiveReward(0.0));
    }

    fn reference_shares(reference: Option<usize>) -> (PoolSpec, RewardShares) {
        let pool = reference_pool_members();
        let assignment = assign_pool(&pool, 759_174.692).unwrap();
        let protocol = protocol_game(&pool, 5849.8199, 0.1, DEFAULT_STATE_CAP).unwrap();
        let outcome = PlayerOutcome {
            id: pool.id.clone(),
            investment: 759_174.692,
            win_prob: 0.0,
            expected_reward: 5849.8199,
            expected_cost: 0.0007 * 759_174.692 / 0.1,
            expected_utility: 535.597,
        };
        let shares =
            reward_shares(&pool, &assignment, &protocol, &outcome, 0.1, AlphaCostBasis::Assigned, reference).unwrap();
        (pool, shares)
    }

    #[test]
    fn reference_pool_shares_sum_to_one() {
        let (pool, shares) = reference_shares(None);
        let total: f64 = shares.miners.iter().map(|m| m.alpha).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let composite: f64 = shares.miners.iter().map(|m| m.composite).sum();
        assert!((composite - 1.0).abs() < 1e-12);
        let alpha_of = |cap: f64| shares.miners.iter().find(|m| pool.members[m.member].capacity == cap).unwrap().alpha;
        assert!(alpha_of(2000.0) > alpha_of(20.0));
        assert_eq!(pool.members[shares.reference].id, "pool-0/cap2000/0");
    }

    #[test]
    fn shares_do_not_depend_on_the_reference() {
        let (_, a) = reference_shares(None);
        let (_, b) = reference_shares(Some(0));
        for (x, y) in a.miners.iter().zip(&b.miners) {
            assert!((x.composite - y.composite).abs() <= 1e-12 * x.composite.max(1e-300));
            assert!((x.alpha - y.alpha).abs() <= 1e-12);
        }
    }

    #[test]
    fn identical_miners_share_equally() {
        let members = (0..4).map(|i| miner(&format!("m{i}"), 0.0007, 1.0, 1e9)).collect();
        let pool = PoolSpec::new("p", members);
        let assignment = assign_pool(&pool, 1000.0).unwrap();
        let protocol = protocol_game(&pool, 500.0, 0.1, DEFAULT_STATE_CAP).unwrap();
        let outcome = PlayerOutcome {
            id: "p".into(),
            investment: 1000.0,
            win_prob: 0.1,
            expected_reward: 500.0,
            expected_cost: 7.0,
            expected_utility: 493.0,
        };
        let s = reward_shares(&pool, &assignment, &protocol, &outcome, 0.1, AlphaCostBasis::Assigned, None).unwrap();
        for m in &s.miners {
            assert!((m.alpha - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn reference_without_work_is_rejected() {
        let pool = PoolSpec::new("p", vec![miner("a", 0.0007, 1.0, 10.0), miner("b", 0.0007, 1.0, 10.0)]);
        let protocol = protocol_game(&pool, 500.0, 0.1, DEFAULT_STATE_CAP).unwrap();
        let assignment = WorkAssignment { work: vec![0.0, 5.0], total: 5.0, cost: 0.0007, efficiency: 1.0 };
        let outcome = PlayerOutcome {
            id: "p".into(),
            investment: 5.0,
            win_prob: 0.1,
            expected_reward: 1.0,
            expected_cost: 0.035,
            expected_utility: 0.965,
        };
        let err = reward_shares(&pool, &assignment, &protocol, &outcome, 0.1, AlphaCostBasis::Assigned, None).unwrap_err();
        assert_eq!(err, PoolError::InvalidReference { id: "a".into(), what: "zero cost" });
    }

    #[test]
    fn total_utility_adds_pools_and_solo_mining() {
        let env = validate_env(reference_env()).unwrap();
        let pools = reference_pool_specs();
        let m = miner("solo", 0.0007, 1.0, 1e7).with_block(2100.0, 0.005 / 60.0);
        let settled = settle_solo(&pools[..9], core::slice::from_ref(&m), &env, FixedPointOptions::default()).unwrap();
        assert_eq!(settled.roles, vec![SettledRole::Strategic(0)]);
        let solo = settled.pools.solo(0);
        assert!((solo.expected_utility - 535.60).abs() < 0.01);
        let only_solo = miner_total_utility(&m, &[], SoloRole::Strategic(solo), &env).unwrap();
        assert!((only_solo - 535.60).abs() < 0.01);

        let memberships = [
            Membership { composite: 0.001, pool_utility: 535.6 },
            Membership { composite: 0.002, pool_utility: 400.0 },
        ];
        let pooled = miner_total_utility(&m, &memberships, SoloRole::Absent, &env).unwrap();
        assert!((pooled - (0.001 * 535.6 + 0.002 * 400.0)).abs() < 1e-12);
        let both = miner_total_utility(&m, &memberships, SoloRole::Strategic(solo), &env).unwrap();
        assert!((both - pooled - only_solo).abs() < 1e-9);

        let weak = miner("weak", 0.0007, 1.0, 10.0);
        assert!(matches!(
            miner_total_utility(&weak, &[], SoloRole::Strategic(solo), &env),
            Err(PoolError::InconsistentRole { .. })
        ));
    }

    #[test]
    fn small_solo_miner_joins_outside_power() {
        let env = validate_env(reference_env()).unwrap();
        let pools = reference_pool_specs();
        let m = miner("small", 0.0007, 1.0, 2000.0).with_block(2100.0, 0.005 / 60.0);
        let settled = settle_solo(&pools, core::slice::from_ref(&m), &env, FixedPointOptions::default()).unwrap();
        assert_eq!(settled.roles, vec![SettledRole::Nonstrategic(2000.0)]);
        assert_eq!(settled.env.nonstrategic_power, 702_000.0);
        let want = 2000.0 / settled.pools.solution.effective_power * effective_reward(&m, &env) - 0.0007 * 2000.0 / 0.1;
        assert!((settled.utilities[0] - want).abs() < 1e-12 * want);
    }
}
