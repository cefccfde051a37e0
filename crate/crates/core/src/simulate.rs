//! Seeded Monte Carlo engine for the repeated dilemma with memory-one
//! agents.
//!
//! Randomness is keyed by `(master_seed, run)`. Every iteration reads its
//! own ChaCha stream and agent `i` takes the `i`-th draw of that stream, so
//! a run never depends on how runs are scheduled.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dilemma::{Action, DilemmaPayoffs, MemoryOne};

/// Bit set on the stream of the per-iteration noise draws.
const NOISE_STREAM: u64 = 1 << 63;
/// Stream of the initial cooperator draw.
const INITIAL_STREAM: u64 = u64::MAX;
/// Largest population for which profile frequencies can be recorded.
pub const MAX_PROFILE_AGENTS: usize = 16;
/// Bins of the final cooperation-degree histogram.
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("strategy groups hold {agents} agents but the payoffs are for {players} players")]
    PopulationMismatch { agents: usize, players: usize },
    #[error("strategy group {group} has vectors for {got} players, expected {expected}")]
    StrategyLength { group: usize, expected: usize, got: usize },
    #[error("{field} must be {expected}")]
    Invalid { field: &'static str, expected: &'static str },
    #[error("profile frequencies need at most {MAX_PROFILE_AGENTS} agents, got {0}")]
    TooManyForProfiles(usize),
}

/// Agents sharing one strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyGroup {
    pub strategy: MemoryOne,
    pub agents: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub payoffs: DilemmaPayoffs,
    /// Agents are numbered group by group, in order.
    pub groups: Vec<StrategyGroup>,
    /// Iterations played per run.
    pub iterations: usize,
    /// Fraction of agents cooperating in the first iteration.
    pub initial_cooperation: f64,
    pub master_seed: u64,
    pub runs: usize,
    /// Probability that an agent's chosen action is flipped.
    pub error_rate: f64,
    /// Leading iterations left out of utilities and profile counts.
    pub burn_in: usize,
    /// Count how often every action profile is played (small populations).
    pub record_profiles: bool,
}

impl SimConfig {
    /// Defaults: one run, no noise, no burn-in, no profile counts.
    pub fn new(payoffs: DilemmaPayoffs, groups: Vec<StrategyGroup>, iterations: usize, initial_cooperation: f64) -> Self {
        Self {
            payoffs,
            groups,
            iterations,
            initial_cooperation,
            master_seed: 0,
            runs: 1,
            error_rate: 0.0,
            burn_in: 0,
            record_profiles: false,
        }
    }

    pub fn agents(&self) -> usize {
        self.groups.iter().map(|g| g.agents).sum()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let players = self.payoffs.players();
        let agents = self.agents();
        if agents != players {
            return Err(SimError::PopulationMismatch { agents, players });
        }
        for (group, g) in self.groups.iter().enumerate() {
            if g.strategy.players() != players {
                return Err(SimError::StrategyLength { group, expected: players, got: g.strategy.players() });
            }
        }
        let invalid = |field, expected| Err(SimError::Invalid { field, expected });
        if self.iterations == 0 {
            return invalid("iterations", "at least 1");
        }
        if self.runs == 0 {
            return invalid("runs", "at least 1");
        }
        if !(0.0..=1.0).contains(&self.initial_cooperation) {
            return invalid("initial_cooperation", "in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.error_rate) {
            return invalid("error_rate", "in [0, 1]");
        }
        if self.burn_in >= self.iterations {
            return invalid("burn_in", "below iterations");
        }
        if self.record_profiles && agents > MAX_PROFILE_AGENTS {
            return Err(SimError::TooManyForProfiles(agents));
        }
        Ok(())
    }

    fn agent_groups(&self) -> Vec<usize> {
        self.groups.iter().enumerate().flat_map(|(g, grp)| core::iter::repeat_n(g, grp.agents)).collect()
    }
}

/// Generator of run `run` positioned at the start of `stream`.
pub fn stream_rng(master_seed: u64, run: u64, stream: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&run.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng
}

/// Payoff of every agent for one action profile (`true` = cooperate).
pub fn payoffs_of(actions: &[bool], payoffs: &DilemmaPayoffs) -> Vec<f64> {
    let k = actions.iter().filter(|a| **a).count();
    actions
        .iter()
        .map(|&c| if c { payoffs.payoff(Action::Cooperate, k - 1) } else { payoffs.payoff(Action::Defect, k) })
        .collect()
}

/// Plays one iteration: returns the payoffs of `actions` and the next
/// actions, drawn agent by agent from `rng` (then flipped with probability
/// `error_rate` using `noise`).
pub fn step(
    actions: &[bool],
    strategies: &[&MemoryOne],
    payoffs: &DilemmaPayoffs,
    error_rate: f64,
    rng: &mut impl RngCore,
    noise: Option<&mut dyn RngCore>,
) -> (Vec<bool>, Vec<f64>) {
    let paid = payoffs_of(actions, payoffs);
    let mut next = vec![false; actions.len()];
    draw_next(actions, strategies, rng, &mut next);
    if let Some(noise) = noise {
        flip(&mut next, error_rate, noise);
    }
    (next, paid)
}

fn draw_next<S: core::ops::Deref<Target = MemoryOne>>(
    actions: &[bool],
    strategies: &[S],
    rng: &mut impl RngCore,
    next: &mut [bool],
) {
    let k = actions.iter().filter(|a| **a).count();
    for ((slot, &c), s) in next.iter_mut().zip(actions).zip(strategies) {
        let (own, j) = if c { (Action::Cooperate, k - 1) } else { (Action::Defect, k) };
        *slot = rng.random::<f64>() < s.probability(own, j);
    }
}

fn flip(actions: &mut [bool], error_rate: f64, noise: &mut (impl RngCore + ?Sized)) {
    if error_rate > 0.0 {
        for a in actions {
            if noise.random::<f64>() < error_rate {
                *a = !*a;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimTrajectory {
    pub run: u64,
    pub master_seed: u64,
    /// Fraction of cooperators in every iteration played.
    pub cooperation: Vec<f64>,
    /// Payoff accumulated by each agent after the burn-in.
    pub utilities: Vec<f64>,
    /// Iterations counted in `utilities`.
    pub counted: usize,
    /// Plays of each action profile after the burn-in, indexed by the bit
    /// mask of cooperators (agent `i` is bit `i`).
    pub profile_counts: Option<Vec<u64>>,
}

impl SimTrajectory {
    pub fn final_cooperation(&self) -> f64 {
        *self.cooperation.last().expect("at least one iteration")
    }
}

/// Plays run `run` of `config`.
pub fn run(config: &SimConfig, run: u64) -> Result<SimTrajectory, SimError> {
    config.validate()?;
    let n = config.agents();
    let groups = config.agent_groups();
    let strategies: Vec<&MemoryOne> = groups.iter().map(|&g| &config.groups[g].strategy).collect();
    let (a, b) = (config.payoffs.cooperator(), config.payoffs.deserter());

    let cooperators = libm::round(config.initial_cooperation * n as f64) as usize;
    let mut actions = vec![false; n];
    let mut init = stream_rng(config.master_seed, run, INITIAL_STREAM);
    for i in rand::seq::index::sample(&mut init, n, cooperators) {
        actions[i] = true;
    }

    let mut cooperation = Vec::with_capacity(config.iterations);
    let mut utilities = vec![0.0; n];
    let mut profile_counts = config.record_profiles.then(|| vec![0u64; 1 << n]);
    let mut next = vec![false; n];
    for t in 0..config.iterations {
        let k = actions.iter().filter(|c| **c).count();
        cooperation.push(k as f64 / n as f64);
        if t >= config.burn_in {
            for (u, &c) in utilities.iter_mut().zip(&actions) {
                *u += if c { a[k - 1] } else { b[k] };
            }
            if let Some(counts) = profile_counts.as_mut() {
                let mask = actions.iter().enumerate().filter(|(_, c)| **c).fold(0usize, |m, (i, _)| m | 1 << i);
                counts[mask] += 1;
            }
            #[cfg(debug_assertions)]
            {
                let total: f64 = payoffs_of(&actions, &config.payoffs).iter().sum();
                let want = k as f64 * if k > 0 { a[k - 1] } else { 0.0 } + (n - k) as f64 * if k < n { b[k] } else { 0.0 };
                debug_assert!((total - want).abs() <= 1e-9 * want.abs().max(1.0));
            }
        }
        if t + 1 == config.iterations {
            break;
        }
        draw_next(&actions, &strategies, &mut stream_rng(config.master_seed, run, t as u64), &mut next);
        if config.error_rate > 0.0 {
            let mut noise = stream_rng(config.master_seed, run, t as u64 | NOISE_STREAM);
            flip(&mut next, config.error_rate, &mut noise);
        }
        core::mem::swap(&mut actions, &mut next);
    }
    Ok(SimTrajectory {
        run,
        master_seed: config.master_seed,
        cooperation,
        utilities,
        counted: config.iterations - config.burn_in,
        profile_counts,
    })
}

/// Per-iteration statistics of a batch of runs.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchSummary {
    pub mean: Vec<f64>,
    pub q10: Vec<f64>,
    pub median: Vec<f64>,
    pub q90: Vec<f64>,
    /// Final cooperation degrees in [`HISTOGRAM_BINS`] equal bins over
    /// `[0, 1]`; a degree of exactly 1 falls in the last bin.
    pub histogram: Vec<u64>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Summarizes trajectories of equal length (in the given order).
pub fn summarize(trajectories: &[SimTrajectory]) -> BatchSummary {
    let len = trajectories.iter().map(|t| t.cooperation.len()).min().unwrap_or(0);
    let mut out = BatchSummary {
        mean: Vec::with_capacity(len),
        q10: Vec::with_capacity(len),
        median: Vec::with_capacity(len),
        q90: Vec::with_capacity(len),
        histogram: vec![0; HISTOGRAM_BINS],
    };
    if trajectories.is_empty() {
        return out;
    }
    let mut column = Vec::with_capacity(trajectories.len());
    for t in 0..len {
        column.clear();
        column.extend(trajectories.iter().map(|tr| tr.cooperation[t]));
        out.mean.push(column.iter().sum::<f64>() / column.len() as f64);
        column.sort_by(f64::total_cmp);
        out.q10.push(quantile(&column, 0.1));
        out.median.push(quantile(&column, 0.5));
        out.q90.push(quantile(&column, 0.9));
    }
    for tr in trajectories {
        let bin = ((tr.final_cooperation() * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        out.histogram[bin] += 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub trajectories: Vec<SimTrajectory>,
    pub summary: BatchSummary,
}

/// Plays runs `0..config.runs` one after the other.
pub fn batch(config: &SimConfig) -> Result<Batch, SimError> {
    let trajectories = (0..config.runs as u64).map(|r| run(config, r)).collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(&trajectories);
    Ok(Batch { trajectories, summary })
}

/// Gap between the focal agent's mean payoff per counted iteration and the
/// mean over its co-players.
pub fn fairness_check(trajectory: &SimTrajectory, focal: usize) -> f64 {
    let n = trajectory.utilities.len();
    let others = (trajectory.utilities.iter().sum::<f64>() - trajectory.utilities[focal]) / (n - 1) as f64;
    libm::fabs(trajectory.utilities[focal] - others) / trajectory.counted as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilemma::{fair_strategy, reference_phi};
    use alloc::vec;

    /// Always draws zero.
    struct Zero;

    impl RngCore for Zero {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(0);
        }
    }

    fn paper(n: usize) -> DilemmaPayoffs {
        DilemmaPayoffs::linear(35.0, 0.04, 70.0, 0.05, n).unwrap()
    }

    fn one_group(payoffs: DilemmaPayoffs, strategy: MemoryOne, iterations: usize, ic: f64) -> SimConfig {
        let n = payoffs.players();
        SimConfig::new(payoffs, vec![StrategyGroup { strategy, agents: n }], iterations, ic)
    }

    #[test]
    fn always_cooperate_stays_cooperative() {
        let cfg = one_group(paper(50), MemoryOne::always_cooperate(50), 30, 0.2);
        let tr = run(&cfg, 0).unwrap();
        assert_eq!(tr.cooperation[0], 0.2);
        assert!(tr.cooperation[1..].iter().all(|c| *c == 1.0));
    }

    #[test]
    fn repeat_freezes_the_profile() {
        let cfg = one_group(paper(40), MemoryOne::repeat(40), 25, 0.35);
        let tr = run(&cfg, 3).unwrap();
        assert!(tr.cooperation.iter().all(|c| *c == 14.0 / 40.0));
    }

    #[test]
    fn initial_count_is_exact() {
        for ic in [0.0, 0.004, 0.5, 0.995, 1.0] {
            let cfg = one_group(paper(1000), MemoryOne::repeat(1000), 1, ic);
            let tr = run(&cfg, 1).unwrap();
            assert_eq!(tr.cooperation[0], libm::round(ic * 1000.0) / 1000.0);
        }
    }

    #[test]
    fn full_cooperation_absorbs_fair_players() {
        let p = paper(10_000);
        let z = fair_strategy(&p, reference_phi(&p)).unwrap();
        let cfg = one_group(p, z.strategy, 1000, 1.0);
        let tr = run(&cfg, 0).unwrap();
        assert!(tr.cooperation.iter().all(|c| *c == 1.0));
    }

    #[test]
    fn step_pays_profile_and_draws_next() {
        let p = DilemmaPayoffs::new(vec![1.0, 2.0, 3.0], vec![1.5, 2.5, 4.0]).unwrap();
        let coop = MemoryOne::always_cooperate(3);
        let defect = MemoryOne::always_defect(3);
        let mut rng = Zero;
        let (next, paid) = step(&[true, false, true], &[&coop, &defect, &coop], &p, 0.0, &mut rng, None);
        assert_eq!(paid, vec![2.0, 4.0, 2.0]);
        assert_eq!(next, vec![true, false, true]);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let p = paper(200);
        let z = fair_strategy(&p, reference_phi(&p)).unwrap();
        let mut cfg = one_group(p, z.strategy, 100, 0.8);
        cfg.master_seed = 42;
        cfg.runs = 3;
        cfg.error_rate = 0.01;
        let a = batch(&cfg).unwrap();
        let b = batch(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trajectories[2], run(&cfg, 2).unwrap());
        cfg.master_seed = 43;
        assert_ne!(batch(&cfg).unwrap().trajectories[0].cooperation, a.trajectories[0].cooperation);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = one_group(paper(5), MemoryOne::repeat(5), 10, 0.5);
        cfg.groups[0].agents = 4;
        assert_eq!(cfg.validate(), Err(SimError::PopulationMismatch { agents: 4, players: 5 }));
        let mut cfg = one_group(paper(5), MemoryOne::repeat(5), 0, 0.5);
        assert!(matches!(cfg.validate(), Err(SimError::Invalid { field: "iterations", .. })));
        cfg.iterations = 5;
        cfg.initial_cooperation = 1.5;
        assert!(matches!(cfg.validate(), Err(SimError::Invalid { field: "initial_cooperation", .. })));
        let mut cfg = one_group(paper(20), MemoryOne::repeat(20), 5, 0.5);
        cfg.record_profiles = true;
        assert_eq!(cfg.validate(), Err(SimError::TooManyForProfiles(20)));
    }

    #[test]
    fn summary_quantiles_and_histogram() {
        let mk = |c: Vec<f64>| SimTrajectory {
            run: 0,
            master_seed: 0,
            cooperation: c,
            utilities: vec![0.0, 0.0],
            counted: 1,
            profile_counts: None,
        };
        let trs = vec![mk(vec![0.0, 1.0]), mk(vec![0.5, 0.5]), mk(vec![1.0, 0.0])];
        let s = summarize(&trs);
        assert_eq!(s.mean, vec![0.5, 0.5]);
        assert_eq!(s.median, vec![0.5, 0.5]);
        assert!((s.q10[0] - 0.1).abs() < 1e-15);
        assert_eq!(s.histogram[0], 1);
        assert_eq!(s.histogram[10], 1);
        assert_eq!(s.histogram[19], 1);
    }

    #[test]
    fn payoff_bookkeeping_matches_recount() {
        let p = paper(7);
        let z = fair_strategy(&p, reference_phi(&p)).unwrap();
        let mut cfg = one_group(p.clone(), z.strategy, 1, 3.0 / 7.0);
        cfg.master_seed = 9;
        let tr = run(&cfg, 0).unwrap();
        let total: f64 = tr.utilities.iter().sum();
        assert!((total - (3.0 * p.cooperator()[2] + 4.0 * p.deserter()[3])).abs() < 1e-12);
    }
}
