//! TOML run configuration.
//!
//! Every run file names one `scenario` and carries the blocks that scenario
//! reads. Unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;

use coopmine_core::dilemma::{fair_strategy, max_phi, reference_phi};
use coopmine_core::model::{validate_env, GameEnv, PlayerSpec, ValidatedEnv};
use coopmine_core::pool::{
    AlphaCostBasis, FixedPointOptions, MemberGroup, PipelineOptions, PoolLayout, PoolSpec, ScenarioNetwork,
};
use coopmine_core::simulate::{SimConfig, StrategyGroup};
use coopmine_core::stochastic::{ChainClass, DEFAULT_STATE_CAP};
use coopmine_core::{DilemmaPayoffs, MemoryOne};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    PoolSolve,
    Protocol,
    Shares,
    ScenarioTable,
    DilemmaSim,
    Stationary,
    Sweep,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::PoolSolve,
        ScenarioKind::Protocol,
        ScenarioKind::Shares,
        ScenarioKind::ScenarioTable,
        ScenarioKind::DilemmaSim,
        ScenarioKind::Stationary,
        ScenarioKind::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::PoolSolve => "pool-solve",
            ScenarioKind::Protocol => "protocol",
            ScenarioKind::Shares => "shares",
            ScenarioKind::ScenarioTable => "scenario-table",
            ScenarioKind::DilemmaSim => "dilemma-sim",
            ScenarioKind::Stationary => "stationary",
            ScenarioKind::Sweep => "sweep",
        }
    }

    /// Top-level blocks the scenario reads.
    pub fn required_blocks(self) -> &'static [&'static str] {
        match self {
            ScenarioKind::PoolSolve => &["env", "players"],
            ScenarioKind::Protocol | ScenarioKind::Shares | ScenarioKind::ScenarioTable => &["env", "network"],
            ScenarioKind::DilemmaSim => &["dilemma"],
            ScenarioKind::Stationary => &["stationary"],
            ScenarioKind::Sweep => &["env", "players", "sweep"],
        }
    }
}

/// A parsed run file. Blocks are optional here; [`RunConfig::validate`]
/// checks that the scenario's blocks are present.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<ScenarioKind>,
    /// Master seed of the Monte Carlo runs.
    pub seed: Option<u64>,
    pub env: Option<EnvConfig>,
    pub players: Option<Vec<PlayerConfig>>,
    pub network: Option<NetworkConfig>,
    pub dilemma: Option<DilemmaConfig>,
    pub stationary: Option<StationaryConfig>,
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Block reward (BTC).
    pub r: f64,
    /// Exchange rate ($/BTC).
    pub tau: f64,
    /// Blocks per minute.
    pub beta: f64,
    /// Fee per transaction (BTC).
    #[serde(default)]
    pub theta: f64,
    /// Nonstrategic power (kWh/min).
    #[serde(default)]
    pub l: f64,
    #[serde(default = "one")]
    pub k_l: f64,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerConfig {
    pub id: String,
    /// Copies of this player; ids become `{id}-{i}` when above one.
    #[serde(default = "one_usize")]
    pub count: usize,
    pub c: f64,
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub z: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub mu: f64,
    pub capacity: Option<f64>,
}

impl PlayerConfig {
    fn spec(&self, id: String) -> PlayerSpec {
        PlayerSpec::new(id, self.c, self.k)
            .with_block(self.t, self.z)
            .with_rates(self.lambda, self.mu)
            .with_capacity(self.capacity.unwrap_or(f64::INFINITY))
    }

    fn expand(&self) -> Vec<PlayerSpec> {
        if self.count == 1 {
            vec![self.spec(self.id.clone())]
        } else {
            (0..self.count).map(|i| self.spec(format!("{}-{i}", self.id))).collect()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaBasis {
    #[default]
    Assigned,
    ProtocolInvestment,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub profiles: Vec<PlayerConfig>,
    pub pools: Vec<PoolConfig>,
    #[serde(default)]
    pub alpha_basis: AlphaBasis,
    pub state_cap: Option<usize>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub damping: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub id: String,
    #[serde(default = "one_usize")]
    pub count: usize,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub z: f64,
    pub groups: Vec<GroupConfig>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    /// Profile id.
    pub profile: String,
    pub registered: usize,
    /// Defaults to `registered`.
    pub connected: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DilemmaConfig {
    pub payoffs: PayoffConfig,
    pub strategies: Vec<StrategyConfig>,
    pub iterations: usize,
    pub initial_cooperation: f64,
    #[serde(default = "one_usize")]
    pub runs: usize,
    #[serde(default)]
    pub error_rate: f64,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default)]
    pub record_profiles: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    /// Number of players.
    pub n: usize,
    pub a_top: Option<f64>,
    pub a_bottom: Option<f64>,
    pub b_top: Option<f64>,
    pub b_bottom: Option<f64>,
    /// Explicit vectors, indexed by cooperating co-players.
    pub a: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Fair,
    AlwaysCooperate,
    AlwaysDefect,
    Repeat,
    MemoryOne,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub agents: usize,
    /// `phi` of a fair strategy; defaults to `phi_scale` times the reference.
    pub phi: Option<f64>,
    pub phi_scale: Option<f64>,
    pub cooperate: Option<Vec<f64>>,
    pub defect: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryConfig {
    pub classes: Vec<ClassConfig>,
    pub state_cap: Option<usize>,
    /// Inclusive count range of the first class whose mass is reported.
    pub report_range: Option<[usize; 2]>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassConfig {
    pub id: String,
    pub registered: usize,
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Psi,
    XStar,
    Utility,
    NetworkPower,
    AnnualEnergyTwh,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// `env.<field>`, `players.*.<field>` or `players.<id>.<field>`.
    pub parameter: String,
    pub values: Vec<f64>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::XStar, Metric::Utility, Metric::NetworkPower, Metric::AnnualEnergyTwh]
}

/// Reads and parses a run file. Parse errors carry TOML line and column.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
    let config = parse_config(&text).map_err(|message| CliError::Parse { path: path.into(), message })?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(text: &str) -> Result<RunConfig, String> {
    toml::from_str(text).map_err(|e| e.to_string().trim_end().to_string())
}

/// Collects validation messages, each prefixed by its field path.
#[derive(Default)]
struct Problems(Vec<String>);

impl Problems {
    fn push(&mut self, path: impl std::fmt::Display, message: impl std::fmt::Display) {
        self.0.push(format!("{path}: {message}"));
    }

    fn check(&mut self, ok: bool, path: impl std::fmt::Display, message: &str) {
        if !ok {
            self.push(path, message);
        }
    }

    fn finish(self) -> Result<(), CliError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(self.0))
        }
    }
}

fn player_problems(p: &PlayerConfig, path: &str, problems: &mut Problems) {
    problems.check(p.count >= 1, format!("{path}.count"), "must be at least 1");
    if let Err(e) = p.spec(p.id.clone()).validate() {
        for v in e.violations {
            problems.push(format!("{path}.{}", v.field), v.message);
        }
    }
}

impl RunConfig {
    pub fn kind(&self) -> ScenarioKind {
        self.scenario.expect("validated config has a scenario")
    }

    /// Checks that the scenario's blocks are present and every field is in
    /// range, reporting all problems at once.
    pub fn validate(&self) -> Result<(), CliError> {
        let Some(kind) = self.scenario else {
            let listing: Vec<String> = ScenarioKind::ALL
                .iter()
                .map(|k| format!("{} needs [{}]", k.name(), k.required_blocks().join(", ")))
                .collect();
            return Err(CliError::Validation(vec![format!(
                "scenario: missing; set `scenario` to one of the kinds below and add its blocks: {}",
                listing.join("; ")
            )]));
        };
        let mut problems = Problems::default();
        for block in kind.required_blocks() {
            let present = match *block {
                "env" => self.env.is_some(),
                "players" => self.players.is_some(),
                "network" => self.network.is_some(),
                "dilemma" => self.dilemma.is_some(),
                "stationary" => self.stationary.is_some(),
                "sweep" => self.sweep.is_some(),
                _ => unreachable!(),
            };
            problems.check(present, block, &format!("required by scenario {}", kind.name()));
        }
        if let Some(env) = &self.env {
            if let Err(e) = validate_env(env.game_env()) {
                for v in e.violations {
                    problems.push(format!("env.{}", v.field), v.message);
                }
            }
        }
        if let Some(players) = &self.players {
            problems.check(!players.is_empty(), "players", "needs at least one player");
            for (i, p) in players.iter().enumerate() {
                player_problems(p, &format!("players[{i}]"), &mut problems);
            }
            let specs: Vec<PlayerSpec> = players.iter().flat_map(PlayerConfig::expand).collect();
            if let Some(dup) = first_duplicate(specs.iter().map(|p| p.id.as_str())) {
                problems.push("players", format!("duplicate id {dup:?}"));
            }
        }
        if let Some(net) = &self.network {
            net.problems(&mut problems);
        }
        if let Some(d) = &self.dilemma {
            d.problems(&mut problems);
        }
        if let Some(s) = &self.stationary {
            problems.check(!s.classes.is_empty(), "stationary.classes", "needs at least one class");
            for (i, c) in s.classes.iter().enumerate() {
                let path = format!("stationary.classes[{i}]");
                problems.check(c.lambda.is_finite() && c.lambda >= 0.0, format!("{path}.lambda"), "must be non-negative");
                problems.check(c.mu.is_finite() && c.mu >= 0.0, format!("{path}.mu"), "must be non-negative");
            }
            if let Some([lo, hi]) = s.report_range {
                problems.check(lo <= hi, "stationary.report_range", "lower end above upper end");
            }
        }
        if let Some(s) = &self.sweep {
            problems.check(!s.values.is_empty(), "sweep.values", "needs at least one value");
            problems.check(!s.metrics.is_empty(), "sweep.metrics", "needs at least one metric");
            if let Err(e) = SweepTarget::parse(&s.parameter, self.players.as_deref().unwrap_or(&[])) {
                problems.push("sweep.parameter", e);
            }
        }
        problems.finish()
    }

    pub fn env(&self) -> Result<ValidatedEnv, CliError> {
        let env = self.env.ok_or_else(|| CliError::invalid("env", "missing"))?;
        validate_env(env.game_env()).map_err(|e| {
            CliError::Validation(e.violations.iter().map(|v| format!("env.{}: {}", v.field, v.message)).collect())
        })
    }

    pub fn player_specs(&self) -> Vec<PlayerSpec> {
        self.players.iter().flatten().flat_map(PlayerConfig::expand).collect()
    }

    pub fn scenario_network(&self) -> Result<ScenarioNetwork, CliError> {
        let net = self.network.as_ref().ok_or_else(|| CliError::invalid("network", "missing"))?;
        net.build(self.env()?)
    }

    pub fn sim_config(&self, seed: u64) -> Result<SimConfig, CliError> {
        let d = self.dilemma.as_ref().ok_or_else(|| CliError::invalid("dilemma", "missing"))?;
        d.build(seed)
    }

    pub fn chain_classes(&self) -> Result<Vec<ChainClass>, CliError> {
        let s = self.stationary.as_ref().ok_or_else(|| CliError::invalid("stationary", "missing"))?;
        Ok(s.classes
            .iter()
            .map(|c| ChainClass {
                profile: PlayerSpec::new(c.id.clone(), 0.0, 1.0).with_rates(c.lambda, c.mu),
                registered: c.registered,
            })
            .collect())
    }
}

fn first_duplicate<'a>(ids: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    let mut seen = std::collections::HashSet::new();
    ids.into_iter().find(|id| !seen.insert(*id))
}

impl EnvConfig {
    pub fn game_env(&self) -> GameEnv {
        GameEnv {
            block_reward: self.r,
            exchange_rate: self.tau,
            pow_rate: self.beta,
            tx_fee: self.theta,
            nonstrategic_power: self.l,
            nonstrategic_efficiency: self.k_l,
        }
    }
}

impl NetworkConfig {
    fn problems(&self, problems: &mut Problems) {
        problems.check(!self.profiles.is_empty(), "network.profiles", "needs at least one profile");
        problems.check(!self.pools.is_empty(), "network.pools", "needs at least one pool");
        for (i, p) in self.profiles.iter().enumerate() {
            let path = format!("network.profiles[{i}]");
            player_problems(p, &path, problems);
            problems.check(p.count == 1, format!("{path}.count"), "profiles cannot be replicated");
        }
        if let Some(dup) = first_duplicate(self.profiles.iter().map(|p| p.id.as_str())) {
            problems.push("network.profiles", format!("duplicate id {dup:?}"));
        }
        for (i, pool) in self.pools.iter().enumerate() {
            let path = format!("network.pools[{i}]");
            problems.check(pool.count >= 1, format!("{path}.count"), "must be at least 1");
            problems.check(pool.t.is_finite() && pool.t >= 0.0, format!("{path}.t"), "must be non-negative");
            problems.check(pool.z.is_finite() && pool.z >= 0.0, format!("{path}.z"), "must be non-negative");
            problems.check(!pool.groups.is_empty(), format!("{path}.groups"), "needs at least one group");
            for (j, g) in pool.groups.iter().enumerate() {
                let gpath = format!("{path}.groups[{j}]");
                problems.check(
                    self.profiles.iter().any(|p| p.id == g.profile),
                    format!("{gpath}.profile"),
                    &format!("unknown profile {:?}", g.profile),
                );
                problems.check(
                    g.connected.unwrap_or(g.registered) <= g.registered,
                    format!("{gpath}.connected"),
                    "exceeds registered",
                );
            }
        }
        if let Some(t) = self.tolerance {
            problems.check(t > 0.0 && t.is_finite(), "network.tolerance", "must be positive");
        }
        if let Some(d) = self.damping {
            problems.check((0.0..1.0).contains(&d), "network.damping", "must be in [0, 1)");
        }
        if let Some(m) = self.max_iterations {
            problems.check(m >= 1, "network.max_iterations", "must be at least 1");
        }
    }

    fn options(&self) -> PipelineOptions {
        let defaults = FixedPointOptions::default();
        PipelineOptions {
            fixed_point: FixedPointOptions {
                tolerance: self.tolerance.unwrap_or(defaults.tolerance),
                max_iterations: self.max_iterations.unwrap_or(defaults.max_iterations),
                damping: self.damping.unwrap_or(defaults.damping),
            },
            state_cap: self.state_cap.unwrap_or(DEFAULT_STATE_CAP),
            alpha_basis: match self.alpha_basis {
                AlphaBasis::Assigned => AlphaCostBasis::Assigned,
                AlphaBasis::ProtocolInvestment => AlphaCostBasis::ProtocolInvestment,
            },
        }
    }

    fn build(&self, env: ValidatedEnv) -> Result<ScenarioNetwork, CliError> {
        let profiles: Vec<PlayerSpec> = self.profiles.iter().map(|p| p.spec(p.id.clone())).collect();
        let mut pools = Vec::new();
        for pool in &self.pools {
            let groups = pool
                .groups
                .iter()
                .map(|g| MemberGroup {
                    profile: profiles.iter().position(|p| p.id == g.profile).expect("validated profile"),
                    registered: g.registered,
                    connected: g.connected.unwrap_or(g.registered),
                })
                .collect::<Vec<_>>();
            for i in 0..pool.count {
                let id = if pool.count == 1 { pool.id.clone() } else { format!("{}-{i}", pool.id) };
                pools.push(PoolLayout { id, transactions: pool.t, delay: pool.z, groups: groups.clone() });
            }
        }
        Ok(ScenarioNetwork { env, profiles, pools, options: self.options() })
    }
}

/// Expanded pools of a network, ready for [`coopmine_core::pool::evaluate_network`].
pub fn network_pools(net: &ScenarioNetwork) -> Result<Vec<PoolSpec>, CliError> {
    Ok(net.pool_specs()?.0)
}

impl PayoffConfig {
    fn build(&self) -> Result<DilemmaPayoffs, CliError> {
        match (self.a_top, self.a_bottom, self.b_top, self.b_bottom, &self.a, &self.b) {
            (Some(at), Some(ab), Some(bt), Some(bb), None, None) => Ok(DilemmaPayoffs::linear(at, ab, bt, bb, self.n)?),
            (None, None, None, None, Some(a), Some(b)) => {
                if a.len() != self.n || b.len() != self.n {
                    return Err(CliError::invalid("dilemma.payoffs", format!("a and b need n = {} entries", self.n)));
                }
                Ok(DilemmaPayoffs::new(a.clone(), b.clone())?)
            }
            _ => Err(CliError::invalid(
                "dilemma.payoffs",
                "give either a_top, a_bottom, b_top and b_bottom, or both vectors a and b",
            )),
        }
    }
}

impl DilemmaConfig {
    fn problems(&self, problems: &mut Problems) {
        problems.check(self.payoffs.n >= 2, "dilemma.payoffs.n", "must be at least 2");
        problems.check(!self.strategies.is_empty(), "dilemma.strategies", "needs at least one strategy group");
        let agents: usize = self.strategies.iter().map(|s| s.agents).sum();
        problems.check(
            agents == self.payoffs.n,
            "dilemma.strategies",
            &format!("agents sum to {agents} but payoffs.n is {}", self.payoffs.n),
        );
        problems.check(self.iterations >= 1, "dilemma.iterations", "must be at least 1");
        problems.check(self.runs >= 1, "dilemma.runs", "must be at least 1");
        problems.check(
            (0.0..=1.0).contains(&self.initial_cooperation),
            "dilemma.initial_cooperation",
            "must be in [0, 1]",
        );
        problems.check((0.0..=1.0).contains(&self.error_rate), "dilemma.error_rate", "must be in [0, 1]");
        problems.check(self.burn_in < self.iterations, "dilemma.burn_in", "must be below iterations");
        for (i, s) in self.strategies.iter().enumerate() {
            let path = format!("dilemma.strategies[{i}]");
            let fair = s.kind == StrategyKind::Fair;
            let explicit = s.kind == StrategyKind::MemoryOne;
            problems.check(fair || (s.phi.is_none() && s.phi_scale.is_none()), &path, "phi applies to fair strategies only");
            problems.check(!(s.phi.is_some() && s.phi_scale.is_some()), &path, "give phi or phi_scale, not both");
            problems.check(
                explicit == (s.cooperate.is_some() && s.defect.is_some()),
                &path,
                "cooperate and defect vectors are required for memory-one and only allowed there",
            );
            problems.check(explicit || (s.cooperate.is_none() && s.defect.is_none()), &path, "vectors only for memory-one");
        }
    }

    fn strategy(&self, s: &StrategyConfig, index: usize, payoffs: &DilemmaPayoffs) -> Result<MemoryOne, CliError> {
        let n = self.payoffs.n;
        Ok(match s.kind {
            StrategyKind::Fair => {
                let phi = match (s.phi, s.phi_scale) {
                    (Some(phi), None) => phi,
                    (None, scale) => scale.unwrap_or(1.0) * reference_phi(payoffs),
                    _ => unreachable!("checked by validate"),
                };
                let interval = max_phi(payoffs)?;
                if !interval.contains(phi) {
                    return Err(CliError::invalid(
                        format!("dilemma.strategies[{index}].phi"),
                        format!("{phi} outside the admissible interval [{}, {}]", interval.lower, interval.upper),
                    ));
                }
                fair_strategy(payoffs, phi)?.strategy
            }
            StrategyKind::AlwaysCooperate => MemoryOne::always_cooperate(n),
            StrategyKind::AlwaysDefect => MemoryOne::always_defect(n),
            StrategyKind::Repeat => MemoryOne::repeat(n),
            StrategyKind::MemoryOne => MemoryOne::new(
                s.cooperate.clone().expect("validated vectors"),
                s.defect.clone().expect("validated vectors"),
            )
            .map_err(|e| CliError::invalid(format!("dilemma.strategies[{index}]"), e))?,
        })
    }

    fn build(&self, seed: u64) -> Result<SimConfig, CliError> {
        let payoffs = self.payoffs.build()?;
        let groups = self
            .strategies
            .iter()
            .enumerate()
            .map(|(i, s)| Ok(StrategyGroup { strategy: self.strategy(s, i, &payoffs)?, agents: s.agents }))
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut cfg = SimConfig::new(payoffs, groups, self.iterations, self.initial_cooperation);
        cfg.master_seed = seed;
        cfg.runs = self.runs;
        cfg.error_rate = self.error_rate;
        cfg.burn_in = self.burn_in;
        cfg.record_profiles = self.record_profiles;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parameter addressed by a sweep.
#[derive(Clone, Debug, PartialEq)]
pub enum SweepTarget {
    Env(EnvField),
    /// `None` addresses every player entry.
    Player { id: Option<String>, field: PlayerField },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvField {
    R,
    Tau,
    Beta,
    Theta,
    L,
    KL,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlayerField {
    C,
    K,
    T,
    Z,
    Capacity,
}

impl SweepTarget {
    pub fn parse(path: &str, players: &[PlayerConfig]) -> Result<SweepTarget, String> {
        let parts: Vec<&str> = path.split('.').collect();
        match parts.as_slice() {
            ["env", field] => Ok(SweepTarget::Env(match *field {
                "r" => EnvField::R,
                "tau" => EnvField::Tau,
                "beta" => EnvField::Beta,
                "theta" => EnvField::Theta,
                "l" => EnvField::L,
                "k_l" => EnvField::KL,
                other => return Err(format!("unknown env field {other:?} (r, tau, beta, theta, l, k_l)")),
            })),
            ["players", who, field] => {
                let field = match *field {
                    "c" => PlayerField::C,
                    "k" => PlayerField::K,
                    "t" => PlayerField::T,
                    "z" => PlayerField::Z,
                    "capacity" => PlayerField::Capacity,
                    other => return Err(format!("unknown player field {other:?} (c, k, t, z, capacity)")),
                };
                let id = if *who == "*" {
                    None
                } else if players.iter().any(|p| p.id == *who) {
                    Some(who.to_string())
                } else {
                    return Err(format!("no player entry with id {who:?}"));
                };
                Ok(SweepTarget::Player { id, field })
            }
            _ => Err(format!("cannot resolve {path:?}; use env.<field> or players.<id|*>.<field>")),
        }
    }

    /// Copy of `config` with the addressed parameter set to `value`.
    pub fn apply(&self, config: &RunConfig, value: f64) -> RunConfig {
        let mut out = config.clone();
        match self {
            SweepTarget::Env(field) => {
                if let Some(env) = out.env.as_mut() {
                    let slot = match field {
                        EnvField::R => &mut env.r,
                        EnvField::Tau => &mut env.tau,
                        EnvField::Beta => &mut env.beta,
                        EnvField::Theta => &mut env.theta,
                        EnvField::L => &mut env.l,
                        EnvField::KL => &mut env.k_l,
                    };
                    *slot = value;
                }
            }
            SweepTarget::Player { id, field } => {
                for p in out.players.iter_mut().flatten() {
                    if id.as_ref().is_some_and(|id| *id != p.id) {
                        continue;
                    }
                    match field {
                        PlayerField::C => p.c = value,
                        PlayerField::K => p.k = value,
                        PlayerField::T => p.t = value,
                        PlayerField::Z => p.z = value,
                        PlayerField::Capacity => p.capacity = Some(value),
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const POOL: &str = r#"
        scenario = "pool-solve"
        [env]
        r = 6.25
        tau = 10000
        beta = 0.1
        [[players]]
        id = "pool"
        count = 3
        c = 0.0007
    "#;

    #[test]
    fn empty_file_lists_required_blocks() {
        let err = parse_config("").unwrap().validate().unwrap_err().to_string();
        assert!(err.contains("scenario: missing"));
        assert!(err.contains("pool-solve needs [env, players]"));
        assert!(err.contains("dilemma-sim needs [dilemma]"));
    }

    #[test]
    fn unknown_key_is_named_with_position() {
        let err = parse_config("scenario = \"pool-solve\"\n[env]\nr = 1\ntau = 1\nbeta = 1\nrho = 2\n").unwrap_err();
        assert!(err.contains("rho"), "{err}");
        assert!(err.contains("line 6"), "{err}");
    }

    #[test]
    fn validation_reports_field_paths() {
        let text = POOL.replace("beta = 0.1", "beta = -1").replace("c = 0.0007", "c = 0.0007\nk = 0");
        let err = parse_config(&text).unwrap().validate().unwrap_err().to_string();
        assert!(err.contains("env.beta: must be positive"), "{err}");
        assert!(err.contains("players[0].k: must be positive"), "{err}");
    }

    #[test]
    fn missing_block_for_scenario() {
        let err = parse_config("scenario = \"stationary\"").unwrap().validate().unwrap_err().to_string();
        assert!(err.contains("stationary: required by scenario stationary"), "{err}");
    }

    #[test]
    fn players_expand_with_counts() {
        let cfg = parse_config(POOL).unwrap();
        cfg.validate().unwrap();
        let ids: Vec<String> = cfg.player_specs().into_iter().map(|p| p.id).collect();
        assert_eq!(ids, ["pool-0", "pool-1", "pool-2"]);
    }

    #[test]
    fn sweep_paths() {
        let cfg = parse_config(POOL).unwrap();
        let players = cfg.players.as_deref().unwrap();
        assert_eq!(SweepTarget::parse("env.r", players), Ok(SweepTarget::Env(EnvField::R)));
        assert!(SweepTarget::parse("players.pool.c", players).is_ok());
        assert!(SweepTarget::parse("players.nobody.c", players).is_err());
        assert!(SweepTarget::parse("env.gamma", players).is_err());
        let target = SweepTarget::parse("players.*.t", players).unwrap();
        let swept = target.apply(&cfg, 2100.0);
        assert_eq!(swept.players.unwrap()[0].t, 2100.0);
    }
}
