//! Scenario dispatch and CSV emission.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use coopmine_core::equilibrium::EquilibriumSolution;
use coopmine_core::pool::{evaluate_network, solve_with_selection, NetworkEvaluation, ProtocolRole};
use coopmine_core::simulate::{self, summarize, SimTrajectory, HISTOGRAM_BINS};
use coopmine_core::stochastic::{build_chain, stationary_distribution, DEFAULT_STATE_CAP};
use coopmine_core::MINUTES_PER_YEAR;

use crate::config::{Metric, RunConfig, ScenarioKind, SweepTarget};
use crate::error::CliError;
use crate::format::canonical;

/// Command-line overrides applied on top of a run file.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Replaces the config's seed.
    pub seed: Option<u64>,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
}

/// What a run printed and wrote.
#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub summary: Vec<String>,
    pub files: Vec<PathBuf>,
}

struct Writer<'a> {
    dir: &'a Path,
    report: RunReport,
}

impl Writer<'_> {
    fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.dir.join(name);
        let err = |source| CliError::Csv { path: path.clone(), source };
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path).map_err(err)?;
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(&row).map_err(err)?;
        }
        w.flush().map_err(|source| CliError::Write { path: path.clone(), source })?;
        self.report.files.push(path);
        Ok(())
    }

    fn line(&mut self, line: impl Into<String>) {
        self.report.summary.push(line.into());
    }
}

fn f(v: f64) -> String {
    canonical(v)
}

fn annual_twh(power: f64) -> f64 {
    power * MINUTES_PER_YEAR / 1e9
}

/// Runs the configured scenario, writing its CSV files under `options.out`.
pub fn run_scenario(config: &RunConfig, options: &RunOptions) -> Result<RunReport, CliError> {
    config.validate()?;
    fs::create_dir_all(&options.out).map_err(|source| CliError::Write { path: options.out.clone(), source })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads)
        .build()
        .map_err(|e| CliError::Threads(e.to_string()))?;
    let mut w = Writer { dir: &options.out, report: RunReport::default() };
    let seed = options.seed.or(config.seed).unwrap_or(0);
    pool.install(|| match config.kind() {
        ScenarioKind::PoolSolve => pool_solve(config, &mut w),
        ScenarioKind::Protocol => network(config, &mut w, true),
        ScenarioKind::Shares => network(config, &mut w, false),
        ScenarioKind::ScenarioTable => scenario_table(config, &mut w),
        ScenarioKind::DilemmaSim => dilemma_sim(config, seed, &mut w),
        ScenarioKind::Stationary => stationary(config, &mut w),
        ScenarioKind::Sweep => sweep(config, &mut w),
    })?;
    Ok(w.report)
}

fn equilibrium_rows(sol: &EquilibriumSolution) -> Vec<Vec<String>> {
    sol.players
        .iter()
        .map(|p| {
            vec![
                p.id.clone(),
                f(p.investment),
                f(p.win_prob),
                f(p.expected_utility),
                f(p.expected_cost),
                f(p.expected_reward),
            ]
        })
        .collect()
}

const EQUILIBRIUM_HEADER: [&str; 6] = ["player_id", "x_star", "win_prob", "utility", "cost", "reward"];

/// `x* = …, utility = …` lines; identical players share one line.
fn equilibrium_summary(sol: &EquilibriumSolution, w: &mut Writer) {
    let line = |x: f64, u: f64| format!("x* = {x:.1} kWh/min, utility = ${u:.2}/block");
    let lines: Vec<(String, String)> =
        sol.players.iter().map(|p| (p.id.clone(), line(p.investment, p.expected_utility))).collect();
    if lines.windows(2).all(|pair| pair[0].1 == pair[1].1) {
        if let Some((_, l)) = lines.first() {
            w.line(l.clone());
        }
    } else {
        for (id, l) in lines {
            w.line(format!("{id}: {l}"));
        }
    }
    w.line(format!(
        "network power = {:.1} kWh/min, annual energy = {:.1} TWh",
        sol.network_power,
        annual_twh(sol.network_power)
    ));
}

fn pool_solve(config: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let env = config.env()?;
    let sol = solve_with_selection(&config.player_specs(), &env)?;
    w.csv("equilibrium.csv", &EQUILIBRIUM_HEADER, equilibrium_rows(&sol))?;
    equilibrium_summary(&sol, w);
    Ok(())
}

fn role_name(role: ProtocolRole) -> &'static str {
    match role {
        ProtocolRole::Strategic => "strategic",
        ProtocolRole::Nonstrategic => "nonstrategic",
        ProtocolRole::Excluded => "excluded",
    }
}

fn network(config: &RunConfig, w: &mut Writer, protocol: bool) -> Result<(), CliError> {
    let net = config.scenario_network()?;
    let pools = crate::config::network_pools(&net)?;
    let eval: NetworkEvaluation = evaluate_network(&pools, &[], &net.env, net.options)?;
    let sol = &eval.settlement.pools.solution;
    w.csv("equilibrium.csv", &EQUILIBRIUM_HEADER, equilibrium_rows(sol))?;
    equilibrium_summary(sol, w);
    if protocol {
        let mut rows = Vec::new();
        for (pool, e) in pools.iter().zip(&eval.pools) {
            let Some(e) = e else { continue };
            for m in &e.protocol.miners {
                rows.push(vec![
                    pool.id.clone(),
                    pool.members[m.member].id.clone(),
                    role_name(m.role).to_string(),
                    f(m.investment),
                    f(m.valuation.reward),
                    f(m.valuation.cost),
                    f(m.valuation.utility()),
                    f(m.roi()),
                ]);
            }
            w.line(format!(
                "{}: protocol reward = ${:.2}, strategic = {} connected of {} registered, {} states",
                pool.id,
                e.shares.pool_reward,
                e.protocol.connected_strategic,
                e.protocol.registered_strategic,
                e.protocol.states
            ));
        }
        w.csv(
            "protocol.csv",
            &["pool_id", "miner_id", "role", "investment", "reward", "cost", "utility", "roi"],
            rows,
        )?;
    } else {
        let mut rows = Vec::new();
        for (pool, e) in pools.iter().zip(&eval.pools) {
            let Some(e) = e else { continue };
            for m in &e.shares.miners {
                rows.push(vec![
                    pool.members[m.member].id.clone(),
                    f(m.assigned_work),
                    f(m.relative_cost),
                    f(m.relative_roi),
                    f(m.alpha),
                ]);
            }
            let total: f64 = e.shares.miners.iter().map(|m| m.alpha).sum();
            w.line(format!(
                "{}: E[r]_p = ${:.2}, pool utility = ${:.2}, sum of alpha = {:.9}",
                pool.id, e.shares.pool_reward, e.shares.pool_utility, total
            ));
        }
        w.csv("shares.csv", &["miner_id", "assigned_work", "I_cost", "I_roi", "alpha"], rows)?;
    }
    Ok(())
}

fn scenario_table(config: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let net = config.scenario_network()?;
    let rows = net.scenario_table()?;
    w.csv(
        "scenario_table.csv",
        &[
            "profile",
            "connected",
            "capacity",
            "assigned_work",
            "a_top",
            "a_next",
            "b_top",
            "b_next",
            "b_bottom",
            "sdp1_cooperate",
            "sdp1_desert",
            "sdp2",
            "sdp3",
        ],
        rows.iter().map(|r| {
            vec![
                r.profile.clone(),
                r.connected.to_string(),
                f(r.capacity),
                f(r.assigned_work),
                f(r.a_top),
                f(r.a_next),
                f(r.b_top),
                f(r.b_next),
                f(r.b_bottom),
                f(r.sdp1_cooperate()),
                f(r.sdp1_desert()),
                f(r.sdp2()),
                f(r.sdp3()),
            ]
        }),
    )?;
    for r in &rows {
        let holds = r.sdp1_cooperate() > 1.0 && r.sdp1_desert() > 1.0 && r.sdp2() > 1.0 && r.sdp3() > 1.0;
        w.line(format!(
            "{}: SDP1 {:.6} / {:.6}, SDP2 {:.4}, SDP3 {:.2}{}",
            r.profile,
            r.sdp1_cooperate(),
            r.sdp1_desert(),
            r.sdp2(),
            r.sdp3(),
            if holds { "" } else { " (dilemma property fails)" }
        ));
    }
    Ok(())
}

fn dilemma_sim(config: &RunConfig, seed: u64, w: &mut Writer) -> Result<(), CliError> {
    let cfg = config.sim_config(seed)?;
    let trajectories = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|r| simulate::run(&cfg, r))
        .collect::<Result<Vec<SimTrajectory>, _>>()?;
    let summary = summarize(&trajectories);
    w.csv(
        "trajectories.csv",
        &["run", "iteration", "cooperation_degree"],
        trajectories.iter().flat_map(|t| {
            t.cooperation.iter().enumerate().map(move |(i, c)| vec![t.run.to_string(), i.to_string(), f(*c)])
        }),
    )?;
    w.csv(
        "summary.csv",
        &["iteration", "mean", "q10", "median", "q90"],
        (0..summary.mean.len())
            .map(|i| vec![i.to_string(), f(summary.mean[i]), f(summary.q10[i]), f(summary.median[i]), f(summary.q90[i])]),
    )?;
    w.csv(
        "histogram.csv",
        &["bin_lower", "bin_upper", "runs"],
        summary.histogram.iter().enumerate().map(|(b, c)| {
            vec![f(b as f64 / HISTOGRAM_BINS as f64), f((b + 1) as f64 / HISTOGRAM_BINS as f64), c.to_string()]
        }),
    )?;
    if cfg.record_profiles {
        let mut rows = Vec::new();
        for t in &trajectories {
            for (p, c) in t.profile_counts.iter().flatten().enumerate() {
                rows.push(vec![t.run.to_string(), p.to_string(), c.to_string()]);
            }
        }
        w.csv("profiles.csv", &["run", "profile", "plays"], rows)?;
    }
    let finals: Vec<f64> = trajectories.iter().map(SimTrajectory::final_cooperation).collect();
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    let high = finals.iter().filter(|c| **c >= 0.95).count();
    w.line(format!(
        "{} runs x {} iterations, {} agents, seed {}",
        cfg.runs,
        cfg.iterations,
        cfg.agents(),
        cfg.master_seed
    ));
    w.line(format!(
        "final cooperation: mean {:.4}, min {:.4}, max {:.4}, {high} runs at or above 0.95",
        mean,
        finals.iter().copied().fold(f64::INFINITY, f64::min),
        finals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    ));
    Ok(())
}

fn stationary(config: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let s = config.stationary.as_ref().expect("validated");
    let chain = build_chain(config.chain_classes()?, s.state_cap.unwrap_or(DEFAULT_STATE_CAP))?;
    let dist = stationary_distribution(&chain)?;
    let label = |state: usize| {
        chain.counts(state).iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
    };
    w.csv(
        "stationary.csv",
        &["state", "probability"],
        dist.probabilities.iter().enumerate().map(|(s, p)| vec![label(s), f(*p)]),
    )?;
    let mut rows = Vec::new();
    for (class, marginal) in dist.marginals.iter().enumerate() {
        for (count, p) in marginal.iter().enumerate() {
            rows.push(vec![chain.classes()[class].profile.id.clone(), count.to_string(), f(*p)]);
        }
    }
    w.csv("marginals.csv", &["class", "connected", "probability"], rows)?;
    w.line(format!("{} states", chain.state_count()));
    for (class, marginal) in dist.marginals.iter().enumerate() {
        let mean: f64 = marginal.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        w.line(format!("{}: mean connected {:.2}", chain.classes()[class].profile.id, mean));
    }
    if let Some([lo, hi]) = s.report_range {
        w.line(format!(
            "mass in [{lo}, {hi}] = {:.6}",
            dist.mass_between(0, lo, hi)
        ));
    }
    Ok(())
}

fn sweep(config: &RunConfig, w: &mut Writer) -> Result<(), CliError> {
    let spec = config.sweep.as_ref().expect("validated");
    let target = SweepTarget::parse(&spec.parameter, config.players.as_deref().unwrap_or(&[]))
        .map_err(|e| CliError::invalid("sweep.parameter", e))?;
    let ids: Vec<String> = config.player_specs().into_iter().map(|p| p.id).collect();
    let mut header = vec!["param_value".to_string()];
    for m in &spec.metrics {
        match m {
            Metric::Psi => header.push("psi".into()),
            Metric::XStar => header.extend(ids.iter().map(|id| format!("x_star:{id}"))),
            Metric::Utility => header.extend(ids.iter().map(|id| format!("utility:{id}"))),
            Metric::NetworkPower => header.push("network_power".into()),
            Metric::AnnualEnergyTwh => header.push("annual_energy_twh".into()),
        }
    }
    header.push("status".into());
    let width = header.len() - 2;
    let rows: Vec<Vec<String>> = spec
        .values
        .par_iter()
        .map(|&value| {
            let mut row = vec![f(value)];
            match sweep_point(config, &target, value) {
                Ok(sol) => {
                    for m in &spec.metrics {
                        match m {
                            Metric::Psi => row.push(f(sol.psi)),
                            Metric::XStar => row.extend(sol.players.iter().map(|p| f(p.investment))),
                            Metric::Utility => row.extend(sol.players.iter().map(|p| f(p.expected_utility))),
                            Metric::NetworkPower => row.push(f(sol.network_power)),
                            Metric::AnnualEnergyTwh => row.push(f(annual_twh(sol.network_power))),
                        }
                    }
                    row.push("ok".into());
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n(String::new(), width));
                    row.push(format!("error: {e}"));
                }
            }
            row
        })
        .collect();
    let failed = rows.iter().filter(|r| r.last().is_some_and(|s| s != "ok")).count();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    w.csv("sweep.csv", &header_refs, rows)?;
    w.line(format!("{} = {} values, {} failed", spec.parameter, spec.values.len(), failed));
    Ok(())
}

fn sweep_point(config: &RunConfig, target: &SweepTarget, value: f64) -> Result<EquilibriumSolution, CliError> {
    let point = target.apply(config, value);
    point.validate()?;
    let env = point.env()?;
    Ok(solve_with_selection(&point.player_specs(), &env)?)
}
