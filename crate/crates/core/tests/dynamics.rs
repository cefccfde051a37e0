use coopmine_core::dilemma::{fair_strategy, reference_phi, Action, DilemmaPayoffs, MemoryOne};
use coopmine_core::simulate::{batch, fairness_check, run, step, stream_rng, SimConfig, StrategyGroup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_strategy(rng: &mut ChaCha8Rng, n: usize) -> MemoryOne {
    let mut v = || (0..n).map(|_| rng.random_range(0.05..0.95)).collect::<Vec<f64>>();
    MemoryOne::new(v(), v()).unwrap()
}

/// Stationary law of the action-profile chain (agent `i` is bit `i`).
fn exact_profile_law(strategies: &[&MemoryOne]) -> Vec<f64> {
    let n = strategies.len();
    let states = 1usize << n;
    let mut t = vec![vec![0.0; states]; states];
    for (s, row) in t.iter_mut().enumerate() {
        let k = s.count_ones() as usize;
        let coop: Vec<f64> = (0..n)
            .map(|i| {
                let own = s >> i & 1 == 1;
                let (a, j) = if own { (Action::Cooperate, k - 1) } else { (Action::Defect, k) };
                strategies[i].probability(a, j)
            })
            .collect();
        for (next, p) in row.iter_mut().enumerate() {
            *p = (0..n).map(|i| if next >> i & 1 == 1 { coop[i] } else { 1.0 - coop[i] }).product();
        }
    }
    let mut pi = vec![1.0 / states as f64; states];
    for _ in 0..10_000 {
        let mut next = vec![0.0; states];
        for s in 0..states {
            for (d, p) in t[s].iter().enumerate() {
                next[d] += pi[s] * p;
            }
        }
        pi = next;
    }
    pi
}

#[test]
fn small_population_matches_exact_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let payoffs = DilemmaPayoffs::linear(3.0, 0.5, 4.0, 0.6, 3).unwrap();
    let groups: Vec<StrategyGroup> =
        (0..3).map(|_| StrategyGroup { strategy: random_strategy(&mut rng, 3), agents: 1 }).collect();
    let exact = exact_profile_law(&groups.iter().map(|g| &g.strategy).collect::<Vec<_>>());
    let mut cfg = SimConfig::new(payoffs, groups, 20_000, 0.5);
    cfg.runs = 300;
    cfg.burn_in = 100;
    cfg.record_profiles = true;
    cfg.master_seed = 17;
    let b = batch(&cfg).unwrap();
    for s in 0..8 {
        let freqs: Vec<f64> = b
            .trajectories
            .iter()
            .map(|t| t.profile_counts.as_ref().unwrap()[s] as f64 / t.counted as f64)
            .collect();
        let mean = freqs.iter().sum::<f64>() / freqs.len() as f64;
        let var = freqs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (freqs.len() - 1) as f64;
        let se = (var / freqs.len() as f64).sqrt();
        assert!((mean - exact[s]).abs() <= 3.0 * se, "profile {s}: {mean} vs {} (se {se})", exact[s]);
    }
}

#[test]
fn two_player_step_matches_transition_row() {
    let payoffs = DilemmaPayoffs::linear(2.0, -1.0, 3.0, 0.0, 2).unwrap();
    let s0 = MemoryOne::new(vec![0.3, 0.8], vec![0.1, 0.6]).unwrap();
    let s1 = MemoryOne::new(vec![0.5, 0.9], vec![0.2, 0.4]).unwrap();
    // From (C, D): agent 0 cooperated facing 0 cooperators, agent 1
    // deserted facing 1.
    let (p0, p1) = (0.3, 0.4);
    let row = [(1.0 - p0) * (1.0 - p1), p0 * (1.0 - p1), (1.0 - p0) * p1, p0 * p1];
    let trials = 1_000_000;
    let mut counts = [0u64; 4];
    let mut rng = stream_rng(5, 0, 0);
    for _ in 0..trials {
        let (next, paid) = step(&[true, false], &[&s0, &s1], &payoffs, 0.0, &mut rng, None);
        assert_eq!(paid, vec![-1.0, 3.0]);
        counts[next[0] as usize | (next[1] as usize) << 1] += 1;
    }
    for (c, p) in counts.iter().zip(row) {
        let f = *c as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((f - p).abs() <= 3.0 * se, "{f} vs {p}");
    }
}

fn fairness_against(co: MemoryOne, seed: u64) -> f64 {
    let payoffs = DilemmaPayoffs::linear(35.0, 0.04, 70.0, 0.05, 10).unwrap();
    let fair = fair_strategy(&payoffs, reference_phi(&payoffs)).unwrap();
    let range = payoffs.range();
    let groups = vec![StrategyGroup { strategy: fair.strategy, agents: 1 }, StrategyGroup { strategy: co, agents: 9 }];
    let mut cfg = SimConfig::new(payoffs, groups, 100_000, 0.5);
    cfg.master_seed = seed;
    fairness_check(&run(&cfg, 0).unwrap(), 0) / range
}

#[test]
fn fair_focal_matches_coplayer_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cases = [
        MemoryOne::always_defect(10),
        MemoryOne::always_cooperate(10),
        random_strategy(&mut rng, 10),
        random_strategy(&mut rng, 10),
    ];
    for (i, co) in cases.into_iter().enumerate() {
        let gap = fairness_against(co, i as u64);
        assert!(gap < 0.01, "case {i}: {gap}");
    }
}

fn fig2(ic: f64, phi_scale: f64, runs: usize) -> Vec<f64> {
    let payoffs = DilemmaPayoffs::linear(35.0, 0.04, 70.0, 0.05, 10_000).unwrap();
    let z = fair_strategy(&payoffs, reference_phi(&payoffs) * phi_scale).unwrap();
    let mut cfg = SimConfig::new(payoffs, vec![StrategyGroup { strategy: z.strategy, agents: 10_000 }], 200, ic);
    cfg.runs = runs;
    cfg.master_seed = 2024;
    batch(&cfg).unwrap().trajectories.iter().map(|t| t.final_cooperation()).collect()
}

#[test]
fn high_initial_cooperation_is_kept() {
    let finals = fig2(0.995, 1.0, 20);
    assert!(finals.iter().filter(|f| **f >= 0.95).count() >= 18);
}

#[test]
fn small_phi_freezes_cooperation() {
    let finals = fig2(0.6, 0.01, 10);
    assert!(finals.iter().all(|f| (f - 0.6).abs() <= 0.05));
}

#[test]
fn moderate_initial_cooperation_splits() {
    let finals = fig2(0.8, 1.0, 20);
    assert!(finals.iter().any(|f| *f >= 0.81));
    assert!(finals.iter().any(|f| *f <= 0.79));
}
