use coopmine_core::equilibrium::{
    active_set, best_response_dynamics, best_response_oracle, equilibrium_strategy, OracleGrid,
};
use coopmine_core::model::{validate_env, GameEnv, PlayerSpec, ValidatedEnv};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(rng: &mut ChaCha8Rng) -> (Vec<PlayerSpec>, ValidatedEnv) {
    let env = GameEnv {
        block_reward: 6.25,
        exchange_rate: rng.random_range(5_000.0..20_000.0),
        pow_rate: 0.1,
        tx_fee: 0.00012,
        nonstrategic_power: rng.random_range(1e4..1e6),
        nonstrategic_efficiency: rng.random_range(0.5..1.5),
    };
    let m = rng.random_range(2..=10);
    let players = (0..m)
        .map(|i| {
            PlayerSpec::new(format!("p{i}"), rng.random_range(0.0004..0.0015), rng.random_range(0.5..2.0))
                .with_block(rng.random_range(0.0..3000.0), rng.random_range(0.0..0.0002))
        })
        .collect();
    (players, validate_env(env).unwrap())
}

/// Closed-form investments over the whole candidate list (zero when out).
fn closed_form(players: &[PlayerSpec], env: &ValidatedEnv) -> Vec<f64> {
    let active = active_set(players, env).unwrap();
    let sol = equilibrium_strategy(&active, env).unwrap();
    players.iter().map(|p| sol.get(&p.id).map_or(0.0, |o| o.investment)).collect()
}

#[test]
fn oracle_agrees_with_closed_form_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..100 {
        let (players, env) = instance(&mut rng);
        let x = closed_form(&players, &env);
        let scale = x.iter().cloned().fold(0.0, f64::max);
        for (i, p) in players.iter().enumerate() {
            let others: Vec<(PlayerSpec, f64)> =
                players.iter().zip(&x).enumerate().filter(|(j, _)| *j != i).map(|(_, (q, &xq))| (q.clone(), xq)).collect();
            let grid = OracleGrid::best_response_range(p, &env);
            let br = best_response_oracle(p, &others, &env, &grid).unwrap();
            if x[i] > 0.0 {
                assert!((br - x[i]).abs() <= 1e-4 * x[i], "case {case} player {i}: {br} vs {}", x[i]);
            } else {
                assert!(br <= 1e-4 * scale, "case {case} player {i} should stay out, got {br}");
            }
        }
    }
}

#[test]
fn best_response_iteration_reaches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let (players, env) = instance(&mut rng);
        let x = closed_form(&players, &env);
        let path = best_response_dynamics(&players, &vec![0.0; players.len()], &env, 1e-9, 2_000).unwrap();
        assert!(path.converged, "case {case} did not converge");
        let scale = x.iter().cloned().fold(0.0, f64::max);
        for (got, want) in path.investments.iter().zip(&x) {
            assert!((got - want).abs() <= 1e-6 * scale, "case {case}: {got} vs {want}");
        }
    }
}
