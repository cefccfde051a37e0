use coopmine_core::pool::{
    evaluate_network, MemberGroup, PipelineOptions, PoolLayout, ProtocolRole, ScenarioNetwork,
};
use coopmine_core::model::{validate_env, GameEnv, PlayerSpec};
use coopmine_core::MINUTES_PER_YEAR;

const Z: f64 = 0.005 / 60.0;

fn env() -> GameEnv {
    GameEnv {
        block_reward: 6.25,
        exchange_rate: 10_000.0,
        pow_rate: 0.1,
        tx_fee: 0.00012,
        nonstrategic_power: 700_000.0,
        nonstrategic_efficiency: 1.0,
    }
}

fn network() -> ScenarioNetwork {
    let miner = |id: &str, cap: f64| {
        PlayerSpec::new(id, 0.0007, 1.0).with_block(2100.0, Z).with_rates(1.0, 0.1).with_capacity(cap)
    };
    let groups = vec![
        MemberGroup { profile: 0, registered: 500, connected: 500 },
        MemberGroup { profile: 1, registered: 350, connected: 300 },
        MemberGroup { profile: 2, registered: 200, connected: 200 },
        MemberGroup { profile: 3, registered: 50, connected: 50 },
    ];
    ScenarioNetwork {
        env: validate_env(env()).unwrap(),
        profiles: vec![miner("small", 20.0), miner("mid", 2000.0), miner("large", 3000.0), miner("huge", 5000.0)],
        pools: (0..10)
            .map(|i| PoolLayout { id: format!("pool-{i}"), transactions: 2100.0, delay: Z, groups: groups.clone() })
            .collect(),
        options: PipelineOptions::default(),
    }
}

#[test]
fn cooperative_network_pipeline() {
    let net = network();
    let (pools, _) = net.pool_specs().unwrap();
    let eval = evaluate_network(&pools, &[], &net.env, net.options).unwrap();
    let sol = &eval.settlement.pools;
    let mut network_power = env().nonstrategic_power;
    for i in 0..10 {
        let o = sol.pool(i);
        assert!((o.investment - 759_174.7).abs() < 0.1);
        assert!((o.expected_utility - 535.60).abs() < 0.01);
        network_power += o.investment;
        let pool = eval.pools[i].as_ref().unwrap();
        let shares = &pool.shares;
        assert!((shares.pool_reward - 5849.82).abs() < 0.01);
        let total: f64 = shares.miners.iter().map(|m| m.alpha).sum();
        assert!((total - 1.0).abs() < 1e-9);
        for m in &shares.miners {
            let want = if pools[i].members[m.member].capacity == 20.0 { 20.0 } else { 1362.0 };
            assert!((m.assigned_work - want).abs() < 1.0);
        }
        let strategic = pool.protocol.miners.iter().filter(|m| m.role == ProtocolRole::Strategic).count();
        assert_eq!(strategic, 550);
    }
    let twh = network_power * MINUTES_PER_YEAR / 1e9;
    assert!((4000.0..=4700.0).contains(&twh), "{twh}");
}

#[test]
fn scenarios_form_a_social_dilemma() {
    let rows = network().scenario_table().unwrap();
    for r in &rows {
        assert!(r.sdp1_cooperate() > 1.0, "{}: {}", r.profile, r.sdp1_cooperate());
        assert!(r.sdp1_desert() > 1.0, "{}: {}", r.profile, r.sdp1_desert());
        assert!(r.sdp2() > 1.0, "{}: {}", r.profile, r.sdp2());
        assert!(r.sdp3() > 1.0);
    }
    let sdp3 = |name: &str| rows.iter().find(|r| r.profile == name).unwrap().sdp3();
    for name in ["mid", "large", "huge"] {
        assert!((sdp3(name) / 526.89 - 1.0).abs() <= 0.05, "{name}: {}", sdp3(name));
    }
    assert!((sdp3("small") / 596.33 - 1.0).abs() <= 0.05);
    // A solo miner at full capacity earns about capacity / assigned work
    // times a cooperator.
    for r in rows.iter().filter(|r| r.capacity > 20.0) {
        assert!((r.sdp2() - r.capacity / r.assigned_work).abs() < 0.01);
    }
}
