use proptest::prelude::*;

use searchbid_core::auction::AuctionSpec;
use searchbid_core::economy::{seller_profit, Economy};
use searchbid_core::estimation::{
    generate_synthetic_panel, gmm_estimate, GmmConfig, SyntheticConfig, SyntheticDemand,
};
use searchbid_core::market::MarketParams;
use searchbid_core::qlearn::{
    build_action_grid, run_experiment_serial, run_session, session_rng, AgentConfig, PayoffTable,
    SessionConfig, StateMode,
};

fn small_setup(theta: f64) -> (searchbid_core::qlearn::ActionGrid, PayoffTable, Economy) {
    let params = MarketParams::baseline().with_theta(theta);
    let spec = AuctionSpec::new(0.5);
    let grid = build_action_grid(&params, &spec, &[0.0, 0.5, 1.0], 0.1).unwrap();
    let eco = Economy::new(params, spec).unwrap();
    let table = PayoffTable::build(&eco, &grid).unwrap();
    (grid, table, eco)
}

fn fast(mode: StateMode) -> SessionConfig {
    let agent = AgentConfig {
        beta: 2e-3,
        state_mode: mode,
        ..Default::default()
    };
    SessionConfig {
        agents: [agent; 2],
        convergence_window: 500,
        max_periods: 2_000_000,
        ..Default::default()
    }
}

#[test]
fn table_agrees_with_direct_profit() {
    let (grid, table, eco) = small_setup(0.4);
    for (a0, a1) in [(0, 0), (17, 140), (149, 3), (75, 75)] {
        let p = [grid.price(a0), grid.price(a1)];
        let b = [grid.bid(a0), grid.bid(a1)];
        let direct = seller_profit(&p, &b, eco.params(), eco.auction().spec()).unwrap();
        let cell = table.cell(a0, a1);
        for i in 0..2 {
            assert!((cell.profit[i] - direct.seller_profit[i]).abs() < 1e-12);
        }
        assert!((cell.consumer_surplus - direct.consumer_surplus).abs() < 1e-12);
    }
}

#[test]
fn serial_experiment_matches_single_sessions() {
    let (grid, table, eco) = small_setup(0.3);
    let cfg = fast(StateMode::OwnBid);
    let (results, agg) = run_experiment_serial(&grid, &table, Some(&eco), cfg, 3, 42).unwrap();
    for (k, r) in results.iter().enumerate() {
        let again = run_session(&grid, &table, Some(&eco), cfg, session_rng(42, k as u64)).unwrap();
        assert_eq!(*r, again);
    }
    assert_eq!(agg.sessions, 3);
    let (_, other) = run_experiment_serial(&grid, &table, Some(&eco), cfg, 3, 43).unwrap();
    assert_ne!(agg.mean, other.mean);
}

#[test]
fn learned_play_stays_on_the_grid() {
    let (grid, table, eco) = small_setup(0.6);
    for mode in [StateMode::OwnBid, StateMode::FullStateful] {
        let r = run_session(&grid, &table, Some(&eco), fast(mode), session_rng(7, 0)).unwrap();
        assert!(r.converged, "{mode:?}");
        assert!(r.cycle_length >= 1);
        let lo = grid.prices[0];
        let hi = *grid.prices.last().unwrap();
        for p in r.metrics.price {
            assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
        }
    }
}

#[test]
fn higher_stopping_rate_is_recovered() {
    let cfg = SyntheticConfig {
        demand: SyntheticDemand::Search { lambda: 0.2 },
        ..Default::default()
    };
    let p = generate_synthetic_panel(&cfg, 21).unwrap();
    let est = gmm_estimate(&p, &GmmConfig::default()).unwrap();
    assert!((est.lambda / 0.2 - 1.0).abs() < 0.15, "{est:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn symmetric_table_mirrors(theta in 0.0f64..=1.0, a in 0usize..150, b in 0usize..150) {
        let (_, table, _) = small_setup(theta);
        let x = table.cell(a, b);
        let y = table.cell(b, a);
        prop_assert!((x.profit[0] - y.profit[1]).abs() < 1e-12);
        prop_assert!((x.consumer_surplus - y.consumer_surplus).abs() < 1e-12);
    }
}
