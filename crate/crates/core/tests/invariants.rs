use proptest::prelude::*;

use qbme::catalog::Geometry;
use qbme::engine::trajectory::build_engine;
use qbme::engine::TrajectoryConfig;
use qbme::equilibrium::{critical_temperature, solve_at_temperature, thermal_init};
use qbme::kernel::{source_factor, target_factor};
use qbme::state::PhysicsMode;

fn mode() -> impl Strategy<Value = PhysicsMode> {
    prop_oneof![
        Just(PhysicsMode::BoxNonErgodic),
        Just(PhysicsMode::BoxErgodic),
        Just(PhysicsMode::OscErgodic),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn events_conserve_totals(mode in mode(), n in 8u64..80, t_rel in 0.3f64..1.5, seed in 0u64..1000) {
        let cfg = TrajectoryConfig::new(mode, thermal_init(mode.geometry(), n, t_rel).unwrap(), seed, 0.0);
        let mut engine = build_engine(&cfg).unwrap();
        let (n0, e0, p0) = (engine.state().n(), engine.state().e(), engine.state().p());
        for _ in 0..2000 {
            if engine.step().unwrap().is_none() {
                break;
            }
        }
        let s = engine.state();
        prop_assert_eq!(s.n(), n0);
        prop_assert_eq!(s.e(), e0);
        if mode == PhysicsMode::BoxNonErgodic {
            prop_assert_eq!(s.p(), p0);
        }
        s.check_invariants(engine.sites()).unwrap();
    }

    #[test]
    fn revert_undoes_apply(mode in mode(), n in 8u64..60, seed in 0u64..1000, steps in 1usize..200) {
        let cfg = TrajectoryConfig::new(mode, thermal_init(mode.geometry(), n, 0.8).unwrap(), seed, 0.0);
        let mut engine = build_engine(&cfg).unwrap();
        for _ in 0..steps {
            let before = engine.state().clone();
            let Some(ev) = engine.step().unwrap() else { break };
            let mut after = engine.state().clone();
            after.revert_collision(engine.sites(), &ev.collision).unwrap();
            // The catalog may grow during a step, so compare occupied sites only.
            prop_assert_eq!(after.sparse(), before.sparse());
            prop_assert_eq!((after.n(), after.e(), after.p()), (before.n(), before.e(), before.p()));
        }
    }

    #[test]
    fn incremental_rate_matches_rebuild(mode in mode(), n in 8u64..80, t_rel in 0.3f64..1.5, seed in 0u64..1000) {
        let cfg = TrajectoryConfig::new(mode, thermal_init(mode.geometry(), n, t_rel).unwrap(), seed, 0.0);
        let mut engine = build_engine(&cfg).unwrap().with_rebuild_period(u64::MAX);
        for _ in 0..3000 {
            if engine.step().unwrap().is_none() {
                break;
            }
        }
        prop_assert!(engine.rate_drift().unwrap() < 1e-9);
    }

    #[test]
    fn waiting_times_are_positive(mode in mode(), seed in 0u64..1000) {
        let cfg = TrajectoryConfig::new(mode, thermal_init(mode.geometry(), 30, 0.8).unwrap(), seed, 0.0);
        let mut engine = build_engine(&cfg).unwrap();
        let mut last = engine.time();
        for _ in 0..500 {
            let Some(ev) = engine.step().unwrap() else { break };
            prop_assert!(ev.dt > 0.0 && ev.dt.is_finite());
            prop_assert!(ev.t > last);
            last = ev.t;
        }
    }

    #[test]
    fn grand_canonical_hits_particle_number(box_geom in any::<bool>(), n in 20f64..2000.0, t_rel in 0.1f64..3.0) {
        let g = if box_geom { Geometry::Box } else { Geometry::Oscillator };
        let sol = solve_at_temperature(g, n, t_rel * critical_temperature(g, n)).unwrap();
        let total: f64 = sol.level_particles().iter().sum();
        prop_assert!((total - n).abs() < 1e-6 * n);
        prop_assert!(sol.mu < sol.levels[0].0 as f64);
        let f = sol.condensate_fraction();
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn factors_satisfy_detailed_balance(b in proptest::array::uniform4(1u64..8), g in proptest::array::uniform4(1u64..6)) {
        // Stationary weight of a block holding k bosons in g modes, up to a constant.
        let ln_w = |k: u64, g: u64| -> f64 {
            (1..=k).map(|i| ((i + g - 1) as f64 / i as f64).ln()).sum()
        };
        let after = [b[0] - 1, b[1] - 1, b[2] + 1, b[3] + 1];
        let fwd = source_factor(b[0], g[0], b[1], g[1], false) * target_factor(b[2], g[2], b[3], g[3], false);
        let rev = source_factor(after[2], g[2], after[3], g[3], false) * target_factor(after[0], g[0], after[1], g[1], false);
        let w = |occ: [u64; 4]| (0..4).map(|i| ln_w(occ[i], g[i])).sum::<f64>();
        let lhs = fwd.ln() + w(b);
        let rhs = rev.ln() + w(after);
        prop_assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }
}
