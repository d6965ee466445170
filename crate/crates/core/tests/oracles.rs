//! Frozen reference values of the non-stochastic oracles.

use approx::assert_relative_eq;

use qbme::catalog::{osc_degeneracy, Geometry, LevelSpectrum};
use qbme::classical::{box_window_ratio, osc_degeneracy_ratio};
use qbme::engine::trajectory::build_engine;
use qbme::engine::TrajectoryConfig;
use qbme::equilibrium::{
    bose_geometric_pmf, critical_temperature, solve_at_temperature, thermal_init, ZETA_3_2,
};
use qbme::fluctuation::{fluctuation_sum, truncated_constraints, FluctuationSpec, DEFAULT_LEVELS};
use qbme::kernel::box_tuple_count;
use qbme::state::{PhysicsMode, SiteSpace};

#[test]
fn box_shell_degeneracies() {
    let sites = SiteSpace::new(PhysicsMode::BoxErgodic, 9).unwrap();
    let g = |e| sites.block_degeneracy(sites.block_at_energy(e).unwrap());
    assert_eq!(g(1), 6);
    assert_eq!(g(9), 30);
    assert_eq!(sites.block_at_energy(7), None);
}

#[test]
fn oscillator_shell_degeneracy() {
    assert_eq!(osc_degeneracy(10), 66);
}

#[test]
fn box_tuple_count_for_small_shells() {
    let mut sites = SiteSpace::new(PhysicsMode::BoxErgodic, 4).unwrap();
    assert_eq!(box_tuple_count(&mut sites, [1, 1, 0, 2]), 24);
}

#[test]
fn critical_temperatures() {
    let box_tc = critical_temperature(Geometry::Box, 500.0);
    assert_relative_eq!(
        box_tc,
        (500.0 / ZETA_3_2).powf(2.0 / 3.0) / std::f64::consts::PI,
        max_relative = 1e-12
    );
    assert_relative_eq!(
        critical_temperature(Geometry::Oscillator, 1000.0),
        9.41,
        max_relative = 1e-3
    );
}

#[test]
fn geometric_distribution_with_unit_mean() {
    let p = bose_geometric_pmf(1.0, 6);
    for (k, v) in p.iter().enumerate() {
        assert_relative_eq!(*v, 0.5f64.powi(k as i32 + 1), max_relative = 1e-14);
    }
}

#[test]
fn grand_canonical_condensate_fractions() {
    let cases = [
        (Geometry::Box, 0.2, 0.947_455_668_8),
        (Geometry::Box, 0.5, 0.741_616_227_4),
        (Geometry::Box, 0.8, 0.442_882_852_6),
        (Geometry::Oscillator, 0.2, 0.979_887_406_4),
        (Geometry::Oscillator, 0.5, 0.798_218_688_1),
        (Geometry::Oscillator, 0.8, 0.300_171_489_2),
    ];
    for (g, t_rel, f) in cases {
        let sol = solve_at_temperature(g, 500.0, t_rel * critical_temperature(g, 500.0)).unwrap();
        assert_relative_eq!(sol.condensate_fraction(), f, max_relative = 1e-8);
    }
}

#[test]
fn exact_box_fluctuations_at_low_temperature() {
    let spectrum = LevelSpectrum::box_levels(64);
    for (t_rel, sigma) in [
        (0.3, 7.730_718_079),
        (0.4, 10.808_839_650),
        (0.5, 13.816_536_869),
    ] {
        let tc = critical_temperature(Geometry::Box, 500.0);
        let sol = solve_at_temperature(Geometry::Box, 500.0, t_rel * tc).unwrap();
        let (n, e) = truncated_constraints(&sol, DEFAULT_LEVELS);
        let r = fluctuation_sum(&spectrum, &FluctuationSpec::new(n, e)).unwrap();
        assert_relative_eq!(r.sigma, sigma, max_relative = 1e-8);
    }
}

#[test]
fn oscillator_degeneracy_against_continuum() {
    assert_relative_eq!(
        osc_degeneracy_ratio(50, 0.0),
        51.0 * 52.0 / 2500.0,
        max_relative = 1e-12
    );
}

#[test]
fn box_shell_counts_follow_sqrt_law() {
    let mut sites = SiteSpace::new(PhysicsMode::BoxErgodic, 4).unwrap();
    for lo in [100, 200, 400] {
        let r = box_window_ratio(&mut sites, lo, lo + 40);
        assert!((r - 1.0).abs() < 0.05, "window at {lo}: {r}");
    }
}

#[test]
fn scaled_waiting_times_have_unit_mean() {
    let mode = PhysicsMode::BoxNonErgodic;
    let cfg = TrajectoryConfig::new(
        mode,
        thermal_init(mode.geometry(), 20, 0.8).unwrap(),
        3,
        0.0,
    );
    let mut engine = build_engine(&cfg).unwrap();
    let mut sum = 0.0;
    let mut k = 0;
    while k < 10_000 {
        let r = engine.total_rate();
        let Some(ev) = engine.step().unwrap() else {
            break;
        };
        sum += ev.dt * r;
        k += 1;
    }
    assert_eq!(k, 10_000);
    assert!((sum / k as f64 - 1.0).abs() < 0.03, "{}", sum / k as f64);
}
