//! Fast correctness checks shared by the `selftest` verb and the
//! acceptance suite: microcanonical uniformity, conservation, engine
//! properties and the semiclassical oracle.

use std::fmt;

use serde::Serialize;

use crate::catalog::Geometry;
use crate::classical::{
    box_kernel_window, classical_boltzmann_rhs, osc_degeneracy_ratio, EnergyGrid, OSC_ZERO_POINT,
};
use crate::engine::trajectory::build_engine;
use crate::engine::{trajectory_rng, Engine, TrajectoryConfig};
use crate::equilibrium::thermal_init;
use crate::error::Result;
use crate::master::{exact_master_equation, total_variation, MasterEquation, DEFAULT_STATE_BOUND};
use crate::state::{OccupationState, PhysicsMode, SiteSpace};
use crate::stats::{chi_square_gof, ks_test};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(id: &str, passed: bool, detail: String) -> Self {
        CheckResult {
            id: id.to_string(),
            passed,
            detail,
        }
    }

    fn from_result(id: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => CheckResult::new(id, passed, detail),
            Err(e) => CheckResult::new(id, false, format!("error: {e}")),
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.id, self.detail)
    }
}

/// Event budgets of the checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckScale {
    /// Events per tiny-system uniformity run.
    pub uniformity_events: u64,
    /// Events per conservation run.
    pub conservation_events: u64,
    /// Waiting times collected for the exponential test.
    pub waiting_times: usize,
    /// Single-step draws for the roulette test.
    pub roulette_draws: usize,
}

impl CheckScale {
    pub const FULL: CheckScale = CheckScale {
        uniformity_events: 1_000_000,
        conservation_events: 1_000_000,
        waiting_times: 20_000,
        roulette_draws: 20_000,
    };

    pub const QUICK: CheckScale = CheckScale {
        uniformity_events: 200_000,
        conservation_events: 20_000,
        waiting_times: 5_000,
        roulette_draws: 5_000,
    };
}

/// Tiny reachable classes used by the uniformity and roulette checks.
pub fn tiny_systems() -> Result<Vec<MasterEquation>> {
    let sites = SiteSpace::new(PhysicsMode::BoxNonErgodic, 4)?;
    let a = sites.site_of_vector([1, 1, 0]).expect("inside cutoff");
    let b = sites.site_of_vector([-1, 0, 0]).expect("inside cutoff");
    Ok(vec![
        exact_master_equation(
            PhysicsMode::BoxNonErgodic,
            &[(0, 1), (a, 1), (b, 1)],
            DEFAULT_STATE_BOUND,
        )?,
        exact_master_equation(
            PhysicsMode::BoxErgodic,
            &[(0, 3), (3, 3)],
            DEFAULT_STATE_BOUND,
        )?,
        exact_master_equation(
            PhysicsMode::OscErgodic,
            &[(0, 3), (3, 3)],
            DEFAULT_STATE_BOUND,
        )?,
    ])
}

/// Stationary law of the exact generator uniform per microstate to 1e-9,
/// and simulated occupancy within 2% total variation of it.
pub fn check_uniformity(scale: CheckScale) -> CheckResult {
    let run = || -> Result<(bool, String)> {
        let mut ok = true;
        let mut parts = Vec::new();
        for (k, me) in tiny_systems()?.iter().enumerate() {
            let uni = me.uniformity_error();
            let occ = me.simulate_occupancy(k as u64 + 1, scale.uniformity_events)?;
            let tv = total_variation(&occ, &me.microcanonical());
            ok &= me.len() <= 200 && uni < 1e-9 && tv < 0.02;
            parts.push(format!(
                "{} {} states dev {uni:.1e} tv {tv:.4}",
                me.mode.name(),
                me.len()
            ));
        }
        Ok((ok, parts.join("; ")))
    };
    CheckResult::from_result("uniformity", run())
}

fn conservation_run(mode: PhysicsMode, n: u64, t_rel: f64, events: u64) -> Result<(bool, String)> {
    let init = thermal_init(mode.geometry(), n, t_rel)?;
    let cfg = TrajectoryConfig::new(mode, init, 11, 0.0);
    let mut engine = build_engine(&cfg)?;
    let (n0, e0, p0) = (engine.state().n(), engine.state().e(), engine.state().p());
    let mut done = 0;
    while done < events && engine.step()?.is_some() {
        done += 1;
    }
    let s = engine.state();
    let (rn, re, rp) = s.recompute_totals(engine.sites());
    let momentum = mode != PhysicsMode::BoxNonErgodic || (s.p() == p0 && rp == p0);
    let ok = done == events && s.n() == n0 && rn == n0 && s.e() == e0 && re == e0 && momentum;
    s.check_invariants(engine.sites())?;
    Ok((ok, format!("{} {done} events N={n0} E={e0}", mode.name())))
}

/// N, E and, for the non-ergodic box, P exactly conserved.
pub fn check_conservation(scale: CheckScale) -> CheckResult {
    let run = || -> Result<(bool, String)> {
        let mut ok = true;
        let mut parts = Vec::new();
        for (mode, n, t) in [
            (PhysicsMode::BoxNonErgodic, 40, 0.8),
            (PhysicsMode::BoxErgodic, 100, 0.8),
            (PhysicsMode::OscErgodic, 100, 0.8),
        ] {
            let (o, d) = conservation_run(mode, n, t, scale.conservation_events)?;
            ok &= o;
            parts.push(d);
        }
        Ok((ok, parts.join("; ")))
    };
    CheckResult::from_result("conservation", run())
}

/// Largest relative drift between the maintained and the rebuilt total
/// rate, probed after every 1000 events.
fn rate_drift(mode: PhysicsMode, prefixes: usize) -> Result<f64> {
    let cfg = TrajectoryConfig::new(mode, thermal_init(mode.geometry(), 100, 0.7)?, 5, 0.0);
    let mut engine = build_engine(&cfg)?.with_rebuild_period(u64::MAX);
    let mut worst: f64 = 0.0;
    for _ in 0..prefixes {
        for _ in 0..1000 {
            if engine.step()?.is_none() {
                break;
            }
        }
        worst = worst.max(engine.rate_drift()?);
    }
    Ok(worst)
}

/// `dt R` should be a unit exponential.
fn waiting_time_test(count: usize) -> Result<f64> {
    let mode = PhysicsMode::BoxErgodic;
    let cfg = TrajectoryConfig::new(mode, thermal_init(mode.geometry(), 100, 0.7)?, 9, 0.0);
    let mut engine = build_engine(&cfg)?;
    let mut x = Vec::with_capacity(count);
    for _ in 0..count {
        let r = engine.total_rate();
        match engine.step()? {
            Some(ev) => x.push(ev.dt * r),
            None => break,
        }
    }
    Ok(ks_test(&x, |v| 1.0 - (-v).exp())?.p_value)
}

/// First-step destinations from a fixed configuration against the exact
/// jump probabilities.
fn roulette_test(me: &MasterEquation, draws: usize) -> Result<f64> {
    let start = OccupationState::from_occupations(&me.sites, &me.states[0])?;
    let out = -me.generator[(0, 0)];
    let probs: Vec<f64> = (0..me.len())
        .map(|i| {
            if i == 0 {
                0.0
            } else {
                me.generator[(i, 0)] / out
            }
        })
        .collect();
    let mut counts = vec![0.0; me.len()];
    for k in 0..draws {
        let mut engine = Engine::new(
            me.sites.clone(),
            start.clone(),
            trajectory_rng(77, k as u64),
        )?;
        engine.step()?;
        let i = me
            .index_of(&engine.state().sparse())
            .ok_or_else(|| crate::Error::Logic("step left the reachable class".into()))?;
        counts[i] += 1.0;
    }
    let (obs, p): (Vec<f64>, Vec<f64>) = counts
        .iter()
        .zip(&probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&c, &p)| (c, p))
        .unzip();
    Ok(chi_square_gof(&obs, &p, 0)?.p_value)
}

fn event_hash(seed: u64) -> Result<String> {
    let mode = PhysicsMode::BoxNonErgodic;
    let mut cfg = TrajectoryConfig::new(mode, thermal_init(mode.geometry(), 50, 0.7)?, seed, 0.05);
    cfg.keep_event_log = true;
    Ok(crate::engine::run_trajectory(&cfg)?.event_hash)
}

/// Incremental rate drift, waiting-time law, roulette proportions and
/// determinism.
pub fn check_engine(scale: CheckScale) -> CheckResult {
    let run = || -> Result<(bool, String)> {
        let mut drift: f64 = 0.0;
        for mode in [
            PhysicsMode::BoxNonErgodic,
            PhysicsMode::BoxErgodic,
            PhysicsMode::OscErgodic,
        ] {
            drift = drift.max(rate_drift(mode, 10)?);
        }
        let ks = waiting_time_test(scale.waiting_times)?;
        let systems = tiny_systems()?;
        let chi = roulette_test(&systems[2], scale.roulette_draws)?;
        let h1 = event_hash(3)?;
        let same = h1 == event_hash(3)? && h1 != event_hash(4)?;
        let ok = drift < 1e-9 && ks >= 0.01 && chi >= 0.01 && same;
        Ok((
            ok,
            format!("drift {drift:.1e}, KS p {ks:.3}, roulette p {chi:.3}, deterministic {same}"),
        ))
    };
    CheckResult::from_result("engine", run())
}

/// Classical collision integral zero on exponentials, oscillator
/// degeneracy against the continuum at level 50, and the box kernel
/// against the `sqrt(e_min)` law at shell energies of at least 100.
pub fn check_classical() -> CheckResult {
    let run = || -> Result<(bool, String)> {
        let grid = EnergyGrid::new(0.5, 60)?;
        let mut worst: f64 = 0.0;
        for geometry in [Geometry::Box, Geometry::Oscillator] {
            for t in [0.5, 1.0, 2.0, 4.0, 8.0] {
                let f: Vec<f64> = grid.energies().iter().map(|e| (-e / t).exp()).collect();
                let rhs = classical_boltzmann_rhs(geometry, &grid, &f)?;
                let scale: f64 = f.iter().map(|v| v * v).sum::<f64>() * grid.len as f64;
                worst = worst.max(rhs.iter().fold(0.0f64, |m, r| m.max(r.abs())) / scale);
            }
        }
        let osc = osc_degeneracy_ratio(50, OSC_ZERO_POINT);
        let mut sites = SiteSpace::new(PhysicsMode::BoxErgodic, 8)?;
        let mut box_dev: f64 = 0.0;
        for base in [100, 150] {
            box_dev = box_dev.max((box_kernel_window(&mut sites, base, 12)?.ratio - 1.0).abs());
        }
        let ok = worst < 1e-12 && (osc - 1.0).abs() < 0.02 && box_dev < 0.1;
        Ok((
            ok,
            format!(
                "rhs {worst:.1e}, osc g/rho at j=50 {osc:.4}, box kernel deviation {box_dev:.3}"
            ),
        ))
    };
    CheckResult::from_result("classical", run())
}

pub fn all_checks(scale: CheckScale) -> Vec<CheckResult> {
    vec![
        check_uniformity(scale),
        check_conservation(scale),
        check_engine(scale),
        check_classical(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_checks_pass() {
        for c in all_checks(CheckScale::QUICK) {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn display_tags_outcome() {
        let c = CheckResult::new("x", false, "bad".into());
        assert_eq!(c.to_string(), "FAIL x: bad");
    }
}
