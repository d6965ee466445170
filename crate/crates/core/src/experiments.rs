//! Composite runs behind the figure presets and the acceptance checks.
//!
//! Durations are given in collision times: a warm-up of `w` collision
//! times is `w N / 2` events, and the measured warm-up rate then converts
//! the remaining durations into kernel time.

use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{Geometry, LevelSpectrum};
use crate::engine::trajectory::{build_engine, run_engine};
use crate::engine::{EvaporationRamp, TrajectoryConfig, TrajectoryRecord};
use crate::equilibrium::{
    bose_geometric_pmf, critical_temperature, solve_at_temperature, target_energy, thermal_init,
    thermodynamic_condensate_fraction, EquilibriumSolution,
};
use crate::error::{Error, Result};
use crate::fluctuation::{fluctuation_sum, truncated_constraints, FluctuationSpec, DEFAULT_LEVELS};
use crate::lattice::IVec3;
use crate::observables::{
    collision_times, condensate_fraction, condensate_sigma, equilibrium_distance, growth_fit,
    time_to_fraction, windowed_collision_times, GrowthFit, OccupationHistogram, SigmaEstimate,
};
use crate::state::{InitSpec, PhysicsMode};
use crate::stats::{chi_square_gof, TestResult};

/// An equilibrium run started from a thermal-like configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumRun {
    pub mode: PhysicsMode,
    pub n: u64,
    pub t_rel: f64,
    pub seed: u64,
    pub stream: u64,
    /// Collision times discarded before measuring.
    pub warmup: f64,
    /// Collision times measured.
    pub measure: f64,
    pub samples_per_tcoll: f64,
    pub record_blocks: usize,
    /// Momentum vectors whose occupation is sampled; non-ergodic box only.
    pub track: Vec<IVec3>,
}

impl EquilibriumRun {
    pub fn new(mode: PhysicsMode, n: u64, t_rel: f64, seed: u64) -> Self {
        EquilibriumRun {
            mode,
            n,
            t_rel,
            seed,
            stream: 0,
            warmup: 50.0,
            measure: 200.0,
            samples_per_tcoll: 1.0,
            record_blocks: 2,
            track: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumOutcome {
    pub run: EquilibriumRun,
    /// Collision time measured over the second half of the warm-up; NaN if
    /// the state froze.
    pub t_coll_warmup: f64,
    pub solution: EquilibriumSolution,
    pub record: TrajectoryRecord,
}

pub fn run_equilibrium(run: &EquilibriumRun) -> Result<EquilibriumOutcome> {
    if run.n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let geometry = run.mode.geometry();
    let tc = critical_temperature(geometry, run.n as f64);
    let solution = solve_at_temperature(geometry, run.n as f64, run.t_rel * tc)?;
    let mut cfg = TrajectoryConfig::new(
        run.mode,
        thermal_init(geometry, run.n, run.t_rel)?,
        run.seed,
        0.0,
    );
    cfg.stream = run.stream;
    cfg.record_blocks = run.record_blocks;
    let mut engine = build_engine(&cfg)?;
    for &m in &run.track {
        let site = match run.mode {
            PhysicsMode::BoxNonErgodic => engine.sites().site_of_vector(m),
            _ => None,
        };
        let site = site.ok_or_else(|| {
            Error::Config(format!("track: no site for {m:?} in {}", run.mode.name()))
        })?;
        cfg.track_sites.push(site);
    }
    let half_n = 0.5 * run.n as f64;
    let half = (0.5 * run.warmup * half_n).ceil() as u64;
    let mut frozen = false;
    let mut advance = |engine: &mut crate::engine::Engine, k: u64| -> Result<()> {
        for _ in 0..k {
            if engine.step()?.is_none() {
                frozen = true;
                break;
            }
        }
        Ok(())
    };
    advance(&mut engine, half)?;
    let (t0, e0) = (engine.time(), engine.events());
    advance(&mut engine, half)?;
    let t_coll = if engine.events() > e0 {
        half_n * (engine.time() - t0) / (engine.events() - e0) as f64
    } else {
        f64::NAN
    };
    cfg.burn_in = engine.time();
    if frozen || !t_coll.is_finite() {
        cfg.t_end = engine.time();
    } else {
        cfg.t_end = engine.time() + run.measure * t_coll;
        if run.samples_per_tcoll > 0.0 {
            cfg.sample_interval = t_coll / run.samples_per_tcoll;
        }
    }
    let record = run_engine(engine, &cfg)?;
    Ok(EquilibriumOutcome {
        run: run.clone(),
        t_coll_warmup: t_coll,
        solution,
        record,
    })
}

/// Equilibrium observables at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub t_rel: f64,
    pub n: u64,
    pub fraction: f64,
    pub fraction_gc: f64,
    pub fraction_thermo: f64,
    /// Per-particle collision time; NaN for a frozen state.
    pub t_coll: f64,
    pub classical: f64,
    pub distance: f64,
    pub events: u64,
}

impl SweepPoint {
    pub fn from_outcome(o: &EquilibriumOutcome) -> Self {
        let ct = collision_times(&o.record).ok();
        SweepPoint {
            t_rel: o.run.t_rel,
            n: o.run.n,
            fraction: condensate_fraction(&o.record),
            fraction_gc: o.solution.condensate_fraction(),
            fraction_thermo: thermodynamic_condensate_fraction(o.run.mode.geometry(), o.run.t_rel),
            t_coll: ct.map_or(f64::NAN, |c| c.t_coll),
            classical: ct.map_or(f64::NAN, |c| c.classical),
            distance: equilibrium_distance(&o.record.averages.block_mean, &o.solution),
            events: o.record.events,
        }
    }
}

/// Runs `base` at each temperature, one stream per point, in parallel.
pub fn temperature_sweep(base: &EquilibriumRun, temps: &[f64]) -> Result<Vec<SweepPoint>> {
    temps
        .par_iter()
        .enumerate()
        .map(|(k, &t_rel)| {
            let run = EquilibriumRun {
                t_rel,
                stream: base.stream + k as u64,
                ..base.clone()
            };
            Ok(SweepPoint::from_outcome(&run_equilibrium(&run)?))
        })
        .collect()
}

/// Simulated condensate fluctuations next to the exact level sum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluctuationPoint {
    pub t_rel: f64,
    pub sim: SigmaEstimate,
    pub oracle_mean: f64,
    pub oracle_sigma: f64,
    pub truncated_n: u64,
    pub truncated_e: u64,
}

impl FluctuationPoint {
    /// Difference from the oracle in units of the simulated error bar.
    pub fn deviation(&self) -> f64 {
        (self.sim.sigma - self.oracle_sigma).abs() / self.sim.error()
    }
}

/// Samples the ground occupation of an equilibrium run and compares its
/// spread with the exact sum over the lowest levels.
pub fn fluctuation_point(run: &EquilibriumRun, batches: usize) -> Result<FluctuationPoint> {
    let out = run_equilibrium(run)?;
    let series: Vec<f64> = out.record.samples.iter().map(|s| s.n0 as f64).collect();
    let sim = condensate_sigma(&series, batches)?;
    let (n17, e17) = truncated_constraints(&out.solution, DEFAULT_LEVELS);
    let spectrum = match run.mode.geometry() {
        Geometry::Box => LevelSpectrum::box_levels(64),
        Geometry::Oscillator => LevelSpectrum::osc_levels(64),
    };
    let exact = fluctuation_sum(&spectrum, &FluctuationSpec::new(n17, e17))?;
    Ok(FluctuationPoint {
        t_rel: run.t_rel,
        sim,
        oracle_mean: exact.mean,
        oracle_sigma: exact.sigma,
        truncated_n: n17,
        truncated_e: e17,
    })
}

/// Sampled ground-state distribution with a goodness-of-fit test against
/// the geometric law of the same mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundDistribution {
    pub t_rel: f64,
    pub histogram: OccupationHistogram,
    pub geometric: Vec<f64>,
    pub test: TestResult,
}

pub fn ground_distribution(run: &EquilibriumRun) -> Result<GroundDistribution> {
    let out = run_equilibrium(run)?;
    let histogram = OccupationHistogram::from_counts(0, out.record.samples.iter().map(|s| s.n0));
    let geometric = bose_geometric_pmf(histogram.mean(), histogram.weights.len());
    let test = chi_square_gof(&histogram.weights, &geometric, 1)?;
    Ok(GroundDistribution {
        t_rel: run.t_rel,
        histogram,
        geometric,
        test,
    })
}

/// Sampled occupation distribution of one site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteDistribution {
    /// `ground` or the tracked momentum vector.
    pub label: String,
    pub histogram: OccupationHistogram,
    pub geometric: Vec<f64>,
    /// Fit to the geometric law; `None` when too few bins survive pooling.
    pub test: Option<TestResult>,
}

impl SiteDistribution {
    fn new(label: String, block: usize, values: impl IntoIterator<Item = u64>) -> Self {
        let histogram = OccupationHistogram::from_counts(block, values);
        let geometric = bose_geometric_pmf(histogram.mean(), histogram.weights.len());
        let test = chi_square_gof(&histogram.weights, &geometric, 1).ok();
        SiteDistribution {
            label,
            histogram,
            geometric,
            test,
        }
    }
}

/// Ground-state distribution followed by one per tracked vector.
pub fn site_distributions(run: &EquilibriumRun) -> Result<Vec<SiteDistribution>> {
    let out = run_equilibrium(run)?;
    let samples = &out.record.samples;
    let mut dists = vec![SiteDistribution::new(
        "ground".into(),
        0,
        samples.iter().map(|s| s.n0),
    )];
    for (k, m) in run.track.iter().enumerate() {
        let label = format!("{}_{}_{}", m[0], m[1], m[2]);
        dists.push(SiteDistribution::new(
            label,
            1,
            samples.iter().map(|s| s.tracked[k]),
        ));
    }
    Ok(dists)
}

/// Condensate growth from a configuration with an empty ground state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthRun {
    pub mode: PhysicsMode,
    pub n: u64,
    pub t_rel: f64,
    pub seed: u64,
    /// Duration in collision times of the final equilibrium.
    pub duration: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthOutcome {
    pub t: Vec<f64>,
    pub n0: Vec<f64>,
    pub fit: GrowthFit,
    pub equilibrium_n0: f64,
}

pub fn run_growth(run: &GrowthRun) -> Result<GrowthOutcome> {
    let geometry = run.mode.geometry();
    let e = target_energy(geometry, run.n, run.t_rel)?;
    let init = InitSpec::GaussianLike {
        n: run.n,
        e,
        avoid_ground: true,
    };
    let tc = critical_temperature(geometry, run.n as f64);
    let sol = solve_at_temperature(geometry, run.n as f64, run.t_rel * tc)?;
    // Calibrate the time scale on the equilibrated gas.
    let probe = run_equilibrium(&EquilibriumRun {
        measure: 0.0,
        warmup: 20.0,
        ..EquilibriumRun::new(run.mode, run.n, run.t_rel, run.seed)
    })?;
    let t_coll = probe.t_coll_warmup;
    if !t_coll.is_finite() {
        return Err(Error::Domain(
            "no collisions at the target temperature".into(),
        ));
    }
    let t_end = run.duration * t_coll;
    let mut cfg = TrajectoryConfig::new(run.mode, init, run.seed, t_end);
    cfg.stream = 1;
    cfg.sample_interval = t_end / run.samples.max(2) as f64;
    let rec = crate::engine::run_trajectory(&cfg)?;
    let t: Vec<f64> = rec.samples.iter().map(|s| s.t).collect();
    let n0: Vec<f64> = rec.samples.iter().map(|s| s.n0 as f64).collect();
    let fit = growth_fit(&t, &n0)?;
    Ok(GrowthOutcome {
        t,
        n0,
        fit,
        equilibrium_n0: sol.ground_occupation(),
    })
}

/// Evaporative cooling of a thermal oscillator gas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaporationRun {
    pub n0: u64,
    pub t_rel: f64,
    pub ramp: EvaporationRamp,
    pub t_end: f64,
    pub sample_interval: f64,
    pub seed: u64,
    pub stream: u64,
}

impl EvaporationRun {
    pub fn new(gamma: f64, seed: u64) -> Self {
        EvaporationRun {
            n0: 800,
            t_rel: 1.4,
            ramp: EvaporationRamp {
                e_b0: 65,
                e_l: 8,
                gamma,
            },
            t_end: 60.0,
            sample_interval: 0.05,
            seed,
            stream: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaporationOutcome {
    pub gamma: f64,
    pub t: Vec<f64>,
    pub n: Vec<f64>,
    pub n0: Vec<f64>,
    /// `(t, t_coll)` over consecutive sample windows.
    pub t_coll: Vec<(f64, f64)>,
    pub lost: u64,
    pub final_n0: f64,
    /// Time to reach 90% of the final condensate.
    pub t90: Option<f64>,
}

impl EvaporationOutcome {
    /// Condensate size over the time needed to reach 90% of it.
    pub fn condensation_rate(&self) -> f64 {
        match self.t90 {
            Some(t) if t > 0.0 => self.final_n0 / t,
            _ => 0.0,
        }
    }

    pub fn initial_t_coll(&self) -> Option<f64> {
        self.t_coll.first().map(|p| p.1)
    }

    pub fn min_t_coll(&self) -> Option<(f64, f64)> {
        self.t_coll
            .iter()
            .copied()
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Final condensate as the mean over the last tenth of the record.
fn tail_mean(y: &[f64]) -> f64 {
    let k = (y.len() / 10).max(1);
    y[y.len() - k..].iter().sum::<f64>() / k as f64
}

pub fn run_evaporation_experiment(
    run: &EvaporationRun,
    stride: usize,
) -> Result<EvaporationOutcome> {
    let init = thermal_init(Geometry::Oscillator, run.n0, run.t_rel)?;
    let mut cfg = TrajectoryConfig::new(PhysicsMode::OscErgodic, init, run.seed, run.t_end);
    cfg.stream = run.stream;
    cfg.ramp = Some(run.ramp);
    cfg.sample_interval = run.sample_interval;
    let rec = crate::engine::run_evaporation(&cfg)?;
    let t: Vec<f64> = rec.samples.iter().map(|s| s.t).collect();
    let n: Vec<f64> = rec.samples.iter().map(|s| s.n as f64).collect();
    let n0: Vec<f64> = rec.samples.iter().map(|s| s.n0 as f64).collect();
    if t.is_empty() {
        return Err(Error::Domain("evaporation run recorded no samples".into()));
    }
    let final_n0 = tail_mean(&n0);
    let t90 = time_to_fraction(&t, &n0, final_n0, 0.9);
    Ok(EvaporationOutcome {
        gamma: run.ramp.gamma,
        t_coll: windowed_collision_times(&rec.samples, stride),
        t,
        n,
        n0,
        lost: rec.lost,
        final_n0,
        t90,
    })
}

/// Runs `base` once per ramp rate, one stream per rate, in parallel.
pub fn evaporation_sweep(
    base: &EvaporationRun,
    gammas: &[f64],
    stride: usize,
) -> Result<Vec<EvaporationOutcome>> {
    gammas
        .par_iter()
        .enumerate()
        .map(|(k, &gamma)| {
            let mut run = base.clone();
            run.ramp.gamma = gamma;
            run.stream = base.stream + k as u64;
            run_evaporation_experiment(&run, stride)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_run_samples_after_warmup() {
        let mut run = EquilibriumRun::new(PhysicsMode::BoxErgodic, 40, 0.6, 3);
        run.warmup = 10.0;
        run.measure = 20.0;
        let out = run_equilibrium(&run).unwrap();
        let rec = &out.record;
        assert!(out.t_coll_warmup > 0.0);
        let first = rec.samples.first().unwrap();
        assert!(first.t >= rec.t_final - 20.0 * out.t_coll_warmup - 1e-9);
        assert!(
            (rec.samples.len() as f64 - 20.0).abs() <= 2.0,
            "{}",
            rec.samples.len()
        );
    }

    #[test]
    fn frozen_gas_reports_no_collision_time() {
        let run = EquilibriumRun::new(PhysicsMode::BoxNonErgodic, 20, 0.05, 1);
        let p = SweepPoint::from_outcome(&run_equilibrium(&run).unwrap());
        assert!(p.t_coll.is_nan());
        assert_eq!(p.fraction, 1.0);
    }

    #[test]
    fn sweep_is_ordered_and_reproducible() {
        let mut base = EquilibriumRun::new(PhysicsMode::OscErgodic, 60, 0.5, 9);
        base.warmup = 10.0;
        base.measure = 10.0;
        let a = temperature_sweep(&base, &[0.4, 0.8]).unwrap();
        let b = temperature_sweep(&base, &[0.4, 0.8]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1].t_rel, 0.8);
        assert!(a[0].fraction > a[1].fraction);
    }
}
