//! Estimators built from trajectory records: occupation histograms,
//! condensate fluctuations, collision times, growth fits, equilibrium
//! detection and the ergodization probe.

use serde::Serialize;

use crate::catalog::Geometry;
use crate::classical::OSC_ZERO_POINT;
use crate::engine::trajectory::{Sample, TimeAverages};
use crate::engine::{trajectory_rng, Engine, TrajectoryRecord};
use crate::equilibrium::{thermal_init, EquilibriumSolution};
use crate::error::{Error, Result};
use crate::lattice::IVec3;
use crate::state::{init_from_spec, OccupationState, PhysicsMode, SiteSpace};
use crate::stats::{batch_statistic, chi_square_homogeneity, mean_sd, normalize, r_squared};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistogramMethod {
    /// Weights are the times each occupation value was held.
    Time,
    /// Weights are counts over trajectories or samples.
    Ensemble,
}

/// Distribution `W(j)` of the occupation of one block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationHistogram {
    pub block: usize,
    pub method: HistogramMethod,
    pub weights: Vec<f64>,
}

impl OccupationHistogram {
    pub fn from_counts(block: usize, values: impl IntoIterator<Item = u64>) -> Self {
        let mut weights = Vec::new();
        for v in values {
            let v = v as usize;
            if weights.len() <= v {
                weights.resize(v + 1, 0.0);
            }
            weights[v] += 1.0;
        }
        OccupationHistogram {
            block,
            method: HistogramMethod::Ensemble,
            weights,
        }
    }

    /// Time-weighted ground-state histogram of one record.
    pub fn ground_from_time(avg: &TimeAverages) -> Self {
        OccupationHistogram {
            block: 0,
            method: HistogramMethod::Time,
            weights: avg.n0_weights.clone(),
        }
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        normalize(&self.weights)
    }

    pub fn mean(&self) -> f64 {
        self.probabilities()
            .iter()
            .enumerate()
            .map(|(j, p)| j as f64 * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.probabilities()
            .iter()
            .enumerate()
            .map(|(j, p)| (j as f64 - m).powi(2) * p)
            .sum()
    }

    /// Sums another histogram of the same block into this one.
    pub fn merge(&mut self, other: &OccupationHistogram) {
        if self.weights.len() < other.weights.len() {
            self.weights.resize(other.weights.len(), 0.0);
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
    }
}

/// Ground-state histogram over the sample at index `k` of each record.
pub fn ensemble_ground_histogram(
    records: &[TrajectoryRecord],
    k: usize,
) -> Result<OccupationHistogram> {
    let values: Vec<u64> = records
        .iter()
        .map(|r| {
            r.samples
                .get(k)
                .map(|s| s.n0)
                .ok_or_else(|| Error::Domain(format!("record {} has no sample {k}", r.stream)))
        })
        .collect::<Result<_>>()?;
    Ok(OccupationHistogram::from_counts(0, values))
}

/// Time-averaged condensate fraction of one record.
pub fn condensate_fraction(record: &TrajectoryRecord) -> f64 {
    record.averages.mean_n0() / record.initial_n as f64
}

/// Means of the ground-state occupation over `windows` disjoint windows of
/// the samples, with a standard error per window from batch means.
pub fn window_means(samples: &[Sample], windows: usize) -> Result<Vec<(f64, f64)>> {
    if windows == 0 || samples.len() < windows * 8 {
        return Err(Error::Domain(format!(
            "{} samples are too few for {windows} windows",
            samples.len()
        )));
    }
    let size = samples.len() / windows;
    (0..windows)
        .map(|w| {
            let x: Vec<f64> = samples[w * size..(w + 1) * size]
                .iter()
                .map(|s| s.n0 as f64)
                .collect();
            let b = batch_statistic(&x, 4, |s| mean_sd(s).0)?;
            Ok((b.mean, b.stderr))
        })
        .collect()
}

/// Standard deviation of the condensate occupation with error estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaEstimate {
    pub mean: f64,
    pub sigma: f64,
    /// `sqrt(sd((N_c - <N_c>)^2) / <N_c>)`, the error-bar formula quoted with
    /// the fluctuation figure.
    pub formula_error: f64,
    /// Standard error of `sigma` from batch means over the series.
    pub batch_error: f64,
    /// Independent samples behind the estimate.
    pub samples: usize,
}

impl SigmaEstimate {
    /// Error bar used for comparisons: the larger of the two estimates.
    pub fn error(&self) -> f64 {
        self.formula_error.max(self.batch_error)
    }
}

/// Fluctuation estimate from a series of condensate occupations.
pub fn condensate_sigma(series: &[f64], batches: usize) -> Result<SigmaEstimate> {
    let (mean, sigma) = mean_sd(series);
    let sq: Vec<f64> = series.iter().map(|x| (x - mean).powi(2)).collect();
    let (_, sd_sq) = mean_sd(&sq);
    let formula_error = if mean > 0.0 {
        (sd_sq / mean).sqrt()
    } else {
        0.0
    };
    let batch = batch_statistic(series, batches, |s| mean_sd(s).1)?;
    Ok(SigmaEstimate {
        mean,
        sigma,
        formula_error,
        batch_error: batch.stderr,
        samples: series.len(),
    })
}

/// Mean collision times in the time units of the rate kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollisionTimeStats {
    pub mean_dt: f64,
    pub events: u64,
    pub n: f64,
    /// Per-particle time between collisions, `(N/2) <dt>`.
    pub t_coll: f64,
    /// Classical elastic collision time from the measured occupations.
    pub classical: f64,
}

impl CollisionTimeStats {
    pub fn ratio(&self) -> f64 {
        self.t_coll / self.classical
    }
}

/// Classical collision time for a gas with mean block occupations
/// `block_mean` at block energies `energies`.
///
/// Box: `t = (sigma nbar v_T)^-1` with `v_T` the mean of `|m| v1` over
/// particles, which in kernel units is `2 / (N <sqrt(e)>)`.
///
/// Oscillator: `t = (nbar_h sigma v_Th)^-1` with
/// `nbar_h = (3N / 4 pi) (m w^2 / E_{3/2})^{3/2}` and `v_Th = sqrt(E_{1/2} / m)`,
/// which in kernel units is `16 E_{3/2}^{3/2} / (3 pi N sqrt(E_{1/2}))`. The
/// level energies include the zero-point energy.
pub fn classical_collision_time(geometry: Geometry, energies: &[u64], block_mean: &[f64]) -> f64 {
    let n: f64 = block_mean.iter().sum();
    let moment = |f: &dyn Fn(f64) -> f64| -> f64 {
        energies
            .iter()
            .zip(block_mean)
            .map(|(&e, &b)| f(e as f64) * b)
            .sum::<f64>()
            / n
    };
    match geometry {
        Geometry::Box => 2.0 / (n * moment(&|e| e.sqrt())),
        Geometry::Oscillator => {
            let e32 = moment(&|e| (e + OSC_ZERO_POINT).powf(1.5)).powf(2.0 / 3.0);
            let e12 = moment(&|e| (e + OSC_ZERO_POINT).sqrt()).powi(2);
            16.0 * e32.powf(1.5) / (3.0 * std::f64::consts::PI * n * e12.sqrt())
        }
    }
}

/// Collision-time statistics of an equilibrium record over its averaging
/// window.
pub fn collision_times(record: &TrajectoryRecord) -> Result<CollisionTimeStats> {
    let avg = &record.averages;
    let mean_dt = avg
        .mean_dt()
        .ok_or_else(|| Error::Domain("no events inside the averaging window".into()))?;
    let n: f64 = avg.block_mean.iter().sum();
    let k = avg.block_mean.len().min(record.block_energies.len());
    Ok(CollisionTimeStats {
        mean_dt,
        events: avg.events,
        n,
        t_coll: 0.5 * n * mean_dt,
        classical: classical_collision_time(
            record.mode.geometry(),
            &record.block_energies[..k],
            &avg.block_mean[..k],
        ),
    })
}

/// Per-particle collision time between consecutive samples,
/// `(N/2) dt / d(events)`, reported at the window midpoint. Windows without
/// events are skipped.
pub fn windowed_collision_times(samples: &[Sample], stride: usize) -> Vec<(f64, f64)> {
    let stride = stride.max(1);
    samples
        .windows(stride + 1)
        .step_by(stride)
        .filter_map(|w| {
            let (a, b) = (&w[0], &w[stride]);
            let de = b.events.saturating_sub(a.events);
            (de > 0).then(|| {
                let n = 0.5 * (a.n + b.n) as f64;
                (0.5 * (a.t + b.t), 0.5 * n * (b.t - a.t) / de as f64)
            })
        })
        .collect()
}

/// Fit of `N_c (1 - exp(-t / tau))` to a growth curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthFit {
    pub n_c: f64,
    pub tau: f64,
    pub r2: f64,
    pub rmse: f64,
    /// `tau` is below the time resolution of the data.
    pub degenerate: bool,
    pub gauss_newton: bool,
}

fn saturation(n_c: f64, tau: f64, t: f64) -> f64 {
    n_c * -(-t / tau).exp_m1()
}

fn sse(t: &[f64], y: &[f64], n_c: f64, tau: f64) -> f64 {
    t.iter()
        .zip(y)
        .map(|(&ti, &yi)| (yi - saturation(n_c, tau, ti)).powi(2))
        .sum()
}

/// Best amplitude for a fixed `tau`.
fn amplitude(t: &[f64], y: &[f64], tau: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&ti, &yi) in t.iter().zip(y) {
        let phi = -(-ti / tau).exp_m1();
        num += yi * phi;
        den += phi * phi;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn gauss_newton(t: &[f64], y: &[f64], mut a: f64, mut tau: f64) -> Option<(f64, f64)> {
    let mut lambda = 1e-3;
    let mut cost = sse(t, y, a, tau);
    for _ in 0..200 {
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (&ti, &yi) in t.iter().zip(y) {
            let ex = (-ti / tau).exp();
            let r = yi - a * (1.0 - ex);
            let ja = 1.0 - ex;
            let jt = -a * ex * ti / (tau * tau);
            let j = [ja, jt];
            for p in 0..2 {
                jtr[p] += j[p] * r;
                for q in 0..2 {
                    jtj[p][q] += j[p] * j[q];
                }
            }
        }
        let m = [
            [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
            [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.abs() < 1e-300 {
            return None;
        }
        let da = (m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det;
        let dt = (m[0][0] * jtr[1] - m[1][0] * jtr[0]) / det;
        let (na, nt) = (a + da, tau + dt);
        if nt > 0.0 && sse(t, y, na, nt) <= cost {
            let new_cost = sse(t, y, na, nt);
            let done = (cost - new_cost) <= 1e-14 * cost.max(1e-300);
            a = na;
            tau = nt;
            cost = new_cost;
            lambda = (lambda * 0.3).max(1e-12);
            if done {
                return Some((a, tau));
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                return Some((a, tau));
            }
        }
    }
    Some((a, tau))
}

/// Least-squares fit of the exponential saturation law. Gauss-Newton with
/// damping starts from a log-spaced grid search over `tau` with the
/// amplitude solved exactly; the grid optimum is kept if it fits better.
pub fn growth_fit(t: &[f64], y: &[f64]) -> Result<GrowthFit> {
    if t.len() != y.len() || t.len() < 3 {
        return Err(Error::Domain(
            "growth fit needs at least 3 matching points".into(),
        ));
    }
    let span = t.iter().cloned().fold(0.0, f64::max);
    let dt_min = t
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !(span > 0.0) || !dt_min.is_finite() {
        return Err(Error::Domain("growth fit needs increasing times".into()));
    }
    let lo = (dt_min * 1e-3).ln();
    let hi = (span * 1e2).ln();
    let grid = 400;
    let mut best = (f64::INFINITY, 0.0, 1.0);
    for k in 0..=grid {
        let tau = (lo + (hi - lo) * k as f64 / grid as f64).exp();
        let a = amplitude(t, y, tau);
        let c = sse(t, y, a, tau);
        if c < best.0 {
            best = (c, a, tau);
        }
    }
    let (mut a, mut tau) = (best.1, best.2);
    let mut gn = false;
    if let Some((ga, gt)) = gauss_newton(t, y, a, tau) {
        if gt > 0.0 && sse(t, y, ga, gt) <= best.0 {
            a = ga;
            tau = gt;
            gn = true;
        }
    }
    let fit: Vec<f64> = t.iter().map(|&ti| saturation(a, tau, ti)).collect();
    let rmse = (sse(t, y, a, tau) / t.len() as f64).sqrt();
    Ok(GrowthFit {
        n_c: a,
        tau,
        r2: r_squared(y, &fit),
        rmse,
        degenerate: tau < dt_min,
        gauss_newton: gn,
    })
}

/// First time at which `y` reaches `fraction` of `target`.
pub fn time_to_fraction(t: &[f64], y: &[f64], target: f64, fraction: f64) -> Option<f64> {
    t.iter()
        .zip(y)
        .find(|(_, &v)| v >= fraction * target)
        .map(|(&ti, _)| ti)
}

/// Distance between simulated and grand-canonical level populations,
/// `sum_b (p_b - q_b)^2 / (p_b + q_b)` over particle fractions per block.
/// It lies in `[0, 2]`.
pub fn equilibrium_distance(block_mean: &[f64], sol: &EquilibriumSolution) -> f64 {
    let expected = sol.level_particles();
    let len = block_mean.len().max(expected.len());
    let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let n_sim: f64 = block_mean.iter().sum();
    let n_gc: f64 = expected.iter().sum();
    (0..len)
        .map(|i| {
            let p = get(block_mean, i) / n_sim;
            let q = get(&expected, i) / n_gc;
            if p + q > 0.0 {
                (p - q).powi(2) / (p + q)
            } else {
                0.0
            }
        })
        .sum()
}

/// Default threshold on [`equilibrium_distance`].
pub const EQUILIBRIUM_THRESHOLD: f64 = 0.01;

pub fn is_equilibrated(block_mean: &[f64], sol: &EquilibriumSolution, threshold: f64) -> bool {
    equilibrium_distance(block_mean, sol) < threshold
}

/// Settings of the ergodization probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodizationConfig {
    pub n: u64,
    pub t_rel: f64,
    pub trajectories: usize,
    pub seed: u64,
    /// Collision times spent equilibrating before the distortion.
    pub equilibrate: f64,
    /// Observation times after the distortion, in collision times.
    pub checkpoints: Vec<f64>,
    pub alpha: f64,
    /// Collision times over which the test must keep passing.
    pub hold: f64,
}

impl ErgodizationConfig {
    pub fn new(n: u64, t_rel: f64, trajectories: usize, seed: u64) -> Self {
        ErgodizationConfig {
            n,
            t_rel,
            trajectories,
            seed,
            equilibrate: 15.0,
            checkpoints: (0..=40).map(|k| 0.5 * k as f64).collect(),
            alpha: 0.01,
            hold: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodizationPoint {
    /// Time since the distortion in collision times.
    pub t: f64,
    pub filled_mean: f64,
    pub depleted_mean: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodizationResult {
    /// Equilibrium per-particle collision time before the distortion.
    pub t_coll: f64,
    pub points: Vec<ErgodizationPoint>,
    /// First checkpoint from which on the filled and depleted distributions
    /// stay indistinguishable for `hold` collision times.
    pub relaxation: Option<f64>,
}

const FIRST_SHELL: [IVec3; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

/// Moves every particle of the first excited shell into the two states
/// `+a` and `-a` along one axis, keeping the total momentum. Possible when
/// the shell's momentum has no component off that axis; returns the
/// filled pair and the other four sites, or `None` when no axis qualifies.
pub fn distort_first_shell(
    sites: &SiteSpace,
    state: &OccupationState,
) -> Result<Option<(OccupationState, [usize; 2], [usize; 4])>> {
    if sites.mode() != PhysicsMode::BoxNonErgodic {
        return Err(Error::Config(
            "the ergodization probe needs the non-ergodic box".into(),
        ));
    }
    let idx: Vec<usize> = FIRST_SHELL
        .iter()
        .map(|&m| {
            sites
                .site_of_vector(m)
                .ok_or_else(|| Error::Logic("first shell missing from catalog".into()))
        })
        .collect::<Result<_>>()?;
    let occ: Vec<u64> = idx.iter().map(|&x| state.occ(x)).collect();
    let total: u64 = occ.iter().sum();
    let p: Vec<i64> = (0..3)
        .map(|k| occ[2 * k] as i64 - occ[2 * k + 1] as i64)
        .collect();
    for axis in 0..3 {
        if (0..3).any(|k| k != axis && p[k] != 0) {
            continue;
        }
        let plus = (total as i64 + p[axis]) / 2;
        let minus = total as i64 - plus;
        let mut next = state.clone();
        for (&x, &k) in idx.iter().zip(&occ) {
            if k > 0 {
                next.remove(sites, x, k)?;
            }
        }
        let (a, b) = (idx[2 * axis], idx[2 * axis + 1]);
        if plus > 0 {
            next.add(sites, a, plus as u64);
        }
        if minus > 0 {
            next.add(sites, b, minus as u64);
        }
        let rest: Vec<usize> = idx.iter().copied().filter(|&x| x != a && x != b).collect();
        return Ok(Some((next, [a, b], [rest[0], rest[1], rest[2], rest[3]])));
    }
    Ok(None)
}

/// Runs the distortion experiment over independent trajectories and tests
/// at each checkpoint whether the occupations of the two filled states and
/// the four depleted states of the first excited shell are drawn from the
/// same distribution.
pub fn ergodization_probe(cfg: &ErgodizationConfig) -> Result<ErgodizationResult> {
    if cfg.trajectories == 0 || cfg.checkpoints.is_empty() {
        return Err(Error::Config(
            "ergodization probe needs trajectories and checkpoints".into(),
        ));
    }
    let init = thermal_init(Geometry::Box, cfg.n, cfg.t_rel)?;
    let k = cfg.checkpoints.len();
    let mut filled: Vec<Vec<u64>> = vec![Vec::new(); k];
    let mut depleted: Vec<Vec<u64>> = vec![Vec::new(); k];
    let mut t_colls = Vec::new();
    let half_n = 0.5 * cfg.n as f64;
    for traj in 0..cfg.trajectories {
        let mut rng = trajectory_rng(cfg.seed, traj as u64);
        let mut sites = SiteSpace::new(PhysicsMode::BoxNonErgodic, 16)?;
        let state = init_from_spec(&mut sites, &init, &mut rng)?;
        let mut engine = Engine::new(sites, state, rng)?;
        let warm = (cfg.equilibrate * half_n).ceil() as u64;
        for _ in 0..warm {
            engine.step()?;
        }
        let (t0, e0) = (engine.time(), engine.events());
        for _ in 0..warm {
            engine.step()?;
        }
        t_colls.push(half_n * (engine.time() - t0) / (engine.events() - e0) as f64);
        let mut tries = 0u64;
        let (state, pair, rest) = loop {
            if let Some(d) = distort_first_shell(engine.sites(), engine.state())? {
                break d;
            }
            engine.step()?;
            tries += 1;
            if tries > 1000 * cfg.n {
                return Err(Error::Budget(
                    "first-shell momentum never aligned with an axis".into(),
                ));
            }
        };
        let mut probe = Engine::new(
            engine.sites().clone(),
            state,
            trajectory_rng(cfg.seed, (1 << 32) + traj as u64),
        )?;
        let t_coll = *t_colls.last().unwrap();
        for (c, &tc) in cfg.checkpoints.iter().enumerate() {
            let horizon = tc * t_coll;
            while probe.time() < horizon {
                match probe.step_until(horizon, &mut ())? {
                    crate::engine::StepOutcome::Event(_) => {}
                    _ => break,
                }
            }
            filled[c].extend(pair.iter().map(|&x| probe.state().occ(x)));
            depleted[c].extend(rest.iter().map(|&x| probe.state().occ(x)));
        }
    }
    let mut points = Vec::with_capacity(k);
    for c in 0..k {
        let hf = OccupationHistogram::from_counts(1, filled[c].iter().copied());
        let hd = OccupationHistogram::from_counts(1, depleted[c].iter().copied());
        let p = chi_square_homogeneity(&hf.weights, &hd.weights)?.p_value;
        points.push(ErgodizationPoint {
            t: cfg.checkpoints[c],
            filled_mean: hf.mean(),
            depleted_mean: hd.mean(),
            p_value: p,
        });
    }
    let relaxation = (0..k)
        .find(|&c| {
            let until = points[c].t + cfg.hold;
            until <= points[k - 1].t
                && points[c..]
                    .iter()
                    .take_while(|p| p.t <= until)
                    .all(|p| p.p_value >= cfg.alpha)
        })
        .map(|c| points[c].t);
    Ok(ErgodizationResult {
        t_coll: mean_sd(&t_colls).0,
        points,
        relaxation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_at_temperature;
    use approx::assert_relative_eq;

    #[test]
    fn histogram_moments() {
        let h = OccupationHistogram::from_counts(0, [0, 1, 1, 2]);
        assert_eq!(h.weights, vec![1.0, 2.0, 1.0]);
        assert_relative_eq!(h.mean(), 1.0);
        assert_relative_eq!(h.variance(), 0.5);
        assert!((h.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_has_no_fluctuation() {
        let s = condensate_sigma(&[7.0; 100], 5).unwrap();
        assert_eq!(s.sigma, 0.0);
        assert_eq!(s.formula_error, 0.0);
        assert_eq!(s.mean, 7.0);
    }

    #[test]
    fn growth_fit_recovers_exact_data() {
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 1e-4).collect();
        let y: Vec<f64> = t.iter().map(|&x| saturation(368.0, 0.0013, x)).collect();
        let f = growth_fit(&t, &y).unwrap();
        assert_relative_eq!(f.n_c, 368.0, max_relative = 1e-6);
        assert_relative_eq!(f.tau, 0.0013, max_relative = 1e-6);
        assert!(f.r2 > 0.999_999 && !f.degenerate);
    }

    #[test]
    fn growth_fit_flags_equilibrated_input() {
        let t: Vec<f64> = (0..50).map(|k| k as f64).collect();
        let y = vec![100.0; 50];
        let f = growth_fit(&t, &y).unwrap();
        assert!(f.degenerate, "{f:?}");
        assert_relative_eq!(f.n_c, 100.0, max_relative = 1e-6);
    }

    #[test]
    fn classical_time_of_hot_box() {
        // All particles on the |m|^2 = 4 shell: <sqrt e> = 2.
        let t = classical_collision_time(Geometry::Box, &[0, 4], &[0.0, 10.0]);
        assert_relative_eq!(t, 2.0 / (10.0 * 2.0));
    }

    #[test]
    fn grand_canonical_profile_is_at_distance_zero() {
        let sol = solve_at_temperature(Geometry::Box, 100.0, 8.0).unwrap();
        assert!(equilibrium_distance(&sol.level_particles(), &sol) < 1e-15);
        let mut cold = vec![0.0; sol.levels.len()];
        cold[0] = 100.0;
        assert!(!is_equilibrated(&cold, &sol, EQUILIBRIUM_THRESHOLD));
    }

    #[test]
    fn distortion_preserves_conserved_quantities() {
        let sites = SiteSpace::new(PhysicsMode::BoxNonErgodic, 6).unwrap();
        let at = |m: IVec3| sites.site_of_vector(m).unwrap();
        let occ = [
            (0, 20),
            (at([1, 0, 0]), 3),
            (at([-1, 0, 0]), 1),
            (at([0, 1, 0]), 2),
            (at([0, -1, 0]), 2),
            (at([0, 0, 1]), 1),
            (at([0, 0, -1]), 1),
            (at([1, 1, 0]), 2),
        ];
        let state = OccupationState::from_occupations(&sites, &occ).unwrap();
        let (next, pair, rest) = distort_first_shell(&sites, &state).unwrap().unwrap();
        assert_eq!(
            (next.n(), next.e(), next.p()),
            (state.n(), state.e(), state.p())
        );
        assert_eq!(next.occ(pair[0]) + next.occ(pair[1]), 10);
        assert!(rest.iter().all(|&x| next.occ(x) == 0));
        next.check_invariants(&sites).unwrap();

        let skew =
            OccupationState::from_occupations(&sites, &[(at([1, 0, 0]), 1), (at([0, 1, 0]), 1)])
                .unwrap();
        assert!(distort_first_shell(&sites, &skew).unwrap().is_none());
    }

    #[test]
    fn probe_rejects_ergodic_modes() {
        let sites = SiteSpace::new(PhysicsMode::BoxErgodic, 6).unwrap();
        let state = OccupationState::from_occupations(&sites, &[(0, 3)]).unwrap();
        assert!(matches!(
            distort_first_shell(&sites, &state),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn windowed_times_use_event_counts() {
        let s = |t: f64, events: u64| Sample {
            t,
            n: 10,
            e: 0,
            n0: 0,
            events,
            blocks: vec![],
            tracked: vec![],
        };
        let w = windowed_collision_times(&[s(0.0, 0), s(1.0, 10), s(2.0, 10), s(3.0, 30)], 1);
        assert_eq!(w, vec![(0.5, 0.5), (2.5, 0.25)]);
    }
}
