//! Grand-canonical reference solutions and related closed forms.

use serde::Serialize;

use crate::catalog::{Geometry, LevelSpectrum};
use crate::error::{Error, Result};
use crate::state::InitSpec;

/// Riemann zeta at 3/2 and 3.
pub const ZETA_3_2: f64 = 2.612_375_348_685_488;
pub const ZETA_3: f64 = 1.202_056_903_159_594_2;

/// Levels above `mu + CUTOFF_KT * T` contribute less than `exp(-CUTOFF_KT)`
/// per state and are left out of the sums.
const CUTOFF_KT: f64 = 48.0;

/// Thermodynamic-limit critical temperature in catalog energy units.
pub fn critical_temperature(geometry: Geometry, n: f64) -> f64 {
    match geometry {
        Geometry::Box => (n / ZETA_3_2).powf(2.0 / 3.0) / std::f64::consts::PI,
        Geometry::Oscillator => (n / ZETA_3).cbrt(),
    }
}

/// Thermodynamic-limit condensate fraction at `t = T / T_c`.
pub fn thermodynamic_condensate_fraction(geometry: Geometry, t: f64) -> f64 {
    if t >= 1.0 {
        return 0.0;
    }
    match geometry {
        Geometry::Box => 1.0 - t.powf(1.5),
        Geometry::Oscillator => 1.0 - t.powi(3),
    }
}

/// Bose-Einstein mean occupation of one state.
#[inline]
pub fn bose_occupation(e: f64, mu: f64, t: f64) -> f64 {
    1.0 / ((e - mu) / t).exp_m1()
}

/// Solution of the grand-canonical equations for given `N` and `E`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSolution {
    pub geometry: Geometry,
    pub mu: f64,
    pub temperature: f64,
    /// `(energy, degeneracy)` of the levels carried in the sums.
    pub levels: Vec<(u64, u64)>,
    /// Mean occupation per state of each level.
    pub occupation: Vec<f64>,
    pub n: f64,
    pub e: f64,
}

impl EquilibriumSolution {
    /// Mean particle number in each level.
    pub fn level_particles(&self) -> Vec<f64> {
        self.levels
            .iter()
            .zip(&self.occupation)
            .map(|(&(_, g), &n)| g as f64 * n)
            .collect()
    }

    pub fn ground_occupation(&self) -> f64 {
        self.occupation.first().copied().unwrap_or(0.0)
    }

    pub fn condensate_fraction(&self) -> f64 {
        self.ground_occupation() / self.n
    }

    /// Mean of `f(e)` over particles: `N^-1 sum_i f(e_i) <n_i>`.
    pub fn particle_mean(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.level_particles()
            .iter()
            .zip(&self.levels)
            .map(|(p, &(e, _))| p * f(e as f64))
            .sum::<f64>()
            / self.n
    }
}

/// Spectrum large enough for temperatures up to `t_max`.
fn spectrum_for(geometry: Geometry, t_max: f64) -> LevelSpectrum {
    let e_cap = (CUTOFF_KT * t_max).ceil() as u64 + 8;
    LevelSpectrum::for_geometry(geometry, e_cap)
}

fn sums(levels: &[(u64, u64)], mu: f64, t: f64) -> (f64, f64) {
    let mut n = 0.0;
    let mut e = 0.0;
    for &(el, g) in levels {
        let x = (el as f64 - mu) / t;
        if x > CUTOFF_KT {
            break;
        }
        let occ = g as f64 / x.exp_m1();
        n += occ;
        e += occ * el as f64;
    }
    (n, e)
}

/// Chemical potential giving mean particle number `n` at temperature `t`.
/// Returns `(mu, E)`.
pub fn chemical_potential(levels: &[(u64, u64)], n: f64, t: f64) -> Result<(f64, f64)> {
    let e0 = levels[0].0 as f64;
    // mu = e0 - x with x > 0; N decreases monotonically in x.
    let mut lo = t * (1.0 / n).ln_1p() * 0.5;
    let mut hi = t.max(1.0);
    let mut guard = 0;
    while sums(levels, e0 - hi, t).0 > n {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::NonConvergence {
                message: "cannot bracket chemical potential".into(),
                mu: e0 - hi,
                temperature: t,
            });
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if sums(levels, e0 - mid, t).0 > n {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    let x = (lo * hi).sqrt();
    let (_, e) = sums(levels, e0 - x, t);
    Ok((e0 - x, e))
}

/// Mean energy of `n` particles at temperature `t` in the grand-canonical
/// ensemble.
pub fn energy_at_temperature(geometry: Geometry, n: f64, t: f64) -> Result<f64> {
    let spec = spectrum_for(geometry, t);
    Ok(chemical_potential(&spec.levels, n, t)?.1)
}

/// Solves for `(mu, T)` from `N` and `E` by nested bisection.
pub fn solve_grand_canonical(geometry: Geometry, n: f64, e: f64) -> Result<EquilibriumSolution> {
    if !(n >= 1.0) {
        return Err(Error::Domain(format!("N must be at least 1, got {n}")));
    }
    if !(e >= 0.0) {
        return Err(Error::Domain(format!("E must be nonnegative, got {e}")));
    }
    if e == 0.0 {
        let levels = vec![(0, 1)];
        return Ok(EquilibriumSolution {
            geometry,
            mu: f64::NEG_INFINITY,
            temperature: 0.0,
            levels,
            occupation: vec![n],
            n,
            e: 0.0,
        });
    }
    let tc = critical_temperature(geometry, n);
    let mut t_hi = tc.max(1.0);
    let spec_for = |t: f64| spectrum_for(geometry, t);
    let mut spec = spec_for(t_hi);
    let mut guard = 0;
    while chemical_potential(&spec.levels, n, t_hi)?.1 < e {
        t_hi *= 2.0;
        spec = spec_for(t_hi);
        guard += 1;
        if guard > 60 {
            return Err(Error::NonConvergence {
                message: "cannot bracket temperature".into(),
                mu: f64::NAN,
                temperature: t_hi,
            });
        }
    }
    let mut t_lo = t_hi * 1e-6;
    let mut mu = 0.0;
    for _ in 0..300 {
        let t = 0.5 * (t_lo + t_hi);
        let (m, et) = chemical_potential(&spec.levels, n, t)?;
        mu = m;
        if et < e {
            t_lo = t;
        } else {
            t_hi = t;
        }
        if (t_hi - t_lo) / t_hi < 1e-15 {
            break;
        }
    }
    let t = 0.5 * (t_lo + t_hi);
    let (m, _) = chemical_potential(&spec.levels, n, t)?;
    mu = if m.is_finite() { m } else { mu };
    let occupation: Vec<f64> = spec
        .levels
        .iter()
        .map(|&(el, _)| bose_occupation(el as f64, mu, t))
        .collect();
    let (n_sum, e_sum) = sums(&spec.levels, mu, t);
    if (n_sum - n).abs() / n > 1e-10 || (e_sum - e).abs() / e > 1e-10 {
        return Err(Error::NonConvergence {
            message: format!("residuals N {n_sum} vs {n}, E {e_sum} vs {e}"),
            mu,
            temperature: t,
        });
    }
    Ok(EquilibriumSolution {
        geometry,
        mu,
        temperature: t,
        levels: spec.levels,
        occupation,
        n: n_sum,
        e: e_sum,
    })
}

/// Grand-canonical state of `n` particles at temperature `t`.
pub fn solve_at_temperature(geometry: Geometry, n: f64, t: f64) -> Result<EquilibriumSolution> {
    let e = energy_at_temperature(geometry, n, t)?;
    solve_grand_canonical(geometry, n, e)
}

/// Integer energy closest to the grand-canonical mean at `T = t_rel T_c`.
pub fn target_energy(geometry: Geometry, n: u64, t_rel: f64) -> Result<u64> {
    let t = t_rel * critical_temperature(geometry, n as f64);
    Ok(energy_at_temperature(geometry, n as f64, t)?.round() as u64)
}

/// Initial condition drawing particles from the grand-canonical level
/// populations at `T = t_rel T_c`, with the matching integer energy.
pub fn thermal_init(geometry: Geometry, n: u64, t_rel: f64) -> Result<InitSpec> {
    let t = t_rel * critical_temperature(geometry, n as f64);
    let sol = solve_at_temperature(geometry, n as f64, t)?;
    let mut weights = sol.level_particles();
    // Levels holding less than 1e-4 of a particle only slow the sampler.
    while weights.len() > 1 && *weights.last().unwrap() < 1e-4 {
        weights.pop();
    }
    Ok(InitSpec::ThermalLike {
        n,
        e: sol.e.round() as u64,
        block_weights: weights,
    })
}

/// Geometric distribution `p(k) = (1 - eta) eta^k` with the given mean,
/// evaluated for `k = 0..len`.
pub fn bose_geometric_pmf(mean: f64, len: usize) -> Vec<f64> {
    let eta = mean / (1.0 + mean);
    (0..len).map(|k| (1.0 - eta) * eta.powi(k as i32)).collect()
}

/// Variance of the geometric distribution with the given mean.
pub fn bose_geometric_variance(mean: f64) -> f64 {
    mean * (mean + 1.0)
}
