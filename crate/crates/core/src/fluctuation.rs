//! Exact occupation distribution of one level under fixed `N` and `E`,
//! weighting each block configuration by its number of microstates.
//!
//! The sum runs over the lowest levels of a spectrum only. With `B_l`
//! particles in level `l` of degeneracy `g_l`, a configuration carries
//! `prod_l C(B_l + g_l - 1, B_l)` microstates. The weights are accumulated
//! as big integers through the generating function
//! `prod_l (1 - x y^{e_l})^{-g_l}`, truncated at `x^N y^E`.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::catalog::LevelSpectrum;
use crate::equilibrium::EquilibriumSolution;
use crate::error::{Error, Result};

/// Number of levels used by default.
pub const DEFAULT_LEVELS: usize = 17;

/// Default work budget in big-integer additions.
pub const DEFAULT_BUDGET: u64 = 2_000_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationSpec {
    /// Number of lowest levels included.
    pub levels: usize,
    /// Index of the level whose distribution is returned.
    pub target: usize,
    pub n: u64,
    pub e: u64,
    /// Upper bound on big-integer additions.
    pub budget: u64,
}

impl FluctuationSpec {
    pub fn new(n: u64, e: u64) -> Self {
        FluctuationSpec {
            levels: DEFAULT_LEVELS,
            target: 0,
            n,
            e,
            budget: DEFAULT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluctuationResult {
    pub levels: Vec<(u64, u64)>,
    pub target: usize,
    pub n: u64,
    pub e: u64,
    /// `W(j)` for `j = 0..=N`.
    pub distribution: Vec<f64>,
    pub mean: f64,
    pub sigma: f64,
    /// Total number of microstates, in decimal.
    pub microstates: String,
}

/// Particle number and energy carried by the lowest `levels` levels of a
/// grand-canonical solution, rounded to integers.
pub fn truncated_constraints(sol: &EquilibriumSolution, levels: usize) -> (u64, u64) {
    let parts = sol.level_particles();
    let k = levels.min(parts.len());
    let n: f64 = parts[..k].iter().sum();
    let e: f64 = parts[..k]
        .iter()
        .zip(&sol.levels)
        .map(|(p, &(e, _))| p * e as f64)
        .sum();
    (n.round() as u64, e.round() as u64)
}

/// `a / b` for big integers with `a <= b`, to double precision.
fn big_ratio(a: &BigUint, b: &BigUint) -> f64 {
    let shift = b.bits().saturating_sub(64);
    let num = (a >> shift).to_f64().unwrap_or(f64::NAN);
    let den = (b >> shift).to_f64().unwrap_or(f64::NAN);
    num / den
}

fn binomial_multiset(b: u64, g: u64) -> BigUint {
    // C(b + g - 1, b)
    let mut r = BigUint::one();
    for k in 1..=b {
        r = r * BigUint::from(g - 1 + k) / BigUint::from(k);
    }
    r
}

/// Microstate-weighted distribution of the occupation of level
/// `spec.target` among the lowest `spec.levels` levels.
pub fn fluctuation_sum(
    spectrum: &LevelSpectrum,
    spec: &FluctuationSpec,
) -> Result<FluctuationResult> {
    if spec.levels == 0 || spec.levels > spectrum.levels.len() {
        return Err(Error::Domain(format!(
            "{} levels requested, spectrum has {}",
            spec.levels,
            spectrum.levels.len()
        )));
    }
    if spec.target >= spec.levels {
        return Err(Error::Domain(format!(
            "target level {} outside the {} included levels",
            spec.target, spec.levels
        )));
    }
    let levels = &spectrum.levels[..spec.levels];
    let (nmax, emax) = (spec.n as usize, spec.e as usize);
    let width = emax + 1;
    let work: u64 = levels
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != spec.target)
        .map(|(_, &(_, g))| g)
        .sum::<u64>()
        .saturating_mul(((nmax + 1) * width) as u64);
    if work > spec.budget {
        return Err(Error::Budget(format!(
            "{work} additions exceed the budget of {}; include fewer levels",
            spec.budget
        )));
    }
    let mut grid = vec![BigUint::zero(); (nmax + 1) * width];
    grid[0] = BigUint::one();
    for (l, &(el, g)) in levels.iter().enumerate() {
        if l == spec.target {
            continue;
        }
        let el = el as usize;
        if el > emax {
            continue;
        }
        for _ in 0..g {
            for n in 1..=nmax {
                for e in el..=emax {
                    let to = n * width + e;
                    let from = (n - 1) * width + e - el;
                    let (lo, hi) = grid.split_at_mut(to);
                    if !lo[from].is_zero() {
                        hi[0] += &lo[from];
                    }
                }
            }
        }
    }
    let (et, gt) = levels[spec.target];
    let mut weights = vec![BigUint::zero(); nmax + 1];
    for (j, w) in weights.iter_mut().enumerate() {
        let ej = j as u64 * et;
        if ej > spec.e {
            break;
        }
        let rest = &grid[(nmax - j) * width + (spec.e - ej) as usize];
        if !rest.is_zero() {
            *w = binomial_multiset(j as u64, gt) * rest;
        }
    }
    let z: BigUint = weights.iter().sum();
    if z.is_zero() {
        return Err(Error::Domain(format!(
            "no configuration with N = {} and E = {} in the lowest {} levels",
            spec.n, spec.e, spec.levels
        )));
    }
    let distribution: Vec<f64> = weights.iter().map(|w| big_ratio(w, &z)).collect();
    let mean: f64 = distribution
        .iter()
        .enumerate()
        .map(|(j, p)| j as f64 * p)
        .sum();
    let var: f64 = distribution
        .iter()
        .enumerate()
        .map(|(j, p)| (j as f64 - mean).powi(2) * p)
        .sum();
    Ok(FluctuationResult {
        levels: levels.to_vec(),
        target: spec.target,
        n: spec.n,
        e: spec.e,
        distribution,
        mean,
        sigma: var.sqrt(),
        microstates: z.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Geometry;
    use approx::assert_relative_eq;

    fn spectrum(levels: Vec<(u64, u64)>) -> LevelSpectrum {
        LevelSpectrum {
            geometry: Geometry::Box,
            levels,
        }
    }

    fn spec(levels: usize, target: usize, n: u64, e: u64) -> FluctuationSpec {
        FluctuationSpec {
            levels,
            target,
            n,
            e,
            budget: DEFAULT_BUDGET,
        }
    }

    #[test]
    fn single_level() {
        let r = fluctuation_sum(&spectrum(vec![(0, 1)]), &spec(1, 0, 5, 0)).unwrap();
        assert_eq!(r.distribution[5], 1.0);
        assert_eq!(r.microstates, "1");
    }

    #[test]
    fn forced_configuration() {
        let r = fluctuation_sum(&spectrum(vec![(0, 1), (1, 1)]), &spec(2, 0, 2, 1)).unwrap();
        assert_eq!(r.distribution[1], 1.0);
        assert_eq!(r.sigma, 0.0);
    }

    /// Direct count over occupation vectors of non-degenerate levels.
    fn partitions(energies: &[u64], n: u64, e: u64, target: usize) -> Vec<u64> {
        fn rec(
            energies: &[u64],
            l: usize,
            n: u64,
            e: u64,
            occ: &mut Vec<u64>,
            out: &mut Vec<u64>,
            t: usize,
        ) {
            if l == energies.len() {
                if n == 0 && e == 0 {
                    out[occ[t] as usize] += 1;
                }
                return;
            }
            for b in 0..=n {
                if b * energies[l] > e {
                    break;
                }
                occ.push(b);
                rec(energies, l + 1, n - b, e - b * energies[l], occ, out, t);
                occ.pop();
            }
        }
        let mut out = vec![0; n as usize + 1];
        rec(energies, 0, n, e, &mut Vec::new(), &mut out, target);
        out
    }

    #[test]
    fn nondegenerate_levels_count_partitions() {
        let energies = [0u64, 1, 2, 3, 5, 8];
        let levels: Vec<_> = energies.iter().map(|&e| (e, 1)).collect();
        for (n, e, t) in [(6, 10, 0), (9, 14, 1), (5, 7, 2)] {
            let counts = partitions(&energies, n, e, t);
            let total: u64 = counts.iter().sum();
            let r = fluctuation_sum(&spectrum(levels.clone()), &spec(6, t, n, e)).unwrap();
            assert_eq!(r.microstates, total.to_string());
            for (j, &c) in counts.iter().enumerate() {
                assert_relative_eq!(
                    r.distribution[j],
                    c as f64 / total as f64,
                    max_relative = 1e-14
                );
            }
        }
    }

    #[test]
    fn degeneracy_counts_microstates() {
        // Two particles, one level of energy 0 (g=1) and one of energy 1
        // (g=3), E=1: the excited particle sits in one of 3 states.
        // E=2: both excited, C(2+3-1, 2) = 6 microstates.
        let s = spectrum(vec![(0, 1), (1, 3)]);
        assert_eq!(
            fluctuation_sum(&s, &spec(2, 0, 2, 1)).unwrap().microstates,
            "3"
        );
        let r = fluctuation_sum(&s, &spec(2, 1, 2, 2)).unwrap();
        assert_eq!(r.microstates, "6");
        assert_eq!(r.distribution[2], 1.0);
    }

    #[test]
    fn normalized() {
        let s = LevelSpectrum::box_levels(40);
        let r = fluctuation_sum(&s, &spec(17, 0, 60, 90)).unwrap();
        let total: f64 = r.distribution.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(r.sigma > 0.0);
    }

    #[test]
    fn budget_is_enforced() {
        let s = LevelSpectrum::box_levels(40);
        let mut sp = spec(17, 0, 500, 2000);
        sp.budget = 1000;
        assert!(matches!(fluctuation_sum(&s, &sp), Err(Error::Budget(_))));
        assert!(matches!(
            fluctuation_sum(&s, &spec(17, 17, 5, 5)),
            Err(Error::Domain(_))
        ));
    }
}
