//! Semiclassical limit: densities of states, the continuum collision
//! kernel proportional to `rho(e_min)`, and the classical Boltzmann
//! collision integral on an energy grid.
//!
//! Energies are in the catalog quanta. For the box, `rho(e) = 2 pi sqrt(e)`
//! counts lattice vectors per unit of `|m|^2`. For the oscillator,
//! `rho(e) = e^2 / 2` with `e` measured from the bottom of the potential,
//! so level `j` sits at `e = j + 3/2`.

use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::catalog::{osc_degeneracy, Geometry};
use crate::error::{Error, Result};
use crate::kernel::box_tuple_count;
use crate::state::SiteSpace;

/// Zero-point energy of the isotropic oscillator in units of `hbar omega`.
pub const OSC_ZERO_POINT: f64 = 1.5;

/// Continuum density of states.
pub fn density_of_states(geometry: Geometry, e: f64) -> f64 {
    if e <= 0.0 {
        return 0.0;
    }
    match geometry {
        Geometry::Box => 2.0 * PI * e.sqrt(),
        Geometry::Oscillator => 0.5 * e * e,
    }
}

/// Coarse-grained degeneracy `g(e) = de rho(e)`.
pub fn coarse_degeneracy(geometry: Geometry, e: f64, de: f64) -> f64 {
    de * density_of_states(geometry, e)
}

/// Physical energy of oscillator level `j`, counted from the potential
/// minimum.
pub fn osc_level_energy(j: u64) -> f64 {
    j as f64 + OSC_ZERO_POINT
}

/// `g(j) / rho(e)` for oscillator level `j`, with `rho` evaluated at
/// `e = j + shift`.
pub fn osc_degeneracy_ratio(j: u64, shift: f64) -> f64 {
    osc_degeneracy(j) as f64 / density_of_states(Geometry::Oscillator, j as f64 + shift)
}

/// Lattice vectors with `e_lo <= |m|^2 < e_hi` divided by the continuum
/// count `int rho de` over the same window.
pub fn box_window_ratio(sites: &mut SiteSpace, e_lo: u64, e_hi: u64) -> f64 {
    let count: usize = (e_lo..e_hi).map(|n| sites.sphere(n).len()).sum();
    // int_a^b 2 pi sqrt(e) de, with the unit shell at n spanning [n, n+1)
    let cont = 4.0 * PI / 3.0 * ((e_hi as f64).powf(1.5) - (e_lo as f64).powf(1.5));
    count as f64 / cont
}

/// Discrete ergodic structural factor of a block tuple against its
/// continuum counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateCheck {
    pub energies: [u64; 4],
    /// Structural rate per microstate quadruple in the discrete model.
    pub discrete: f64,
    /// Same quantity from the `rho(e_min)` kernel.
    pub continuum: f64,
    pub ratio: f64,
}

/// Compares the discrete kernel of the ergodic modes with the continuum
/// `rho(e_min)` law for the conserving tuple `e1 + e2 -> e3 + e4`.
///
/// For the box, the ordered lattice tuple count `T` is compared with its
/// continuum value, both divided by the product of the four shell sizes.
/// The continuum count is `2 pi^3 sqrt(e_min)` per unit of each energy;
/// since `|m1 + m2 - m3|^2` has the parity of `e1 + e2 + e3`, lattice tuples
/// land on every second norm only and the lattice value is twice that.
/// Single tuples scatter widely around the law because shell sizes follow
/// the arithmetic of sums of three squares; see [`box_kernel_window`]. For
/// the oscillator the discrete kernel is the `g_min` form itself and the
/// ratio is exactly one.
pub fn semiclassical_rate_check(
    geometry: Geometry,
    sites: &mut SiteSpace,
    e: [u64; 4],
) -> Result<RateCheck> {
    if e[0] + e[1] != e[2] + e[3] {
        return Err(Error::Domain(format!(
            "tuple {e:?} does not conserve energy"
        )));
    }
    let e_min = *e.iter().min().unwrap();
    let (discrete, continuum) = match geometry {
        Geometry::Box => {
            let g: Vec<f64> = e.iter().map(|&n| sites.sphere(n).len() as f64).collect();
            if g.contains(&0.0) {
                return Err(Error::Domain(format!("tuple {e:?} touches an empty shell")));
            }
            let t = box_tuple_count(sites, e) as f64;
            let rho: f64 = e
                .iter()
                .map(|&n| density_of_states(Geometry::Box, n as f64))
                .product();
            (
                t / g.iter().product::<f64>(),
                box_tuple_continuum(e_min) / rho,
            )
        }
        Geometry::Oscillator => {
            let k = 0.25 * osc_degeneracy(e_min) as f64;
            (k, k)
        }
    };
    Ok(RateCheck {
        energies: e,
        discrete,
        continuum,
        ratio: discrete / continuum,
    })
}

/// Lattice-corrected continuum tuple count at minimum energy `e_min`.
fn box_tuple_continuum(e_min: u64) -> f64 {
    4.0 * PI.powi(3) * (e_min as f64).sqrt()
}

/// Box kernel pooled over all conserving tuples with every energy in
/// `[e_lo, e_lo + width)`, excluding the identity tuples `{e3, e4} = {e1, e2}`.
/// `discrete` is the summed lattice tuple count and `continuum` the summed
/// prediction for the same shells, each tuple's prediction scaled by its
/// shell sizes over the continuum densities.
pub fn box_kernel_window(sites: &mut SiteSpace, e_lo: u64, width: u64) -> Result<RateCheck> {
    let hi = e_lo + width;
    let mut discrete = 0.0;
    let mut continuum = 0.0;
    for e1 in e_lo..hi {
        for e2 in e1..hi {
            for e3 in e_lo..hi {
                let Some(e4) = (e1 + e2).checked_sub(e3) else {
                    continue;
                };
                if e4 < e_lo || e4 >= hi || e3 == e1 || e3 == e2 {
                    continue;
                }
                let e = [e1, e2, e3, e4];
                let g: f64 = e.iter().map(|&n| sites.sphere(n).len() as f64).product();
                if g == 0.0 {
                    continue;
                }
                let rho: f64 = e
                    .iter()
                    .map(|&n| density_of_states(Geometry::Box, n as f64))
                    .product();
                discrete += box_tuple_count(sites, e) as f64;
                continuum += box_tuple_continuum(e1.min(e2).min(e3).min(e4)) * g / rho;
            }
        }
    }
    if continuum == 0.0 {
        return Err(Error::Domain(format!(
            "no conserving tuples in [{e_lo}, {hi})"
        )));
    }
    Ok(RateCheck {
        energies: [e_lo, hi, e_lo, hi],
        discrete,
        continuum,
        ratio: discrete / continuum,
    })
}

/// Uniform energy grid `e_k = offset + k de`, `k = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyGrid {
    pub de: f64,
    pub len: usize,
    pub offset: f64,
}

impl EnergyGrid {
    pub fn new(de: f64, len: usize) -> Result<Self> {
        if !(de > 0.0) || len < 2 {
            return Err(Error::Domain(format!("energy grid de = {de}, len = {len}")));
        }
        Ok(EnergyGrid {
            de,
            len,
            offset: 0.0,
        })
    }

    pub fn energy(&self, k: usize) -> f64 {
        self.offset + k as f64 * self.de
    }

    /// Trapezoid weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.len {
            0.5 * self.de
        } else {
            self.de
        }
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.energy(k)).collect()
    }
}

/// Classical collision integral
/// `rho(e1) df1/dt = int de2 de3 de4 delta(e1 + e2 - e3 - e4) rho(e_min) (f3 f4 - f1 f2)`
/// with the Bose factors dropped and an overall constant of one.
///
/// The delta function removes the `e4` integral exactly; the remaining
/// double integral uses trapezoid weights on `e2`, `e3` and on the implied
/// `e4`, which keeps the discrete sum symmetric under `12 <-> 34` so that
/// particle number and energy are conserved to rounding.
pub fn classical_boltzmann_rhs(
    geometry: Geometry,
    grid: &EnergyGrid,
    f: &[f64],
) -> Result<Vec<f64>> {
    if f.len() != grid.len {
        return Err(Error::Domain(format!(
            "{} samples on a grid of {}",
            f.len(),
            grid.len
        )));
    }
    if f.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("distribution must be nonnegative".into()));
    }
    let rho: Vec<f64> = (0..grid.len)
        .map(|k| density_of_states(geometry, grid.energy(k)))
        .collect();
    let mut out = vec![0.0; grid.len];
    for (k1, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k2 in 0..grid.len {
            let loss = f[k1] * f[k2];
            for k3 in 0..grid.len {
                let Some(k4) = (k1 + k2).checked_sub(k3) else {
                    continue;
                };
                if k4 >= grid.len {
                    continue;
                }
                let kmin = k1.min(k2).min(k3).min(k4);
                let w = grid.weight(k2) * grid.weight(k3) * grid.weight(k4) / grid.de;
                acc += w * rho[kmin] * (f[k3] * f[k4] - loss);
            }
        }
        *o = acc;
    }
    Ok(out)
}

/// Rates of change of particle number and energy implied by a collision
/// integral: `sum w rhs` and `sum w e rhs`.
pub fn rhs_moments(grid: &EnergyGrid, rhs: &[f64]) -> (f64, f64) {
    let mut dn = 0.0;
    let mut de = 0.0;
    for (k, r) in rhs.iter().enumerate() {
        let w = grid.weight(k);
        dn += w * r;
        de += w * grid.energy(k) * r;
    }
    (dn, de)
}

/// Writes `e, rho, g, rhs` rows.
pub fn write_csv<W: Write>(
    mut w: W,
    geometry: Geometry,
    grid: &EnergyGrid,
    rhs: &[f64],
) -> Result<()> {
    writeln!(w, "e,rho,g,rhs")?;
    for (k, r) in rhs.iter().enumerate() {
        let e = grid.energy(k);
        writeln!(
            w,
            "{e:.6},{:.9e},{:.9e},{r:.9e}",
            density_of_states(geometry, e),
            coarse_degeneracy(geometry, e, grid.de)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::PhysicsMode;
    use approx::assert_relative_eq;

    #[test]
    fn oscillator_degeneracy_ratio() {
        assert_relative_eq!(osc_degeneracy_ratio(50, 0.0), 1.0608, epsilon = 1e-4);
        assert!((osc_degeneracy_ratio(50, OSC_ZERO_POINT) - 1.0).abs() < 1e-3);
        assert_eq!(density_of_states(Geometry::Oscillator, 0.0), 0.0);
    }

    #[test]
    fn box_windows_approach_continuum() {
        let mut sites = SiteSpace::new(PhysicsMode::BoxErgodic, 8).unwrap();
        let r = box_window_ratio(&mut sites, 400, 500);
        assert!((r - 1.0).abs() < 0.05, "{r}");
    }

    #[test]
    fn box_kernel_approaches_sqrt_law() {
        let mut sites = SiteSpace::new(PhysicsMode::BoxErgodic, 8).unwrap();
        for base in [100, 150] {
            let w = box_kernel_window(&mut sites, base, 12).unwrap();
            assert!((w.ratio - 1.0).abs() < 0.1, "{w:?}");
        }
        let worst_low = [
            [1, 3, 2, 2],
            [1, 5, 2, 4],
            [2, 4, 3, 3],
            [1, 4, 2, 3],
            [2, 6, 3, 5],
        ]
        .iter()
        .map(|&e| {
            semiclassical_rate_check(Geometry::Box, &mut sites, e)
                .unwrap()
                .ratio
        })
        .fold(0.0f64, |m, r| m.max((r - 1.0).abs()));
        assert!(worst_low > 0.3, "{worst_low}");
        let osc = semiclassical_rate_check(Geometry::Oscillator, &mut sites, [3, 5, 4, 4]).unwrap();
        assert_eq!(osc.ratio, 1.0);
        assert!(semiclassical_rate_check(Geometry::Box, &mut sites, [1, 1, 1, 2]).is_err());
    }

    #[test]
    fn collision_integral_vanishes_on_exponentials() {
        let grid = EnergyGrid::new(0.5, 60).unwrap();
        for geometry in [Geometry::Box, Geometry::Oscillator] {
            for t in [0.5, 2.0, 8.0] {
                let f: Vec<f64> = grid
                    .energies()
                    .iter()
                    .map(|e| 0.3 * (-e / t).exp())
                    .collect();
                let rhs = classical_boltzmann_rhs(geometry, &grid, &f).unwrap();
                let scale: f64 = f.iter().map(|v| v * v).sum::<f64>() * grid.len as f64;
                assert!(rhs.iter().all(|r| r.abs() < 1e-13 * scale));
            }
            let zero = classical_boltzmann_rhs(geometry, &grid, &vec![0.0; 60]).unwrap();
            assert!(zero.iter().all(|&r| r == 0.0));
        }
    }

    #[test]
    fn collision_integral_conserves_number_and_energy() {
        let grid = EnergyGrid::new(1.0, 40).unwrap();
        let f: Vec<f64> = (0..40)
            .map(|k| if (10..14).contains(&k) { 1.0 } else { 0.01 })
            .collect();
        let rhs = classical_boltzmann_rhs(Geometry::Box, &grid, &f).unwrap();
        let (dn, de) = rhs_moments(&grid, &rhs);
        let scale: f64 = rhs.iter().map(|r| r.abs()).sum();
        assert!(scale > 0.0);
        assert!(dn.abs() < 1e-12 * scale && de.abs() < 1e-11 * scale * 40.0);
        assert!(rhs[11] < 0.0, "a peak must spread out");
    }
}
