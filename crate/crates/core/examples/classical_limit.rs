//! Classical Boltzmann collision integral: zero on an exponential
//! distribution, and relaxing a two-temperature mixture.

use qbme::catalog::Geometry;
use qbme::classical::{
    classical_boltzmann_rhs, osc_degeneracy_ratio, rhs_moments, EnergyGrid, OSC_ZERO_POINT,
};

fn main() -> qbme::Result<()> {
    let grid = EnergyGrid::new(0.5, 60)?;
    for geometry in [Geometry::Box, Geometry::Oscillator] {
        let eq: Vec<f64> = grid.energies().iter().map(|e| (-e / 2.0).exp()).collect();
        let rhs = classical_boltzmann_rhs(geometry, &grid, &eq)?;
        let worst = rhs.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        println!(
            "{}: |rhs| on exp(-e/2) at most {worst:.1e}",
            geometry.name()
        );

        let mix: Vec<f64> = grid
            .energies()
            .iter()
            .map(|e| (-e / 1.0).exp() + 0.2 * (-e / 6.0).exp())
            .collect();
        let rhs = classical_boltzmann_rhs(geometry, &grid, &mix)?;
        let (dn, de) = rhs_moments(&grid, &rhs);
        println!("  mixture: dN/dt {dn:.1e}, dE/dt {de:.1e}");
        for k in (0..grid.len).step_by(10) {
            println!("  e = {:5.2}  df/dt = {:+.3e}", grid.energy(k), rhs[k]);
        }
    }
    println!(
        "oscillator g/rho at j = 50: {:.4} shifted, {:.4} unshifted",
        osc_degeneracy_ratio(50, OSC_ZERO_POINT),
        osc_degeneracy_ratio(50, 0.0)
    );
    Ok(())
}
