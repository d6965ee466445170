//! Condensate number fluctuations from the exact level sum, for the box
//! with N = 500 at low temperature.

use std::time::Instant;

use qbme::catalog::{Geometry, LevelSpectrum};
use qbme::equilibrium::{critical_temperature, solve_at_temperature};
use qbme::fluctuation::{fluctuation_sum, truncated_constraints, FluctuationSpec, DEFAULT_LEVELS};

fn main() -> qbme::Result<()> {
    let n = 500.0;
    let tc = critical_temperature(Geometry::Box, n);
    let spectrum = LevelSpectrum::box_levels(64);
    println!("T/Tc  N17  E17  <N0>  sigma(N0)  seconds");
    for t_rel in [0.1, 0.2, 0.3, 0.4, 0.5] {
        let sol = solve_at_temperature(Geometry::Box, n, t_rel * tc)?;
        let (n17, e17) = truncated_constraints(&sol, DEFAULT_LEVELS);
        let start = Instant::now();
        let r = fluctuation_sum(&spectrum, &FluctuationSpec::new(n17, e17))?;
        println!(
            "{t_rel:.2}  {n17}  {e17}  {:.2}  {:.3}  {:.2}",
            r.mean,
            r.sigma,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
