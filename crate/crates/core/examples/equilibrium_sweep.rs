//! Condensate fraction of N = 100 particles in the non-ergodic box against
//! temperature, next to the grand-canonical and thermodynamic curves.

use qbme::experiments::{temperature_sweep, EquilibriumRun};
use qbme::state::PhysicsMode;

fn main() -> qbme::Result<()> {
    let mut base = EquilibriumRun::new(PhysicsMode::BoxNonErgodic, 100, 0.5, 1);
    base.warmup = 20.0;
    base.measure = 100.0;
    let temps = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2];
    println!("T/Tc   sim    grand-can  thermo  t_coll     events");
    for p in temperature_sweep(&base, &temps)? {
        println!(
            "{:.2}  {:.3}  {:.3}      {:.3}   {:.3e}  {}",
            p.t_rel, p.fraction, p.fraction_gc, p.fraction_thermo, p.t_coll, p.events
        );
    }
    Ok(())
}
