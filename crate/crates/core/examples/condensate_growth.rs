//! Condensate growth in the box from a state with an empty ground level,
//! with a saturating-exponential fit.

use qbme::experiments::{run_growth, GrowthRun};
use qbme::state::PhysicsMode;

fn main() -> qbme::Result<()> {
    let run = GrowthRun {
        mode: PhysicsMode::BoxNonErgodic,
        n: 500,
        t_rel: 0.5,
        seed: 1,
        duration: 20.0,
        samples: 400,
    };
    let out = run_growth(&run)?;
    for k in (0..out.t.len()).step_by(out.t.len() / 20) {
        println!("t = {:.3e}  N0 = {:.0}", out.t[k], out.n0[k]);
    }
    let f = out.fit;
    println!(
        "fit: N_c = {:.1}, tau = {:.2e}, R2 = {:.3}",
        f.n_c, f.tau, f.r2
    );
    println!("equilibrium N0 = {:.1}", out.equilibrium_n0);
    Ok(())
}
