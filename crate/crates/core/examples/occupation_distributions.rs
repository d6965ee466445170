//! Sampled occupation distributions of the ground state and one first-shell
//! momentum state, against the geometric law of the same mean.

use qbme::experiments::{site_distributions, EquilibriumRun};
use qbme::state::PhysicsMode;

fn main() -> qbme::Result<()> {
    let mut run = EquilibriumRun::new(PhysicsMode::BoxNonErgodic, 100, 1.0, 1);
    run.warmup = 20.0;
    run.measure = 300.0;
    run.samples_per_tcoll = 4.0;
    run.track = vec![[1, 0, 0]];
    for d in site_distributions(&run)? {
        let p = d.test.as_ref().map_or(f64::NAN, |t| t.p_value);
        println!(
            "{}: mean {:.2}, variance {:.2}, geometric fit p = {p:.3}",
            d.label,
            d.histogram.mean(),
            d.histogram.variance()
        );
        let probs = d.histogram.probabilities();
        for (k, (p, g)) in probs.iter().zip(&d.geometric).take(8).enumerate() {
            println!("  k = {k}  sampled {p:.4}  geometric {g:.4}");
        }
    }
    Ok(())
}
