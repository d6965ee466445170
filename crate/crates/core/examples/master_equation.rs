//! Exact master equation of a tiny oscillator system against a long
//! stochastic run: both should be uniform over microstates.

use qbme::master::{exact_master_equation, total_variation, DEFAULT_STATE_BOUND};
use qbme::state::PhysicsMode;

fn main() -> qbme::Result<()> {
    let me = exact_master_equation(
        PhysicsMode::OscErgodic,
        &[(0, 3), (3, 3)],
        DEFAULT_STATE_BOUND,
    )?;
    println!("{} reachable configurations", me.len());
    println!("column sum error {:.1e}", me.column_sum_error());
    println!("uniformity error {:.1e}", me.uniformity_error());
    println!("detailed balance error {:.1e}", me.detailed_balance_error());
    let occ = me.simulate_occupancy(1, 500_000)?;
    let micro = me.microcanonical();
    println!("config  multiplicity  exact    simulated");
    for i in 0..me.len().min(12) {
        println!(
            "{i:6}  {:12}  {:.5}  {:.5}",
            me.multiplicity[i], micro[i], occ[i]
        );
    }
    println!("total variation {:.4}", total_variation(&occ, &micro));
    Ok(())
}
