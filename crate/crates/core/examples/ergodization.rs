//! Relaxation of a distorted first momentum shell in the non-ergodic box.

use qbme::observables::{ergodization_probe, ErgodizationConfig};

fn main() -> qbme::Result<()> {
    let cfg = ErgodizationConfig::new(100, 0.5, 20, 1);
    let r = ergodization_probe(&cfg)?;
    println!("equilibrium t_coll {:.3e}", r.t_coll);
    println!("t/t_coll  filled  depleted  p");
    for p in r.points.iter().step_by(2) {
        println!(
            "{:8.1}  {:6.2}  {:8.2}  {:.3}",
            p.t, p.filled_mean, p.depleted_mean, p.p_value
        );
    }
    match r.relaxation {
        Some(t) => println!("relaxed after {t:.1} collision times"),
        None => println!("not relaxed within the window"),
    }
    Ok(())
}
