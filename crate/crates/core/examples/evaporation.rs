//! Evaporative cooling of 800 oscillator atoms at three ramp rates.

use qbme::experiments::{evaporation_sweep, EvaporationRun};

fn main() -> qbme::Result<()> {
    let base = EvaporationRun::new(0.5, 1);
    println!("gamma  lost  final N0  t90     min t_coll / initial");
    for o in evaporation_sweep(&base, &[0.1, 0.5, 1.5], 4)? {
        let ratio = match (o.min_t_coll(), o.initial_t_coll()) {
            (Some((_, m)), Some(i)) => m / i,
            _ => f64::NAN,
        };
        let t90 = o.t90.map_or("-".to_string(), |t| format!("{t:.1}"));
        println!(
            "{:5.2}  {:4}  {:8.1}  {t90:6}  {ratio:.2}",
            o.gamma, o.lost, o.final_n0
        );
    }
    Ok(())
}
