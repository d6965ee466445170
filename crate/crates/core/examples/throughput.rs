//! Measures event throughput of the engine for each physics mode.

use std::time::Instant;

use qbme::engine::trajectory::build_engine;
use qbme::engine::TrajectoryConfig;
use qbme::equilibrium::target_energy;
use qbme::state::{InitSpec, PhysicsMode};

fn main() -> qbme::Result<()> {
    let cases = [
        (PhysicsMode::BoxNonErgodic, 500, 0.5),
        (PhysicsMode::BoxNonErgodic, 500, 1.0),
        (PhysicsMode::BoxNonErgodic, 500, 1.7),
        (PhysicsMode::BoxErgodic, 500, 0.5),
        (PhysicsMode::BoxErgodic, 500, 1.7),
        (PhysicsMode::OscErgodic, 500, 0.5),
        (PhysicsMode::OscErgodic, 800, 1.4),
    ];
    let events: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200_000);
    let only = std::env::args().nth(2);
    for (mode, n, t_rel) in cases {
        if only
            .as_deref()
            .is_some_and(|o| o != format!("{}@{t_rel}", mode.name()))
        {
            continue;
        }
        let e = target_energy(mode.geometry(), n, t_rel)?;
        let init = InitSpec::GaussianLike {
            n,
            e,
            avoid_ground: true,
        };
        let cfg = TrajectoryConfig::new(mode, init, 1, f64::INFINITY);
        let start = Instant::now();
        let mut engine = build_engine(&cfg)?;
        let built = start.elapsed();
        let start = Instant::now();
        for _ in 0..events {
            if engine.step()?.is_none() {
                break;
            }
        }
        let secs = start.elapsed().as_secs_f64();
        println!(
            "{:<16} N={n:<4} T/Tc={t_rel:<4} setup {:>7.3}s  {:>9.0} events/s  classes {:>7}  t={:.4}  n0={}",
            mode.name(),
            built.as_secs_f64(),
            engine.events() as f64 / secs,
            engine.rates().class_count(),
            engine.time(),
            engine.state().block_occ(0),
        );
    }
    Ok(())
}
