//! Lists the lowest energy blocks of both geometries and the box modes of
//! the first shell.

use qbme::state::{PhysicsMode, SiteSpace};

fn main() -> qbme::Result<()> {
    for mode in [PhysicsMode::BoxNonErgodic, PhysicsMode::OscErgodic] {
        let sites = SiteSpace::new(mode, 12)?;
        println!(
            "{}: {} sites up to e = {}",
            mode.name(),
            sites.len(),
            sites.e_max()
        );
        println!("  block  energy  degeneracy");
        for b in 0..sites.block_count() {
            println!(
                "  {b:5}  {:6}  {:10}",
                sites.block_energy(b),
                sites.block_degeneracy(b)
            );
        }
    }
    let sites = SiteSpace::new(PhysicsMode::BoxNonErgodic, 1)?;
    let first: Vec<_> = (0..sites.len())
        .filter(|&x| sites.energy(x) == 1)
        .map(|x| sites.quantum(x))
        .collect();
    println!("box first shell: {first:?}");
    Ok(())
}
