//! One-particle state space: box momentum modes and oscillator shells.

use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{isqrt, norm2, shell_counts, IVec3, SphereTable};

/// Default bound on the number of one-particle modes a catalog may hold.
pub const DEFAULT_MODE_CAPACITY: u64 = 40_000_000;

/// Default bound on the number of oscillator shells. Oscillator modes are
/// never stored individually, so the shell count is what costs memory.
pub const DEFAULT_SHELL_CAPACITY: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Box,
    Oscillator,
}

impl Geometry {
    pub fn name(self) -> &'static str {
        match self {
            Geometry::Box => "box",
            Geometry::Oscillator => "oscillator",
        }
    }
}

/// Degeneracy of oscillator shell `j`.
#[inline]
pub fn osc_degeneracy(j: u64) -> u64 {
    (j + 1) * (j + 2) / 2
}

/// Number of oscillator states in shells `0..=j`.
#[inline]
pub fn osc_cumulative(j: u64) -> u64 {
    (j + 1) * (j + 2) * (j + 3) / 6
}

/// A single one-particle state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub index: usize,
    /// Box: momentum quantum numbers. Oscillator: `(n_x, n_y, n_z)`.
    pub quantum: IVec3,
    pub energy: u64,
    pub block: usize,
}

/// A set of degenerate modes sharing one energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnergyBlock {
    pub index: usize,
    pub energy: u64,
    pub first: usize,
    pub degeneracy: u64,
}

impl EnergyBlock {
    pub fn members(&self) -> Range<usize> {
        self.first..self.first + self.degeneracy as usize
    }
}

/// Energy quantum and time unit conventions for a geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitSystem {
    pub geometry: Geometry,
    pub energy_quantum: &'static str,
    pub time_unit: &'static str,
    /// Rate of a single unordered channel with unit occupation factors.
    pub rate_prefactor: f64,
}

impl UnitSystem {
    pub fn of(geometry: Geometry) -> Self {
        match geometry {
            Geometry::Box => UnitSystem {
                geometry,
                energy_quantum: "2 pi^2 hbar^2 / (m L^2)",
                time_unit: "(nbar sigma v1 2 / N)^-1",
                rate_prefactor: std::f64::consts::FRAC_1_PI,
            },
            Geometry::Oscillator => UnitSystem {
                geometry,
                energy_quantum: "hbar omega",
                time_unit: "(n0_h sigma v0 2 / N)^-1",
                rate_prefactor: 0.25,
            },
        }
    }
}

#[derive(Debug, Clone, Default)]
struct DenseLookup {
    radius: i32,
    data: Vec<u32>,
}

impl DenseLookup {
    fn build(radius: i32, modes: &[IVec3]) -> Self {
        let side = (2 * radius + 1) as usize;
        let mut data = vec![u32::MAX; side * side * side];
        for (i, m) in modes.iter().enumerate() {
            if let Some(k) = Self::slot(radius, *m) {
                data[k] = i as u32;
            }
        }
        DenseLookup { radius, data }
    }

    #[inline]
    fn slot(radius: i32, m: IVec3) -> Option<usize> {
        if m.iter().any(|c| c.abs() > radius) {
            return None;
        }
        let side = (2 * radius + 1) as usize;
        let [x, y, z] = m.map(|c| (c + radius) as usize);
        Some((x * side + y) * side + z)
    }

    #[inline]
    fn get(&self, m: IVec3) -> Option<usize> {
        let k = Self::slot(self.radius, m)?;
        let v = self.data[k];
        (v != u32::MAX).then_some(v as usize)
    }
}

/// Catalog of one-particle states, grouped into degenerate energy blocks.
///
/// Modes are ordered by energy, then lexicographically on their quantum
/// numbers. Extending the cutoff only appends, so existing indices stay valid.
#[derive(Debug, Clone)]
pub struct ModeCatalog {
    geometry: Geometry,
    e_max: u64,
    capacity: u64,
    blocks: Vec<EnergyBlock>,
    energy_block: Vec<u32>,
    box_modes: Vec<IVec3>,
    box_mode_block: Vec<u32>,
    lookup: DenseLookup,
}

pub fn build_box_catalog(e_max: u64) -> Result<ModeCatalog> {
    ModeCatalog::new_box(e_max, DEFAULT_MODE_CAPACITY)
}

pub fn build_osc_catalog(j_max: u64) -> Result<ModeCatalog> {
    ModeCatalog::new_osc(j_max, DEFAULT_SHELL_CAPACITY)
}

fn box_mode_estimate(e_max: u64) -> u64 {
    let r = (e_max as f64).sqrt() + 1.0;
    (4.0 / 3.0 * std::f64::consts::PI * r * r * r) as u64
}

impl ModeCatalog {
    pub fn new_box(e_max: u64, capacity: u64) -> Result<Self> {
        let mut cat = ModeCatalog {
            geometry: Geometry::Box,
            e_max: 0,
            capacity,
            blocks: Vec::new(),
            energy_block: Vec::new(),
            box_modes: Vec::new(),
            box_mode_block: Vec::new(),
            lookup: DenseLookup::default(),
        };
        cat.append_box_shells(0, e_max)?;
        Ok(cat)
    }

    /// `capacity` bounds the number of shells.
    pub fn new_osc(j_max: u64, capacity: u64) -> Result<Self> {
        let mut cat = ModeCatalog {
            geometry: Geometry::Oscillator,
            e_max: 0,
            capacity,
            blocks: Vec::new(),
            energy_block: Vec::new(),
            box_modes: Vec::new(),
            box_mode_block: Vec::new(),
            lookup: DenseLookup::default(),
        };
        cat.append_osc_shells(0, j_max)?;
        Ok(cat)
    }

    fn append_box_shells(&mut self, from: u64, to: u64) -> Result<()> {
        if box_mode_estimate(to) > self.capacity {
            return Err(Error::Capacity(format!(
                "box catalog up to e={to} needs about {} modes, bound is {}",
                box_mode_estimate(to),
                self.capacity
            )));
        }
        let table = SphereTable::new(to);
        for e in from..=to {
            let shell = table.shell(e);
            if shell.is_empty() {
                self.energy_block.push(u32::MAX);
                continue;
            }
            let index = self.blocks.len();
            self.energy_block.push(index as u32);
            self.blocks.push(EnergyBlock {
                index,
                energy: e,
                first: self.box_modes.len(),
                degeneracy: shell.len() as u64,
            });
            self.box_modes.extend_from_slice(shell);
            self.box_mode_block
                .extend(std::iter::repeat_n(index as u32, shell.len()));
        }
        self.e_max = to;
        self.lookup = DenseLookup::build(isqrt(to) as i32, &self.box_modes);
        Ok(())
    }

    fn append_osc_shells(&mut self, from: u64, to: u64) -> Result<()> {
        if to + 1 > self.capacity {
            return Err(Error::Capacity(format!(
                "oscillator catalog up to j={to} holds {} shells, bound is {}",
                to + 1,
                self.capacity
            )));
        }
        for j in from..=to {
            self.energy_block.push(j as u32);
            self.blocks.push(EnergyBlock {
                index: j as usize,
                energy: j,
                first: if j == 0 {
                    0
                } else {
                    osc_cumulative(j - 1) as usize
                },
                degeneracy: osc_degeneracy(j),
            });
        }
        self.e_max = to;
        Ok(())
    }

    /// Grows the cutoff to at least `e` (geometric growth). Returns true if
    /// anything was appended.
    pub fn extend_to(&mut self, e: u64) -> Result<bool> {
        if e <= self.e_max {
            return Ok(false);
        }
        let target = e.max(self.e_max + self.e_max / 2).max(8);
        let from = self.e_max + 1;
        match self.geometry {
            Geometry::Box => self.append_box_shells(from, target)?,
            Geometry::Oscillator => self.append_osc_shells(from, target)?,
        }
        Ok(true)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn e_max(&self) -> u64 {
        self.e_max
    }

    pub fn units(&self) -> UnitSystem {
        UnitSystem::of(self.geometry)
    }

    pub fn mode_count(&self) -> usize {
        match self.geometry {
            Geometry::Box => self.box_modes.len(),
            Geometry::Oscillator => osc_cumulative(self.e_max) as usize,
        }
    }

    pub fn blocks(&self) -> &[EnergyBlock] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> Result<&EnergyBlock> {
        self.blocks
            .get(b)
            .ok_or_else(|| Error::Domain(format!("block {b} out of range")))
    }

    /// Block holding energy `e`, if any level sits there.
    pub fn block_at_energy(&self, e: u64) -> Option<usize> {
        match self.energy_block.get(e as usize) {
            Some(&b) if b != u32::MAX => Some(b as usize),
            _ => None,
        }
    }

    pub fn block_of(&self, mode: usize) -> Result<&EnergyBlock> {
        if mode >= self.mode_count() {
            return Err(Error::Domain(format!(
                "mode {mode} out of range ({} modes)",
                self.mode_count()
            )));
        }
        let b = match self.geometry {
            Geometry::Box => self.box_mode_block[mode] as usize,
            Geometry::Oscillator => self.blocks.partition_point(|blk| blk.first <= mode) - 1,
        };
        Ok(&self.blocks[b])
    }

    /// Global index of the `member`-th mode in `block`.
    pub fn mode_in_block(&self, block: usize, member: usize) -> Result<usize> {
        let blk = self.block(block)?;
        if member as u64 >= blk.degeneracy {
            return Err(Error::Domain(format!(
                "block {block} has {} members, asked for member {member}",
                blk.degeneracy
            )));
        }
        Ok(blk.first + member)
    }

    pub fn mode(&self, index: usize) -> Result<Mode> {
        let blk = *self.block_of(index)?;
        let quantum = match self.geometry {
            Geometry::Box => self.box_modes[index],
            Geometry::Oscillator => osc_triple(blk.energy, (index - blk.first) as u64),
        };
        Ok(Mode {
            index,
            quantum,
            energy: blk.energy,
            block: blk.index,
        })
    }

    /// Box mode vectors in index order. Empty for the oscillator.
    pub fn box_modes(&self) -> &[IVec3] {
        &self.box_modes
    }

    #[inline]
    pub fn box_mode_block(&self, mode: usize) -> usize {
        self.box_mode_block[mode] as usize
    }

    /// Index of a box mode by momentum vector, if within the cutoff.
    #[inline]
    pub fn index_of(&self, m: IVec3) -> Option<usize> {
        if norm2(m) > self.e_max {
            return None;
        }
        self.lookup.get(m)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,block,e,q1,q2,q3,g")?;
        for i in 0..self.mode_count() {
            let m = self.mode(i)?;
            let g = self.blocks[m.block].degeneracy;
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                i, m.block, m.energy, m.quantum[0], m.quantum[1], m.quantum[2], g
            )?;
        }
        Ok(())
    }
}

/// The `k`-th triple `(n_x, n_y, n_z)` with sum `j`, in lexicographic order.
fn osc_triple(j: u64, mut k: u64) -> IVec3 {
    for nx in 0..=j {
        let count = j - nx + 1;
        if k < count {
            return [nx as i32, k as i32, (j - nx - k) as i32];
        }
        k -= count;
    }
    unreachable!("member index exceeds shell degeneracy")
}

/// Energy levels with degeneracies, used by the equilibrium oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSpectrum {
    pub geometry: Geometry,
    pub levels: Vec<(u64, u64)>,
}

impl LevelSpectrum {
    pub fn box_levels(e_max: u64) -> Self {
        let levels = shell_counts(e_max)
            .into_iter()
            .enumerate()
            .filter(|&(_, g)| g > 0)
            .map(|(e, g)| (e as u64, g))
            .collect();
        LevelSpectrum {
            geometry: Geometry::Box,
            levels,
        }
    }

    pub fn osc_levels(j_max: u64) -> Self {
        LevelSpectrum {
            geometry: Geometry::Oscillator,
            levels: (0..=j_max).map(|j| (j, osc_degeneracy(j))).collect(),
        }
    }

    pub fn for_geometry(geometry: Geometry, e_max: u64) -> Self {
        match geometry {
            Geometry::Box => Self::box_levels(e_max),
            Geometry::Oscillator => Self::osc_levels(e_max),
        }
    }

    pub fn e_max(&self) -> u64 {
        self.levels.last().map_or(0, |l| l.0)
    }

    pub fn ground_energy(&self) -> u64 {
        self.levels[0].0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_box_count(e: u64) -> u64 {
        let r = 12i32;
        let mut c = 0;
        for x in -r..=r {
            for y in -r..=r {
                for z in -r..=r {
                    if norm2([x, y, z]) == e {
                        c += 1;
                    }
                }
            }
        }
        c
    }

    #[test]
    fn box_ground_only() {
        let c = build_box_catalog(0).unwrap();
        assert_eq!(c.mode_count(), 1);
        assert_eq!(c.blocks()[0].degeneracy, 1);
        assert_eq!(c.mode(0).unwrap().quantum, [0, 0, 0]);
    }

    #[test]
    fn box_shell_degeneracies_match_brute_force() {
        let c = build_box_catalog(30).unwrap();
        for blk in c.blocks() {
            assert_eq!(blk.degeneracy, brute_box_count(blk.energy));
        }
        let total: u64 = c.blocks().iter().map(|b| b.degeneracy).sum();
        assert_eq!(total as usize, c.mode_count());
        assert_eq!(
            c.block(c.block_at_energy(1).unwrap()).unwrap().degeneracy,
            6
        );
        assert_eq!(
            c.block(c.block_at_energy(9).unwrap()).unwrap().degeneracy,
            30
        );
        assert!(c.block_at_energy(7).is_none());
    }

    #[test]
    fn box_block_of_and_lookup() {
        let c = build_box_catalog(9).unwrap();
        let i = c.index_of([1, 0, 0]).unwrap();
        let b = c.block_of(i).unwrap();
        assert_eq!((b.energy, b.degeneracy), (1, 6));
        let b0 = c.block_of(c.index_of([0, 0, 0]).unwrap()).unwrap();
        assert_eq!((b0.energy, b0.degeneracy), (0, 1));
        for i in 0..c.mode_count() {
            assert_eq!(c.index_of(c.box_modes()[i]), Some(i));
        }
        assert!(c.block_of(c.mode_count()).is_err());
    }

    #[test]
    fn box_ordering_is_energy_then_lexicographic() {
        let c = build_box_catalog(12).unwrap();
        let keys: Vec<_> = c.box_modes().iter().map(|&m| (norm2(m), m)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn box_extension_is_append_only() {
        let mut c = build_box_catalog(5).unwrap();
        let before = c.box_modes().to_vec();
        assert!(c.extend_to(20).unwrap());
        assert!(c.e_max() >= 20);
        assert_eq!(&c.box_modes()[..before.len()], &before[..]);
        let fresh = build_box_catalog(c.e_max()).unwrap();
        assert_eq!(fresh.box_modes(), c.box_modes());
        assert_eq!(c.index_of([4, 2, 0]), fresh.index_of([4, 2, 0]));
    }

    #[test]
    fn osc_degeneracies() {
        assert_eq!(osc_degeneracy(0), 1);
        assert_eq!(osc_degeneracy(2), 6);
        assert_eq!(osc_degeneracy(10), 66);
        for j in 0..40u64 {
            let mut triples = 0;
            for nx in 0..=j {
                for ny in 0..=(j - nx) {
                    let _nz = j - nx - ny;
                    triples += 1;
                }
            }
            assert_eq!(triples, osc_degeneracy(j));
            let cum: u64 = (0..=j).map(osc_degeneracy).sum();
            assert_eq!(cum, osc_cumulative(j));
        }
    }

    #[test]
    fn osc_members_and_bounds() {
        let c = build_osc_catalog(6).unwrap();
        assert_eq!(c.mode_count(), 84);
        assert!(c.mode_in_block(1, 2).is_ok());
        assert!(c.mode_in_block(1, 3).is_err());
        assert!(c.mode_in_block(1, 4).is_err());
        for i in 0..c.mode_count() {
            let m = c.mode(i).unwrap();
            let s: i32 = m.quantum.iter().sum();
            assert_eq!(s as u64, m.energy);
            assert_eq!(c.block_of(i).unwrap().energy, m.energy);
        }
    }

    #[test]
    fn capacity_error() {
        assert!(matches!(
            ModeCatalog::new_box(400, 1000),
            Err(Error::Capacity(_))
        ));
        assert!(matches!(
            ModeCatalog::new_osc(1000, 1000),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn deterministic_construction() {
        let a = build_box_catalog(25).unwrap();
        let b = build_box_catalog(25).unwrap();
        assert_eq!(a.box_modes(), b.box_modes());
        let mut out = Vec::new();
        a.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("index,block,e,q1,q2,q3,g\n0,0,0,0,0,0,1\n"));
    }
}
