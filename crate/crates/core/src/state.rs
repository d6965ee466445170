//! Occupation configurations and the site space they live on.
//!
//! A "site" is the unit of occupation: a single mode in the non-ergodic box,
//! a whole degenerate block in the ergodic modes.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Geometry, ModeCatalog};
use crate::error::{Error, Result};
use crate::lattice::{IVec3, SphereTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhysicsMode {
    #[serde(rename = "box-nonergodic", alias = "BoxNonErgodic")]
    BoxNonErgodic,
    #[serde(rename = "box-ergodic", alias = "BoxErgodic")]
    BoxErgodic,
    #[serde(rename = "osc-ergodic", alias = "OscErgodic")]
    OscErgodic,
}

impl PhysicsMode {
    pub fn geometry(self) -> Geometry {
        match self {
            PhysicsMode::BoxNonErgodic | PhysicsMode::BoxErgodic => Geometry::Box,
            PhysicsMode::OscErgodic => Geometry::Oscillator,
        }
    }

    pub fn is_ergodic(self) -> bool {
        !matches!(self, PhysicsMode::BoxNonErgodic)
    }

    pub fn name(self) -> &'static str {
        match self {
            PhysicsMode::BoxNonErgodic => "box-nonergodic",
            PhysicsMode::BoxErgodic => "box-ergodic",
            PhysicsMode::OscErgodic => "osc-ergodic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "box-nonergodic" | "BoxNonErgodic" => Ok(PhysicsMode::BoxNonErgodic),
            "box-ergodic" | "BoxErgodic" => Ok(PhysicsMode::BoxErgodic),
            "osc-ergodic" | "OscErgodic" => Ok(PhysicsMode::OscErgodic),
            other => Err(Error::Config(format!("unknown physics mode `{other}`"))),
        }
    }
}

/// Sites of a physics mode together with the catalog they are drawn from.
/// The catalog grows on demand; site indices are stable under growth.
#[derive(Debug, Clone)]
pub struct SiteSpace {
    mode: PhysicsMode,
    catalog: ModeCatalog,
    energy: Vec<u64>,
    degeneracy: Vec<u64>,
    spheres: SphereTable,
}

impl SiteSpace {
    pub fn new(mode: PhysicsMode, e_max: u64) -> Result<Self> {
        let catalog = match mode.geometry() {
            Geometry::Box => ModeCatalog::new_box(e_max, crate::catalog::DEFAULT_MODE_CAPACITY)?,
            Geometry::Oscillator => {
                ModeCatalog::new_osc(e_max, crate::catalog::DEFAULT_SHELL_CAPACITY)?
            }
        };
        let mut s = SiteSpace {
            mode,
            catalog,
            energy: Vec::new(),
            degeneracy: Vec::new(),
            spheres: SphereTable::default(),
        };
        s.refresh();
        Ok(s)
    }

    fn refresh(&mut self) {
        match self.mode {
            PhysicsMode::BoxNonErgodic => {
                let start = self.energy.len();
                for i in start..self.catalog.mode_count() {
                    let b = self.catalog.box_mode_block(i);
                    self.energy.push(self.catalog.blocks()[b].energy);
                    self.degeneracy.push(1);
                }
            }
            PhysicsMode::BoxErgodic | PhysicsMode::OscErgodic => {
                let start = self.energy.len();
                for blk in &self.catalog.blocks()[start..] {
                    self.energy.push(blk.energy);
                    self.degeneracy.push(blk.degeneracy);
                }
            }
        }
    }

    pub fn mode(&self) -> PhysicsMode {
        self.mode
    }

    pub fn catalog(&self) -> &ModeCatalog {
        &self.catalog
    }

    pub fn len(&self) -> usize {
        self.energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.is_empty()
    }

    #[inline]
    pub fn energy(&self, x: usize) -> u64 {
        self.energy[x]
    }

    #[inline]
    pub fn degeneracy(&self, x: usize) -> u64 {
        self.degeneracy[x]
    }

    /// Momentum vector of a non-ergodic box site; zero otherwise.
    #[inline]
    pub fn quantum(&self, x: usize) -> IVec3 {
        match self.mode {
            PhysicsMode::BoxNonErgodic => self.catalog.box_modes()[x],
            _ => [0; 3],
        }
    }

    /// Energy block a site belongs to.
    #[inline]
    pub fn block_of_site(&self, x: usize) -> usize {
        match self.mode {
            PhysicsMode::BoxNonErgodic => self.catalog.box_mode_block(x),
            _ => x,
        }
    }

    pub fn block_count(&self) -> usize {
        self.catalog.blocks().len()
    }

    pub fn block_energy(&self, b: usize) -> u64 {
        self.catalog.blocks()[b].energy
    }

    pub fn block_degeneracy(&self, b: usize) -> u64 {
        self.catalog.blocks()[b].degeneracy
    }

    /// Sites making up block `b`.
    pub fn block_sites(&self, b: usize) -> std::ops::Range<usize> {
        match self.mode {
            PhysicsMode::BoxNonErgodic => self.catalog.blocks()[b].members(),
            _ => b..b + 1,
        }
    }

    /// Ergodic site (block) sitting at energy `e`.
    pub fn block_at_energy(&self, e: u64) -> Option<usize> {
        self.catalog.block_at_energy(e)
    }

    /// Non-ergodic site with momentum `m`, if inside the current cutoff.
    #[inline]
    pub fn site_of_vector(&self, m: IVec3) -> Option<usize> {
        self.catalog.index_of(m)
    }

    pub fn e_max(&self) -> u64 {
        self.catalog.e_max()
    }

    /// Extends the catalog so that every level up to `e` exists. Returns
    /// true if new sites were appended.
    pub fn ensure_energy(&mut self, e: u64) -> Result<bool> {
        let grew = self.catalog.extend_to(e)?;
        if grew {
            self.refresh();
        }
        Ok(grew)
    }

    /// Lattice vectors of squared length `norm`.
    pub fn sphere(&mut self, norm: u64) -> &[IVec3] {
        self.spheres.ensure(norm);
        self.spheres.shell(norm)
    }

    /// Makes sure [`SiteSpace::shell`] covers `norm`.
    pub fn ensure_sphere(&mut self, norm: u64) {
        self.spheres.ensure(norm);
    }

    /// Lattice vectors of squared length `norm`, which must already be
    /// covered through [`SiteSpace::ensure_sphere`] or [`SiteSpace::sphere`].
    pub fn shell(&self, norm: u64) -> &[IVec3] {
        self.spheres.shell(norm)
    }
}

/// A two-body collision: sites 1, 2 lose a particle each, 3, 4 gain one.
/// `Reverse` swaps the roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CollisionVector {
    pub sites: [u32; 4],
    pub reverse: bool,
}

impl CollisionVector {
    pub fn new(s1: usize, s2: usize, s3: usize, s4: usize) -> Self {
        CollisionVector {
            sites: [s1 as u32, s2 as u32, s3 as u32, s4 as u32],
            reverse: false,
        }
    }

    pub fn reversed(self) -> Self {
        CollisionVector {
            reverse: !self.reverse,
            ..self
        }
    }

    /// (sources, targets) taking direction into account.
    #[inline]
    pub fn roles(&self) -> ([usize; 2], [usize; 2]) {
        let [a, b, c, d] = self.sites.map(|s| s as usize);
        if self.reverse {
            ([c, d], [a, b])
        } else {
            ([a, b], [c, d])
        }
    }
}

/// Up to four distinct sites whose occupation changed, with prior values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Touched {
    sites: [u32; 4],
    before: [u64; 4],
    len: u8,
}

impl Touched {
    pub fn push(&mut self, site: usize, before: u64) {
        if self.sites[..self.len as usize].contains(&(site as u32)) {
            return;
        }
        self.sites[self.len as usize] = site as u32;
        self.before[self.len as usize] = before;
        self.len += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        (0..self.len as usize).map(|i| (self.sites[i] as usize, self.before[i]))
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn merge(&mut self, other: &Touched) {
        for (s, b) in other.iter() {
            self.push(s, b);
        }
    }
}

/// Occupation numbers per site with cached totals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupationState {
    occ: Vec<u64>,
    block_occ: Vec<u64>,
    n: u64,
    e: u64,
    p: [i64; 3],
    occupied: Vec<u32>,
    occ_pos: Vec<u32>,
}

const NOT_OCCUPIED: u32 = u32::MAX;

impl OccupationState {
    pub fn empty(sites: &SiteSpace) -> Self {
        OccupationState {
            occ: vec![0; sites.len()],
            block_occ: vec![0; sites.block_count()],
            n: 0,
            e: 0,
            p: [0; 3],
            occupied: Vec::new(),
            occ_pos: vec![NOT_OCCUPIED; sites.len()],
        }
    }

    /// Builds a state from explicit `(site, count)` pairs.
    pub fn from_occupations(sites: &SiteSpace, occupations: &[(usize, u64)]) -> Result<Self> {
        let mut s = Self::empty(sites);
        for &(x, k) in occupations {
            if x >= sites.len() {
                return Err(Error::Construction(format!(
                    "site {x} outside catalog of {} sites",
                    sites.len()
                )));
            }
            s.add(sites, x, k);
        }
        Ok(s)
    }

    /// Matches the vector lengths to a grown site space.
    pub fn grow(&mut self, sites: &SiteSpace) {
        if self.occ.len() < sites.len() {
            self.occ.resize(sites.len(), 0);
            self.occ_pos.resize(sites.len(), NOT_OCCUPIED);
        }
        if self.block_occ.len() < sites.block_count() {
            self.block_occ.resize(sites.block_count(), 0);
        }
    }

    #[inline]
    pub fn occ(&self, x: usize) -> u64 {
        self.occ.get(x).copied().unwrap_or(0)
    }

    pub fn occupations(&self) -> &[u64] {
        &self.occ
    }

    pub fn block_occupations(&self) -> &[u64] {
        &self.block_occ
    }

    #[inline]
    pub fn block_occ(&self, b: usize) -> u64 {
        self.block_occ.get(b).copied().unwrap_or(0)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn e(&self) -> u64 {
        self.e
    }

    pub fn p(&self) -> [i64; 3] {
        self.p
    }

    /// Sites with nonzero occupation, in unspecified order.
    pub fn occupied(&self) -> &[u32] {
        &self.occupied
    }

    pub fn len(&self) -> usize {
        self.occ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Highest occupied energy.
    pub fn max_occupied_energy(&self, sites: &SiteSpace) -> u64 {
        self.occupied
            .iter()
            .map(|&x| sites.energy(x as usize))
            .max()
            .unwrap_or(0)
    }

    pub fn add(&mut self, sites: &SiteSpace, x: usize, k: u64) {
        if k == 0 {
            return;
        }
        if x >= self.occ.len() {
            self.grow(sites);
        }
        if self.occ[x] == 0 {
            self.occ_pos[x] = self.occupied.len() as u32;
            self.occupied.push(x as u32);
        }
        self.occ[x] += k;
        self.block_occ[sites.block_of_site(x)] += k;
        self.n += k;
        self.e += k * sites.energy(x);
        if sites.mode() == PhysicsMode::BoxNonErgodic {
            let m = sites.quantum(x);
            for (pi, mi) in self.p.iter_mut().zip(m) {
                *pi += k as i64 * mi as i64;
            }
        }
    }

    pub fn remove(&mut self, sites: &SiteSpace, x: usize, k: u64) -> Result<()> {
        if k == 0 {
            return Ok(());
        }
        if self.occ(x) < k {
            return Err(Error::Logic(format!(
                "removing {k} particles from site {x} holding {}",
                self.occ(x)
            )));
        }
        self.occ[x] -= k;
        self.block_occ[sites.block_of_site(x)] -= k;
        self.n -= k;
        self.e -= k * sites.energy(x);
        if sites.mode() == PhysicsMode::BoxNonErgodic {
            let m = sites.quantum(x);
            for (pi, mi) in self.p.iter_mut().zip(m) {
                *pi -= k as i64 * mi as i64;
            }
        }
        if self.occ[x] == 0 {
            let pos = self.occ_pos[x] as usize;
            self.occupied.swap_remove(pos);
            if pos < self.occupied.len() {
                self.occ_pos[self.occupied[pos] as usize] = pos as u32;
            }
            self.occ_pos[x] = NOT_OCCUPIED;
        }
        Ok(())
    }

    /// Applies a collision, returning the changed sites and their prior
    /// occupations. Fails without mutating if a source is short of particles.
    pub fn apply_collision(&mut self, sites: &SiteSpace, cv: &CollisionVector) -> Result<Touched> {
        let ([s1, s2], [t1, t2]) = cv.roles();
        let need1 = if s1 == s2 { 2 } else { 1 };
        if self.occ(s1) < need1 || self.occ(s2) < 1 {
            return Err(Error::Logic(format!(
                "collision {cv:?} needs particles in sites {s1}, {s2} (have {}, {})",
                self.occ(s1),
                self.occ(s2)
            )));
        }
        debug_assert_eq!(
            sites.energy(s1) + sites.energy(s2),
            sites.energy(t1) + sites.energy(t2)
        );
        let mut touched = Touched::default();
        for x in [s1, s2, t1, t2] {
            touched.push(x, self.occ(x));
        }
        self.remove(sites, s1, 1)?;
        self.remove(sites, s2, 1)?;
        self.add(sites, t1, 1);
        self.add(sites, t2, 1);
        Ok(touched)
    }

    pub fn revert_collision(&mut self, sites: &SiteSpace, cv: &CollisionVector) -> Result<Touched> {
        self.apply_collision(sites, &cv.reversed())
    }

    /// Recomputes (N, E, P) from the occupations.
    pub fn recompute_totals(&self, sites: &SiteSpace) -> (u64, u64, [i64; 3]) {
        let mut n = 0;
        let mut e = 0;
        let mut p = [0i64; 3];
        for (x, &k) in self.occ.iter().enumerate() {
            if k == 0 {
                continue;
            }
            n += k;
            e += k * sites.energy(x);
            if sites.mode() == PhysicsMode::BoxNonErgodic {
                let m = sites.quantum(x);
                for i in 0..3 {
                    p[i] += k as i64 * m[i] as i64;
                }
            }
        }
        (n, e, p)
    }

    /// Checks every cached quantity against a recomputation.
    pub fn check_invariants(&self, sites: &SiteSpace) -> Result<()> {
        let (n, e, p) = self.recompute_totals(sites);
        if (n, e, p) != (self.n, self.e, self.p) {
            return Err(Error::Logic(format!(
                "cached totals ({}, {}, {:?}) differ from recomputed ({n}, {e}, {p:?})",
                self.n, self.e, self.p
            )));
        }
        let mut blocks = vec![0u64; self.block_occ.len()];
        for (x, &k) in self.occ.iter().enumerate() {
            blocks[sites.block_of_site(x)] += k;
        }
        if blocks != self.block_occ {
            return Err(Error::Logic("block occupations out of sync".into()));
        }
        let occupied = self.occ.iter().filter(|&&k| k > 0).count();
        if occupied != self.occupied.len()
            || self
                .occupied
                .iter()
                .enumerate()
                .any(|(i, &x)| self.occ[x as usize] == 0 || self.occ_pos[x as usize] != i as u32)
        {
            return Err(Error::Logic("occupied-site index out of sync".into()));
        }
        Ok(())
    }

    /// Sparse `(site, count)` listing sorted by site.
    pub fn sparse(&self) -> Vec<(usize, u64)> {
        let mut v: Vec<_> = self
            .occupied
            .iter()
            .map(|&x| (x as usize, self.occ[x as usize]))
            .collect();
        v.sort_unstable();
        v
    }

    /// Snapshot as CSV of block occupations with a commented header.
    pub fn write_snapshot_csv<W: Write>(&self, mut w: W, seed: u64, events: u64) -> Result<()> {
        writeln!(
            w,
            "# N={} E={} seed={} events={}",
            self.n, self.e, seed, events
        )?;
        writeln!(w, "block,occupation")?;
        for (b, &k) in self.block_occ.iter().enumerate() {
            if k > 0 {
                writeln!(w, "{b},{k}")?;
            }
        }
        Ok(())
    }
}

/// How to build the initial configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitSpec {
    /// Energies drawn uniformly between the first excited level and twice
    /// the mean energy, then repaired to hit `e` exactly.
    GaussianLike { n: u64, e: u64, avoid_ground: bool },
    /// Particles drawn from expected per-block particle numbers, then
    /// repaired to hit `e` exactly.
    ThermalLike {
        n: u64,
        e: u64,
        block_weights: Vec<f64>,
    },
    /// Explicit `(site, count)` occupations.
    Explicit { occupations: Vec<(usize, u64)> },
}

/// Upper bound on repair moves per particle before giving up.
const REPAIR_MOVES_PER_PARTICLE: u64 = 20_000;

pub fn init_from_spec<R: Rng>(
    sites: &mut SiteSpace,
    spec: &InitSpec,
    rng: &mut R,
) -> Result<OccupationState> {
    match spec {
        InitSpec::Explicit { occupations } => {
            if occupations.iter().all(|&(_, k)| k == 0) {
                return Err(Error::Construction(
                    "explicit occupation list is empty".into(),
                ));
            }
            let e_top = occupations.iter().map(|&(x, _)| x).max().unwrap_or(0);
            if e_top >= sites.len() {
                return Err(Error::Construction(format!(
                    "site {e_top} outside catalog of {} sites",
                    sites.len()
                )));
            }
            OccupationState::from_occupations(sites, occupations)
        }
        InitSpec::GaussianLike { n, e, avoid_ground } => {
            check_target(sites, *n, *e)?;
            let mean = *e as f64 / *n as f64;
            sites.ensure_energy((2.0 * mean).ceil() as u64 + 2)?;
            let first_excited = sites.block_energy(1) as f64;
            let hi = (2.0 * mean).max(first_excited);
            let mut blocks = Vec::with_capacity(*n as usize);
            for _ in 0..*n {
                let target = rng.random_range(first_excited..=hi);
                blocks.push(nearest_block_at_or_below(sites, target.round() as u64).max(1));
            }
            repair_and_place(sites, blocks, *e, *avoid_ground, rng)
        }
        InitSpec::ThermalLike {
            n,
            e,
            block_weights,
        } => {
            check_target(sites, *n, *e)?;
            if block_weights.is_empty() || block_weights.iter().any(|w| !(*w >= 0.0)) {
                return Err(Error::Construction(
                    "block weights must be nonnegative".into(),
                ));
            }
            let dist = WeightedIndex::new(block_weights)
                .map_err(|err| Error::Construction(format!("block weights: {err}")))?;
            while sites.block_count() <= block_weights.len() {
                sites.ensure_energy(sites.e_max() + 1)?;
            }
            let blocks: Vec<usize> = (0..*n).map(|_| dist.sample(rng)).collect();
            let top_block = *blocks.iter().max().unwrap();
            if top_block >= sites.block_count() {
                return Err(Error::Construction(format!(
                    "block weights reach block {top_block}, beyond the catalog"
                )));
            }
            repair_and_place(sites, blocks, *e, false, rng)
        }
    }
}

fn check_target(sites: &SiteSpace, n: u64, e: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::Construction(
            "particle number must be at least 1".into(),
        ));
    }
    let e0 = sites.block_energy(0);
    if e < n * e0 {
        return Err(Error::Construction(format!(
            "energy {e} below the minimum {} for N={n}",
            n * e0
        )));
    }
    if n == 1 && sites.mode().geometry() == Geometry::Box {
        let mut probe = sites.catalog().clone();
        probe.extend_to(e)?;
        if probe.block_at_energy(e).is_none() {
            return Err(Error::Construction(format!(
                "a single particle cannot carry energy {e}: no level there"
            )));
        }
    }
    Ok(())
}

fn nearest_block_at_or_below(sites: &SiteSpace, e: u64) -> usize {
    let mut e = e.min(sites.e_max());
    loop {
        if let Some(b) = sites.block_at_energy(e) {
            return b;
        }
        e -= 1;
    }
}

/// Moves randomly chosen particles one level at a time until the energy
/// matches, then places each particle on a site of its block.
fn repair_and_place<R: Rng>(
    sites: &mut SiteSpace,
    mut blocks: Vec<usize>,
    target: u64,
    avoid_ground: bool,
    rng: &mut R,
) -> Result<OccupationState> {
    let n = blocks.len() as u64;
    let mut energy: i64 = blocks.iter().map(|&b| sites.block_energy(b) as i64).sum();
    let target = target as i64;
    let cap = REPAIR_MOVES_PER_PARTICLE * n.max(10);
    let mut moves = 0u64;
    let mut misses = 0u64;
    while energy != target {
        moves += 1;
        if moves > cap {
            return Err(Error::Construction(format!(
                "could not reach E={target} with N={n} (stuck at {energy})"
            )));
        }
        let d = target - energy;
        let i = rng.random_range(0..blocks.len());
        let b = blocks[i];
        let e = sites.block_energy(b) as i64;
        // After many misses allow moves that overshoot or use the ground level.
        let relaxed = misses > 8 * n;
        let next = if d > 0 {
            if b + 1 >= sites.block_count() {
                sites.ensure_energy(sites.e_max() + 2)?;
            }
            Some(b + 1)
        } else if b > 0 {
            Some(b - 1)
        } else {
            None
        };
        let Some(nb) = next else {
            misses += 1;
            continue;
        };
        let gap = sites.block_energy(nb) as i64 - e;
        let lands_on_ground = nb == 0 && avoid_ground && n > 1;
        if (gap.abs() <= d.abs() && !lands_on_ground) || relaxed {
            blocks[i] = nb;
            energy += gap;
            misses = 0;
        } else {
            misses += 1;
        }
    }
    let mut state = OccupationState::empty(sites);
    for b in blocks {
        let range = sites.block_sites(b);
        let x = if range.len() == 1 {
            range.start
        } else {
            rng.random_range(range)
        };
        state.add(sites, x, 1);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn box_pair_collision_conserves() {
        let sites = SiteSpace::new(PhysicsMode::BoxNonErgodic, 4).unwrap();
        let a = sites.site_of_vector([1, 0, 0]).unwrap();
        let b = sites.site_of_vector([-1, 0, 0]).unwrap();
        let c = sites.site_of_vector([0, 1, 0]).unwrap();
        let d = sites.site_of_vector([0, -1, 0]).unwrap();
        let mut s = OccupationState::from_occupations(&sites, &[(a, 1), (b, 1)]).unwrap();
        let before = s.clone();
        assert_eq!((s.n(), s.e(), s.p()), (2, 2, [0, 0, 0]));
        let cv = CollisionVector::new(a, b, c, d);
        let t = s.apply_collision(&sites, &cv).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!((s.n(), s.e(), s.p()), (2, 2, [0, 0, 0]));
        assert_eq!(s.occ(c), 1);
        s.check_invariants(&sites).unwrap();
        s.revert_collision(&sites, &cv).unwrap();
        assert_eq!(s.sparse(), before.sparse());
        assert_eq!((s.n(), s.e(), s.p()), (before.n(), before.e(), before.p()));
    }

    #[test]
    fn oscillator_shell_collision() {
        let sites = SiteSpace::new(PhysicsMode::OscErgodic, 4).unwrap();
        let mut s = OccupationState::from_occupations(&sites, &[(1, 2)]).unwrap();
        s.apply_collision(&sites, &CollisionVector::new(1, 1, 0, 2))
            .unwrap();
        assert_eq!(&s.occupations()[..3], &[1, 0, 1]);
        assert_eq!(s.e(), 2);
    }

    #[test]
    fn precondition_violation_is_logic_error() {
        let sites = SiteSpace::new(PhysicsMode::OscErgodic, 4).unwrap();
        let mut s = OccupationState::from_occupations(&sites, &[(1, 1)]).unwrap();
        let before = s.clone();
        let err = s.apply_collision(&sites, &CollisionVector::new(1, 1, 0, 2));
        assert!(matches!(err, Err(Error::Logic(_))));
        assert_eq!(s, before);
    }

    #[test]
    fn init_single_ground_particle() {
        let mut sites = SiteSpace::new(PhysicsMode::BoxNonErgodic, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = InitSpec::GaussianLike {
            n: 1,
            e: 0,
            avoid_ground: true,
        };
        let s = init_from_spec(&mut sites, &spec, &mut rng).unwrap();
        assert_eq!((s.n(), s.e()), (1, 0));
        assert_eq!(s.occ(0), 1);
    }

    #[test]
    fn init_two_particles_energy_two() {
        let mut sites = SiteSpace::new(PhysicsMode::BoxNonErgodic, 4).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = InitSpec::GaussianLike {
                n: 2,
                e: 2,
                avoid_ground: true,
            };
            let s = init_from_spec(&mut sites, &spec, &mut rng).unwrap();
            assert_eq!((s.n(), s.e()), (2, 2));
            s.check_invariants(&sites).unwrap();
        }
    }

    #[test]
    fn init_unreachable_targets() {
        let mut sites = SiteSpace::new(PhysicsMode::BoxNonErgodic, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bad = InitSpec::GaussianLike {
            n: 1,
            e: 7,
            avoid_ground: false,
        };
        assert!(matches!(
            init_from_spec(&mut sites, &bad, &mut rng),
            Err(Error::Construction(_))
        ));
        let zero = InitSpec::GaussianLike {
            n: 0,
            e: 0,
            avoid_ground: false,
        };
        assert!(init_from_spec(&mut sites, &zero, &mut rng).is_err());
    }

    #[test]
    fn init_large_avoids_ground() {
        let mut sites = SiteSpace::new(PhysicsMode::BoxNonErgodic, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = InitSpec::GaussianLike {
            n: 500,
            e: 2600,
            avoid_ground: true,
        };
        let s = init_from_spec(&mut sites, &spec, &mut rng).unwrap();
        assert_eq!((s.n(), s.e()), (500, 2600));
        assert_eq!(s.occ(0), 0);
        s.check_invariants(&sites).unwrap();
    }

    #[test]
    fn init_thermal_like_oscillator() {
        let mut sites = SiteSpace::new(PhysicsMode::OscErgodic, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let weights: Vec<f64> = (0..30).map(|j| (-(j as f64) / 4.0).exp()).collect();
        let spec = InitSpec::ThermalLike {
            n: 300,
            e: 1200,
            block_weights: weights,
        };
        let s = init_from_spec(&mut sites, &spec, &mut rng).unwrap();
        assert_eq!((s.n(), s.e()), (300, 1200));
    }

    #[test]
    fn init_is_deterministic() {
        let spec = InitSpec::GaussianLike {
            n: 100,
            e: 600,
            avoid_ground: true,
        };
        let run = || {
            let mut sites = SiteSpace::new(PhysicsMode::BoxNonErgodic, 8).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            init_from_spec(&mut sites, &spec, &mut rng)
                .unwrap()
                .sparse()
        };
        assert_eq!(run(), run());
    }
}
