//! Transition rates for two-body collisions.
//!
//! Channels are grouped into conservation classes: all unordered site pairs
//! with the same total energy (and, for the non-ergodic box, the same total
//! momentum). A channel moves one particle pair from a source member of a
//! class to a different target member of the same class. Two distinct
//! members never share a site, so the rate of a channel factorizes into a
//! structural coefficient times a source factor times a target factor.
//!
//! Occupation factors follow the operator ordering of a pair annihilation
//! followed by a pair creation. With block occupation `B` and degeneracy `g`
//! (`g = 1` for single modes):
//!
//! * source, distinct sites: `B_x B_y / (g_x g_y)`
//! * source, same site: `B (B - 1) / g^2`
//! * target, distinct sites: `(B_x + g_x)(B_y + g_y) / (g_x g_y)`
//! * target, same site: `(B + g)(B + g + 1) / g^2`
//!
//! Each same-site pair additionally carries a factor 1/2, which turns the
//! permutation factor 4 of an all-distinct collision into 2 (or 1).

use std::io::Write;

use rustc_hash::FxHashMap;

use crate::catalog::osc_degeneracy;
use crate::error::Result;
use crate::lattice::{add, norm2, sub, IVec3};
use crate::state::{CollisionVector, OccupationState, PhysicsMode, SiteSpace};

/// Conserved quantities shared by all members of a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassKey {
    pub energy: u64,
    pub momentum: IVec3,
}

impl ClassKey {
    #[inline]
    pub fn of_pair(sites: &SiteSpace, x: usize, y: usize) -> Self {
        let momentum = match sites.mode() {
            PhysicsMode::BoxNonErgodic => add(sites.quantum(x), sites.quantum(y)),
            _ => [0; 3],
        };
        ClassKey {
            energy: sites.energy(x) + sites.energy(y),
            momentum,
        }
    }
}

/// Source occupation factor of a member, including the same-site 1/2.
#[inline]
pub fn source_factor(bx: u64, gx: u64, by: u64, gy: u64, same: bool) -> f64 {
    if same {
        let b = bx as f64;
        let g = gx as f64;
        0.5 * b * (b - 1.0) / (g * g)
    } else {
        (bx as f64 * by as f64) / (gx as f64 * gy as f64)
    }
}

/// Target occupation factor of a member, including the same-site 1/2.
#[inline]
pub fn target_factor(bx: u64, gx: u64, by: u64, gy: u64, same: bool) -> f64 {
    if same {
        let h = (bx + gx) as f64;
        let g = gx as f64;
        0.5 * h * (h + 1.0) / (g * g)
    } else {
        ((bx + gx) as f64 * (by + gy) as f64) / (gx as f64 * gy as f64)
    }
}

/// Rate of a single non-ergodic box channel `1 + 2 -> 3 + 4` in units where
/// `sigma nbar v1 2 / N = 1`. Sites 1, 2 (and 3, 4) may coincide.
pub fn box_rate(n: [u64; 4], same12: bool, same34: bool, conserving: bool) -> f64 {
    if !conserving {
        return 0.0;
    }
    std::f64::consts::FRAC_1_PI
        * source_factor(n[0], 1, n[1], 1, same12)
        * target_factor(n[2], 1, n[3], 1, same34)
}

/// Rate of an ergodic oscillator channel between shells `j` with block
/// occupations `b`.
pub fn osc_rate(b: [u64; 4], j: [u64; 4]) -> f64 {
    if j[0] + j[1] != j[2] + j[3] {
        return 0.0;
    }
    let g = j.map(osc_degeneracy);
    let g_min = osc_degeneracy(*j.iter().min().unwrap()) as f64;
    0.25 * g_min
        * source_factor(b[0], g[0], b[1], g[1], j[0] == j[1])
        * target_factor(b[2], g[2], b[3], g[3], j[2] == j[3])
}

/// Rate of an ergodic box channel between blocks, given the number of
/// momentum-conserving ordered mode tuples connecting them.
pub fn box_ergodic_rate(tuples: u64, b: [u64; 4], g: [u64; 4], same12: bool, same34: bool) -> f64 {
    std::f64::consts::FRAC_1_PI
        * tuples as f64
        * source_factor(b[0], g[0], b[1], g[1], same12)
        * target_factor(b[2], g[2], b[3], g[3], same34)
}

/// Counts ordered mode tuples `(m1, m2, m3, m4)` on the shells `e` with
/// `m1 + m2 = m3 + m4`, by direct enumeration.
pub fn box_tuple_count_brute(sites: &mut SiteSpace, e: [u64; 4]) -> u64 {
    let s: Vec<Vec<IVec3>> = e.iter().map(|&n| sites.sphere(n).to_vec()).collect();
    let mut count = 0;
    for &m1 in &s[0] {
        for &m2 in &s[1] {
            let p = add(m1, m2);
            for &m3 in &s[2] {
                if norm2(sub(p, m3)) == e[3] {
                    count += 1;
                }
            }
        }
    }
    count
}

fn pair_sum_histogram(a: &[IVec3], b: &[IVec3]) -> FxHashMap<IVec3, u32> {
    let mut h = FxHashMap::default();
    h.reserve(a.len() * b.len());
    for &m1 in a {
        for &m2 in b {
            *h.entry(add(m1, m2)).or_insert(0) += 1;
        }
    }
    h
}

fn histogram_overlap(a: &FxHashMap<IVec3, u32>, b: &FxHashMap<IVec3, u32>) -> u64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .map(|(p, &c)| large.get(p).map_or(0, |&d| c as u64 * d as u64))
        .sum()
}

/// Ordered tuple count between shells `(e1, e2) -> (e3, e4)` through
/// pair-sum histograms.
pub fn box_tuple_count(sites: &mut SiteSpace, e: [u64; 4]) -> u64 {
    let s: Vec<Vec<IVec3>> = e.iter().map(|&n| sites.sphere(n).to_vec()).collect();
    let h12 = pair_sum_histogram(&s[0], &s[1]);
    let h34 = pair_sum_histogram(&s[2], &s[3]);
    histogram_overlap(&h12, &h34)
}

/// Occupation-independent coefficient between members of a class.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassKernel {
    /// Same coefficient for every member pair.
    Uniform(f64),
    /// Coefficient `h[min(p, q)]`; members are sorted by their lowest shell so
    /// that the minimum over both pairs is the member with the lower index.
    MinShell(Vec<f64>),
    /// Dense symmetric matrix, zero on the diagonal.
    Dense(Vec<f64>),
}

/// Members and structural coefficients of one conservation class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTemplate {
    pub key: ClassKey,
    /// Site pairs `(x, y)` with `x <= y`.
    pub members: Vec<[u32; 2]>,
    pub kernel: ClassKernel,
}

impl ClassTemplate {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    #[inline]
    pub fn coefficient(&self, p: usize, q: usize) -> f64 {
        if p == q {
            return 0.0;
        }
        match &self.kernel {
            ClassKernel::Uniform(k) => *k,
            ClassKernel::MinShell(h) => h[p.min(q)],
            ClassKernel::Dense(m) => m[p * self.members.len() + q],
        }
    }

    /// Enumerates members; extends the site space to cover the class energy.
    pub fn build(sites: &mut SiteSpace, key: ClassKey) -> Result<Self> {
        sites.ensure_energy(key.energy)?;
        match sites.mode() {
            PhysicsMode::BoxNonErgodic => Ok(Self::build_box_modes(sites, key)),
            PhysicsMode::OscErgodic => {
                let e = key.energy;
                let members = (0..=e / 2).map(|x| [x as u32, (e - x) as u32]).collect();
                let h = (0..=e / 2)
                    .map(|x| 0.25 * osc_degeneracy(x) as f64)
                    .collect();
                Ok(ClassTemplate {
                    key,
                    members,
                    kernel: ClassKernel::MinShell(h),
                })
            }
            PhysicsMode::BoxErgodic => Ok(Self::build_box_blocks(sites, key)),
        }
    }

    fn build_box_modes(sites: &mut SiteSpace, key: ClassKey) -> Self {
        let p = key.momentum;
        let pn = norm2(p);
        let mut members = Vec::new();
        if 2 * key.energy >= pn {
            let norm = 2 * key.energy - pn;
            let shell = sites.sphere(norm).to_vec();
            for u in shell {
                if (0..3).any(|i| (u[i] - p[i]).rem_euclid(2) != 0) {
                    continue;
                }
                let neg = u.map(|c| -c);
                if u < neg {
                    continue;
                }
                let c = [0, 1, 2].map(|i| (p[i] + u[i]) / 2);
                let d = [0, 1, 2].map(|i| (p[i] - u[i]) / 2);
                let (Some(x), Some(y)) = (sites.site_of_vector(c), sites.site_of_vector(d)) else {
                    continue;
                };
                members.push([x.min(y) as u32, x.max(y) as u32]);
            }
        }
        ClassTemplate {
            key,
            members,
            kernel: ClassKernel::Uniform(std::f64::consts::FRAC_1_PI),
        }
    }

    fn build_box_blocks(sites: &mut SiteSpace, key: ClassKey) -> Self {
        let e = key.energy;
        let mut members = Vec::new();
        for b in 0..sites.block_count() {
            let eb = sites.block_energy(b);
            if 2 * eb > e {
                break;
            }
            if let Some(b2) = sites.block_at_energy(e - eb) {
                members.push([b as u32, b2 as u32]);
            }
        }
        // Gram matrix of pair-sum histograms: sort all (sum, member) entries
        // and accumulate count products within each run of equal sums.
        let mut entries: Vec<(IVec3, u32)> = Vec::new();
        for (p, &[x, y]) in members.iter().enumerate() {
            let (ex, ey) = (
                sites.block_energy(x as usize),
                sites.block_energy(y as usize),
            );
            sites.ensure_sphere(ex.max(ey));
            for &m1 in sites.shell(ex) {
                for &m2 in sites.shell(ey) {
                    entries.push((add(m1, m2), p as u32));
                }
            }
        }
        entries.sort_unstable();
        let n = members.len();
        let mut gram = vec![0u64; n * n];
        let mut run: Vec<(usize, u64)> = Vec::new();
        let mut i = 0;
        while i < entries.len() {
            let sum = entries[i].0;
            run.clear();
            while i < entries.len() && entries[i].0 == sum {
                let p = entries[i].1 as usize;
                match run.last_mut() {
                    Some((q, c)) if *q == p => *c += 1,
                    _ => run.push((p, 1)),
                }
                i += 1;
            }
            for (k, &(p, cp)) in run.iter().enumerate() {
                for &(q, cq) in &run[k + 1..] {
                    gram[p * n + q] += cp * cq;
                }
            }
        }
        let mut m = vec![0.0; n * n];
        for p in 0..n {
            for q in p + 1..n {
                let t = gram[p * n + q] as f64 * std::f64::consts::FRAC_1_PI;
                m[p * n + q] = t;
                m[q * n + p] = t;
            }
        }
        ClassTemplate {
            key,
            members,
            kernel: ClassKernel::Dense(m),
        }
    }

    /// Source factor of member `p` in `state`.
    #[inline]
    pub fn source(&self, sites: &SiteSpace, state: &OccupationState, p: usize) -> f64 {
        let [x, y] = self.members[p].map(|s| s as usize);
        source_factor(
            state.occ(x),
            sites.degeneracy(x),
            state.occ(y),
            sites.degeneracy(y),
            x == y,
        )
    }

    /// Target factor of member `q` in `state`.
    #[inline]
    pub fn target(&self, sites: &SiteSpace, state: &OccupationState, q: usize) -> f64 {
        let [x, y] = self.members[q].map(|s| s as usize);
        target_factor(
            state.occ(x),
            sites.degeneracy(x),
            state.occ(y),
            sites.degeneracy(y),
            x == y,
        )
    }
}

/// A single collision channel with its rate decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionChannel {
    pub collision: CollisionVector,
    /// Occupation-independent part, including the same-site halves.
    pub structural: f64,
    /// Occupation factor without the same-site halves.
    pub occupation: f64,
    pub rate: f64,
}

/// All channels with nonzero rate in `state`, ordered by class key and
/// member positions.
pub fn enumerate_channels(
    sites: &mut SiteSpace,
    state: &OccupationState,
) -> Result<Vec<CollisionChannel>> {
    let mut occupied: Vec<usize> = state.occupied().iter().map(|&x| x as usize).collect();
    occupied.sort_unstable();
    let mut keys = Vec::new();
    for (i, &x) in occupied.iter().enumerate() {
        for &y in &occupied[i..] {
            if x == y && state.occ(x) < 2 {
                continue;
            }
            keys.push(ClassKey::of_pair(sites, x, y));
        }
    }
    keys.sort_unstable();
    keys.dedup();
    let mut out = Vec::new();
    for key in keys {
        let tpl = ClassTemplate::build(sites, key)?;
        let mut state = state.clone();
        state.grow(sites);
        for p in 0..tpl.len() {
            let a = tpl.source(sites, &state, p);
            if a <= 0.0 {
                continue;
            }
            for q in 0..tpl.len() {
                let k = tpl.coefficient(p, q);
                if k <= 0.0 {
                    continue;
                }
                let c = tpl.target(sites, &state, q);
                let [x1, x2] = tpl.members[p].map(|s| s as usize);
                let [x3, x4] = tpl.members[q].map(|s| s as usize);
                let halves = if x1 == x2 { 0.5 } else { 1.0 } * if x3 == x4 { 0.5 } else { 1.0 };
                out.push(CollisionChannel {
                    collision: CollisionVector::new(x1, x2, x3, x4),
                    structural: k * halves,
                    occupation: a * c / halves,
                    rate: k * a * c,
                });
            }
        }
    }
    Ok(out)
}

/// Total rate out of `state`, summed over all channels.
pub fn total_rate(sites: &mut SiteSpace, state: &OccupationState) -> Result<f64> {
    Ok(enumerate_channels(sites, state)?
        .iter()
        .map(|c| c.rate)
        .sum())
}

pub fn write_channels_csv<W: Write>(
    mut w: W,
    sites: &SiteSpace,
    channels: &[CollisionChannel],
) -> Result<()> {
    writeln!(w, "s1,s2,s3,s4,e1,e2,e3,e4,structural,occupation,rate")?;
    for ch in channels {
        let s = ch.collision.sites.map(|x| x as usize);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{:.12e},{:.12e},{:.12e}",
            s[0],
            s[1],
            s[2],
            s[3],
            sites.energy(s[0]),
            sites.energy(s[1]),
            sites.energy(s[2]),
            sites.energy(s[3]),
            ch.structural,
            ch.occupation,
            ch.rate
        )?;
    }
    Ok(())
}
