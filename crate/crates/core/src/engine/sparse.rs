//! Sparse rate catalog for the non-ergodic box.
//!
//! A class `(E, P)` of the non-ergodic box has a uniform coefficient, and a
//! member whose two sites are both empty has source factor 0 and target
//! factor exactly 1. A class therefore stores only its member count and the
//! members touching an occupied site ("tracked" members); the target sum is
//! `M + sum(c - 1)` over tracked members. All factors are small integers, so
//! the running sums are exact.

use rand::Rng;
use rustc_hash::FxHashMap;

use super::rates::{roulette, SumTree};
use crate::error::{Error, Result};
use crate::kernel::{source_factor, target_factor, ClassKey};
use crate::lattice::{norm2, sub, IVec3};
use crate::state::{CollisionVector, OccupationState, SiteSpace, Touched};

const KAPPA: f64 = std::f64::consts::FRAC_1_PI;
const FREE: u64 = u64::MAX;

#[derive(Debug, Clone, Copy)]
struct SiteRef {
    slot: u32,
    member: u32,
    side: u8,
}

#[derive(Debug, Clone)]
struct Member {
    pair: [u32; 2],
    a: f64,
    c: f64,
    back: [u32; 2],
}

#[derive(Debug, Clone, Default)]
struct SparseClass {
    key: Option<ClassKey>,
    m_total: u64,
    members: Vec<Member>,
    active: u32,
    sa: f64,
    sx: f64,
    sac: f64,
    dirty: bool,
}

impl SparseClass {
    fn rate(&self) -> f64 {
        KAPPA * (self.sa * (self.m_total as f64 + self.sx) - self.sac)
    }
}

fn factors(state: &OccupationState, [x, y]: [u32; 2]) -> (f64, f64) {
    let (x, y) = (x as usize, y as usize);
    let (bx, by) = (state.occ(x), state.occ(y));
    (
        source_factor(bx, 1, by, 1, x == y),
        target_factor(bx, 1, by, 1, x == y),
    )
}

/// Rate catalog that keeps only members with an occupied site.
#[derive(Debug, Clone)]
pub struct SparseCatalog {
    slots: Vec<SparseClass>,
    key_e: Vec<u64>,
    key_p: Vec<IVec3>,
    free: Vec<u32>,
    by_key: FxHashMap<ClassKey, u32>,
    tree: SumTree,
    site_index: Vec<Vec<SiteRef>>,
    counts: FxHashMap<(u64, u8), u64>,
    dirty: Vec<u32>,
    mark: Vec<u32>,
    stamp: u32,
    keys: Vec<ClassKey>,
    found: Vec<[u32; 2]>,
    hits: Vec<u32>,
    weights: Vec<f64>,
}

impl SparseCatalog {
    pub fn new(sites: &mut SiteSpace, state: &mut OccupationState) -> Result<Self> {
        let mut rc = SparseCatalog {
            slots: Vec::new(),
            key_e: Vec::new(),
            key_p: Vec::new(),
            free: Vec::new(),
            by_key: FxHashMap::default(),
            tree: SumTree::new(64),
            site_index: Vec::new(),
            counts: FxHashMap::default(),
            dirty: Vec::new(),
            mark: Vec::new(),
            stamp: 0,
            keys: Vec::new(),
            found: Vec::new(),
            hits: Vec::new(),
            weights: Vec::new(),
        };
        rc.rebuild(sites, state)?;
        Ok(rc)
    }

    pub fn rebuild(&mut self, sites: &mut SiteSpace, state: &mut OccupationState) -> Result<()> {
        self.slots.clear();
        self.key_e.clear();
        self.key_p.clear();
        self.free.clear();
        self.by_key.clear();
        self.tree = SumTree::new(64);
        self.site_index.clear();
        self.dirty.clear();
        self.mark.clear();
        state.grow(sites);
        self.site_index.resize(sites.len(), Vec::new());
        let mut occ: Vec<usize> = state.occupied().iter().map(|&x| x as usize).collect();
        occ.sort_unstable();
        let mut keys = Vec::new();
        for (i, &x) in occ.iter().enumerate() {
            for &y in &occ[i..] {
                if x == y && state.occ(x) < 2 {
                    continue;
                }
                keys.push(ClassKey::of_pair(sites, x, y));
            }
        }
        keys.sort_unstable();
        keys.dedup();
        for key in keys {
            self.create(key, sites, state)?;
        }
        self.tree.commit();
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.tree.total()
    }

    pub fn class_count(&self) -> usize {
        self.by_key.len()
    }

    /// Number of unordered mode pairs with total energy `e` and momentum `p`.
    fn member_count(&mut self, sites: &mut SiteSpace, key: ClassKey) -> u64 {
        let p = key.momentum;
        let pn = norm2(p);
        if 2 * key.energy < pn {
            return 0;
        }
        let norm = 2 * key.energy - pn;
        let parity = (0..3).fold(0u8, |acc, i| acc | (((p[i] & 1) as u8) << i));
        if let Some(&m) = self.counts.get(&(norm, parity)) {
            return m;
        }
        let matching = sites
            .sphere(norm)
            .iter()
            .filter(|u| (0..3).all(|i| (u[i] - p[i]).rem_euclid(2) == 0))
            .count() as u64;
        let m = if norm == 0 { matching } else { matching / 2 };
        self.counts.insert((norm, parity), m);
        m
    }

    /// Partner of site `w` in the class `key`, if `w` belongs to it.
    #[inline]
    fn partner(sites: &SiteSpace, key_e: u64, key_p: IVec3, w: usize) -> Option<IVec3> {
        let ew = sites.energy(w);
        if ew > key_e {
            return None;
        }
        let z = sub(key_p, sites.quantum(w));
        (norm2(z) == key_e - ew).then_some(z)
    }

    fn alloc_slot(&mut self) -> u32 {
        match self.free.pop() {
            Some(s) => s,
            None => {
                self.slots.push(SparseClass::default());
                self.key_e.push(FREE);
                self.key_p.push([0; 3]);
                (self.slots.len() - 1) as u32
            }
        }
    }

    fn push_member(&mut self, slot: u32, pair: [u32; 2], a: f64, c: f64) {
        let cls = &mut self.slots[slot as usize];
        let member = cls.members.len() as u32;
        let mut back = [u32::MAX; 2];
        for side in 0..2 {
            if side == 1 && pair[0] == pair[1] {
                break;
            }
            let list = &mut self.site_index[pair[side] as usize];
            back[side] = list.len() as u32;
            list.push(SiteRef {
                slot,
                member,
                side: side as u8,
            });
        }
        cls.members.push(Member { pair, a, c, back });
        cls.sa += a;
        cls.sx += c - 1.0;
        cls.sac += a * c;
        if a > 0.0 {
            cls.active += 1;
        }
    }

    fn unindex(&mut self, slot: u32, member: usize) {
        let m = &self.slots[slot as usize].members[member];
        let (pair, back) = (m.pair, m.back);
        for side in 0..2 {
            if side == 1 && pair[0] == pair[1] {
                break;
            }
            let pos = back[side] as usize;
            let list = &mut self.site_index[pair[side] as usize];
            list.swap_remove(pos);
            if pos < list.len() {
                let moved = list[pos];
                self.slots[moved.slot as usize].members[moved.member as usize].back
                    [moved.side as usize] = pos as u32;
            }
        }
    }

    /// Removes a member whose factors are already `a = 0`, `c = 1`.
    fn remove_member(&mut self, slot: u32, member: usize) {
        self.unindex(slot, member);
        let cls = &mut self.slots[slot as usize];
        cls.members.swap_remove(member);
        if member < cls.members.len() {
            let moved = cls.members[member].clone();
            for side in 0..2 {
                if side == 1 && moved.pair[0] == moved.pair[1] {
                    break;
                }
                self.site_index[moved.pair[side] as usize][moved.back[side] as usize].member =
                    member as u32;
            }
        }
    }

    fn create(
        &mut self,
        key: ClassKey,
        sites: &mut SiteSpace,
        state: &mut OccupationState,
    ) -> Result<()> {
        if sites.ensure_energy(key.energy)? {
            state.grow(sites);
        }
        if self.site_index.len() < sites.len() {
            self.site_index.resize(sites.len(), Vec::new());
        }
        let m_total = self.member_count(sites, key);
        let slot = self.alloc_slot();
        {
            let cls = &mut self.slots[slot as usize];
            cls.key = Some(key);
            cls.m_total = m_total;
            cls.members.clear();
            cls.active = 0;
            cls.sa = 0.0;
            cls.sx = 0.0;
            cls.sac = 0.0;
            cls.dirty = false;
        }
        let p = key.momentum;
        let norm = 2 * key.energy - norm2(p);
        sites.ensure_sphere(norm);
        let found = &mut self.found;
        found.clear();
        if sites.shell(norm).len() < 2 * state.occupied().len() {
            for &u in sites.shell(norm) {
                if (0..3).any(|i| (u[i] - p[i]) & 1 != 0) || u < u.map(|c| -c) {
                    continue;
                }
                let x = sites.site_of_vector([0, 1, 2].map(|i| (p[i] + u[i]) / 2));
                let y = sites.site_of_vector([0, 1, 2].map(|i| (p[i] - u[i]) / 2));
                let (Some(x), Some(y)) = (x, y) else {
                    return Err(Error::Logic("class member outside the site space".into()));
                };
                if state.occ(x) > 0 || state.occ(y) > 0 {
                    found.push([x.min(y) as u32, x.max(y) as u32]);
                }
            }
        } else {
            for &w in state.occupied() {
                let w = w as usize;
                let Some(zv) = Self::partner(sites, key.energy, p, w) else {
                    continue;
                };
                let z = sites
                    .site_of_vector(zv)
                    .ok_or_else(|| Error::Logic("class partner outside the site space".into()))?;
                if state.occ(z) > 0 && z < w {
                    continue;
                }
                found.push([w.min(z) as u32, w.max(z) as u32]);
            }
        }
        let found = std::mem::take(&mut self.found);
        for &pair in &found {
            let (a, c) = factors(state, pair);
            self.push_member(slot, pair, a, c);
        }
        self.found = found;
        let cls = &self.slots[slot as usize];
        if cls.active == 0 {
            self.release(slot);
            return Ok(());
        }
        let rate = cls.rate();
        self.key_e[slot as usize] = key.energy;
        self.key_p[slot as usize] = key.momentum;
        self.by_key.insert(key, slot);
        self.tree.stage(slot as usize, rate);
        Ok(())
    }

    fn release(&mut self, slot: u32) {
        for m in (0..self.slots[slot as usize].members.len()).rev() {
            self.unindex(slot, m);
        }
        let cls = &mut self.slots[slot as usize];
        cls.members.clear();
        if let Some(key) = cls.key.take() {
            self.by_key.remove(&key);
        }
        self.key_e[slot as usize] = FREE;
        self.tree.stage(slot as usize, 0.0);
        self.free.push(slot);
    }

    fn mark_dirty(&mut self, slot: u32) {
        let cls = &mut self.slots[slot as usize];
        if !cls.dirty {
            cls.dirty = true;
            self.dirty.push(slot);
        }
    }

    fn refresh(&mut self, r: SiteRef, state: &OccupationState) {
        let cls = &mut self.slots[r.slot as usize];
        let m = &mut cls.members[r.member as usize];
        let (a1, c1) = factors(state, m.pair);
        let (a0, c0) = (m.a, m.c);
        if a0 == a1 && c0 == c1 {
            return;
        }
        m.a = a1;
        m.c = c1;
        cls.sa += a1 - a0;
        cls.sx += c1 - c0;
        cls.sac += a1 * c1 - a0 * c0;
        match (a0 > 0.0, a1 > 0.0) {
            (false, true) => cls.active += 1,
            (true, false) => cls.active -= 1,
            _ => {}
        }
        self.mark_dirty(r.slot);
    }

    pub fn update(
        &mut self,
        touched: &Touched,
        sites: &mut SiteSpace,
        state: &mut OccupationState,
    ) -> Result<()> {
        for (x, _) in touched.iter() {
            if x >= self.site_index.len() {
                continue;
            }
            for i in 0..self.site_index[x].len() {
                let r = self.site_index[x][i];
                self.refresh(r, state);
            }
        }
        for i in 0..self.dirty.len() {
            let slot = self.dirty[i];
            let mut m = self.slots[slot as usize].members.len();
            while m > 0 {
                m -= 1;
                let [x, y] = self.slots[slot as usize].members[m].pair;
                if state.occ(x as usize) == 0 && state.occ(y as usize) == 0 {
                    self.remove_member(slot, m);
                }
            }
        }
        for (x, before) in touched.iter() {
            if before == 0 && state.occ(x) > 0 {
                self.attach_site(x, sites, state)?;
            }
        }
        let mut keys = std::mem::take(&mut self.keys);
        keys.clear();
        for (x, before) in touched.iter() {
            let now = state.occ(x);
            if before == 0 && now >= 1 {
                for &y in state.occupied() {
                    let y = y as usize;
                    if y != x {
                        keys.push(ClassKey::of_pair(sites, x, y));
                    }
                }
            }
            if before < 2 && now >= 2 {
                keys.push(ClassKey::of_pair(sites, x, x));
            }
        }
        for &key in &keys {
            if !self.by_key.contains_key(&key) {
                self.create(key, sites, state)?;
            }
        }
        self.keys = keys;
        let dirty = std::mem::take(&mut self.dirty);
        for &slot in &dirty {
            let cls = &mut self.slots[slot as usize];
            if !cls.dirty {
                continue;
            }
            cls.dirty = false;
            if cls.key.is_none() {
                continue;
            }
            if cls.active == 0 {
                self.release(slot);
            } else {
                let rate = cls.rate();
                self.tree.stage(slot as usize, rate);
            }
        }
        self.dirty = dirty;
        self.dirty.clear();
        self.tree.commit();
        Ok(())
    }

    /// Adds the member containing the newly occupied site `x` to every live
    /// class where it was untracked.
    fn attach_site(&mut self, x: usize, sites: &SiteSpace, state: &OccupationState) -> Result<()> {
        if self.mark.len() < self.slots.len() {
            self.mark.resize(self.slots.len(), 0);
        }
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.mark.iter_mut().for_each(|m| *m = 0);
            self.stamp = 1;
        }
        let stamp = self.stamp;
        for r in &self.site_index[x] {
            self.mark[r.slot as usize] = stamp;
        }
        let mx = sites.quantum(x);
        let ex = sites.energy(x) as i64;
        let mut hits = std::mem::take(&mut self.hits);
        hits.clear();
        for (slot, (&e, q)) in self.key_e.iter().zip(&self.key_p).enumerate() {
            let d = [q[0] - mx[0], q[1] - mx[1], q[2] - mx[2]];
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) as i64;
            if n + ex == e as i64 {
                hits.push(slot as u32);
            }
        }
        for &slot in &hits {
            if self.mark[slot as usize] == stamp {
                continue;
            }
            let z = sub(self.key_p[slot as usize], mx);
            let z = sites
                .site_of_vector(z)
                .ok_or_else(|| Error::Logic("class partner outside the site space".into()))?;
            let pair = [x.min(z) as u32, x.max(z) as u32];
            let (a, c) = factors(state, pair);
            self.push_member(slot, pair, a, c);
            self.mark_dirty(slot);
        }
        self.hits = hits;
        Ok(())
    }

    pub fn sample<R: Rng>(
        &mut self,
        sites: &mut SiteSpace,
        state: &OccupationState,
        rng: &mut R,
    ) -> Option<CollisionVector> {
        let total = self.total();
        if total <= 0.0 {
            return None;
        }
        let slot = self.tree.find(rng.random::<f64>() * total);
        let cls = self.slots.get(slot)?;
        let key = cls.key?;
        let sc = cls.m_total as f64 + cls.sx;
        let w = &mut self.weights;
        w.clear();
        w.extend(cls.members.iter().map(|m| m.a * (sc - m.c)));
        let p = roulette(w, rng.random::<f64>())?;
        let untracked = cls.m_total - cls.members.len() as u64;
        w.clear();
        w.extend(
            cls.members
                .iter()
                .enumerate()
                .map(|(q, m)| if q == p { 0.0 } else { m.c }),
        );
        w.push(untracked as f64);
        let q = roulette(w, rng.random::<f64>())?;
        let [x1, x2] = cls.members[p].pair.map(|s| s as usize);
        let [x3, x4] = if q < cls.members.len() {
            cls.members[q].pair.map(|s| s as usize)
        } else {
            let k = ((rng.random::<f64>() * untracked as f64) as u64).min(untracked - 1);
            Self::untracked_member(sites, state, key, k)?
        };
        Some(CollisionVector::new(x1, x2, x3, x4))
    }

    /// The `k`-th member of `key` with both sites empty, in sphere order.
    fn untracked_member(
        sites: &mut SiteSpace,
        state: &OccupationState,
        key: ClassKey,
        mut k: u64,
    ) -> Option<[usize; 2]> {
        let p = key.momentum;
        let norm = 2 * key.energy - norm2(p);
        let shell = sites.sphere(norm).to_vec();
        for u in shell {
            if (0..3).any(|i| (u[i] - p[i]).rem_euclid(2) != 0) || u < u.map(|c| -c) {
                continue;
            }
            let c = [0, 1, 2].map(|i| (p[i] + u[i]) / 2);
            let d = [0, 1, 2].map(|i| (p[i] - u[i]) / 2);
            let x = sites.site_of_vector(c)?;
            let y = sites.site_of_vector(d)?;
            if state.occ(x) > 0 || state.occ(y) > 0 {
                continue;
            }
            if k == 0 {
                return Some([x.min(y), x.max(y)]);
            }
            k -= 1;
        }
        None
    }

    /// Recomputes stored factors from `state`. Returns the largest factor
    /// discrepancy and the freshly summed total.
    pub fn audit(&self, _sites: &SiteSpace, state: &OccupationState) -> (f64, f64) {
        let mut worst: f64 = 0.0;
        let mut total = 0.0;
        for cls in self.slots.iter().filter(|c| c.key.is_some()) {
            let mut fresh = cls.clone();
            fresh.sa = 0.0;
            fresh.sx = 0.0;
            fresh.sac = 0.0;
            for m in &mut fresh.members {
                let (a, c) = factors(state, m.pair);
                worst = worst.max((a - m.a).abs()).max((c - m.c).abs());
                fresh.sa += a;
                fresh.sx += c - 1.0;
                fresh.sac += a * c;
            }
            total += fresh.rate();
        }
        (worst, total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{enumerate_channels, total_rate};
    use crate::state::{init_from_spec, InitSpec, PhysicsMode};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn warm_state(n: u64, e: u64, seed: u64) -> (SiteSpace, OccupationState) {
        let mut sites = SiteSpace::new(PhysicsMode::BoxNonErgodic, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = InitSpec::GaussianLike {
            n,
            e,
            avoid_ground: false,
        };
        let state = init_from_spec(&mut sites, &spec, &mut rng).unwrap();
        (sites, state)
    }

    #[test]
    fn long_walk_stays_consistent() {
        let (mut sites, mut state) = warm_state(60, 60 * 12, 3);
        let mut rc = SparseCatalog::new(&mut sites, &mut state).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..3000 {
            let cv = rc.sample(&mut sites, &state, &mut rng).unwrap();
            let touched = state.apply_collision(&sites, &cv).unwrap();
            rc.update(&touched, &mut sites, &mut state).unwrap();
        }
        let (worst, fresh) = rc.audit(&sites, &state);
        assert_eq!(worst, 0.0);
        assert_relative_eq!(fresh, rc.total(), max_relative = 1e-12);
        let brute = total_rate(&mut sites, &state).unwrap();
        assert_relative_eq!(rc.total(), brute, max_relative = 1e-12);
        let mut s2 = sites.clone();
        let mut st2 = state.clone();
        let rebuilt = SparseCatalog::new(&mut s2, &mut st2).unwrap();
        assert_eq!(rebuilt.class_count(), rc.class_count());
    }

    #[test]
    fn sampling_follows_channel_rates() {
        let mut sites = SiteSpace::new(PhysicsMode::BoxNonErgodic, 16).unwrap();
        let mut state =
            OccupationState::from_occupations(&sites, &[(0, 3), (1, 2), (7, 1), (12, 1)]).unwrap();
        let mut rc = SparseCatalog::new(&mut sites, &mut state).unwrap();
        let channels = enumerate_channels(&mut sites, &state).unwrap();
        let index: FxHashMap<[u32; 4], usize> = channels
            .iter()
            .enumerate()
            .map(|(i, c)| (c.collision.sites, i))
            .collect();
        let mut hits = vec![0u64; channels.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws = 200_000;
        for _ in 0..draws {
            let cv = rc.sample(&mut sites, &state, &mut rng).unwrap();
            hits[index[&cv.sites]] += 1;
        }
        let total: f64 = channels.iter().map(|c| c.rate).sum();
        let chi2: f64 = channels
            .iter()
            .zip(&hits)
            .map(|(c, &h)| {
                let expect = draws as f64 * c.rate / total;
                (h as f64 - expect).powi(2) / expect
            })
            .sum();
        let dist = ChiSquared::new((channels.len() - 1) as f64).unwrap();
        assert!(
            1.0 - dist.cdf(chi2) > 1e-3,
            "chi2 {chi2} over {} channels",
            channels.len()
        );
    }
}
