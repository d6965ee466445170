//! Incrementally maintained catalog of collision rates.
//!
//! Rates are stored per conservation class (see [`crate::kernel`]). Each
//! class keeps the source and target factors of its members; a sum tree over
//! class rates gives the total and drives roulette selection. After an event
//! only the classes containing a changed site are refreshed, and classes are
//! created or destroyed as pairs of occupied sites appear or vanish.

use std::sync::Arc;

use rand::Rng;
use rustc_hash::FxHashMap;

use crate::error::Result;
use crate::kernel::{ClassKernel, ClassKey, ClassTemplate};
use crate::state::{CollisionVector, OccupationState, PhysicsMode, SiteSpace, Touched};

use super::sparse::SparseCatalog;

/// Binary sum tree over nonnegative leaf weights. Internal nodes are always
/// recomputed from their children, so no rounding drift accumulates.
#[derive(Debug, Clone)]
pub struct SumTree {
    cap: usize,
    nodes: Vec<f64>,
    staged: Vec<usize>,
    flags: Vec<bool>,
}

impl SumTree {
    pub fn new(cap: usize) -> Self {
        let cap = cap.next_power_of_two().max(1);
        SumTree {
            cap,
            nodes: vec![0.0; 2 * cap],
            staged: Vec::new(),
            flags: Vec::new(),
        }
    }

    /// Sets a leaf without updating its ancestors until [`SumTree::commit`].
    pub fn stage(&mut self, i: usize, v: f64) {
        if i >= self.cap {
            self.grow(i + 1);
        }
        self.nodes[self.cap + i] = v;
        self.staged.push(self.cap + i);
    }

    /// Recomputes every ancestor of the staged leaves, each once.
    pub fn commit(&mut self) {
        if self.staged.is_empty() {
            return;
        }
        self.flags.resize(self.cap, false);
        let mut level = std::mem::take(&mut self.staged);
        let mut next = Vec::with_capacity(level.len());
        while !level.is_empty() {
            next.clear();
            for &k in &level {
                let parent = k / 2;
                if parent >= 1 && !self.flags[parent] {
                    self.flags[parent] = true;
                    next.push(parent);
                }
            }
            for &k in &next {
                self.flags[k] = false;
                self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
            }
            std::mem::swap(&mut level, &mut next);
        }
        level.clear();
        self.staged = level;
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    fn grow(&mut self, need: usize) {
        let mut bigger = SumTree::new(need.max(2 * self.cap));
        let leaves = &self.nodes[self.cap..];
        bigger.nodes[bigger.cap..bigger.cap + self.cap].copy_from_slice(leaves);
        for i in (1..bigger.cap).rev() {
            bigger.nodes[i] = bigger.nodes[2 * i] + bigger.nodes[2 * i + 1];
        }
        bigger.staged = std::mem::take(&mut self.staged);
        for k in &mut bigger.staged {
            *k += bigger.cap - self.cap;
        }
        *self = bigger;
    }

    pub fn set(&mut self, i: usize, v: f64) {
        if i >= self.cap {
            self.grow(i + 1);
        }
        let mut k = self.cap + i;
        self.nodes[k] = v;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes.get(self.cap + i).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Leaf whose cumulative interval contains `u`, for `0 <= u < total`.
    /// Never returns a zero-weight leaf while the total is positive.
    pub fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.cap {
            let left = self.nodes[2 * k];
            let right = self.nodes[2 * k + 1];
            if (u < left && left > 0.0) || right <= 0.0 {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        k - self.cap
    }
}

#[derive(Debug, Clone, Copy)]
struct SiteRef {
    slot: u32,
    member: u32,
    side: u8,
}

#[derive(Debug, Clone)]
struct ClassSlot {
    tpl: Arc<ClassTemplate>,
    a: Vec<f64>,
    c: Vec<f64>,
    back: Vec<[u32; 2]>,
    active: u32,
    sa: f64,
    sc: f64,
    sac: f64,
    dirty: bool,
}

impl ClassSlot {
    fn rate(&self) -> f64 {
        match &self.tpl.kernel {
            ClassKernel::Uniform(k) => k * (self.sa * self.sc - self.sac),
            ClassKernel::MinShell(h) => {
                // sum_p a_p [sum_{q<p} h_q c_q + h_p sum_{q>p} c_q]
                let n = self.a.len();
                let mut suffix = self.c.iter().sum::<f64>();
                let mut prefix = 0.0;
                let mut r = 0.0;
                for p in 0..n {
                    suffix -= self.c[p];
                    if self.a[p] > 0.0 {
                        r += self.a[p] * (prefix + h[p] * suffix.max(0.0));
                    }
                    prefix += h[p] * self.c[p];
                }
                r
            }
            ClassKernel::Dense(m) => {
                let n = self.a.len();
                let mut r = 0.0;
                for p in 0..n {
                    if self.a[p] > 0.0 {
                        let row = &m[p * n..(p + 1) * n];
                        let s: f64 = row.iter().zip(&self.c).map(|(k, c)| k * c).sum();
                        r += self.a[p] * s;
                    }
                }
                r
            }
        }
    }
}

/// Rate catalog over all active conservation classes. The non-ergodic box
/// uses a sparse representation of its classes.
#[derive(Debug, Clone)]
pub enum RateCatalog {
    Dense(DenseCatalog),
    Sparse(SparseCatalog),
}

impl RateCatalog {
    pub fn new(sites: &mut SiteSpace, state: &mut OccupationState) -> Result<Self> {
        Ok(match sites.mode() {
            PhysicsMode::BoxNonErgodic => RateCatalog::Sparse(SparseCatalog::new(sites, state)?),
            _ => RateCatalog::Dense(DenseCatalog::new(sites, state)?),
        })
    }

    /// Discards all incremental state and recomputes every class.
    pub fn rebuild(&mut self, sites: &mut SiteSpace, state: &mut OccupationState) -> Result<()> {
        match self {
            RateCatalog::Dense(c) => c.rebuild(sites, state),
            RateCatalog::Sparse(c) => c.rebuild(sites, state),
        }
    }

    /// Total rate out of the current state.
    pub fn total(&self) -> f64 {
        match self {
            RateCatalog::Dense(c) => c.total(),
            RateCatalog::Sparse(c) => c.total(),
        }
    }

    pub fn class_count(&self) -> usize {
        match self {
            RateCatalog::Dense(c) => c.class_count(),
            RateCatalog::Sparse(c) => c.class_count(),
        }
    }

    /// Brings the catalog in line with `state` after the sites in `touched`
    /// changed occupation.
    pub fn update(
        &mut self,
        touched: &Touched,
        sites: &mut SiteSpace,
        state: &mut OccupationState,
    ) -> Result<()> {
        match self {
            RateCatalog::Dense(c) => c.update(touched, sites, state),
            RateCatalog::Sparse(c) => c.update(touched, sites, state),
        }
    }

    /// Draws a channel with probability proportional to its rate.
    pub fn sample<R: Rng>(
        &mut self,
        sites: &mut SiteSpace,
        state: &OccupationState,
        rng: &mut R,
    ) -> Option<CollisionVector> {
        match self {
            RateCatalog::Dense(c) => c.sample(rng),
            RateCatalog::Sparse(c) => c.sample(sites, state, rng),
        }
    }

    /// Recomputes every stored factor from `state` and returns the largest
    /// discrepancy found, together with the freshly summed total.
    pub fn audit(&self, sites: &SiteSpace, state: &OccupationState) -> (f64, f64) {
        match self {
            RateCatalog::Dense(c) => c.audit(sites, state),
            RateCatalog::Sparse(c) => c.audit(sites, state),
        }
    }

    /// Total obtained from a catalog rebuilt from scratch on copies.
    pub fn rebuilt_total(sites: &SiteSpace, state: &OccupationState) -> Result<f64> {
        let mut s = sites.clone();
        let mut st = state.clone();
        Ok(RateCatalog::new(&mut s, &mut st)?.total())
    }
}

/// Catalog storing every member of every active class.
#[derive(Debug, Clone)]
pub struct DenseCatalog {
    slots: Vec<Option<ClassSlot>>,
    free: Vec<u32>,
    by_key: FxHashMap<ClassKey, u32>,
    tree: SumTree,
    site_index: Vec<Vec<SiteRef>>,
    templates: FxHashMap<ClassKey, Arc<ClassTemplate>>,
    cache_templates: bool,
    dirty: Vec<u32>,
    keys: Vec<ClassKey>,
    weights: Vec<f64>,
}

impl DenseCatalog {
    pub fn new(sites: &mut SiteSpace, state: &mut OccupationState) -> Result<Self> {
        let mut rc = DenseCatalog {
            slots: Vec::new(),
            free: Vec::new(),
            by_key: FxHashMap::default(),
            tree: SumTree::new(64),
            site_index: Vec::new(),
            templates: FxHashMap::default(),
            cache_templates: true,
            dirty: Vec::new(),
            keys: Vec::new(),
            weights: Vec::new(),
        };
        rc.rebuild(sites, state)?;
        Ok(rc)
    }

    /// Discards all incremental state and recomputes every class.
    pub fn rebuild(&mut self, sites: &mut SiteSpace, state: &mut OccupationState) -> Result<()> {
        self.slots.clear();
        self.free.clear();
        self.by_key.clear();
        self.tree = SumTree::new(64);
        self.site_index.clear();
        self.dirty.clear();
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
        Ok(())
    }

    /// Total rate out of the current state.
    pub fn total(&self) -> f64 {
        self.tree.total()
    }

    pub fn class_count(&self) -> usize {
        self.by_key.len()
    }

    fn template(&mut self, key: ClassKey, sites: &mut SiteSpace) -> Result<Arc<ClassTemplate>> {
        if let Some(t) = self.templates.get(&key) {
            return Ok(t.clone());
        }
        let t = Arc::new(ClassTemplate::build(sites, key)?);
        if self.cache_templates {
            self.templates.insert(key, t.clone());
        }
        Ok(t)
    }

    fn create(
        &mut self,
        key: ClassKey,
        sites: &mut SiteSpace,
        state: &mut OccupationState,
    ) -> Result<()> {
        let tpl = self.template(key, sites)?;
        if state.len() < sites.len() {
            state.grow(sites);
        }
        if self.site_index.len() < sites.len() {
            self.site_index.resize(sites.len(), Vec::new());
        }
        let n = tpl.len();
        let mut a = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        let mut active = 0;
        for p in 0..n {
            let ap = tpl.source(sites, state, p);
            if ap > 0.0 {
                active += 1;
            }
            a.push(ap);
            c.push(tpl.target(sites, state, p));
        }
        if active == 0 {
            return Ok(());
        }
        let slot = match self.free.pop() {
            Some(s) => s,
            None => {
                self.slots.push(None);
                (self.slots.len() - 1) as u32
            }
        };
        let mut back = Vec::with_capacity(n);
        for (p, &[x, y]) in tpl.members.iter().enumerate() {
            let mut b = [u32::MAX; 2];
            for (side, s) in [x, y].into_iter().enumerate() {
                if side == 1 && x == y {
                    break;
                }
                let list = &mut self.site_index[s as usize];
                b[side] = list.len() as u32;
                list.push(SiteRef {
                    slot,
                    member: p as u32,
                    side: side as u8,
                });
            }
            back.push(b);
        }
        let (sa, sc, sac) = if matches!(tpl.kernel, ClassKernel::Uniform(_)) {
            (
                a.iter().sum(),
                c.iter().sum(),
                a.iter().zip(&c).map(|(x, y)| x * y).sum(),
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        let cls = ClassSlot {
            tpl,
            a,
            c,
            back,
            active,
            sa,
            sc,
            sac,
            dirty: false,
        };
        let rate = cls.rate();
        self.slots[slot as usize] = Some(cls);
        self.by_key.insert(key, slot);
        self.tree.set(slot as usize, rate);
        Ok(())
    }

    fn destroy(&mut self, slot: u32) {
        let mut cls = self.slots[slot as usize].take().expect("live class slot");
        let tpl = cls.tpl.clone();
        for (p, &[x, y]) in tpl.members.iter().enumerate() {
            for (side, s) in [x, y].into_iter().enumerate() {
                if side == 1 && x == y {
                    break;
                }
                let pos = cls.back[p][side] as usize;
                let list = &mut self.site_index[s as usize];
                list.swap_remove(pos);
                if pos < list.len() {
                    let moved = list[pos];
                    let back = if moved.slot == slot {
                        &mut cls.back
                    } else {
                        &mut self.slots[moved.slot as usize]
                            .as_mut()
                            .expect("indexed class is live")
                            .back
                    };
                    back[moved.member as usize][moved.side as usize] = pos as u32;
                }
            }
        }
        self.by_key.remove(&tpl.key);
        self.tree.set(slot as usize, 0.0);
        self.free.push(slot);
    }

    fn refresh_member(&mut self, r: SiteRef, sites: &SiteSpace, state: &OccupationState) {
        let cls = self.slots[r.slot as usize]
            .as_mut()
            .expect("indexed class is live");
        let p = r.member as usize;
        let a1 = cls.tpl.source(sites, state, p);
        let c1 = cls.tpl.target(sites, state, p);
        let (a0, c0) = (cls.a[p], cls.c[p]);
        if a0 == a1 && c0 == c1 {
            return;
        }
        if matches!(cls.tpl.kernel, ClassKernel::Uniform(_)) {
            cls.sa += a1 - a0;
            cls.sc += c1 - c0;
            cls.sac += a1 * c1 - a0 * c0;
        }
        match (a0 > 0.0, a1 > 0.0) {
            (false, true) => cls.active += 1,
            (true, false) => cls.active -= 1,
            _ => {}
        }
        cls.a[p] = a1;
        cls.c[p] = c1;
        if !cls.dirty {
            cls.dirty = true;
            self.dirty.push(r.slot);
        }
    }

    /// Brings the catalog in line with `state` after the sites in `touched`
    /// changed occupation.
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
                self.refresh_member(r, sites, state);
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
            let Some(cls) = self.slots[slot as usize].as_mut() else {
                continue;
            };
            cls.dirty = false;
            if cls.active == 0 {
                self.destroy(slot);
            } else {
                let rate = cls.rate();
                self.tree.set(slot as usize, rate);
            }
        }
        self.dirty = dirty;
        self.dirty.clear();
        Ok(())
    }

    /// Draws a channel with probability proportional to its rate.
    pub fn sample<R: Rng>(&mut self, rng: &mut R) -> Option<CollisionVector> {
        let total = self.total();
        if total <= 0.0 {
            return None;
        }
        let u = rng.random::<f64>() * total;
        let slot = self.tree.find(u);
        let cls = self.slots.get(slot)?.as_ref()?;
        let n = cls.a.len();
        let w = &mut self.weights;
        w.clear();
        match &cls.tpl.kernel {
            ClassKernel::Uniform(_) => {
                w.extend((0..n).map(|p| cls.a[p] * (cls.sc - cls.c[p])));
            }
            ClassKernel::MinShell(h) => {
                let mut suffix = cls.c.iter().sum::<f64>();
                let mut prefix = 0.0;
                for p in 0..n {
                    suffix -= cls.c[p];
                    w.push(cls.a[p] * (prefix + h[p] * suffix.max(0.0)));
                    prefix += h[p] * cls.c[p];
                }
            }
            ClassKernel::Dense(m) => {
                for p in 0..n {
                    if cls.a[p] > 0.0 {
                        let row = &m[p * n..(p + 1) * n];
                        w.push(cls.a[p] * row.iter().zip(&cls.c).map(|(k, c)| k * c).sum::<f64>());
                    } else {
                        w.push(0.0);
                    }
                }
            }
        }
        let p = roulette(w, rng.random::<f64>())?;
        w.clear();
        w.extend((0..n).map(|q| cls.tpl.coefficient(p, q) * cls.c[q]));
        let q = roulette(w, rng.random::<f64>())?;
        let [x1, x2] = cls.tpl.members[p].map(|s| s as usize);
        let [x3, x4] = cls.tpl.members[q].map(|s| s as usize);
        Some(CollisionVector::new(x1, x2, x3, x4))
    }

    /// Recomputes every stored factor from `state` and returns the largest
    /// discrepancy found, together with the freshly summed total.
    pub fn audit(&self, sites: &SiteSpace, state: &OccupationState) -> (f64, f64) {
        let mut worst: f64 = 0.0;
        let mut total = 0.0;
        for cls in self.slots.iter().flatten() {
            let mut fresh = cls.clone();
            for p in 0..fresh.a.len() {
                fresh.a[p] = cls.tpl.source(sites, state, p);
                fresh.c[p] = cls.tpl.target(sites, state, p);
                worst = worst
                    .max((fresh.a[p] - cls.a[p]).abs())
                    .max((fresh.c[p] - cls.c[p]).abs());
            }
            fresh.sa = fresh.a.iter().sum();
            fresh.sc = fresh.c.iter().sum();
            fresh.sac = fresh.a.iter().zip(&fresh.c).map(|(x, y)| x * y).sum();
            total += fresh.rate();
        }
        (worst, total)
    }
}

/// Index drawn with probability proportional to `w`. Falls back to the last
/// positive weight when rounding pushes the draw past the end.
pub(crate) fn roulette(w: &[f64], u: f64) -> Option<usize> {
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut target = u * total;
    let mut last = None;
    for (i, &x) in w.iter().enumerate() {
        if x > 0.0 {
            if target < x {
                return Some(i);
            }
            target -= x;
            last = Some(i);
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::total_rate;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_tree_basics() {
        let mut t = SumTree::new(3);
        t.set(0, 1.0);
        t.set(2, 3.0);
        t.set(9, 2.0);
        assert_eq!(t.total(), 6.0);
        assert_eq!(t.find(0.5), 0);
        assert_eq!(t.find(1.5), 2);
        assert_eq!(t.find(4.5), 9);
        assert_eq!(t.find(5.999_999), 9);
        t.set(2, 0.0);
        assert_eq!(t.find(1.0), 9);
    }

    #[test]
    fn staged_updates_match_immediate() {
        let mut a = SumTree::new(8);
        let mut b = SumTree::new(8);
        for (i, v) in [(0, 1.0), (5, 2.5), (3, 0.25), (5, 4.0), (40, 3.0), (7, 1.5)] {
            a.set(i, v);
            b.stage(i, v);
        }
        b.commit();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(b.total(), 1.0 + 4.0 + 0.25 + 3.0 + 1.5);
    }

    #[test]
    fn roulette_skips_zero_weights() {
        assert_eq!(roulette(&[0.0, 2.0, 0.0], 0.99), Some(1));
        assert_eq!(roulette(&[1.0, 0.0, 1.0], 0.75), Some(2));
        assert_eq!(roulette(&[0.0, 0.0], 0.5), None);
    }

    fn check_against_enumeration(mode: PhysicsMode, occ: &[(usize, u64)]) {
        let mut sites = SiteSpace::new(mode, 12).unwrap();
        let mut state = OccupationState::from_occupations(&sites, occ).unwrap();
        let rc = RateCatalog::new(&mut sites, &mut state).unwrap();
        let brute = total_rate(&mut sites, &state).unwrap();
        assert_relative_eq!(rc.total(), brute, max_relative = 1e-12);
    }

    #[test]
    fn totals_match_channel_enumeration() {
        check_against_enumeration(PhysicsMode::OscErgodic, &[(0, 3), (1, 4), (2, 2), (5, 1)]);
        check_against_enumeration(PhysicsMode::BoxErgodic, &[(0, 3), (1, 4), (2, 2), (5, 1)]);
        check_against_enumeration(
            PhysicsMode::BoxNonErgodic,
            &[(0, 3), (1, 4), (2, 2), (5, 1), (9, 2), (20, 1)],
        );
    }

    fn random_walk(mode: PhysicsMode, occ: &[(usize, u64)], steps: usize) {
        let mut sites = SiteSpace::new(mode, 8).unwrap();
        let mut state = OccupationState::from_occupations(&sites, occ).unwrap();
        let mut rc = RateCatalog::new(&mut sites, &mut state).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..steps {
            let Some(cv) = rc.sample(&mut sites, &state, &mut rng) else {
                break;
            };
            let touched = state.apply_collision(&sites, &cv).unwrap();
            rc.update(&touched, &mut sites, &mut state).unwrap();
        }
        state.check_invariants(&sites).unwrap();
        let (worst, fresh) = rc.audit(&sites, &state);
        assert!(worst < 1e-9, "{worst}");
        let rebuilt = RateCatalog::rebuilt_total(&sites, &state).unwrap();
        assert_relative_eq!(rc.total(), rebuilt, max_relative = 1e-9);
        assert_relative_eq!(fresh, rebuilt, max_relative = 1e-9);
        let brute = total_rate(&mut sites, &state).unwrap();
        assert_relative_eq!(rebuilt, brute, max_relative = 1e-9);
    }

    #[test]
    fn incremental_matches_rebuild() {
        random_walk(PhysicsMode::OscErgodic, &[(2, 30), (3, 10)], 2000);
        random_walk(PhysicsMode::BoxErgodic, &[(2, 30), (3, 10)], 2000);
        random_walk(
            PhysicsMode::BoxNonErgodic,
            &[(3, 5), (10, 5), (20, 5), (40, 5)],
            2000,
        );
    }
}
