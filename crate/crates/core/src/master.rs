//! Exact master equation on small systems.
//!
//! The reachable configurations are found by breadth-first search through
//! the collision channels, the generator is assembled densely and its
//! stationary vector is obtained by an LU solve with the normalization
//! replacing one balance equation. In the ergodic modes a configuration of
//! block occupations stands for `prod C(B + g - 1, B)` microstates, and the
//! stationary weight per microstate is what should be uniform.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rustc_hash::FxHashMap;

use crate::engine::{trajectory_rng, Engine, Observer, StepOutcome};
use crate::error::{Error, Result};
use crate::kernel::enumerate_channels;
use crate::state::{OccupationState, PhysicsMode, SiteSpace};

/// Default bound on the number of reachable configurations.
pub const DEFAULT_STATE_BOUND: usize = 2000;

pub type Configuration = Vec<(usize, u64)>;

#[derive(Debug, Clone)]
pub struct MasterEquation {
    pub mode: PhysicsMode,
    pub sites: SiteSpace,
    pub states: Vec<Configuration>,
    /// `generator[(i, j)]` is the rate from state `j` to state `i`; the
    /// diagonal holds minus the total outflow.
    pub generator: DMatrix<f64>,
    pub stationary: Vec<f64>,
    /// Microstates represented by each configuration.
    pub multiplicity: Vec<f64>,
    index: FxHashMap<Configuration, usize>,
}

fn multiset(b: u64, g: u64) -> f64 {
    (1..=b).fold(1.0, |acc, k| acc * (g - 1 + k) as f64 / k as f64)
}

/// Builds the generator over every configuration reachable from
/// `initial` and solves for its stationary distribution.
pub fn exact_master_equation(
    mode: PhysicsMode,
    initial: &[(usize, u64)],
    bound: usize,
) -> Result<MasterEquation> {
    let mut sites = SiteSpace::new(mode, 8)?;
    let start = OccupationState::from_occupations(&sites, initial)?;
    let mut states = vec![start.sparse()];
    let mut index = FxHashMap::default();
    index.insert(states[0].clone(), 0);
    let mut transitions: Vec<(usize, usize, f64)> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let state = OccupationState::from_occupations(&sites, &states[i])?;
        for ch in enumerate_channels(&mut sites, &state)? {
            let mut next = state.clone();
            next.grow(&sites);
            next.apply_collision(&sites, &ch.collision)?;
            let key = next.sparse();
            let j = match index.get(&key) {
                Some(&j) => j,
                None => {
                    if states.len() >= bound {
                        return Err(Error::Capacity(format!(
                            "more than {bound} reachable configurations"
                        )));
                    }
                    let j = states.len();
                    index.insert(key.clone(), j);
                    states.push(key);
                    queue.push_back(j);
                    j
                }
            };
            transitions.push((i, j, ch.rate));
        }
    }
    let n = states.len();
    let mut generator = DMatrix::<f64>::zeros(n, n);
    for &(from, to, rate) in &transitions {
        generator[(to, from)] += rate;
        generator[(from, from)] -= rate;
    }
    let stationary = stationary_vector(&generator)?;
    let multiplicity = states
        .iter()
        .map(|s| {
            if mode.is_ergodic() {
                s.iter()
                    .map(|&(b, k)| multiset(k, sites.degeneracy(b)))
                    .product()
            } else {
                1.0
            }
        })
        .collect();
    Ok(MasterEquation {
        mode,
        sites,
        states,
        generator,
        stationary,
        multiplicity,
        index,
    })
}

fn stationary_vector(q: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = q.nrows();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let mut a = q.clone();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let w = a.lu().solve(&b).ok_or_else(|| {
        Error::Logic("singular generator: reachable class is not connected".into())
    })?;
    Ok(w.iter().copied().collect())
}

impl MasterEquation {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, config: &[(usize, u64)]) -> Option<usize> {
        self.index.get(config).copied()
    }

    /// Largest absolute column sum of the generator.
    pub fn column_sum_error(&self) -> f64 {
        (0..self.len())
            .map(|j| self.generator.column(j).sum().abs())
            .fold(0.0, f64::max)
    }

    /// Stationary weight per microstate, normalized to sum to one over
    /// microstates.
    pub fn per_microstate(&self) -> Vec<f64> {
        self.stationary
            .iter()
            .zip(&self.multiplicity)
            .map(|(w, m)| w / m)
            .collect()
    }

    /// `max / min - 1` of the stationary weight per microstate.
    pub fn uniformity_error(&self) -> f64 {
        let w = self.per_microstate();
        let max = w.iter().copied().fold(f64::MIN, f64::max);
        let min = w.iter().copied().fold(f64::MAX, f64::min);
        max / min - 1.0
    }

    /// Distribution over configurations proportional to microstate counts.
    pub fn microcanonical(&self) -> Vec<f64> {
        let z: f64 = self.multiplicity.iter().sum();
        self.multiplicity.iter().map(|m| m / z).collect()
    }

    /// Largest relative violation of `Q_ij m_j = Q_ji m_i`.
    pub fn detailed_balance_error(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                let a = self.generator[(i, j)] * self.multiplicity[j];
                let b = self.generator[(j, i)] * self.multiplicity[i];
                if a != 0.0 || b != 0.0 {
                    worst = worst.max((a - b).abs() / a.abs().max(b.abs()));
                }
            }
        }
        worst
    }

    /// Time-weighted occupancy of each configuration along a simulated
    /// trajectory of `events` collisions started from the first state.
    pub fn simulate_occupancy(&self, seed: u64, events: u64) -> Result<Vec<f64>> {
        let state = OccupationState::from_occupations(&self.sites, &self.states[0])?;
        let mut engine = Engine::new(self.sites.clone(), state, trajectory_rng(seed, 0))?;
        let mut obs = OccupancyObserver {
            me: self,
            time: vec![0.0; self.len()],
            missing: false,
        };
        for _ in 0..events {
            if !matches!(
                engine.step_until(f64::INFINITY, &mut obs)?,
                StepOutcome::Event(_)
            ) {
                break;
            }
        }
        if obs.missing {
            return Err(Error::Logic("simulation left the reachable class".into()));
        }
        let total: f64 = obs.time.iter().sum();
        Ok(obs.time.iter().map(|t| t / total).collect())
    }
}

struct OccupancyObserver<'a> {
    me: &'a MasterEquation,
    time: Vec<f64>,
    missing: bool,
}

impl Observer for OccupancyObserver<'_> {
    fn hold(&mut self, _t: f64, dt: f64, state: &OccupationState, _sites: &SiteSpace) {
        match self.me.index_of(&state.sparse()) {
            Some(i) => self.time[i] += dt,
            None => self.missing = true,
        }
    }
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(mode: PhysicsMode, initial: &[(usize, u64)]) -> MasterEquation {
        let me = exact_master_equation(mode, initial, DEFAULT_STATE_BOUND).unwrap();
        assert!(me.len() > 2, "{} states", me.len());
        assert!(me.column_sum_error() < 1e-12);
        assert!(me.uniformity_error() < 1e-9, "{}", me.uniformity_error());
        assert!(me.detailed_balance_error() < 1e-12);
        me
    }

    #[test]
    fn box_pair_on_first_shell() {
        // (1,0,0) + (-1,0,0): the three axis pairs are the reachable class.
        let sites = SiteSpace::new(PhysicsMode::BoxNonErgodic, 2).unwrap();
        let a = sites.site_of_vector([1, 0, 0]).unwrap();
        let b = sites.site_of_vector([-1, 0, 0]).unwrap();
        let me = check(PhysicsMode::BoxNonErgodic, &[(a, 1), (b, 1)]);
        assert_eq!(me.len(), 3);
    }

    #[test]
    fn small_systems_are_uniform() {
        assert_eq!(check(PhysicsMode::OscErgodic, &[(0, 3), (3, 3)]).len(), 26);
        assert_eq!(check(PhysicsMode::BoxErgodic, &[(0, 3), (3, 3)]).len(), 24);
        let sites = SiteSpace::new(PhysicsMode::BoxNonErgodic, 4).unwrap();
        let a = sites.site_of_vector([1, 1, 0]).unwrap();
        let b = sites.site_of_vector([-1, 0, 0]).unwrap();
        assert_eq!(
            check(PhysicsMode::BoxNonErgodic, &[(0, 1), (a, 1), (b, 1)]).len(),
            7
        );
    }

    #[test]
    fn bound_is_enforced() {
        let r = exact_master_equation(PhysicsMode::OscErgodic, &[(3, 6)], 10);
        assert!(matches!(r, Err(Error::Capacity(_))));
    }

    #[test]
    fn simulation_visits_reachable_class() {
        let me = check(PhysicsMode::OscErgodic, &[(0, 1), (2, 2)]);
        let occ = me.simulate_occupancy(1, 50_000).unwrap();
        assert!(total_variation(&occ, &me.stationary) < 0.03);
    }
}
