//! Gillespie event loop with incremental rate maintenance.

pub mod ensemble;
pub mod rates;
pub mod sparse;
pub mod trajectory;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::state::{CollisionVector, OccupationState, SiteSpace, Touched};

pub use rates::RateCatalog;
pub use sparse::SparseCatalog;
pub use trajectory::{run_evaporation, run_trajectory, TrajectoryConfig, TrajectoryRecord};

/// Default number of events between exact rebuilds of the rate catalog.
pub const DEFAULT_REBUILD_PERIOD: u64 = 100_000;

/// Seeded generator for trajectory `stream` of a run with base `seed`.
pub fn trajectory_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Exponentially lowered evaporation threshold
/// `E_b(t) = (E_b0 - E_l) exp(-gamma t) + E_l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaporationRamp {
    pub e_b0: u64,
    pub e_l: u64,
    pub gamma: f64,
}

impl EvaporationRamp {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!(
                "ramp.gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.e_l > self.e_b0 {
            return Err(Error::Config(format!(
                "ramp.e_l ({}) exceeds ramp.e_b0 ({})",
                self.e_l, self.e_b0
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn barrier(&self, t: f64) -> f64 {
        (self.e_b0 as f64 - self.e_l as f64) * (-self.gamma * t).exp() + self.e_l as f64
    }
}

/// One executed collision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEvent {
    /// Time at which the collision happened.
    pub t: f64,
    /// Waiting time since the previous event.
    pub dt: f64,
    pub collision: CollisionVector,
    /// Particles removed by the evaporation threshold after this collision.
    pub lost: u32,
    pub touched: Touched,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Event(StepEvent),
    /// The next event would fall after the horizon; time was advanced to it.
    Horizon,
    /// No channel has positive rate.
    Frozen,
}

/// Hooks called by the event loop.
pub trait Observer {
    /// The current state is held unchanged over `[t, t + dt)`.
    fn hold(&mut self, _t: f64, _dt: f64, _state: &OccupationState, _sites: &SiteSpace) {}

    /// A collision was applied; `state` is the post-event configuration.
    fn event(&mut self, _ev: &StepEvent, _state: &OccupationState, _sites: &SiteSpace) {}
}

impl Observer for () {}

/// A single stochastic trajectory in progress.
#[derive(Debug, Clone)]
pub struct Engine {
    sites: SiteSpace,
    state: OccupationState,
    rates: RateCatalog,
    rng: ChaCha8Rng,
    t: f64,
    events: u64,
    lost: u64,
    rebuild_period: u64,
    since_rebuild: u64,
    ramp: Option<EvaporationRamp>,
    hasher: Sha256,
}

impl Engine {
    pub fn new(mut sites: SiteSpace, mut state: OccupationState, rng: ChaCha8Rng) -> Result<Self> {
        state.check_invariants(&sites)?;
        let rates = RateCatalog::new(&mut sites, &mut state)?;
        Ok(Engine {
            sites,
            state,
            rates,
            rng,
            t: 0.0,
            events: 0,
            lost: 0,
            rebuild_period: DEFAULT_REBUILD_PERIOD,
            since_rebuild: 0,
            ramp: None,
            hasher: Sha256::new(),
        })
    }

    pub fn with_rebuild_period(mut self, k: u64) -> Self {
        self.rebuild_period = k.max(1);
        self
    }

    /// Installs an evaporation ramp and removes every particle above the
    /// initial threshold.
    pub fn with_ramp(mut self, ramp: EvaporationRamp) -> Result<Self> {
        ramp.validate()?;
        if !self.sites.mode().is_ergodic() {
            return Err(Error::Config(
                "evaporation needs an ergodic physics mode".into(),
            ));
        }
        let eb = ramp.barrier(self.t);
        let above: Vec<(usize, u64)> = self
            .state
            .sparse()
            .into_iter()
            .filter(|&(x, _)| self.sites.energy(x) as f64 > eb)
            .collect();
        for (x, k) in above {
            self.state.remove(&self.sites, x, k)?;
            self.lost += k;
        }
        self.ramp = Some(ramp);
        self.rebuild()?;
        Ok(self)
    }

    pub fn rebuild(&mut self) -> Result<()> {
        self.rates.rebuild(&mut self.sites, &mut self.state)?;
        self.since_rebuild = 0;
        Ok(())
    }

    pub fn state(&self) -> &OccupationState {
        &self.state
    }

    pub fn sites(&self) -> &SiteSpace {
        &self.sites
    }

    pub fn rates(&self) -> &RateCatalog {
        &self.rates
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn lost(&self) -> u64 {
        self.lost
    }

    pub fn ramp(&self) -> Option<&EvaporationRamp> {
        self.ramp.as_ref()
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.total()
    }

    /// Hex digest of every event so far (time bits, sites, losses).
    pub fn event_hash(&self) -> String {
        let digest = self.hasher.clone().finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Relative difference between the maintained total rate and a
    /// from-scratch rebuild.
    pub fn rate_drift(&self) -> Result<f64> {
        let fresh = RateCatalog::rebuilt_total(&self.sites, &self.state)?;
        let kept = self.rates.total();
        if fresh == 0.0 {
            return Ok(kept.abs());
        }
        Ok((kept - fresh).abs() / fresh)
    }

    /// Draws a waiting time `-ln(r)/R` with `r` uniform on `(0, 1]`.
    fn waiting_time(&mut self, total: f64) -> f64 {
        let r = 1.0 - self.rng.random::<f64>();
        -r.ln() / total
    }

    /// Performs one event unless it would land after `horizon`.
    pub fn step_until<O: Observer + ?Sized>(
        &mut self,
        horizon: f64,
        obs: &mut O,
    ) -> Result<StepOutcome> {
        let total = self.rates.total();
        if total <= 0.0 {
            if horizon.is_finite() && horizon > self.t {
                obs.hold(self.t, horizon - self.t, &self.state, &self.sites);
                self.t = horizon;
            }
            return Ok(StepOutcome::Frozen);
        }
        let dt = self.waiting_time(total);
        if self.t + dt > horizon {
            obs.hold(self.t, horizon - self.t, &self.state, &self.sites);
            self.t = horizon;
            return Ok(StepOutcome::Horizon);
        }
        obs.hold(self.t, dt, &self.state, &self.sites);
        let cv = self
            .rates
            .sample(&mut self.sites, &self.state, &mut self.rng)
            .ok_or_else(|| Error::Logic("positive total rate but no channel".into()))?;
        let mut touched = self.state.apply_collision(&self.sites, &cv)?;
        self.t += dt;
        let lost = self.evaporate(&cv, &mut touched)?;
        self.rates
            .update(&touched, &mut self.sites, &mut self.state)?;
        self.events += 1;
        self.since_rebuild += 1;
        if self.since_rebuild >= self.rebuild_period {
            self.rebuild()?;
        }
        self.hasher.update(self.t.to_bits().to_le_bytes());
        for s in cv.sites {
            self.hasher.update(s.to_le_bytes());
        }
        self.hasher.update(lost.to_le_bytes());
        let ev = StepEvent {
            t: self.t,
            dt,
            collision: cv,
            lost,
            touched,
        };
        obs.event(&ev, &self.state, &self.sites);
        Ok(StepOutcome::Event(ev))
    }

    /// One unbounded step.
    pub fn step(&mut self) -> Result<Option<StepEvent>> {
        match self.step_until(f64::INFINITY, &mut ())? {
            StepOutcome::Event(ev) => Ok(Some(ev)),
            _ => Ok(None),
        }
    }

    fn evaporate(&mut self, cv: &CollisionVector, touched: &mut Touched) -> Result<u32> {
        let Some(ramp) = self.ramp else {
            return Ok(0);
        };
        let eb = ramp.barrier(self.t);
        let (_, targets) = cv.roles();
        let mut lost = 0;
        for x in targets {
            if self.sites.energy(x) as f64 > eb {
                touched.push(x, self.state.occ(x));
                self.state.remove(&self.sites, x, 1)?;
                lost += 1;
            }
        }
        self.lost += lost as u64;
        Ok(lost)
    }
}
