//! Configured runs of a single trajectory and their records.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{trajectory_rng, Engine, EvaporationRamp, Observer, StepEvent, StepOutcome};
use crate::error::{Error, Result};
use crate::state::{init_from_spec, InitSpec, OccupationState, PhysicsMode, SiteSpace};

/// Everything needed to reproduce one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub mode: PhysicsMode,
    pub init: InitSpec,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    pub t_end: f64,
    /// Stop after this many events even if `t_end` is not reached.
    #[serde(default)]
    pub max_events: Option<u64>,
    /// Spacing of recorded samples; zero records none.
    #[serde(default)]
    pub sample_interval: f64,
    /// Time averages start here.
    #[serde(default)]
    pub burn_in: f64,
    #[serde(default)]
    pub ramp: Option<EvaporationRamp>,
    #[serde(default = "default_rebuild")]
    pub rebuild_period: u64,
    /// Number of lowest blocks whose occupations go into each sample.
    #[serde(default)]
    pub record_blocks: usize,
    /// Individual sites whose occupations go into each sample.
    #[serde(default)]
    pub track_sites: Vec<usize>,
    #[serde(default)]
    pub keep_event_log: bool,
}

fn default_rebuild() -> u64 {
    super::DEFAULT_REBUILD_PERIOD
}

impl TrajectoryConfig {
    pub fn new(mode: PhysicsMode, init: InitSpec, seed: u64, t_end: f64) -> Self {
        TrajectoryConfig {
            mode,
            init,
            seed,
            stream: 0,
            t_end,
            max_events: None,
            sample_interval: 0.0,
            burn_in: 0.0,
            ramp: None,
            rebuild_period: default_rebuild(),
            record_blocks: 0,
            track_sites: Vec::new(),
            keep_event_log: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end >= 0.0) {
            return Err(Error::Config(format!(
                "t_end must be nonnegative, got {}",
                self.t_end
            )));
        }
        if self.sample_interval < 0.0 {
            return Err(Error::Config("sample_interval must be nonnegative".into()));
        }
        if let Some(r) = &self.ramp {
            r.validate()?;
            if !self.mode.is_ergodic() {
                return Err(Error::Config(
                    "ramp requires an ergodic physics mode".into(),
                ));
            }
        }
        Ok(())
    }
}

/// State snapshot at a sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub n: u64,
    pub e: u64,
    pub n0: u64,
    /// Events executed before this sample time.
    pub events: u64,
    pub blocks: Vec<u64>,
    pub tracked: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    pub sites: [u32; 4],
    pub energies: [u64; 4],
    pub lost: u32,
}

/// Time-weighted statistics over `[burn_in, t_end]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeAverages {
    pub duration: f64,
    /// Events whose waiting interval lies inside the window.
    pub events: u64,
    pub block_mean: Vec<f64>,
    /// Time weight of each ground-state occupation value.
    pub n0_weights: Vec<f64>,
}

impl TimeAverages {
    pub fn mean_n0(&self) -> f64 {
        self.block_mean.first().copied().unwrap_or(0.0)
    }

    /// Mean waiting time between events inside the window.
    pub fn mean_dt(&self) -> Option<f64> {
        (self.events > 0).then(|| self.duration / self.events as f64)
    }

    /// Normalized ground-state occupation distribution.
    pub fn n0_distribution(&self) -> Vec<f64> {
        let total: f64 = self.n0_weights.iter().sum();
        if total <= 0.0 {
            return Vec::new();
        }
        self.n0_weights.iter().map(|w| w / total).collect()
    }
}

/// Output of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub mode: PhysicsMode,
    pub seed: u64,
    pub stream: u64,
    pub initial_n: u64,
    pub initial_e: u64,
    pub events: u64,
    pub t_final: f64,
    pub frozen: bool,
    pub lost: u64,
    pub event_hash: String,
    pub samples: Vec<Sample>,
    pub averages: TimeAverages,
    pub block_energies: Vec<u64>,
    pub block_degeneracies: Vec<u64>,
    pub final_state: Vec<(usize, u64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub event_log: Vec<EventRecord>,
}

impl TrajectoryRecord {
    pub fn write_samples_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let nb = self.samples.first().map_or(0, |s| s.blocks.len());
        let nt = self.samples.first().map_or(0, |s| s.tracked.len());
        write!(w, "t,N,E,n0,events")?;
        for b in 0..nb {
            write!(w, ",b{b}")?;
        }
        for k in 0..nt {
            write!(w, ",s{k}")?;
        }
        writeln!(w)?;
        for s in &self.samples {
            write!(w, "{:.9e},{},{},{},{}", s.t, s.n, s.e, s.n0, s.events)?;
            for v in s.blocks.iter().chain(&s.tracked) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn write_event_log_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,s1,s2,s3,s4,e1,e2,e3,e4,lost")?;
        for ev in &self.event_log {
            writeln!(
                w,
                "{:.12e},{},{},{},{},{},{},{},{},{}",
                ev.t,
                ev.sites[0],
                ev.sites[1],
                ev.sites[2],
                ev.sites[3],
                ev.energies[0],
                ev.energies[1],
                ev.energies[2],
                ev.energies[3],
                ev.lost
            )?;
        }
        Ok(())
    }
}

struct Recorder<'a> {
    cfg: &'a TrajectoryConfig,
    taken: u64,
    next_sample: f64,
    samples: Vec<Sample>,
    events: u64,
    avg: TimeAverages,
    block_acc: Vec<f64>,
    log: Vec<EventRecord>,
}

impl<'a> Recorder<'a> {
    /// Samples fall on multiples of the interval at or after `t0`.
    fn new(cfg: &'a TrajectoryConfig, t0: f64) -> Self {
        let taken = if cfg.sample_interval > 0.0 {
            (t0 / cfg.sample_interval).ceil() as u64
        } else {
            0
        };
        Recorder {
            cfg,
            taken,
            next_sample: taken as f64 * cfg.sample_interval,
            samples: Vec::new(),
            events: 0,
            avg: TimeAverages::default(),
            block_acc: Vec::new(),
            log: Vec::new(),
        }
    }

    fn sample(&mut self, t: f64, state: &OccupationState) {
        let blocks = (0..self.cfg.record_blocks)
            .map(|b| state.block_occ(b))
            .collect();
        let tracked = self.cfg.track_sites.iter().map(|&x| state.occ(x)).collect();
        self.samples.push(Sample {
            t,
            n: state.n(),
            e: state.e(),
            n0: state.block_occ(0),
            events: self.events,
            blocks,
            tracked,
        });
    }
}

impl Observer for Recorder<'_> {
    fn hold(&mut self, t: f64, dt: f64, state: &OccupationState, _sites: &SiteSpace) {
        let end = t + dt;
        if self.cfg.sample_interval > 0.0 {
            while self.next_sample < end && self.next_sample <= self.cfg.t_end {
                self.sample(self.next_sample, state);
                self.taken += 1;
                self.next_sample = self.taken as f64 * self.cfg.sample_interval;
            }
        }
        let lo = t.max(self.cfg.burn_in);
        if end > lo {
            let w = end - lo;
            self.avg.duration += w;
            let occ = state.block_occupations();
            if self.block_acc.len() < occ.len() {
                self.block_acc.resize(occ.len(), 0.0);
            }
            for (acc, &b) in self.block_acc.iter_mut().zip(occ) {
                if b > 0 {
                    *acc += w * b as f64;
                }
            }
            let n0 = state.block_occ(0) as usize;
            if self.avg.n0_weights.len() <= n0 {
                self.avg.n0_weights.resize(n0 + 1, 0.0);
            }
            self.avg.n0_weights[n0] += w;
        }
    }

    fn event(&mut self, ev: &StepEvent, _state: &OccupationState, sites: &SiteSpace) {
        self.events += 1;
        if ev.t - ev.dt >= self.cfg.burn_in {
            self.avg.events += 1;
        }
        if self.cfg.keep_event_log {
            self.log.push(EventRecord {
                t: ev.t,
                sites: ev.collision.sites,
                energies: ev.collision.sites.map(|s| sites.energy(s as usize)),
                lost: ev.lost,
            });
        }
    }
}

/// Builds the engine for a configuration, including initialization.
pub fn build_engine(cfg: &TrajectoryConfig) -> Result<Engine> {
    cfg.validate()?;
    let mut rng = trajectory_rng(cfg.seed, cfg.stream);
    let mut sites = SiteSpace::new(cfg.mode, 16)?;
    let state = init_from_spec(&mut sites, &cfg.init, &mut rng)?;
    let mut engine = Engine::new(sites, state, rng)?.with_rebuild_period(cfg.rebuild_period);
    if let Some(ramp) = cfg.ramp {
        engine = engine.with_ramp(ramp)?;
    }
    Ok(engine)
}

/// Runs one trajectory from its configuration.
pub fn run_trajectory(cfg: &TrajectoryConfig) -> Result<TrajectoryRecord> {
    let engine = build_engine(cfg)?;
    run_engine(engine, cfg)
}

/// Runs a trajectory that must carry an evaporation ramp.
pub fn run_evaporation(cfg: &TrajectoryConfig) -> Result<TrajectoryRecord> {
    if cfg.ramp.is_none() {
        return Err(Error::Config("evaporation run without ramp".into()));
    }
    run_trajectory(cfg)
}

/// Continues an already built engine until the configured horizon.
pub fn run_engine(mut engine: Engine, cfg: &TrajectoryConfig) -> Result<TrajectoryRecord> {
    let initial_n = engine.state().n();
    let initial_e = engine.state().e();
    let mut rec = Recorder::new(cfg, engine.time());
    let mut frozen = false;
    let max_events = cfg.max_events.unwrap_or(u64::MAX);
    while engine.events() < max_events {
        match engine.step_until(cfg.t_end, &mut rec)? {
            StepOutcome::Event(_) => {}
            StepOutcome::Horizon => break,
            StepOutcome::Frozen => {
                frozen = true;
                break;
            }
        }
    }
    if cfg.sample_interval > 0.0 && rec.next_sample <= engine.time() {
        rec.sample(engine.time(), engine.state());
    }
    let duration = rec.avg.duration;
    rec.avg.block_mean = rec
        .block_acc
        .iter()
        .map(|a| if duration > 0.0 { a / duration } else { 0.0 })
        .collect();
    if duration == 0.0 {
        rec.avg.block_mean = engine
            .state()
            .block_occupations()
            .iter()
            .map(|&b| b as f64)
            .collect();
    }
    let sites = engine.sites();
    let nb = sites.block_count();
    Ok(TrajectoryRecord {
        mode: cfg.mode,
        seed: cfg.seed,
        stream: cfg.stream,
        initial_n,
        initial_e,
        events: engine.events(),
        t_final: engine.time(),
        frozen,
        lost: engine.lost(),
        event_hash: engine.event_hash(),
        samples: rec.samples,
        averages: rec.avg,
        block_energies: (0..nb).map(|b| sites.block_energy(b)).collect(),
        block_degeneracies: (0..nb).map(|b| sites.block_degeneracy(b)).collect(),
        final_state: engine.state().sparse(),
        event_log: rec.log,
    })
}
