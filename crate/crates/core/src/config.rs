//! Experiment descriptions: parsing, defaults and validation.
//!
//! A preset is written as TOML (or JSON) with these keys:
//!
//! ```toml
//! name = "fig1-box-N500"
//! kind = "sweep"            # sweep | scaling | distribution | fluctuation
//!                           # | growth | ergodization | evaporation
//! mode = "box-nonergodic"   # box-nonergodic | box-ergodic | osc-ergodic
//! geometry = "box"          # optional, must agree with mode
//! n = 500                   # particle number (initial number for evaporation)
//! sizes = []                # particle numbers, scaling only
//! temperatures = [0.2, 0.5] # targets in units of T_c
//! energies = []             # alternative to temperatures, in level spacings
//! trajectories = 1
//! seed = 1
//!
//! [schedule]                # all optional
//! warmup = 50.0             # collision times discarded
//! measure = 200.0           # collision times measured
//! samples_per_tcoll = 1.0
//! batches = 20
//! duration = 20.0           # growth window in collision times
//! samples = 400             # growth samples
//! t_end = 60.0              # evaporation horizon, kernel time units
//! sample_interval = 0.05    # evaporation sampling, kernel time units
//! stride = 4                # samples per collision-time window
//!
//! [ramp]                    # evaporation only
//! e_b0 = 65
//! e_l = 8
//! gammas = [0.1, 0.5, 1.5]
//! ```
//!
//! Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::Geometry;
use crate::engine::EvaporationRamp;
use crate::equilibrium::{critical_temperature, solve_grand_canonical};
use crate::error::{Error, Result};
use crate::state::PhysicsMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Equilibrium observables against temperature.
    Sweep,
    /// Ground and first-excited occupations against particle number.
    Scaling,
    /// Occupation distributions of the ground state and one first-excited
    /// state.
    Distribution,
    /// Condensate number fluctuations against the exact level sum.
    Fluctuation,
    /// Condensate growth from an empty ground state.
    Growth,
    /// Relaxation of a first-shell distortion.
    Ergodization,
    /// Evaporative cooling under an exponential ramp.
    Evaporation,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::Distribution => "distribution",
            ExperimentKind::Fluctuation => "fluctuation",
            ExperimentKind::Growth => "growth",
            ExperimentKind::Ergodization => "ergodization",
            ExperimentKind::Evaporation => "evaporation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    #[serde(default = "defaults::warmup")]
    pub warmup: f64,
    #[serde(default = "defaults::measure")]
    pub measure: f64,
    #[serde(default = "defaults::samples_per_tcoll")]
    pub samples_per_tcoll: f64,
    #[serde(default = "defaults::batches")]
    pub batches: usize,
    #[serde(default = "defaults::duration")]
    pub duration: f64,
    #[serde(default = "defaults::samples")]
    pub samples: usize,
    #[serde(default = "defaults::t_end")]
    pub t_end: f64,
    #[serde(default = "defaults::sample_interval")]
    pub sample_interval: f64,
    #[serde(default = "defaults::stride")]
    pub stride: usize,
}

mod defaults {
    pub fn warmup() -> f64 {
        50.0
    }
    pub fn measure() -> f64 {
        200.0
    }
    pub fn samples_per_tcoll() -> f64 {
        1.0
    }
    pub fn batches() -> usize {
        20
    }
    pub fn duration() -> f64 {
        20.0
    }
    pub fn samples() -> usize {
        400
    }
    pub fn t_end() -> f64 {
        60.0
    }
    pub fn sample_interval() -> f64 {
        0.05
    }
    pub fn stride() -> usize {
        4
    }
    pub fn one() -> usize {
        1
    }
    pub fn seed() -> u64 {
        1
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            warmup: defaults::warmup(),
            measure: defaults::measure(),
            samples_per_tcoll: defaults::samples_per_tcoll(),
            batches: defaults::batches(),
            duration: defaults::duration(),
            samples: defaults::samples(),
            t_end: defaults::t_end(),
            sample_interval: defaults::sample_interval(),
            stride: defaults::stride(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampSpec {
    pub e_b0: u64,
    pub e_l: u64,
    pub gammas: Vec<f64>,
}

impl RampSpec {
    pub fn ramp(&self, gamma: f64) -> EvaporationRamp {
        EvaporationRamp {
            e_b0: self.e_b0,
            e_l: self.e_l,
            gamma,
        }
    }
}

/// A fully serializable experiment; with its seed it determines every
/// output byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPreset {
    pub name: String,
    pub kind: ExperimentKind,
    pub mode: PhysicsMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sizes: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub temperatures: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub energies: Vec<u64>,
    #[serde(default = "defaults::one")]
    pub trajectories: usize,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp: Option<RampSpec>,
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{key}: must be positive and finite, got {v}"
        )))
    }
}

impl ExperimentPreset {
    pub fn geometry(&self) -> Geometry {
        self.mode.geometry()
    }

    pub fn particle_number(&self) -> Result<u64> {
        self.n
            .ok_or_else(|| Error::Config("n: missing particle number".into()))
    }

    /// Checks every physics parameter and the combination of keys the kind
    /// needs.
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Config("name: must not be empty".into()));
        }
        if let Some(g) = self.geometry {
            if g != self.mode.geometry() {
                return Err(Error::Config(format!(
                    "geometry: `{}` does not match mode `{}`",
                    g.name(),
                    self.mode.name()
                )));
            }
        }
        if self.kind == ExperimentKind::Scaling {
            if self.sizes.is_empty() {
                return Err(Error::Config(
                    "sizes: scaling needs at least one particle number".into(),
                ));
            }
            if self.sizes.contains(&0) {
                return Err(Error::Config(
                    "sizes: particle numbers must be at least 1".into(),
                ));
            }
        } else {
            let n = self.particle_number()?;
            if n == 0 {
                return Err(Error::Config("n: must be at least 1".into()));
            }
        }
        if self.trajectories == 0 {
            return Err(Error::Config("trajectories: must be at least 1".into()));
        }
        match (self.temperatures.is_empty(), self.energies.is_empty()) {
            (true, true) => {
                return Err(Error::Config(
                    "temperatures: give temperatures or energies".into(),
                ))
            }
            (false, false) => {
                return Err(Error::Config(
                    "energies: give either temperatures or energies, not both".into(),
                ))
            }
            _ => {}
        }
        for &t in &self.temperatures {
            positive("temperatures", t)?;
        }
        if !self.energies.is_empty() {
            if self.kind == ExperimentKind::Scaling {
                return Err(Error::Config("energies: scaling takes temperatures".into()));
            }
            if self.energies.contains(&0) {
                return Err(Error::Config("energies: must be positive".into()));
            }
        }
        let s = &self.schedule;
        positive("schedule.warmup", s.warmup)?;
        positive("schedule.measure", s.measure)?;
        positive("schedule.samples_per_tcoll", s.samples_per_tcoll)?;
        positive("schedule.duration", s.duration)?;
        positive("schedule.t_end", s.t_end)?;
        positive("schedule.sample_interval", s.sample_interval)?;
        if s.batches < 2 {
            return Err(Error::Config("schedule.batches: must be at least 2".into()));
        }
        if s.samples < 2 || s.stride == 0 {
            return Err(Error::Config(
                "schedule.samples and schedule.stride must be positive".into(),
            ));
        }
        match self.kind {
            ExperimentKind::Evaporation => {
                let ramp = self
                    .ramp
                    .as_ref()
                    .ok_or_else(|| Error::Config("ramp: evaporation needs a ramp table".into()))?;
                if ramp.gammas.is_empty() {
                    return Err(Error::Config("ramp.gammas: needs at least one rate".into()));
                }
                for &g in &ramp.gammas {
                    ramp.ramp(g).validate()?;
                }
                if !self.mode.is_ergodic() {
                    return Err(Error::Config(
                        "mode: evaporation needs an ergodic mode".into(),
                    ));
                }
                if self.temperatures.len() + self.energies.len() != 1 {
                    return Err(Error::Config(
                        "temperatures: evaporation starts from exactly one temperature".into(),
                    ));
                }
            }
            _ if self.ramp.is_some() => {
                return Err(Error::Config(format!(
                    "ramp: not used by kind `{}`",
                    self.kind.name()
                )));
            }
            ExperimentKind::Ergodization => {
                if self.mode != PhysicsMode::BoxNonErgodic {
                    return Err(Error::Config(
                        "mode: the ergodization probe needs box-nonergodic".into(),
                    ));
                }
            }
            ExperimentKind::Distribution => {
                if self.mode.geometry() != Geometry::Box {
                    return Err(Error::Config("mode: distribution needs a box mode".into()));
                }
            }
            _ => {}
        }
        self.target_temperatures()?;
        Ok(())
    }

    /// Temperature targets in units of `T_c`, converting energies through
    /// the grand-canonical solver.
    pub fn target_temperatures(&self) -> Result<Vec<f64>> {
        if !self.temperatures.is_empty() {
            return Ok(self.temperatures.clone());
        }
        let n = self.particle_number()? as f64;
        let tc = critical_temperature(self.geometry(), n);
        self.energies
            .iter()
            .map(|&e| {
                let sol = solve_grand_canonical(self.geometry(), n, e as f64).map_err(|err| {
                    Error::Config(format!("energies: E = {e} is not representable: {err}"))
                })?;
                Ok(sol.temperature / tc)
            })
            .collect()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("preset serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses a preset from TOML, or from JSON when `json` is set. A JSON run
/// manifest is accepted too; its embedded preset is returned.
pub fn parse_config_str(text: &str, json: bool) -> Result<ExperimentPreset> {
    let preset = if json {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let value = match value.get("manifest_version") {
            Some(_) => value
                .get("preset")
                .cloned()
                .ok_or_else(|| Error::Parse("manifest without preset".into()))?,
            None => value,
        };
        serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
    };
    Ok(preset)
}

/// Reads and validates a preset file. Files ending in `.json` are JSON,
/// everything else TOML.
pub fn parse_config(path: &Path) -> Result<ExperimentPreset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|e| e == "json");
    let preset = parse_config_str(&text, json).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })?;
    preset.validate()?;
    Ok(preset)
}
