//! Executes a preset and writes its CSV tables plus a JSON manifest.
//!
//! A preset expands into independent units (one per temperature, size or
//! ramp rate and trajectory). Unit `(trajectory r, point k)` uses seed
//! `preset.seed + r` and stream `k`. Units run on a worker pool and their
//! rows are merged in unit order, so outputs do not depend on scheduling.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentKind, ExperimentPreset};
use crate::error::{Error, Result};
use crate::experiments::{
    fluctuation_point, run_equilibrium, run_evaporation_experiment, run_growth, site_distributions,
    EquilibriumRun, EvaporationRun, GrowthRun, SweepPoint,
};
use crate::observables::{ergodization_probe, ErgodizationConfig};
use crate::state::PhysicsMode;
use crate::stats::mean_sd;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default)]
pub struct PlanOptions {
    pub out_dir: PathBuf,
    /// Worker threads; `None` uses the global pool size.
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub trajectories: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub label: String,
    pub seed: u64,
    pub stream: u64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub unit: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub crate_version: String,
    pub preset: ExperimentPreset,
    pub config_sha256: String,
    pub threads: usize,
    pub wall_seconds: f64,
    pub units: Vec<UnitRecord>,
    pub outputs: Vec<OutputRecord>,
    pub failures: Vec<FailureRecord>,
}

impl RunManifest {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Preset after command-line overrides.
pub fn apply_overrides(preset: &ExperimentPreset, opts: &PlanOptions) -> ExperimentPreset {
    let mut p = preset.clone();
    if let Some(s) = opts.seed {
        p.seed = s;
    }
    if let Some(t) = opts.trajectories {
        p.trajectories = t;
    }
    p
}

#[derive(Debug, Clone)]
struct Unit {
    label: String,
    trajectory: usize,
    seed: u64,
    stream: u64,
    n: u64,
    t_rel: f64,
    gamma: f64,
}

fn expand(p: &ExperimentPreset) -> Result<Vec<Unit>> {
    let temps = p.target_temperatures()?;
    let mut points: Vec<(u64, f64, f64)> = Vec::new();
    match p.kind {
        ExperimentKind::Scaling => {
            for &n in &p.sizes {
                for &t in &temps {
                    points.push((n, t, 0.0));
                }
            }
        }
        ExperimentKind::Evaporation => {
            let ramp = p.ramp.as_ref().expect("validated evaporation has a ramp");
            for &g in &ramp.gammas {
                points.push((p.particle_number()?, temps[0], g));
            }
        }
        _ => {
            for &t in &temps {
                points.push((p.particle_number()?, t, 0.0));
            }
        }
    }
    // The probe averages over its own trajectories.
    let trajectories = if p.kind == ExperimentKind::Ergodization {
        1
    } else {
        p.trajectories
    };
    let mut units = Vec::new();
    for r in 0..trajectories {
        for (k, &(n, t_rel, gamma)) in points.iter().enumerate() {
            let label = match p.kind {
                ExperimentKind::Evaporation => format!("gamma={gamma} traj={r}"),
                _ => format!("n={n} t={t_rel} traj={r}"),
            };
            units.push(Unit {
                label,
                trajectory: r,
                seed: p.seed.wrapping_add(r as u64),
                stream: k as u64,
                n,
                t_rel,
                gamma,
            });
        }
    }
    Ok(units)
}

type Rows = BTreeMap<&'static str, Vec<Vec<String>>>;

fn f(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NaN".into(), f)
}

fn equilibrium_run(p: &ExperimentPreset, u: &Unit) -> EquilibriumRun {
    let mut run = EquilibriumRun::new(p.mode, u.n, u.t_rel, u.seed);
    run.stream = u.stream;
    run.warmup = p.schedule.warmup;
    run.measure = p.schedule.measure;
    run.samples_per_tcoll = p.schedule.samples_per_tcoll;
    run
}

fn run_unit(p: &ExperimentPreset, u: &Unit) -> Result<Rows> {
    let mut rows = Rows::new();
    let head = |u: &Unit| vec![f(u.t_rel), u.trajectory.to_string()];
    match p.kind {
        ExperimentKind::Sweep | ExperimentKind::Scaling => {
            let out = run_equilibrium(&equilibrium_run(p, u))?;
            let pt = SweepPoint::from_outcome(&out);
            let n1 = out
                .record
                .averages
                .block_mean
                .get(1)
                .copied()
                .unwrap_or(f64::NAN);
            let n1_gc = out
                .solution
                .level_particles()
                .get(1)
                .copied()
                .unwrap_or(f64::NAN);
            rows.entry("sweep.csv").or_default().push(vec![
                u.n.to_string(),
                f(u.t_rel),
                u.trajectory.to_string(),
                u.seed.to_string(),
                u.stream.to_string(),
                out.record.initial_e.to_string(),
                f(out.solution.e),
                f(pt.fraction),
                f(pt.fraction_gc),
                f(pt.fraction_thermo),
                f(n1),
                f(n1_gc),
                f(pt.t_coll),
                f(pt.classical),
                f(pt.t_coll / pt.classical),
                f(pt.distance),
                pt.events.to_string(),
            ]);
        }
        ExperimentKind::Fluctuation => {
            let pt = fluctuation_point(&equilibrium_run(p, u), p.schedule.batches)?;
            let mut row = head(u);
            row.extend([
                f(pt.sim.mean),
                f(pt.sim.sigma),
                f(pt.sim.error()),
                f(pt.sim.formula_error),
                f(pt.sim.batch_error),
                pt.sim.samples.to_string(),
                f(pt.oracle_mean),
                f(pt.oracle_sigma),
                f(pt.sim.mean.sqrt()),
                pt.truncated_n.to_string(),
                pt.truncated_e.to_string(),
            ]);
            rows.entry("fluctuation.csv").or_default().push(row);
        }
        ExperimentKind::Distribution => {
            let mut run = equilibrium_run(p, u);
            if p.mode == PhysicsMode::BoxNonErgodic {
                run.track = vec![[1, 0, 0]];
            }
            for d in site_distributions(&run)? {
                let probs = d.histogram.probabilities();
                for (j, pr) in probs.iter().enumerate() {
                    let mut row = head(u);
                    row.extend([d.label.clone(), j.to_string(), f(*pr), f(d.geometric[j])]);
                    rows.entry("distributions.csv").or_default().push(row);
                }
                let mut row = head(u);
                row.extend([
                    d.label.clone(),
                    f(d.histogram.mean()),
                    f(d.histogram.variance()),
                    opt(d.test.map(|t| t.statistic)),
                    opt(d.test.map(|t| t.dof)),
                    opt(d.test.map(|t| t.p_value)),
                ]);
                rows.entry("distribution_tests.csv").or_default().push(row);
            }
        }
        ExperimentKind::Growth => {
            let out = run_growth(&GrowthRun {
                mode: p.mode,
                n: u.n,
                t_rel: u.t_rel,
                seed: u.seed,
                duration: p.schedule.duration,
                samples: p.schedule.samples,
            })?;
            let fit = out.fit;
            for (t, y) in out.t.iter().zip(&out.n0) {
                let mut row = head(u);
                let model = fit.n_c * -(-t / fit.tau).exp_m1();
                row.extend([f(*t), f(*y), f(model)]);
                rows.entry("growth.csv").or_default().push(row);
            }
            let mut row = head(u);
            row.extend([
                u.seed.to_string(),
                f(fit.n_c),
                f(fit.tau),
                f(fit.r2),
                f(fit.rmse),
                fit.degenerate.to_string(),
                f(out.equilibrium_n0),
            ]);
            rows.entry("growth_fit.csv").or_default().push(row);
        }
        ExperimentKind::Ergodization => {
            let cfg = ErgodizationConfig::new(u.n, u.t_rel, p.trajectories, u.seed);
            let res = ergodization_probe(&cfg)?;
            for pt in &res.points {
                rows.entry("ergodization.csv").or_default().push(vec![
                    f(u.t_rel),
                    f(pt.t),
                    f(pt.filled_mean),
                    f(pt.depleted_mean),
                    f(pt.p_value),
                ]);
            }
            rows.entry("ergodization_summary.csv")
                .or_default()
                .push(vec![
                    f(u.t_rel),
                    p.trajectories.to_string(),
                    f(res.t_coll),
                    opt(res.relaxation),
                ]);
        }
        ExperimentKind::Evaporation => {
            let ramp = p.ramp.as_ref().expect("validated evaporation has a ramp");
            let run = EvaporationRun {
                n0: u.n,
                t_rel: u.t_rel,
                ramp: ramp.ramp(u.gamma),
                t_end: p.schedule.t_end,
                sample_interval: p.schedule.sample_interval,
                seed: u.seed,
                stream: u.stream,
            };
            let out = run_evaporation_experiment(&run, p.schedule.stride)?;
            let g = f(u.gamma);
            let r = u.trajectory.to_string();
            for k in 0..out.t.len() {
                rows.entry("evaporation.csv").or_default().push(vec![
                    g.clone(),
                    r.clone(),
                    f(out.t[k]),
                    f(out.n[k]),
                    f(out.n0[k]),
                ]);
            }
            for &(t, tc) in &out.t_coll {
                rows.entry("evaporation_tcoll.csv").or_default().push(vec![
                    g.clone(),
                    r.clone(),
                    f(t),
                    f(tc),
                ]);
            }
            let min = out.min_t_coll();
            rows.entry("evaporation_summary.csv")
                .or_default()
                .push(vec![
                    g,
                    r,
                    u.seed.to_string(),
                    u.stream.to_string(),
                    out.lost.to_string(),
                    f(out.final_n0),
                    opt(out.t90),
                    f(out.condensation_rate()),
                    opt(out.initial_t_coll()),
                    opt(min.map(|m| m.1)),
                    opt(min.map(|m| m.0)),
                ]);
        }
    }
    Ok(rows)
}

fn headers(kind: ExperimentKind) -> Vec<(&'static str, &'static str)> {
    match kind {
        ExperimentKind::Sweep | ExperimentKind::Scaling => vec![
            (
                "sweep.csv",
                "n,t_rel,trajectory,seed,stream,energy,energy_gc,fraction,fraction_gc,fraction_thermo,n1_shell,n1_shell_gc,t_coll,t_coll_classical,t_coll_ratio,distance,events",
            ),
            (
                "sweep_summary.csv",
                "n,t_rel,trajectories,fraction_mean,fraction_sem,fraction_gc,n1_shell_mean,t_coll_mean,t_coll_sem,t_coll_classical",
            ),
        ],
        ExperimentKind::Fluctuation => vec![(
            "fluctuation.csv",
            "t_rel,trajectory,mean_nc,sigma_nc,error,formula_error,batch_error,samples,oracle_mean,oracle_sigma,sqrt_nc,truncated_n,truncated_e",
        )],
        ExperimentKind::Distribution => vec![
            ("distributions.csv", "t_rel,trajectory,site,j,probability,geometric"),
            ("distribution_tests.csv", "t_rel,trajectory,site,mean,variance,chi2,dof,p_value"),
        ],
        ExperimentKind::Growth => vec![
            ("growth.csv", "t_rel,trajectory,t,n0,fit"),
            ("growth_fit.csv", "t_rel,trajectory,seed,n_c,tau,r2,rmse,degenerate,equilibrium_n0"),
        ],
        ExperimentKind::Ergodization => vec![
            ("ergodization.csv", "t_rel,t,filled_mean,depleted_mean,p_value"),
            ("ergodization_summary.csv", "t_rel,trajectories,t_coll,relaxation"),
        ],
        ExperimentKind::Evaporation => vec![
            ("evaporation.csv", "gamma,trajectory,t,n,n0"),
            ("evaporation_tcoll.csv", "gamma,trajectory,t,t_coll"),
            (
                "evaporation_summary.csv",
                "gamma,trajectory,seed,stream,lost,final_n0,t90,rate,initial_t_coll,min_t_coll,min_t_coll_time",
            ),
            ("evaporation_rate.csv", "gamma,trajectories,rate_mean,rate_sem,lost_mean,final_n0_mean"),
        ],
    }
}

fn parse(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

fn mean_sem(x: &[f64]) -> (f64, f64) {
    let (m, sd) = mean_sd(x);
    let sem = if x.len() > 1 {
        sd / (x.len() as f64).sqrt()
    } else {
        f64::NAN
    };
    (m, sem)
}

/// Groups `rows` by the key columns, keeping first-seen order.
fn group<'a>(rows: &'a [Vec<String>], key: &[usize]) -> Vec<(Vec<String>, Vec<&'a Vec<String>>)> {
    let mut out: Vec<(Vec<String>, Vec<&Vec<String>>)> = Vec::new();
    for row in rows {
        let k: Vec<String> = key.iter().map(|&i| row[i].clone()).collect();
        match out.iter_mut().find(|(g, _)| *g == k) {
            Some((_, members)) => members.push(row),
            None => out.push((k, vec![row])),
        }
    }
    out
}

fn summaries(rows: &mut Rows) {
    if let Some(sweep) = rows.get("sweep.csv") {
        let mut summary = Vec::new();
        for (key, members) in group(sweep, &[0, 1]) {
            let col = |i: usize| members.iter().map(|r| parse(&r[i])).collect::<Vec<_>>();
            let (fm, fs) = mean_sem(&col(7));
            let (tm, ts) = mean_sem(&col(12));
            summary.push(vec![
                key[0].clone(),
                key[1].clone(),
                members.len().to_string(),
                f(fm),
                f(fs),
                members[0][8].clone(),
                f(mean_sem(&col(10)).0),
                f(tm),
                f(ts),
                f(mean_sem(&col(13)).0),
            ]);
        }
        rows.insert("sweep_summary.csv", summary);
    }
    if let Some(evap) = rows.get("evaporation_summary.csv") {
        let mut summary = Vec::new();
        for (key, members) in group(evap, &[0]) {
            let col = |i: usize| members.iter().map(|r| parse(&r[i])).collect::<Vec<_>>();
            let (rm, rs) = mean_sem(&col(7));
            summary.push(vec![
                key[0].clone(),
                members.len().to_string(),
                f(rm),
                f(rs),
                f(mean_sem(&col(4)).0),
                f(mean_sem(&col(5)).0),
            ]);
        }
        rows.insert("evaporation_rate.csv", summary);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write_table(dir: &Path, file: &str, header: &str, rows: &[Vec<String>]) -> Result<OutputRecord> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    fs::write(dir.join(file), &text)?;
    Ok(OutputRecord {
        file: file.to_string(),
        rows: rows.len(),
        sha256: sha256_hex(text.as_bytes()),
    })
}

/// Runs every unit of `preset` and writes the tables and `manifest.json`
/// into `opts.out_dir`. Failed units are listed in the manifest; the
/// tables then hold the rows of the units that succeeded.
pub fn run_plan(preset: &ExperimentPreset, opts: &PlanOptions) -> Result<RunManifest> {
    let start = Instant::now();
    let p = apply_overrides(preset, opts);
    p.validate()?;
    let units = expand(&p)?;
    fs::create_dir_all(&opts.out_dir)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = opts.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("threads: {e}")))?;
    let results: Vec<Result<Rows>> = pool.install(|| {
        units
            .par_iter()
            .map(|u| {
                catch_unwind(AssertUnwindSafe(|| run_unit(&p, u))).unwrap_or_else(|panic| {
                    let msg = panic
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "worker panicked".into());
                    Err(Error::Logic(msg))
                })
            })
            .collect()
    });

    let mut merged = Rows::new();
    let mut unit_records = Vec::new();
    let mut failures = Vec::new();
    for (u, res) in units.iter().zip(results) {
        let ok = match res {
            Ok(rows) => {
                for (file, mut r) in rows {
                    merged.entry(file).or_default().append(&mut r);
                }
                true
            }
            Err(e) => {
                failures.push(FailureRecord {
                    unit: u.label.clone(),
                    error: e.to_string(),
                });
                false
            }
        };
        unit_records.push(UnitRecord {
            label: u.label.clone(),
            seed: u.seed,
            stream: u.stream,
            ok,
        });
    }
    summaries(&mut merged);
    let mut outputs = Vec::new();
    for (file, header) in headers(p.kind) {
        let rows = merged.get(file).map_or(&[][..], |r| r.as_slice());
        outputs.push(write_table(&opts.out_dir, file, header, rows)?);
    }
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: p.hash(),
        preset: p,
        threads: pool.current_num_threads(),
        wall_seconds: start.elapsed().as_secs_f64(),
        units: unit_records,
        outputs,
        failures,
    };
    fs::write(
        opts.out_dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}
