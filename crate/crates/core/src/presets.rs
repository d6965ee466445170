//! Built-in experiment presets, one or more per figure.

use crate::config::{ExperimentKind, ExperimentPreset, RampSpec, Schedule};
use crate::error::{Error, Result};
use crate::state::PhysicsMode;

/// Evenly spaced temperatures `from, from + step, ..` up to `to`.
fn grid(from: f64, to: f64, step: f64) -> Vec<f64> {
    let k = ((to - from) / step + 1e-9).floor() as usize;
    (0..=k)
        .map(|i| ((from + i as f64 * step) * 1e6).round() / 1e6)
        .collect()
}

fn base(
    name: &str,
    kind: ExperimentKind,
    mode: PhysicsMode,
    n: u64,
    temperatures: Vec<f64>,
) -> ExperimentPreset {
    ExperimentPreset {
        name: name.into(),
        kind,
        mode,
        geometry: Some(mode.geometry()),
        n: Some(n),
        sizes: Vec::new(),
        temperatures,
        energies: Vec::new(),
        trajectories: 1,
        seed: 1,
        schedule: Schedule::default(),
        ramp: None,
    }
}

fn sweep(
    name: &str,
    mode: PhysicsMode,
    n: u64,
    temperatures: Vec<f64>,
    measure: f64,
) -> ExperimentPreset {
    let mut p = base(name, ExperimentKind::Sweep, mode, n, temperatures);
    p.schedule.measure = measure;
    p
}

fn evaporation(name: &str, gammas: Vec<f64>, trajectories: usize, t_end: f64) -> ExperimentPreset {
    let mut p = base(
        name,
        ExperimentKind::Evaporation,
        PhysicsMode::OscErgodic,
        800,
        vec![1.4],
    );
    p.trajectories = trajectories;
    p.schedule.t_end = t_end;
    p.ramp = Some(RampSpec {
        e_b0: 65,
        e_l: 8,
        gammas,
    });
    p
}

/// All built-in presets.
pub fn all_presets() -> Vec<ExperimentPreset> {
    use PhysicsMode::*;
    let fig1 = grid(0.2, 1.7, 0.1);
    let mut out = vec![
        sweep("fig1-box-N100", BoxNonErgodic, 100, fig1.clone(), 200.0),
        sweep("fig1-box-N500", BoxNonErgodic, 500, fig1, 100.0),
    ];
    let mut scaling = base(
        "fig2-scaling",
        ExperimentKind::Scaling,
        BoxNonErgodic,
        500,
        vec![0.5],
    );
    scaling.n = None;
    scaling.sizes = vec![50, 100, 200, 500];
    out.push(scaling);
    out.push(sweep(
        "fig3-tcoll-box-N500",
        BoxNonErgodic,
        500,
        grid(0.2, 3.0, 0.2),
        100.0,
    ));
    out.push(sweep(
        "fig4-tcoll-box-N100-ergodic",
        BoxErgodic,
        100,
        grid(0.2, 3.0, 0.2),
        500.0,
    ));
    out.push(sweep(
        "fig4-tcoll-box-N100-nonergodic",
        BoxNonErgodic,
        100,
        grid(0.2, 3.0, 0.2),
        500.0,
    ));
    let mut dist = base(
        "fig5-6-distributions",
        ExperimentKind::Distribution,
        BoxNonErgodic,
        500,
        vec![0.3, 0.5, 0.9, 1.1, 1.2, 1.7],
    );
    dist.schedule.measure = 300.0;
    dist.schedule.samples_per_tcoll = 2.0;
    out.push(dist);
    let mut fluct = base(
        "fig7-fluctuations",
        ExperimentKind::Fluctuation,
        BoxNonErgodic,
        500,
        vec![0.15, 0.2, 0.3, 0.4, 0.5],
    );
    fluct.schedule.measure = 1000.0;
    out.push(fluct);
    out.push(base(
        "fig8-growth",
        ExperimentKind::Growth,
        BoxNonErgodic,
        500,
        vec![0.5],
    ));
    let mut ergo = base(
        "fig9-ergodization",
        ExperimentKind::Ergodization,
        BoxNonErgodic,
        500,
        vec![0.4],
    );
    ergo.trajectories = 100;
    out.push(ergo);
    let fig10 = grid(0.2, 1.6, 0.1);
    out.push(sweep(
        "fig10-osc-N300",
        OscErgodic,
        300,
        fig10.clone(),
        400.0,
    ));
    out.push(sweep("fig10-osc-N500", OscErgodic, 500, fig10, 400.0));
    out.push(sweep(
        "fig11-energy-osc-N500",
        OscErgodic,
        500,
        grid(0.2, 2.0, 0.2),
        200.0,
    ));
    out.push(sweep(
        "fig11-energy-box-N500",
        BoxErgodic,
        500,
        grid(0.2, 2.0, 0.2),
        200.0,
    ));
    out.push(sweep(
        "fig12-tcoll-osc-N500",
        OscErgodic,
        500,
        grid(0.2, 3.0, 0.2),
        200.0,
    ));
    out.push(evaporation(
        "fig13-14-evaporation",
        vec![0.1, 0.5, 1.5],
        1,
        60.0,
    ));
    out.push(evaporation(
        "fig15-evaporation-scan",
        vec![0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.5],
        3,
        120.0,
    ));
    out
}

pub fn preset(name: &str) -> Result<ExperimentPreset> {
    all_presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::Config(format!("preset: unknown preset `{name}`")))
}

/// Presets behind one figure, accepting `fig7`, `7` or `fig07`.
pub fn figure_presets(figure: &str) -> Result<Vec<ExperimentPreset>> {
    let digits = figure.trim_start_matches("fig").trim_start_matches('0');
    let k: u32 = digits
        .parse()
        .map_err(|_| Error::Config(format!("figure: `{figure}` is not a figure id")))?;
    let matches = |name: &str| {
        let tag = name.trim_start_matches("fig");
        let nums = tag
            .split('-')
            .take_while(|s| s.chars().all(|c| c.is_ascii_digit()));
        nums.filter_map(|s| s.parse::<u32>().ok()).any(|n| n == k)
    };
    let found: Vec<_> = all_presets()
        .into_iter()
        .filter(|p| matches(&p.name))
        .collect();
    if found.is_empty() {
        return Err(Error::Config(format!("figure: no preset for figure {k}")));
    }
    Ok(found)
}
