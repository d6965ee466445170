use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use qbme::catalog::{Geometry, LevelSpectrum};
use qbme::classical::{classical_boltzmann_rhs, write_csv, EnergyGrid};
use qbme::config::{parse_config, ExperimentKind, ExperimentPreset};
use qbme::equilibrium::{critical_temperature, solve_at_temperature, solve_grand_canonical};
use qbme::fluctuation::{fluctuation_sum, truncated_constraints, FluctuationSpec, DEFAULT_LEVELS};
use qbme::plan::{run_plan, PlanOptions, RunManifest};
use qbme::presets::{all_presets, figure_presets, preset};
use qbme::state::{PhysicsMode, SiteSpace};
use qbme::validation::{all_checks, tiny_systems, CheckScale};
use qbme::Error;

#[derive(Parser)]
#[command(
    name = "qbme",
    version,
    about = "Stochastic quantum Boltzmann master equation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Preset file (TOML, JSON or a run manifest).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset name.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn options(&self, out_dir: PathBuf) -> PlanOptions {
        PlanOptions {
            out_dir,
            threads: self.threads,
            seed: self.seed,
            trajectories: self.trajectories,
        }
    }

    fn load(&self, default: Option<&str>) -> qbme::Result<ExperimentPreset> {
        match (&self.config, &self.preset, default) {
            (Some(_), Some(_), _) => Err(Error::Config("give either --config or --preset".into())),
            (Some(path), None, _) => parse_config(path),
            (None, Some(name), _) => preset(name),
            (None, None, Some(name)) => preset(name),
            (None, None, None) => Err(Error::Config("give --config or --preset".into())),
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum OracleKind {
    /// Grand-canonical occupations at a temperature or energy.
    GrandCanonical,
    /// Exact condensate fluctuations over the lowest levels.
    Fluctuation,
    /// Classical collision integral on an exponential distribution.
    Classical,
    /// Exact master equation of the built-in tiny systems.
    Master,
}

#[derive(Subcommand)]
enum Command {
    /// Write the mode catalog up to an energy cutoff as CSV.
    Catalog {
        #[arg(long, default_value = "box-nonergodic", value_parser = parse_mode)]
        mode: PhysicsMode,
        #[arg(long, default_value_t = 10)]
        e_max: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a preset and write its output bundle.
    Run(RunArgs),
    /// Print a non-stochastic reference result as JSON or CSV.
    Oracle {
        #[arg(value_enum)]
        kind: OracleKind,
        #[arg(long, default_value = "box", value_parser = parse_geometry)]
        geometry: Geometry,
        #[arg(long, default_value_t = 500)]
        n: u64,
        /// Temperature in units of T_c.
        #[arg(long, default_value_t = 0.5)]
        t_rel: f64,
        /// Total energy; overrides the temperature.
        #[arg(long)]
        energy: Option<u64>,
    },
    /// Run an evaporation preset, optionally with other ramp rates.
    Evaporate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated ramp rates replacing the preset's.
        #[arg(long, value_delimiter = ',')]
        gammas: Vec<f64>,
    },
    /// Run every preset behind a figure, e.g. `reproduce fig7`.
    Reproduce {
        figure: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// List the built-in presets.
    Presets,
    /// Run the fast correctness checks.
    Selftest {
        /// Smaller event budgets.
        #[arg(long)]
        quick: bool,
    },
}

fn parse_mode(s: &str) -> Result<PhysicsMode, String> {
    PhysicsMode::parse(s).map_err(|e| e.to_string())
}

fn parse_geometry(s: &str) -> Result<Geometry, String> {
    match s {
        "box" => Ok(Geometry::Box),
        "oscillator" | "osc" => Ok(Geometry::Oscillator),
        _ => Err(format!("unknown geometry `{s}`")),
    }
}

enum Failure {
    Config(String),
    Runtime(String),
    Selftest,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn report(m: &RunManifest, dir: &Path) -> Result<(), Failure> {
    println!(
        "{}: {} units, {} failed, {:.1} s -> {}",
        m.preset.name,
        m.units.len(),
        m.failures.len(),
        m.wall_seconds,
        dir.display()
    );
    for f in &m.failures {
        eprintln!("  failed {}: {}", f.unit, f.error);
    }
    if m.is_complete() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "{} units failed",
            m.failures.len()
        )))
    }
}

fn oracle(
    kind: OracleKind,
    geometry: Geometry,
    n: u64,
    t_rel: f64,
    energy: Option<u64>,
) -> Result<(), Failure> {
    let nf = n as f64;
    if n == 0 {
        return Err(Failure::Config("n: must be at least 1".into()));
    }
    let solve = || match energy {
        Some(e) => solve_grand_canonical(geometry, nf, e as f64),
        None => solve_at_temperature(geometry, nf, t_rel * critical_temperature(geometry, nf)),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match kind {
        OracleKind::GrandCanonical => {
            let sol = solve()?;
            let levels: Vec<_> = sol
                .levels
                .iter()
                .zip(sol.level_particles())
                .take(24)
                .map(|(&(e, g), p)| json!({"energy": e, "degeneracy": g, "particles": p}))
                .collect();
            let v = json!({
                "geometry": geometry.name(),
                "n": n,
                "energy": sol.e,
                "temperature": sol.temperature,
                "t_rel": sol.temperature / critical_temperature(geometry, nf),
                "mu": sol.mu,
                "condensate_fraction": sol.condensate_fraction(),
                "levels": levels,
            });
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&v).map_err(Error::from)?
            )?;
        }
        OracleKind::Fluctuation => {
            let sol = solve()?;
            let (n17, e17) = truncated_constraints(&sol, DEFAULT_LEVELS);
            let spectrum = LevelSpectrum::for_geometry(geometry, 64);
            let r = fluctuation_sum(&spectrum, &FluctuationSpec::new(n17, e17))?;
            let v = json!({
                "geometry": geometry.name(),
                "n": n,
                "levels": DEFAULT_LEVELS,
                "truncated_n": n17,
                "truncated_e": e17,
                "mean": r.mean,
                "sigma": r.sigma,
            });
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&v).map_err(Error::from)?
            )?;
        }
        OracleKind::Classical => {
            let grid = EnergyGrid::new(0.5, 60)?;
            let f: Vec<f64> = grid.energies().iter().map(|e| (-e / t_rel).exp()).collect();
            let rhs = classical_boltzmann_rhs(geometry, &grid, &f)?;
            write_csv(&mut out, geometry, &grid, &rhs)?;
        }
        OracleKind::Master => {
            let systems: Vec<_> = tiny_systems()?
                .iter()
                .map(|me| {
                    json!({
                        "mode": me.mode.name(),
                        "states": me.len(),
                        "uniformity_error": me.uniformity_error(),
                        "detailed_balance_error": me.detailed_balance_error(),
                    })
                })
                .collect();
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&systems).map_err(Error::from)?
            )?;
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Catalog { mode, e_max, out } => {
            let sites = SiteSpace::new(mode, e_max)?;
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path)?;
                    sites.catalog().write_csv(io::BufWriter::new(file))?;
                }
                None => sites.catalog().write_csv(io::stdout().lock())?,
            }
        }
        Command::Run(args) => {
            let p = args.load(None)?;
            let m = run_plan(&p, &args.options(args.out_dir.clone()))?;
            report(&m, &args.out_dir)?;
        }
        Command::Oracle {
            kind,
            geometry,
            n,
            t_rel,
            energy,
        } => oracle(kind, geometry, n, t_rel, energy)?,
        Command::Evaporate { run, gammas } => {
            let mut p = run.load(Some("fig13-14-evaporation"))?;
            if p.kind != ExperimentKind::Evaporation {
                return Err(Failure::Config(format!(
                    "preset `{}` is not an evaporation run",
                    p.name
                )));
            }
            if !gammas.is_empty() {
                if let Some(r) = p.ramp.as_mut() {
                    r.gammas = gammas;
                }
            }
            let m = run_plan(&p, &run.options(run.out_dir.clone()))?;
            report(&m, &run.out_dir)?;
        }
        Command::Reproduce { figure, run } => {
            let mut failed = 0;
            for p in figure_presets(&figure)? {
                let dir = run.out_dir.join(&p.name);
                let m = run_plan(&p, &run.options(dir.clone()))?;
                if report(&m, &dir).is_err() {
                    failed += 1;
                }
            }
            if failed > 0 {
                return Err(Failure::Runtime(format!("{failed} presets had failures")));
            }
        }
        Command::Presets => {
            for p in all_presets() {
                println!("{:32} {:13} {}", p.name, p.kind.name(), p.mode.name());
            }
        }
        Command::Selftest { quick } => {
            let scale = if quick {
                CheckScale::QUICK
            } else {
                CheckScale::FULL
            };
            let results = all_checks(scale);
            for r in &results {
                println!("{r}");
            }
            if results.iter().any(|r| !r.passed) {
                return Err(Failure::Selftest);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("{m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Selftest) => ExitCode::from(4),
    }
}
