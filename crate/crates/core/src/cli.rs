//! `udld` command line: `run`, `sweep`, `figdata` and `calibrate`.
//!
//! Exit codes: 0 success, 1 usage, 2 configuration, 3 runtime.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{apply_override, SimConfig};
use crate::environment::SpeedClass;
use crate::error::Error;
use crate::figdata::{write_figure, Figure, FigureOptions, DEFAULT_DENSITIES};
use crate::link_budget::{calibrate_anchor, max_range, Solution};
use crate::metrics::{aggregate, write_csv, write_json, write_sweep_csv, Summary};
use crate::simulation::{Model, Simulation};
use crate::sweep::{run_sweep, RunFailure, SweepGrid};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "udld",
    version,
    about = "Two-layer D2D relaying simulator for indoor THz rooms"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one model on one seed; writes episodes.csv and summary.json.
    Run(RunArgs),
    /// Run a density x mobility x model grid over several seeds.
    Sweep(SweepArgs),
    /// Write the dataset behind one figure (fig1, fig4, fig5, fig6, fig7).
    Figdata(FigdataArgs),
    /// Solve for the absorption anchor that puts the service range at --range.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config leaf, e.g. --set learning.learning_rate=0.02 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Random seed (falls back to UDLD_SEED, then the config).
    #[arg(long, env = "UDLD_SEED")]
    pub seed: Option<u64>,
    /// Episodes per run.
    #[arg(long)]
    pub episodes: Option<u32>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// model1, model2, central or no_d2d.
    #[arg(long)]
    pub model: Option<Model>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Device counts.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_DENSITIES.to_vec())]
    pub densities: Vec<usize>,
    /// Mobility classes.
    #[arg(long, value_delimiter = ',', default_values = ["static", "slow", "fast"])]
    pub mobilities: Vec<SpeedClass>,
    /// Models.
    #[arg(long = "model", value_delimiter = ',', default_values = ["model1"])]
    pub models: Vec<Model>,
    /// Number of consecutive seeds, starting at the run seed.
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    /// Final episodes per run used for statistics (config window by default).
    #[arg(long)]
    pub window: Option<usize>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct FigdataArgs {
    /// Figure id.
    pub figure: String,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of consecutive seeds, starting at the run seed.
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    /// Device counts for fig6 and fig7.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_DENSITIES.to_vec())]
    pub densities: Vec<usize>,
    /// Models for fig7.
    #[arg(long = "model", value_delimiter = ',', default_values = ["model1", "model2"])]
    pub models: Vec<Model>,
    /// Worker threads for fig7 (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// JSON config; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config leaf (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Service range to calibrate to, in metres.
    #[arg(long, default_value_t = 3.0)]
    pub range: f64,
    /// Write the calibrated config here instead of only printing the anchor.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// An error paired with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: e.to_string(),
        }
    }

    fn usage(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: e.to_string(),
        }
    }
}

/// Errors from running a validated config are runtime failures unless they
/// are configuration problems discovered late.
fn classify(e: Error) -> Failure {
    match e {
        Error::Config(_) | Error::Parse { .. } => Failure::config(e),
        _ => Failure::runtime(e),
    }
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<SimConfig, Failure> {
    match path {
        Some(p) => SimConfig::load(p, overrides).map_err(Failure::config),
        None => {
            let mut value = serde_json::to_value(SimConfig::default()).expect("default config serializes");
            for o in overrides {
                apply_override(&mut value, o).map_err(Failure::config)?;
            }
            SimConfig::from_json_value(value).map_err(Failure::config)
        }
    }
}

impl CommonArgs {
    /// Config with `--set`, `--seed` and `--episodes` applied, in that order.
    fn resolve(&self, extra: &[String]) -> Result<SimConfig, Failure> {
        let mut overrides = self.overrides.clone();
        overrides.extend_from_slice(extra);
        if let Some(s) = self.seed {
            overrides.push(format!("simulation.seed={s}"));
        }
        if let Some(e) = self.episodes {
            overrides.push(format!("simulation.episodes={e}"));
        }
        load_config(self.config.as_deref(), &overrides)
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::runtime(Error::io(dir, e)))
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    model: Model,
    seed: u64,
    episodes: u32,
    summary: &'a Summary,
}

fn run(args: &RunArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let extra: Vec<String> = args.model.iter().map(|m| format!("simulation.model=\"{m}\"")).collect();
    let cfg = args.common.resolve(&extra)?;
    let mut sim = Simulation::new(&cfg).map_err(classify)?;
    let mut records = Vec::with_capacity(cfg.simulation.episodes as usize);
    for _ in 0..cfg.simulation.episodes {
        records.push(sim.step().map_err(classify)?.metrics);
    }
    let dir = &args.common.out;
    create_dir(dir)?;
    write_csv(&records, &dir.join("episodes.csv")).map_err(Failure::runtime)?;
    let summary = aggregate(&[(cfg.simulation.seed, records)], cfg.simulation.summary_window()).map_err(classify)?;
    let doc = RunSummary {
        model: cfg.simulation.model,
        seed: cfg.simulation.seed,
        episodes: cfg.simulation.episodes,
        summary: &summary,
    };
    write_json(&doc, &dir.join("summary.json")).map_err(Failure::runtime)?;
    if let Some(learner) = sim.learner() {
        let path = dir.join("weights.json");
        std::fs::write(&path, learner.weights.to_json() + "\n").map_err(|e| Failure::runtime(Error::io(&path, e)))?;
    }
    let _ = writeln!(
        out,
        "{} seed {}: mean coverage {:.4} over the last {} episodes -> {}",
        cfg.simulation.model,
        cfg.simulation.seed,
        summary.pooled.mean_coverage,
        summary.window,
        dir.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepDoc<'a> {
    cells: Vec<crate::metrics::SweepCell>,
    failures: &'a [RunFailure],
}

fn sweep(args: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), Failure> {
    let cfg = args.common.resolve(&[])?;
    if args.seeds == 0 {
        return Err(Failure::config("--seeds must be at least 1"));
    }
    let grid = SweepGrid {
        densities: args.densities.clone(),
        mobilities: args.mobilities.clone(),
        models: args.models.clone(),
        seeds: (0..args.seeds as u64)
            .map(|k| cfg.simulation.seed.wrapping_add(k))
            .collect(),
        window: args.window,
    };
    let report = run_sweep(&cfg, &grid, args.jobs).map_err(classify)?;
    let dir = &args.common.out;
    create_dir(dir)?;
    let cells = report.sweep_cells();
    write_sweep_csv(&cells, &dir.join("sweep.csv")).map_err(Failure::runtime)?;
    write_json(
        &SweepDoc {
            cells,
            failures: &report.failures,
        },
        &dir.join("sweep.json"),
    )
    .map_err(Failure::runtime)?;
    let _ = writeln!(
        out,
        "{} of {} cells complete -> {}",
        report.cells.len(),
        grid.cell_count(),
        dir.display()
    );
    if report.failures.is_empty() {
        return Ok(());
    }
    for f in &report.failures {
        let _ = writeln!(
            err,
            "failed: density={} mobility={} model={} seed={}: {}",
            f.density,
            f.mobility.name(),
            f.model,
            f.seed,
            f.message
        );
    }
    Err(Failure::runtime(format!("{} run(s) failed", report.failures.len())))
}

fn figdata(args: &FigdataArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let figure: Figure = args.figure.parse().map_err(Failure::usage)?;
    let cfg = args.common.resolve(&[])?;
    let opts = FigureOptions {
        episodes: args.common.episodes,
        seeds: args.seeds,
        densities: args.densities.clone(),
        jobs: args.jobs,
    };
    let path = write_figure(figure, &cfg, &opts, &args.models, &args.common.out).map_err(classify)?;
    let _ = writeln!(out, "{}", path.display());
    Ok(())
}

fn calibrate(args: &CalibrateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut cfg = load_config(args.config.as_deref(), &args.overrides)?;
    if !(args.range > 0.0 && args.range.is_finite()) {
        return Err(Failure::config(format!(
            "--range must be a positive distance, got {}",
            args.range
        )));
    }
    let radio = &cfg.radio;
    let params = radio.link_params().map_err(Failure::config)?;
    let anchor = match calibrate_anchor(
        &params,
        radio.reference_bandwidth_hz,
        radio.target_spectral_efficiency,
        args.range,
    )
    .map_err(classify)?
    {
        Solution::Feasible(k) => k,
        Solution::Infeasible => {
            return Err(Failure::config(format!(
                "{} bps/Hz is out of reach at {} m even without absorption",
                radio.target_spectral_efficiency, args.range
            )))
        }
    };
    cfg.radio.absorption_anchor_per_m = anchor;
    cfg.radio.absorption_table_path = None;
    let calibrated = cfg.radio.link_params().map_err(Failure::config)?;
    let range = max_range(
        &calibrated,
        cfg.radio.reference_bandwidth_hz,
        cfg.radio.target_spectral_efficiency,
    )
    .map_err(classify)?
    .value()
    .unwrap_or(f64::NAN);
    let _ = writeln!(out, "absorption_anchor_per_m = {anchor:.17}");
    let _ = writeln!(out, "max_range_m = {range:.4}");
    if let Some(path) = &args.out {
        std::fs::write(path, cfg.to_json_pretty() + "\n").map_err(|e| Failure::runtime(Error::io(path, e)))?;
    }
    Ok(())
}

/// Parse `argv` and execute; returns the process exit code.
pub fn main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let text = e.render().to_string();
            if informational {
                let _ = write!(out, "{text}");
                return EXIT_OK;
            }
            let _ = write!(err, "{text}");
            return EXIT_USAGE;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run(a, out),
        Command::Sweep(a) => sweep(a, out, err),
        Command::Figdata(a) => figdata(a, out),
        Command::Calibrate(a) => calibrate(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (u8, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = main_with(std::iter::once("udld").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn help_lists_every_flag() {
        let (code, out, _) = call(&["run", "--help"]);
        assert_eq!(code, EXIT_OK);
        for flag in ["--config", "--set", "--seed", "--episodes", "--out", "--model"] {
            assert!(out.contains(flag), "{flag} missing from:\n{out}");
        }
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(call(&["run", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(call(&[]).0, EXIT_USAGE);
    }

    #[test]
    fn unknown_figure_lists_ids() {
        let (code, _, err) = call(&["figdata", "fig9"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("fig1") && err.contains("fig7"), "{err}");
    }

    #[test]
    fn missing_config_is_a_config_error() {
        let (code, _, err) = call(&["run", "--config", "/nonexistent/base.json"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("/nonexistent/base.json"), "{err}");
    }

    #[test]
    fn bad_override_is_a_config_error() {
        let (code, _, err) = call(&["calibrate", "--set", "learning.learning_rate=7"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("learning.learning_rate"), "{err}");
    }

    #[test]
    fn calibrate_prints_the_default_anchor() {
        let (code, out, _) = call(&["calibrate"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("absorption_anchor_per_m = 1.3159734"), "{out}");
        assert!(out.contains("max_range_m = 3.0000"), "{out}");
    }
}
