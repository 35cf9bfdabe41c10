//! Datasets behind the standard figures, written as CSV for external
//! plotting.
//!
//! | id     | content                                                    |
//! |--------|------------------------------------------------------------|
//! | `fig1` | minimum beamwidth vs carrier frequency for d = 1, 2, 3 m   |
//! | `fig4` | coverage vs episode for every model                        |
//! | `fig5` | total and mean reward vs episode for the learning models   |
//! | `fig6` | Layer 1 / Layer 2 device counts vs density                 |
//! | `fig7` | coverage over density x mobility                           |

use std::path::{Path, PathBuf};

use crate::config::SimConfig;
use crate::environment::SpeedClass;
use crate::error::{Error, Result};
use crate::link_budget::{min_beamwidth, Solution};
use crate::metrics::{format_sig, mean_std, write_lines, EpisodeMetrics, SWEEP_CSV_HEADER};
use crate::simulation::{simulate, Model};
use crate::sweep::{run_sweep, SweepGrid};

pub const FIGURE_IDS: [&str; 5] = ["fig1", "fig4", "fig5", "fig6", "fig7"];

pub const FIG1_DISTANCES_M: [f64; 3] = [1.0, 2.0, 3.0];
pub const FIG1_START_HZ: f64 = 500e9;
pub const FIG1_STOP_HZ: f64 = 600e9;
pub const FIG1_STEP_HZ: f64 = 5e9;
pub const DEFAULT_DENSITIES: [usize; 4] = [10, 20, 40, 80];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
}

impl Figure {
    pub fn id(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
        }
    }
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig4" => Ok(Figure::Fig4),
            "fig5" => Ok(Figure::Fig5),
            "fig6" => Ok(Figure::Fig6),
            "fig7" => Ok(Figure::Fig7),
            other => Err(Error::Config(format!(
                "unknown figure id {other:?}; valid ids: {}",
                FIGURE_IDS.join(", ")
            ))),
        }
    }
}

/// Knobs shared by the simulated figures.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureOptions {
    /// Overrides `simulation.episodes`.
    pub episodes: Option<u32>,
    /// Number of consecutive seeds starting at `simulation.seed`.
    pub seeds: usize,
    pub densities: Vec<usize>,
    pub jobs: usize,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            episodes: None,
            seeds: 20,
            densities: DEFAULT_DENSITIES.to_vec(),
            jobs: 0,
        }
    }
}

impl FigureOptions {
    fn seed_list(&self, base: &SimConfig) -> Result<Vec<u64>> {
        if self.seeds == 0 {
            return Err(Error::Config("figure data needs at least one seed".into()));
        }
        Ok((0..self.seeds as u64)
            .map(|k| base.simulation.seed.wrapping_add(k))
            .collect())
    }

    fn base(&self, config: &SimConfig) -> SimConfig {
        let mut cfg = config.clone();
        if let Some(e) = self.episodes {
            cfg.simulation.episodes = e;
        }
        cfg
    }
}

/// A CSV table: header plus rows, already formatted.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: String,
    pub rows: Vec<String>,
}

impl Table {
    pub fn write(&self, path: &Path) -> Result<()> {
        write_lines(path, &self.header, self.rows.iter())
    }
}

fn g(v: f64) -> String {
    format_sig(v, 6)
}

/// Minimum antenna beamwidth over 500-600 GHz for 1, 2 and 3 m links at the
/// reference bandwidth and target spectral efficiency of `config`.
///
/// Infeasible points (no beam narrow enough) are written as `nan`.
pub fn fig1(config: &SimConfig) -> Result<Table> {
    let radio = &config.radio;
    let mut params = radio.link_params()?;
    let steps = ((FIG1_STOP_HZ - FIG1_START_HZ) / FIG1_STEP_HZ).round() as usize;
    let mut rows = Vec::with_capacity((steps + 1) * FIG1_DISTANCES_M.len());
    for k in 0..=steps {
        let f = FIG1_START_HZ + k as f64 * FIG1_STEP_HZ;
        params.carrier_frequency_hz = f;
        for &d in &FIG1_DISTANCES_M {
            let bw = match min_beamwidth(
                &params,
                radio.reference_bandwidth_hz,
                d,
                radio.target_spectral_efficiency,
            )? {
                Solution::Feasible(b) => b,
                Solution::Infeasible => f64::NAN,
            };
            rows.push(format!("{},{},{}", g(f / 1e9), g(d), g(bw)));
        }
    }
    Ok(Table {
        header: "frequency_ghz,distance_m,beamwidth_deg".into(),
        rows,
    })
}

fn seed_runs(base: &SimConfig, model: Model, seeds: &[u64]) -> Result<Vec<Vec<EpisodeMetrics>>> {
    seeds
        .iter()
        .map(|&s| {
            let mut cfg = base.clone();
            cfg.simulation.model = model;
            cfg.simulation.seed = s;
            simulate(&cfg)
        })
        .collect()
}

/// Per-episode mean of `field` across seed runs of equal length.
fn episode_means(runs: &[Vec<EpisodeMetrics>], field: impl Fn(&EpisodeMetrics) -> f64) -> Vec<(f64, f64)> {
    let episodes = runs[0].len();
    (0..episodes)
        .map(|e| {
            let v: Vec<f64> = runs.iter().map(|r| field(&r[e])).collect();
            mean_std(&v)
        })
        .collect()
}

/// Coverage per episode for every model, averaged over seeds.
pub fn fig4(config: &SimConfig, opts: &FigureOptions) -> Result<Table> {
    let base = opts.base(config);
    let seeds = opts.seed_list(&base)?;
    let mut rows = Vec::new();
    for model in Model::ALL {
        let runs = seed_runs(&base, model, &seeds)?;
        for (e, (mean, std)) in episode_means(&runs, |m| m.coverage).into_iter().enumerate() {
            rows.push(format!("{},{e},{},{}", model.name(), g(mean), g(std)));
        }
    }
    Ok(Table {
        header: "model,episode,coverage,coverage_std".into(),
        rows,
    })
}

/// Total and per-agent reward per episode for the two learning models.
pub fn fig5(config: &SimConfig, opts: &FigureOptions) -> Result<Table> {
    let base = opts.base(config);
    let seeds = opts.seed_list(&base)?;
    let mut rows = Vec::new();
    for model in [Model::Model1, Model::Model2] {
        let runs = seed_runs(&base, model, &seeds)?;
        let total = episode_means(&runs, |m| m.total_reward);
        let mean = episode_means(&runs, |m| m.mean_reward_per_agent);
        for (e, (t, m)) in total.iter().zip(&mean).enumerate() {
            rows.push(format!("{},{e},{},{},{}", model.name(), g(t.0), g(t.1), g(m.0)));
        }
    }
    Ok(Table {
        header: "model,episode,total_reward,total_reward_std,mean_reward".into(),
        rows,
    })
}

/// Average Layer 1 and Layer 2 counts per density, over every episode of
/// every seed. The split depends only on geometry, so the no-relay model is
/// used to produce it.
pub fn fig6(config: &SimConfig, opts: &FigureOptions) -> Result<Table> {
    let base = opts.base(config);
    let seeds = opts.seed_list(&base)?;
    let mut rows = Vec::new();
    for &n in &opts.densities {
        let mut cfg = base.clone();
        cfg.scene.device_count = n;
        let runs = seed_runs(&cfg, Model::NoD2d, &seeds)?;
        let samples: usize = runs.iter().map(Vec::len).sum();
        let layer1: usize = runs.iter().flatten().map(|m| m.layer1_count).sum();
        let mean1 = layer1 as f64 / samples as f64;
        let mean2 = n as f64 - mean1;
        rows.push(format!("{n},{},{},{}", g(mean1), g(mean2), g(mean1 / n as f64)));
    }
    Ok(Table {
        header: "density,layer1,layer2,layer1_fraction".into(),
        rows,
    })
}

/// Windowed coverage over density x mobility for `models`.
pub fn fig7(config: &SimConfig, opts: &FigureOptions, models: &[Model]) -> Result<Table> {
    let base = opts.base(config);
    let grid = SweepGrid {
        densities: opts.densities.clone(),
        mobilities: vec![SpeedClass::Static, SpeedClass::Slow, SpeedClass::Fast],
        models: models.to_vec(),
        seeds: opts.seed_list(&base)?,
        window: None,
    };
    let report = run_sweep(&base, &grid, opts.jobs)?;
    if let Some(f) = report.failures.first() {
        return Err(Error::Training(format!(
            "run density={} mobility={} model={} seed={} failed: {}",
            f.density,
            f.mobility.name(),
            f.model.name(),
            f.seed,
            f.message
        )));
    }
    Ok(Table {
        header: SWEEP_CSV_HEADER.into(),
        rows: report.cells.iter().map(|c| c.cell.csv_row()).collect(),
    })
}

/// Build one figure's table. `models` only affects `fig7`.
pub fn build(figure: Figure, config: &SimConfig, opts: &FigureOptions, models: &[Model]) -> Result<Table> {
    match figure {
        Figure::Fig1 => fig1(config),
        Figure::Fig4 => fig4(config, opts),
        Figure::Fig5 => fig5(config, opts),
        Figure::Fig6 => fig6(config, opts),
        Figure::Fig7 => fig7(config, opts, models),
    }
}

/// Build `figure` and write it to `<out_dir>/<id>.csv`.
pub fn write_figure(
    figure: Figure,
    config: &SimConfig,
    opts: &FigureOptions,
    models: &[Model],
    out_dir: &Path,
) -> Result<PathBuf> {
    let table = build(figure, config, opts, models)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join(format!("{}.csv", figure.id()));
    table.write(&path)?;
    Ok(path)
}
