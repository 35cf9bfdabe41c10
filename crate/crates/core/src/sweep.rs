//! Density x mobility x model grids run over many seeds.
//!
//! Each (cell, seed) run owns its scene and random streams, so runs are
//! scheduled on a rayon pool in any order and the result is still
//! deterministic. Cells are reported sorted by (density, mobility, model).

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::SimConfig;
use crate::environment::SpeedClass;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, EpisodeMetrics, Summary, SweepCell};
use crate::simulation::{simulate, Model};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub densities: Vec<usize>,
    pub mobilities: Vec<SpeedClass>,
    pub models: Vec<Model>,
    pub seeds: Vec<u64>,
    /// Episodes per cell used for statistics; the config's summary window
    /// when `None`.
    pub window: Option<usize>,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("densities", self.densities.is_empty()),
            ("mobilities", self.mobilities.is_empty()),
            ("models", self.models.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("sweep grid has no {name}")));
        }
        if self.densities.contains(&0) {
            return Err(Error::Config("sweep densities must be at least 1".into()));
        }
        if self.window == Some(0) {
            return Err(Error::Config("sweep window must be at least 1".into()));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.densities.len() * self.mobilities.len() * self.models.len()
    }

    pub fn run_count(&self) -> usize {
        self.cell_count() * self.seeds.len()
    }

    /// Config for one run of the grid.
    pub fn config_for(
        &self,
        base: &SimConfig,
        density: usize,
        mobility: SpeedClass,
        model: Model,
        seed: u64,
    ) -> SimConfig {
        let mut cfg = base.clone();
        cfg.scene.device_count = density;
        cfg.scene.mobility = mobility;
        cfg.simulation.model = model;
        cfg.simulation.seed = seed;
        cfg
    }
}

/// A run that did not complete.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub density: usize,
    pub mobility: SpeedClass,
    pub model: Model,
    pub seed: u64,
    pub message: String,
}

/// Aggregated statistics of one completed cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub cell: SweepCell,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    /// Cells whose every seed completed, sorted by key.
    pub cells: Vec<CellResult>,
    /// Sorted by (density, mobility, model, seed).
    pub failures: Vec<RunFailure>,
}

impl SweepReport {
    pub fn sweep_cells(&self) -> Vec<SweepCell> {
        self.cells.iter().map(|c| c.cell.clone()).collect()
    }

    pub fn cell(&self, density: usize, mobility: SpeedClass, model: Model) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.cell.key() == (density, mobility, model))
    }
}

type CellKey = (usize, SpeedClass, Model);

/// Run every (cell, seed) pair of `grid` on at most `jobs` threads
/// (0 = rayon's default).
///
/// A failing run drops its cell from `cells` and is listed in `failures`;
/// the other cells are still aggregated.
pub fn run_sweep(base: &SimConfig, grid: &SweepGrid, jobs: usize) -> Result<SweepReport> {
    grid.validate()?;
    let window = grid.window.unwrap_or_else(|| base.simulation.summary_window());

    let mut jobs_list = Vec::with_capacity(grid.run_count());
    for &d in &grid.densities {
        for &m in &grid.mobilities {
            for &model in &grid.models {
                for &seed in &grid.seeds {
                    jobs_list.push(((d, m, model), seed));
                }
            }
        }
    }
    // Reject a bad base config once instead of once per run.
    let (key, seed) = jobs_list[0];
    grid.config_for(base, key.0, key.1, key.2, seed).validate()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    let results: Vec<(CellKey, u64, Result<Vec<EpisodeMetrics>>)> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(key, seed)| {
                let cfg = grid.config_for(base, key.0, key.1, key.2, seed);
                (key, seed, simulate(&cfg))
            })
            .collect()
    });

    let mut runs: BTreeMap<CellKey, Vec<(u64, Vec<EpisodeMetrics>)>> = BTreeMap::new();
    let mut failed: BTreeSet<CellKey> = BTreeSet::new();
    let mut failures = Vec::new();
    for (key, seed, result) in results {
        match result {
            Ok(metrics) => runs.entry(key).or_default().push((seed, metrics)),
            Err(e) => {
                failed.insert(key);
                failures.push(RunFailure {
                    density: key.0,
                    mobility: key.1,
                    model: key.2,
                    seed,
                    message: e.to_string(),
                });
            }
        }
    }

    let mut cells = Vec::new();
    for (key, seed_runs) in runs {
        if failed.contains(&key) {
            continue;
        }
        let summary = aggregate(&seed_runs, window)?;
        cells.push(CellResult {
            cell: SweepCell::from_summary(key.0, key.1, key.2, &summary),
            summary,
        });
    }
    failures.sort_by_key(|f| (f.density, f.mobility, f.model, f.seed));
    Ok(SweepReport { cells, failures })
}
