//! Per-episode records, window statistics across seeds, and file output.
//!
//! CSV output is byte-stable: fixed column order, `\n` line endings and
//! six significant digits for every real-valued column.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environment::SpeedClass;
use crate::error::{Error, Result};
use crate::simulation::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u32,
    pub coverage: f64,
    pub total_reward: f64,
    pub mean_reward_per_agent: f64,
    pub layer1_count: usize,
    pub layer2_count: usize,
    pub link_count: usize,
    pub epsilon: f64,
}

pub const EPISODE_CSV_HEADER: &str = "episode,coverage,total_reward,mean_reward,layer1,layer2,links,epsilon";

/// `%g`-style formatting with `sig` significant digits.
pub fn format_sig(value: f64, sig: usize) -> String {
    if value == 0.0 {
        return "0".into();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, value);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= sig as i32 {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{value:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn sig6(v: f64) -> String {
    format_sig(v, 6)
}

impl EpisodeMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.episode,
            sig6(self.coverage),
            sig6(self.total_reward),
            sig6(self.mean_reward_per_agent),
            self.layer1_count,
            self.layer2_count,
            self.link_count,
            sig6(self.epsilon)
        )
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(file))
}

/// Write `header` and `rows` to `path`, one line each.
pub fn write_lines<I, S>(path: &Path, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for row in rows {
        writeln!(w, "{}", row.as_ref()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Per-episode CSV.
pub fn write_csv(records: &[EpisodeMetrics], path: &Path) -> Result<()> {
    write_lines(path, EPISODE_CSV_HEADER, records.iter().map(EpisodeMetrics::csv_row))
}

/// Read a file produced by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {msg}"),
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == EPISODE_CSV_HEADER => {}
        other => return Err(bad(1, format!("unexpected header {other:?}"))),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad(i + 2, format!("expected 8 fields, found {}", f.len())));
            }
            let real = |s: &str| s.parse::<f64>().map_err(|e| bad(i + 2, format!("{s:?}: {e}")));
            let int = |s: &str| s.parse::<usize>().map_err(|e| bad(i + 2, format!("{s:?}: {e}")));
            Ok(EpisodeMetrics {
                episode: int(f[0])? as u32,
                coverage: real(f[1])?,
                total_reward: real(f[2])?,
                mean_reward_per_agent: real(f[3])?,
                layer1_count: int(f[4])?,
                layer2_count: int(f[5])?,
                link_count: int(f[6])?,
                epsilon: real(f[7])?,
            })
        })
        .collect()
}

/// Mean and sample standard deviation (`n - 1`); the deviation of fewer
/// than two samples is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub samples: usize,
    pub mean_coverage: f64,
    pub std_coverage: f64,
    pub mean_total_reward: f64,
    pub std_total_reward: f64,
    pub mean_layer1_fraction: f64,
}

impl WindowStats {
    fn from_records(records: &[&EpisodeMetrics]) -> Self {
        let cov: Vec<f64> = records.iter().map(|m| m.coverage).collect();
        let rew: Vec<f64> = records.iter().map(|m| m.total_reward).collect();
        let frac: Vec<f64> = records
            .iter()
            .map(|m| m.layer1_count as f64 / (m.layer1_count + m.layer2_count).max(1) as f64)
            .collect();
        let (mean_coverage, std_coverage) = mean_std(&cov);
        let (mean_total_reward, std_total_reward) = mean_std(&rew);
        Self {
            samples: records.len(),
            mean_coverage,
            std_coverage,
            mean_total_reward,
            std_total_reward,
            mean_layer1_fraction: mean_std(&frac).0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStats {
    pub seed: u64,
    #[serde(flatten)]
    pub stats: WindowStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub window: usize,
    /// Sorted by seed.
    pub per_seed: Vec<SeedStats>,
    /// Statistics over every windowed episode of every seed.
    pub pooled: WindowStats,
}

/// Window statistics over the last `window` episodes of each run.
///
/// Runs are keyed by seed and processed in seed order, so the result does not
/// depend on the order they are passed in.
pub fn aggregate(runs: &[(u64, Vec<EpisodeMetrics>)], window: usize) -> Result<Summary> {
    if window == 0 {
        return Err(Error::Contract("aggregation window must be at least 1".into()));
    }
    if runs.is_empty() || runs.iter().any(|(_, r)| r.is_empty()) {
        return Err(Error::Contract("cannot aggregate an empty metrics stream".into()));
    }
    let mut order: Vec<&(u64, Vec<EpisodeMetrics>)> = runs.iter().collect();
    order.sort_by_key(|(seed, _)| *seed);

    let mut pooled = Vec::new();
    let mut per_seed = Vec::with_capacity(order.len());
    for (seed, records) in order {
        let tail: Vec<&EpisodeMetrics> = records[records.len().saturating_sub(window)..].iter().collect();
        per_seed.push(SeedStats {
            seed: *seed,
            stats: WindowStats::from_records(&tail),
        });
        pooled.extend(tail);
    }
    Ok(Summary {
        window,
        per_seed,
        pooled: WindowStats::from_records(&pooled),
    })
}

/// One point of a density x mobility x model grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub density: usize,
    pub mobility: SpeedClass,
    pub model: Model,
    pub mean_coverage: f64,
    pub std_coverage: f64,
    pub mean_layer1_fraction: f64,
    pub mean_total_reward: f64,
    pub seed_count: usize,
}

pub const SWEEP_CSV_HEADER: &str =
    "density,mobility,model,mean_coverage,std_coverage,mean_layer1_fraction,mean_total_reward,seeds";

impl SweepCell {
    pub fn from_summary(density: usize, mobility: SpeedClass, model: Model, summary: &Summary) -> Self {
        Self {
            density,
            mobility,
            model,
            mean_coverage: summary.pooled.mean_coverage,
            std_coverage: summary.pooled.std_coverage,
            mean_layer1_fraction: summary.pooled.mean_layer1_fraction,
            mean_total_reward: summary.pooled.mean_total_reward,
            seed_count: summary.per_seed.len(),
        }
    }

    pub fn key(&self) -> (usize, SpeedClass, Model) {
        (self.density, self.mobility, self.model)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.density,
            self.mobility.name(),
            self.model.name(),
            sig6(self.mean_coverage),
            sig6(self.std_coverage),
            sig6(self.mean_layer1_fraction),
            sig6(self.mean_total_reward),
            self.seed_count
        )
    }
}

pub fn write_sweep_csv(cells: &[SweepCell], path: &Path) -> Result<()> {
    write_lines(path, SWEEP_CSV_HEADER, cells.iter().map(SweepCell::csv_row))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::io(path, e.into()))?;
    writeln!(w).map_err(io)?;
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(episode: u32, coverage: f64, reward: f64) -> EpisodeMetrics {
        EpisodeMetrics {
            episode,
            coverage,
            total_reward: reward,
            mean_reward_per_agent: reward / 4.0,
            layer1_count: 4,
            layer2_count: 6,
            link_count: 3,
            epsilon: 0.5,
        }
    }

    #[test]
    fn sig_formatting_matches_printf_g() {
        assert_eq!(format_sig(0.0, 6), "0");
        assert_eq!(format_sig(1.0, 6), "1");
        assert_eq!(format_sig(0.625, 6), "0.625");
        assert_eq!(format_sig(1.0 / 3.0, 6), "0.333333");
        assert_eq!(format_sig(-2.5, 6), "-2.5");
        assert_eq!(format_sig(123456.7, 6), "123457");
        assert_eq!(format_sig(1234567.0, 6), "1.23457e+06");
        assert_eq!(format_sig(999999.6, 6), "1e+06");
        assert_eq!(format_sig(0.0001, 6), "0.0001");
        assert_eq!(format_sig(0.00001234, 6), "1.234e-05");
        assert_eq!(format_sig(0.405, 6), "0.405");
    }

    #[test]
    fn constant_stream_has_zero_spread() {
        let run: Vec<_> = (0..10).map(|e| rec(e, 0.6, 1.0)).collect();
        let s = aggregate(&[(1, run)], 5).unwrap();
        assert_eq!(s.pooled.samples, 5);
        assert!((s.pooled.mean_coverage - 0.6).abs() < 1e-15);
        assert_eq!(s.pooled.std_coverage, 0.0);
    }

    #[test]
    fn pooled_mean_of_two_seeds() {
        let a: Vec<_> = (0..4).map(|e| rec(e, 0.4, 0.0)).collect();
        let b: Vec<_> = (0..4).map(|e| rec(e, 0.6, 0.0)).collect();
        let s = aggregate(&[(2, b), (1, a)], 4).unwrap();
        assert!((s.pooled.mean_coverage - 0.5).abs() < 1e-15);
        assert_eq!(s.per_seed[0].seed, 1);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(aggregate(&[], 3).is_err());
        assert!(aggregate(&[(1, vec![])], 3).is_err());
        assert!(aggregate(&[(1, vec![rec(0, 0.5, 0.0)])], 0).is_err());
    }

    #[test]
    fn window_larger_than_run_uses_everything() {
        let run: Vec<_> = (0..3).map(|e| rec(e, e as f64 / 10.0, 0.0)).collect();
        let s = aggregate(&[(1, run)], 100).unwrap();
        assert_eq!(s.pooled.samples, 3);
        assert!((s.pooled.mean_coverage - 0.1).abs() < 1e-15);
    }

    #[test]
    fn empty_record_list_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_csv(&[], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), format!("{EPISODE_CSV_HEADER}\n"));
        assert!(read_csv(&p).unwrap().is_empty());
    }

    #[test]
    fn io_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = write_csv(&[], &blocker.join("sub.csv")).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
    }
}
