//! THz link budget.
//!
//! All losses are combined in the dB domain; the linear SNR is formed once per
//! link evaluation and fed to the Shannon rate. Frequencies are in Hz,
//! distances in meters, powers in dBm.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Aperture constant of the pencil-beam gain approximation, in square degrees.
const GAIN_APERTURE_DEG2: f64 = 52_525.0;

/// Narrowest beam considered by [`min_beamwidth`].
pub const BEAMWIDTH_FLOOR_DEG: f64 = 0.5;
pub const BEAMWIDTH_MAX_DEG: f64 = 360.0;
const BEAMWIDTH_TOLERANCE_DEG: f64 = 0.01;
const RANGE_TOLERANCE_M: f64 = 1e-3;

/// Reference conditions of the embedded absorption table.
pub const REFERENCE_HUMIDITY: f64 = 0.6;
pub const REFERENCE_TEMPERATURE_K: f64 = 296.0;

/// Anchor frequency of the embedded absorption table.
pub const ANCHOR_FREQUENCY_HZ: f64 = 575e9;

/// Calibrated absorption coefficient at the anchor frequency (1/m).
///
/// Solves `max_range == 3 m` for 0 dBm, 10 degree beams at both ends,
/// 250 MHz of bandwidth and a 10 bps/Hz target. Regenerate with
/// `udld calibrate`.
pub const DEFAULT_ANCHOR_COEFFICIENT: f64 = 1.315_973_400_698_816_6;

/// Relative shape of water-vapour absorption across 500-600 GHz, normalised
/// to 1 at the anchor. The peak sits on the 557 GHz water line.
const DEFAULT_SHAPE: [(f64, f64); 9] = [
    (500e9, 0.30),
    (520e9, 0.38),
    (540e9, 0.62),
    (550e9, 1.05),
    (557e9, 2.40),
    (565e9, 1.35),
    (575e9, 1.00),
    (590e9, 0.86),
    (600e9, 0.92),
];

/// Frequency to absorption coefficient table, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionTable {
    /// Relative humidity the coefficients were tabulated at.
    pub reference_humidity: f64,
    /// `(frequency_hz, k_per_m)` pairs, strictly increasing in frequency.
    pub points: Vec<(f64, f64)>,
}

impl AbsorptionTable {
    pub fn new(points: Vec<(f64, f64)>, reference_humidity: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("absorption table is empty".into()));
        }
        if !(reference_humidity > 0.0 && reference_humidity <= 1.0) {
            return Err(Error::Config(format!(
                "absorption table reference humidity must be in (0, 1], got {reference_humidity}"
            )));
        }
        for (i, &(f, k)) in points.iter().enumerate() {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::Config(format!("absorption table row {i}: bad frequency {f}")));
            }
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::Config(format!("absorption table row {i}: bad coefficient {k}")));
            }
            if i > 0 && points[i - 1].0 >= f {
                return Err(Error::Config(format!(
                    "absorption table row {i}: frequencies must be strictly increasing"
                )));
            }
        }
        Ok(Self {
            reference_humidity,
            points,
        })
    }

    /// Embedded 500-600 GHz table scaled so the anchor frequency has
    /// coefficient `anchor_k`.
    pub fn with_anchor(anchor_k: f64) -> Self {
        Self {
            reference_humidity: REFERENCE_HUMIDITY,
            points: DEFAULT_SHAPE.iter().map(|&(f, s)| (f, s * anchor_k)).collect(),
        }
    }

    pub fn vacuum() -> Self {
        Self {
            reference_humidity: REFERENCE_HUMIDITY,
            points: vec![(1.0, 0.0), (1e15, 0.0)],
        }
    }

    /// Parse a two-column `frequency_hz k_per_m` text table. Blank lines and
    /// lines starting with `#` are skipped; columns may be separated by
    /// whitespace or commas.
    pub fn parse(text: &str, reference_humidity: f64) -> std::result::Result<Self, String> {
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if cols.len() != 2 {
                return Err(format!("line {}: expected 2 columns, found {}", lineno + 1, cols.len()));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {s:?}: {e}", lineno + 1));
            points.push((parse(cols[0])?, parse(cols[1])?));
        }
        Self::new(points, reference_humidity).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path, reference_humidity: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, reference_humidity).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn band(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    /// Coefficient at `frequency` and the table's reference humidity.
    pub fn coefficient(&self, frequency: f64) -> Result<f64> {
        let (lo, hi) = self.band();
        if !(frequency >= lo && frequency <= hi) {
            return Err(Error::Config(format!(
                "frequency {frequency} Hz outside absorption table band [{lo}, {hi}] Hz"
            )));
        }
        let idx = self.points.partition_point(|&(f, _)| f < frequency);
        if idx < self.points.len() && self.points[idx].0 == frequency {
            return Ok(self.points[idx].1);
        }
        let (f0, k0) = self.points[idx - 1];
        let (f1, k1) = self.points[idx];
        Ok(k0 + (k1 - k0) * (frequency - f0) / (f1 - f0))
    }

    /// Multiply every coefficient by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            reference_humidity: self.reference_humidity,
            points: self.points.iter().map(|&(f, k)| (f, k * factor)).collect(),
        }
    }
}

impl Default for AbsorptionTable {
    fn default() -> Self {
        Self::with_anchor(DEFAULT_ANCHOR_COEFFICIENT)
    }
}

/// Radio constants shared by every link in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBudgetParams {
    pub carrier_frequency_hz: f64,
    pub transmit_power_dbm: f64,
    pub beamwidth_deg: f64,
    pub relative_humidity: f64,
    pub temperature_k: f64,
    pub noise_density_dbm_hz: f64,
    pub absorption: AbsorptionTable,
}

impl Default for LinkBudgetParams {
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 575e9,
            transmit_power_dbm: 0.0,
            beamwidth_deg: 10.0,
            relative_humidity: REFERENCE_HUMIDITY,
            temperature_k: REFERENCE_TEMPERATURE_K,
            noise_density_dbm_hz: -174.0,
            absorption: AbsorptionTable::default(),
        }
    }
}

impl LinkBudgetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_frequency_hz > 0.0) {
            return Err(Error::domain("carrier frequency", self.carrier_frequency_hz));
        }
        if !(self.beamwidth_deg > 0.0 && self.beamwidth_deg <= BEAMWIDTH_MAX_DEG) {
            return Err(Error::domain("beamwidth", self.beamwidth_deg));
        }
        if !(0.0..=1.0).contains(&self.relative_humidity) {
            return Err(Error::domain("relative humidity", self.relative_humidity));
        }
        if !(self.temperature_k > 0.0) {
            return Err(Error::domain("temperature", self.temperature_k));
        }
        if !self.transmit_power_dbm.is_finite() || !self.noise_density_dbm_hz.is_finite() {
            return Err(Error::Config("transmit power and noise density must be finite".into()));
        }
        self.absorption.coefficient(self.carrier_frequency_hz)?;
        Ok(())
    }

    pub fn with_beamwidth(&self, beamwidth_deg: f64) -> Self {
        Self {
            beamwidth_deg,
            ..self.clone()
        }
    }

    /// Received power at `distance` with matched beams at both ends.
    pub fn received_power_dbm(&self, distance: f64) -> Result<f64> {
        let gain = antenna_gain(self.beamwidth_deg)?;
        let spreading = spreading_loss(self.carrier_frequency_hz, distance)?;
        let absorption = absorption_loss(
            &self.absorption,
            self.carrier_frequency_hz,
            distance,
            self.relative_humidity,
            self.temperature_k,
        )?;
        Ok(self.transmit_power_dbm + 2.0 * gain - absorption - spreading)
    }

    pub fn noise_power_dbm(&self, bandwidth: f64) -> Result<f64> {
        if !(bandwidth > 0.0) {
            return Err(Error::domain("bandwidth", bandwidth));
        }
        Ok(self.noise_density_dbm_hz + 10.0 * bandwidth.log10())
    }

    pub fn snr_db(&self, bandwidth: f64, distance: f64) -> Result<f64> {
        Ok(self.received_power_dbm(distance)? - self.noise_power_dbm(bandwidth)?)
    }

    pub fn link_quality(&self, bandwidth: f64, distance: f64) -> Result<LinkQuality> {
        Ok(LinkQuality {
            distance,
            bandwidth,
            rate: capacity(self, bandwidth, distance)?,
            received_power: self.received_power_dbm(distance)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkQuality {
    pub distance: f64,
    pub bandwidth: f64,
    /// Achievable rate in bits per second.
    pub rate: f64,
    pub received_power: f64,
}

/// Outcome of the beamwidth and range solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solution {
    Feasible(f64),
    Infeasible,
}

impl Solution {
    pub fn value(self) -> Option<f64> {
        match self {
            Solution::Feasible(v) => Some(v),
            Solution::Infeasible => None,
        }
    }
}

/// Pencil-beam antenna gain in dBi for a symmetric beam of `beamwidth` degrees.
pub fn antenna_gain(beamwidth: f64) -> Result<f64> {
    if !(beamwidth > 0.0 && beamwidth <= BEAMWIDTH_MAX_DEG) {
        return Err(Error::domain("beamwidth", beamwidth));
    }
    Ok(10.0 * (GAIN_APERTURE_DEG2 / (beamwidth * beamwidth)).log10())
}

/// Inverse of [`antenna_gain`].
pub fn beamwidth_for_gain(gain_dbi: f64) -> Result<f64> {
    let beamwidth = (GAIN_APERTURE_DEG2 / 10f64.powf(gain_dbi / 10.0)).sqrt();
    if !(beamwidth > 0.0 && beamwidth <= BEAMWIDTH_MAX_DEG) {
        return Err(Error::domain("gain", gain_dbi));
    }
    Ok(beamwidth)
}

/// Free-space path loss in dB.
pub fn spreading_loss(frequency: f64, distance: f64) -> Result<f64> {
    if !(frequency > 0.0) {
        return Err(Error::domain("frequency", frequency));
    }
    if !(distance > 0.0) {
        return Err(Error::domain("distance", distance));
    }
    Ok(20.0 * (4.0 * std::f64::consts::PI * distance * frequency / SPEED_OF_LIGHT).log10())
}

/// Molecular absorption loss in dB.
///
/// The tabulated coefficient is scaled linearly with humidity relative to the
/// table's reference humidity. Temperature has no effect (flat model).
pub fn absorption_loss(
    table: &AbsorptionTable,
    frequency: f64,
    distance: f64,
    humidity: f64,
    temperature: f64,
) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::domain("distance", distance));
    }
    if !(0.0..=1.0).contains(&humidity) {
        return Err(Error::domain("relative humidity", humidity));
    }
    if !(temperature > 0.0) {
        return Err(Error::domain("temperature", temperature));
    }
    let k = table.coefficient(frequency)? * humidity / table.reference_humidity;
    Ok(10.0 * std::f64::consts::LOG10_E * k * distance)
}

/// Achievable rate `B log2(1 + SNR)` in bits per second.
pub fn capacity(params: &LinkBudgetParams, bandwidth: f64, distance: f64) -> Result<f64> {
    let snr_db = params.snr_db(bandwidth, distance)?;
    // ln_1p keeps weak links distinguishable instead of rounding to zero.
    Ok(bandwidth * 10f64.powf(snr_db / 10.0).ln_1p() / std::f64::consts::LN_2)
}

/// Spectral efficiency in bps/Hz.
pub fn spectral_efficiency(params: &LinkBudgetParams, bandwidth: f64, distance: f64) -> Result<f64> {
    Ok(capacity(params, bandwidth, distance)? / bandwidth)
}

/// SNR in dB needed for `target` bps/Hz.
pub fn required_snr_db(target_spectral_efficiency: f64) -> f64 {
    10.0 * (2f64.powf(target_spectral_efficiency) - 1.0).log10()
}

/// Widest beam (same at both ends) that still reaches `target` bps/Hz at
/// `distance`, i.e. the least directivity the link needs.
///
/// Narrower beams carry more gain, so every beam between
/// [`BEAMWIDTH_FLOOR_DEG`] and the returned value meets the target. The
/// params' own beamwidth is ignored.
pub fn min_beamwidth(
    params: &LinkBudgetParams,
    bandwidth: f64,
    distance: f64,
    target_spectral_efficiency: f64,
) -> Result<Solution> {
    let target = target_spectral_efficiency * bandwidth;
    let meets = |bw: f64| -> Result<bool> { Ok(capacity(&params.with_beamwidth(bw), bandwidth, distance)? >= target) };
    if !meets(BEAMWIDTH_FLOOR_DEG)? {
        return Ok(Solution::Infeasible);
    }
    if meets(BEAMWIDTH_MAX_DEG)? {
        return Ok(Solution::Feasible(BEAMWIDTH_MAX_DEG));
    }
    let (mut lo, mut hi) = (BEAMWIDTH_FLOOR_DEG, BEAMWIDTH_MAX_DEG);
    while hi - lo > BEAMWIDTH_TOLERANCE_DEG {
        let mid = 0.5 * (lo + hi);
        if meets(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Solution::Feasible(lo))
}

/// Largest distance at which the link still reaches `target` bps/Hz.
pub fn max_range(params: &LinkBudgetParams, bandwidth: f64, target_spectral_efficiency: f64) -> Result<Solution> {
    let target = target_spectral_efficiency * bandwidth;
    let meets = |d: f64| -> Result<bool> { Ok(capacity(params, bandwidth, d)? >= target) };
    let mut lo = RANGE_TOLERANCE_M;
    if !meets(lo)? {
        return Ok(Solution::Infeasible);
    }
    let mut hi = 2.0 * lo;
    while meets(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Ok(Solution::Feasible(f64::INFINITY));
        }
    }
    while hi - lo > RANGE_TOLERANCE_M {
        let mid = 0.5 * (lo + hi);
        if meets(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Solution::Feasible(lo))
}

/// Absorption coefficient at the anchor frequency for which a link with
/// `params` reaches exactly `target` bps/Hz at `range`.
///
/// Solved in closed form: the absorption budget is whatever is left of the
/// link margin after spreading loss and the required SNR. The table shape of
/// `params.absorption` is kept and only its scale changes.
pub fn calibrate_anchor(
    params: &LinkBudgetParams,
    bandwidth: f64,
    target_spectral_efficiency: f64,
    range: f64,
) -> Result<Solution> {
    let vacuum = LinkBudgetParams {
        absorption: AbsorptionTable::vacuum(),
        ..params.clone()
    };
    let margin_db = vacuum.snr_db(bandwidth, range)? - required_snr_db(target_spectral_efficiency);
    if margin_db < 0.0 {
        return Ok(Solution::Infeasible);
    }
    let shape_at_carrier = params.absorption.coefficient(params.carrier_frequency_hz)?
        / params.absorption.coefficient(ANCHOR_FREQUENCY_HZ)?;
    let humidity_scale = params.relative_humidity / params.absorption.reference_humidity;
    let k_carrier = margin_db / (10.0 * std::f64::consts::LOG10_E * range);
    Ok(Solution::Feasible(k_carrier / (shape_at_carrier * humidity_scale)))
}
