//! Scenario parameters and the value types shared by every stage of the
//! detection pipeline.
//!
//! Indices are 0-based: devices `0..N`, delays `0..=max_delay`. All powers are
//! normalized so that the working noise variance is one; the physical noise
//! power, transmit power and path loss are folded into the large-scale gains.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// How active devices pick their symbol delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DelayLaw {
    /// Uniform over `0..=max_delay`.
    #[default]
    Uniform,
    /// Every active device uses the same delay.
    Fixed(usize),
}

/// All parameters of one random-access scenario and of the detectors run on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of potential devices `N`.
    pub num_devices: usize,
    /// Number of active devices `K` per coherence block.
    pub num_active: usize,
    /// Preamble length `L` in symbols.
    pub preamble_len: usize,
    /// Largest symbol delay `tau_max`.
    pub max_delay: usize,
    /// Base-station antennas `M`.
    pub num_antennas: usize,
    pub tx_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
    /// Device to base-station distance in km (all devices at the cell edge).
    pub cell_distance_km: f64,
    /// Outer-loop stopping tolerance on the per-sweep objective decrease.
    pub convergence_delta: f64,
    pub threshold_cd: f64,
    pub threshold_bcd: f64,
    pub rng_seed: u64,
    #[serde(default)]
    pub delay_law: DelayLaw,
    /// Hard cap on outer sweeps; hitting it is an error.
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    /// Recompute the inverse covariance densely every this many sweeps.
    #[serde(default = "default_refresh_interval")]
    pub refresh_interval: usize,
    /// Visit devices in a seeded random order each sweep instead of ascending.
    #[serde(default)]
    pub shuffle_coordinates: bool,
    /// Permit `K = 0` (pure-noise debugging runs).
    #[serde(default)]
    pub allow_no_active: bool,
}

fn default_max_sweeps() -> usize {
    1000
}

fn default_refresh_interval() -> usize {
    10
}

impl SystemConfig {
    /// The full-size scenario: 200 devices, 90 active, L = 100, four symbols
    /// of delay, cell-edge devices at 1 km.
    pub fn paper_scale() -> Self {
        SystemConfig {
            num_devices: 200,
            num_active: 90,
            preamble_len: 100,
            max_delay: 4,
            num_antennas: 64,
            tx_power_dbm: 23.0,
            noise_psd_dbm_hz: -169.0,
            bandwidth_hz: 10e6,
            cell_distance_km: 1.0,
            convergence_delta: 1e-3,
            threshold_cd: 0.1,
            threshold_bcd: 0.12,
            rng_seed: 0,
            delay_law: DelayLaw::Uniform,
            max_sweeps: default_max_sweeps(),
            refresh_interval: default_refresh_interval(),
            shuffle_coordinates: false,
            allow_no_active: false,
        }
    }

    /// A reduced scenario that runs in seconds on a laptop.
    pub fn desk_scale() -> Self {
        SystemConfig {
            num_devices: 50,
            num_active: 10,
            preamble_len: 30,
            max_delay: 2,
            ..Self::paper_scale()
        }
    }

    /// Checks every invariant, returning the config unchanged on success.
    pub fn validate(self) -> Result<Self> {
        if self.num_devices == 0 {
            return Err(invalid("num_devices", "N must be positive"));
        }
        if self.num_active > self.num_devices {
            return Err(invalid(
                "num_active",
                format!("K exceeds N ({} > {})", self.num_active, self.num_devices),
            ));
        }
        if self.num_active == 0 && !self.allow_no_active {
            return Err(invalid(
                "num_active",
                "K must be positive (set allow_no_active for pure-noise runs)",
            ));
        }
        if self.preamble_len == 0 {
            return Err(invalid("preamble_len", "L must be positive"));
        }
        if self.num_antennas == 0 {
            return Err(invalid("num_antennas", "M must be positive"));
        }
        for (field, value) in [
            ("tx_power_dbm", self.tx_power_dbm),
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz),
        ] {
            if !value.is_finite() {
                return Err(invalid(field, "must be finite"));
            }
        }
        for (field, value) in [
            ("bandwidth_hz", self.bandwidth_hz),
            ("cell_distance_km", self.cell_distance_km),
            ("convergence_delta", self.convergence_delta),
            ("threshold_cd", self.threshold_cd),
            ("threshold_bcd", self.threshold_bcd),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(field, format!("must be positive, got {value}")));
            }
        }
        if self.max_sweeps == 0 {
            return Err(invalid("max_sweeps", "must be positive"));
        }
        if self.refresh_interval == 0 {
            return Err(invalid("refresh_interval", "must be positive"));
        }
        if let DelayLaw::Fixed(d) = self.delay_law {
            if d > self.max_delay {
                return Err(invalid(
                    "delay_law",
                    format!("fixed delay {d} exceeds max_delay {}", self.max_delay),
                ));
            }
        }
        Ok(self)
    }

    /// Length `L + tau_max` of every effective (delay-padded) preamble.
    pub fn effective_len(&self) -> usize {
        self.preamble_len + self.max_delay
    }

    pub fn num_delays(&self) -> usize {
        self.max_delay + 1
    }

    /// Thermal noise power over the band, in dBm.
    pub fn noise_power_dbm(&self) -> f64 {
        self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10()
    }

    /// Path loss in dB at the configured distance: `128.1 + 37.6 log10(d)`.
    pub fn path_loss_db(&self) -> f64 {
        128.1 + 37.6 * self.cell_distance_km.log10()
    }

    /// Large-scale gain of a cell-edge device in units of the noise power.
    pub fn normalized_gain(&self) -> f64 {
        let snr_db = self.tx_power_dbm - self.path_loss_db() - self.noise_power_dbm();
        10f64.powf(snr_db / 10.0)
    }

    /// The synchronous benchmark: no delays, preamble stretched to the same
    /// effective length.
    pub fn synchronous_benchmark(&self) -> Self {
        SystemConfig {
            preamble_len: self.effective_len(),
            max_delay: 0,
            delay_law: DelayLaw::Uniform,
            ..self.clone()
        }
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("SystemConfig always serializes")
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_toml_str(&text)?.validate()?)
    }
}

/// The `L x N` matrix whose column `n` is device `n`'s preamble.
#[derive(Debug, Clone, PartialEq)]
pub struct PreambleSet {
    matrix: DMatrix<Complex64>,
}

impl PreambleSet {
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "preamble matrix must be non-empty".into(),
            ));
        }
        Ok(PreambleSet { matrix })
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_devices(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn sequence(&self, device: usize) -> DVector<Complex64> {
        self.matrix.column(device).into_owned()
    }

    /// Column `device` as a contiguous slice (column-major storage).
    pub(crate) fn sequence_slice(&self, device: usize) -> &[Complex64] {
        let l = self.len();
        &self.matrix.as_slice()[device * l..(device + 1) * l]
    }
}

/// Which devices transmitted, with which delay, and every device's gain.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    delays: BTreeMap<usize, usize>,
    gains: Vec<f64>,
}

impl GroundTruth {
    /// `delays` maps each active device to its delay; `gains` holds one
    /// linear large-scale gain per device, active or not.
    pub fn new(delays: BTreeMap<usize, usize>, gains: Vec<f64>, max_delay: usize) -> Result<Self> {
        for (&n, &tau) in &delays {
            if n >= gains.len() {
                return Err(Error::DimensionMismatch(format!(
                    "active device {n} out of range for {} devices",
                    gains.len()
                )));
            }
            if tau > max_delay {
                return Err(Error::DelayOutOfRange {
                    delay: tau,
                    max_delay,
                });
            }
        }
        if let Some(g) = gains.iter().find(|g| g.is_nan() || **g <= 0.0) {
            return Err(invalid("gains", format!("gain must be positive, got {g}")));
        }
        Ok(GroundTruth { delays, gains })
    }

    pub fn num_devices(&self) -> usize {
        self.gains.len()
    }

    pub fn num_active(&self) -> usize {
        self.delays.len()
    }

    pub fn active_set(&self) -> BTreeSet<usize> {
        self.delays.keys().copied().collect()
    }

    pub fn is_active(&self, device: usize) -> bool {
        self.delays.contains_key(&device)
    }

    pub fn delay(&self, device: usize) -> Option<usize> {
        self.delays.get(&device).copied()
    }

    pub fn delays(&self) -> &BTreeMap<usize, usize> {
        &self.delays
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// The true `gamma`: `beta_n` at `(n, tau_n)` for active devices, zero elsewhere.
    pub fn gamma(&self, max_delay: usize) -> GammaEstimate {
        let mut gamma = GammaEstimate::zeros(self.num_devices(), max_delay + 1);
        for (&n, &tau) in &self.delays {
            gamma.set(n, tau, self.gains[n]);
        }
        gamma
    }

    /// The true indicator set `{(n, tau_n)}`.
    pub fn support(&self) -> BTreeSet<(usize, usize)> {
        self.delays.iter().map(|(&n, &t)| (n, t)).collect()
    }
}

/// Diagonal of `gamma`, stored as `N` contiguous blocks of `tau_max + 1` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaEstimate {
    values: Vec<f64>,
    num_delays: usize,
}

impl GammaEstimate {
    pub fn zeros(num_devices: usize, num_delays: usize) -> Self {
        assert!(num_delays > 0, "a block needs at least one delay");
        GammaEstimate {
            values: vec![0.0; num_devices * num_delays],
            num_delays,
        }
    }

    /// Builds from row-major block values, rejecting negative entries.
    pub fn from_values(values: Vec<f64>, num_delays: usize) -> Result<Self> {
        if num_delays == 0 || !values.len().is_multiple_of(num_delays) {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not split into blocks of {num_delays}",
                values.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if v.is_nan() || v < 0.0 {
                return Err(Error::NegativeGamma {
                    device: i / num_delays,
                    delay: i % num_delays,
                    value: v,
                });
            }
        }
        Ok(GammaEstimate { values, num_delays })
    }

    pub fn num_devices(&self) -> usize {
        self.values.len() / self.num_delays
    }

    pub fn num_delays(&self) -> usize {
        self.num_delays
    }

    pub fn max_delay(&self) -> usize {
        self.num_delays - 1
    }

    pub fn get(&self, device: usize, delay: usize) -> f64 {
        self.values[device * self.num_delays + delay]
    }

    pub fn set(&mut self, device: usize, delay: usize, value: f64) {
        self.values[device * self.num_delays + delay] = value;
    }

    pub fn block(&self, device: usize) -> &[f64] {
        &self.values[device * self.num_delays..(device + 1) * self.num_delays]
    }

    pub fn block_mut(&mut self, device: usize) -> &mut [f64] {
        &mut self.values[device * self.num_delays..(device + 1) * self.num_delays]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `|gamma_n|_0` for one device.
    pub fn block_nonzeros(&self, device: usize) -> usize {
        self.block(device).iter().filter(|v| **v != 0.0).count()
    }

    /// True when every block has at most one nonzero entry.
    pub fn is_block_sparse(&self) -> bool {
        (0..self.num_devices()).all(|n| self.block_nonzeros(n) <= 1)
    }

    /// Iterates `(device, delay, value)` over the nonzero entries.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(move |(i, &v)| (i / self.num_delays, i % self.num_delays, v))
    }
}

/// Output of a detector, ready for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Declared `(device, delay)` pairs; at most one delay per device.
    pub theta_hat: BTreeSet<(usize, usize)>,
    /// Estimate after enforcement (CD-E) and thresholding.
    pub gamma_hat: GammaEstimate,
    /// Outer sweeps executed.
    pub iterations: usize,
    /// Objective at the end of the optimization loop.
    pub final_objective: f64,
    /// `f_0, f_1, ...`, one value per outer sweep.
    pub objective_trace: Vec<f64>,
}

impl DetectionResult {
    pub fn detected_delay(&self, device: usize) -> Option<usize> {
        self.theta_hat
            .range((device, 0)..=(device, usize::MAX))
            .next()
            .map(|&(_, t)| t)
    }

    pub fn detected_devices(&self) -> BTreeSet<usize> {
        self.theta_hat.iter().map(|&(n, _)| n).collect()
    }
}
