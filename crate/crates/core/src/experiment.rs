//! Monte Carlo runner: sweeps antenna counts for each detector, scores every
//! trial, and aggregates MDP/FAP into a CSV table.
//!
//! Trial `i` of every cell uses seed `rng_seed + i`, so all detectors see the
//! same scenarios (up to the synchronous benchmark's different dimensions)
//! and any trial can be replayed on its own.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{run_bcd, run_cd_e};
use crate::error::Error;
use crate::metrics::{compute_fap, compute_mdp};
use crate::siggen::Scenario;
use crate::sysmodel::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    /// Coordinate descent with per-device enforcement.
    CdE,
    /// Block coordinate descent.
    Bcd,
    /// CD-E on the synchronous benchmark (no delays, preamble of length `L + tau_max`).
    CdESync,
}

impl Detector {
    pub const ALL: [Detector; 3] = [Detector::CdE, Detector::Bcd, Detector::CdESync];

    pub fn name(self) -> &'static str {
        match self {
            Detector::CdE => "cd_e",
            Detector::Bcd => "bcd",
            Detector::CdESync => "cd_e_sync",
        }
    }

    /// The scenario this detector is evaluated on.
    pub fn scenario_config(self, config: &SystemConfig) -> SystemConfig {
        match self {
            Detector::CdESync => config.synchronous_benchmark(),
            _ => config.clone(),
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Detector::ALL
            .into_iter()
            .find(|d| d.name() == s.trim())
            .ok_or_else(|| format!("unknown detector {s:?} (expected cd_e, bcd or cd_e_sync)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_detectors")]
    pub detectors: Vec<Detector>,
    #[serde(default = "default_antennas")]
    pub antennas: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_detectors() -> Vec<Detector> {
    Detector::ALL.to_vec()
}

fn default_antennas() -> Vec<usize> {
    vec![2, 4, 8, 16, 32, 64]
}

fn default_trials() -> usize {
    200
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            detectors: default_detectors(),
            antennas: default_antennas(),
            trials: default_trials(),
        }
    }
}

/// Contents of an experiment file: a `[system]` table and a `[sweep]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    pub fn desk_scale() -> Self {
        ExperimentConfig {
            system: SystemConfig::desk_scale(),
            sweep: SweepConfig::default(),
        }
    }

    pub fn paper_scale() -> Self {
        ExperimentConfig {
            system: SystemConfig::paper_scale(),
            sweep: SweepConfig {
                trials: 1000,
                ..SweepConfig::default()
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("ExperimentConfig always serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Command-line values replace file values field by field.
    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(d) = &overrides.detectors {
            self.sweep.detectors = d.clone();
        }
        if let Some(a) = &overrides.antennas {
            self.sweep.antennas = a.clone();
        }
        if let Some(t) = overrides.trials {
            self.sweep.trials = t;
        }
        if let Some(s) = overrides.seed {
            self.system.rng_seed = s;
        }
    }

    pub fn validate(self) -> Result<Self, ExperimentError> {
        let system = self.system.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        if self.sweep.detectors.is_empty() {
            return Err(ExperimentError::Config("detector list is empty".into()));
        }
        if self.sweep.antennas.is_empty() || self.sweep.antennas.contains(&0) {
            return Err(ExperimentError::Config("antenna list must be non-empty and positive".into()));
        }
        if self.sweep.trials == 0 {
            return Err(ExperimentError::Config("trials must be positive".into()));
        }
        Ok(ExperimentConfig { system, ..self })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub detectors: Option<Vec<Detector>>,
    pub antennas: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Record wall-clock runtimes. Off by default so that output is a pure
    /// function of the configuration and seed.
    pub timing: bool,
    /// Write one CSV of per-trial records per (detector, M) cell here.
    pub per_trial_dump: Option<PathBuf>,
}

#[derive(Debug, Error)]
#[error("trial {trial} (seed {seed}, {detector}, M={antennas}) failed: {source}")]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub detector: Detector,
    pub antennas: usize,
    pub source: Error,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Trial(#[from] TrialFailure),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Outcome of one detector on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    /// NaN when undefined (no active devices).
    pub mdp: f64,
    pub mdp_defined: bool,
    /// NaN when undefined (every device active).
    pub fap: f64,
    pub fap_defined: bool,
    pub iterations: usize,
    pub final_objective: f64,
    /// NaN unless timing was requested.
    pub runtime_ms: f64,
}

/// Generates the scenario for `seed` and runs `detector` on it.
///
/// `config.num_antennas` sets `M`; `config.rng_seed` is ignored in favor of `seed`.
pub fn run_single_trial(
    config: &SystemConfig,
    trial: usize,
    seed: u64,
    detector: Detector,
    timing: bool,
) -> Result<TrialRecord, TrialFailure> {
    let fail = |source| TrialFailure {
        trial,
        seed,
        detector,
        antennas: config.num_antennas,
        source,
    };
    let cfg = SystemConfig {
        rng_seed: seed,
        ..detector.scenario_config(config)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenario = Scenario::generate(&cfg, &mut rng).map_err(fail)?;
    let start = Instant::now();
    let result = match detector {
        Detector::CdE | Detector::CdESync => run_cd_e(&scenario.preambles, &scenario.sample, &cfg),
        Detector::Bcd => run_bcd(&scenario.preambles, &scenario.sample, &cfg),
    }
    .map_err(fail)?;
    let runtime_ms = if timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        f64::NAN
    };
    let mdp = compute_mdp(&result, &scenario.truth).ok();
    let fap = compute_fap(&result, &scenario.truth).ok();
    Ok(TrialRecord {
        trial,
        seed,
        mdp: mdp.unwrap_or(f64::NAN),
        mdp_defined: mdp.is_some(),
        fap: fap.unwrap_or(f64::NAN),
        fap_defined: fap.is_some(),
        iterations: result.iterations,
        final_objective: result.final_objective,
        runtime_ms,
    })
}

/// One line of the output table. Column order is part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub detector: Detector,
    #[serde(rename = "M")]
    pub antennas: usize,
    pub trials: usize,
    pub mdp_mean: f64,
    pub mdp_stderr: f64,
    pub fap_mean: f64,
    pub fap_stderr: f64,
    pub mean_iterations: f64,
    pub mean_runtime_ms: f64,
}

pub const CSV_HEADER: &str =
    "detector,M,trials,mdp_mean,mdp_stderr,fap_mean,fap_stderr,mean_iterations,mean_runtime_ms";

/// Mean and standard error of the mean; NaN where fewer than 1 (mean) or
/// 2 (stderr) values exist.
pub fn mean_stderr(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregates per-trial records with equal weight per trial.
pub fn summarize(detector: Detector, antennas: usize, records: &[TrialRecord]) -> SummaryRow {
    let (mdp_mean, mdp_stderr) = mean_stderr(records.iter().filter(|r| r.mdp_defined).map(|r| r.mdp));
    let (fap_mean, fap_stderr) = mean_stderr(records.iter().filter(|r| r.fap_defined).map(|r| r.fap));
    let (mean_iterations, _) = mean_stderr(records.iter().map(|r| r.iterations as f64));
    let (mean_runtime_ms, _) = mean_stderr(records.iter().map(|r| r.runtime_ms));
    SummaryRow {
        detector,
        antennas,
        trials: records.len(),
        mdp_mean,
        mdp_stderr,
        fap_mean,
        fap_stderr,
        mean_iterations,
        mean_runtime_ms,
    }
}

/// Runs all trials of one (detector, M) cell, in parallel, ordered by trial index.
pub fn run_cell(
    system: &SystemConfig,
    detector: Detector,
    antennas: usize,
    trials: usize,
    timing: bool,
) -> Result<Vec<TrialRecord>, TrialFailure> {
    let config = SystemConfig {
        num_antennas: antennas,
        ..system.clone()
    };
    let results: Vec<Result<TrialRecord, TrialFailure>> = (0..trials)
        .into_par_iter()
        .map(|i| run_single_trial(&config, i, system.rng_seed.wrapping_add(i as u64), detector, timing))
        .collect();
    // first failure by trial index, independent of scheduling
    results.into_iter().collect()
}

/// Runs every (detector, M) cell in file order: detectors outer, antennas inner.
pub fn run_experiment(exp: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<SummaryRow>, ExperimentError> {
    let exp = exp.clone().validate()?;
    if let Some(dir) = &opts.per_trial_dump {
        std::fs::create_dir_all(dir)?;
    }
    let mut rows = Vec::new();
    for &detector in &exp.sweep.detectors {
        for &m in &exp.sweep.antennas {
            let records = run_cell(&exp.system, detector, m, exp.sweep.trials, opts.timing)?;
            if let Some(dir) = &opts.per_trial_dump {
                let mut w = csv::Writer::from_path(dir.join(format!("{detector}_M{m}.csv")))?;
                for r in &records {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
            rows.push(summarize(detector, m, &records));
        }
    }
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(out: W, rows: &[SummaryRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: std::io::Read>(input: R) -> Result<Vec<SummaryRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn read_trial_records(path: &Path) -> Result<Vec<TrialRecord>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}
