//! Synthetic scenarios: preambles, activity and delays, Rayleigh channels,
//! the received block `Y` and its sample covariance.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sysmodel::{DelayLaw, GroundTruth, PreambleSet, SystemConfig};

/// One draw from `CN(0, var)`: independent real and imaginary parts with
/// variance `var / 2` each.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let scale = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(scale * re, scale * im)
}

fn complex_gaussian_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    var: f64,
) -> DMatrix<Complex64> {
    // from_fn fills column-major, which fixes the draw order.
    DMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, var))
}

/// `L x N` preambles with i.i.d. `CN(0, 1)` entries.
pub fn generate_preambles<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> PreambleSet {
    let m = complex_gaussian_matrix(rng, config.preamble_len, config.num_devices, 1.0);
    PreambleSet::new(m).expect("validated config has L, N >= 1")
}

/// Pads `sequence` with `delay` leading and `max_delay - delay` trailing zeros.
pub fn effective_sequence(
    sequence: &[Complex64],
    delay: usize,
    max_delay: usize,
) -> Result<DVector<Complex64>> {
    if delay > max_delay {
        return Err(Error::DelayOutOfRange { delay, max_delay });
    }
    let mut out = DVector::zeros(sequence.len() + max_delay);
    out.rows_mut(delay, sequence.len())
        .copy_from_slice(sequence);
    Ok(out)
}

/// Draws the active set uniformly without replacement, a delay for each
/// active device, and the common cell-edge gain for all devices.
pub fn draw_ground_truth<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> GroundTruth {
    let mut active = rand::seq::index::sample(rng, config.num_devices, config.num_active).into_vec();
    active.sort_unstable();
    let delays: BTreeMap<usize, usize> = active
        .into_iter()
        .map(|n| {
            let tau = match config.delay_law {
                DelayLaw::Uniform => rng.random_range(0..=config.max_delay),
                DelayLaw::Fixed(d) => d,
            };
            (n, tau)
        })
        .collect();
    let gains = vec![config.normalized_gain(); config.num_devices];
    GroundTruth::new(delays, gains, config.max_delay).expect("drawn truth is consistent")
}

/// The received block `Y`, `(L + tau_max) x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedSignal {
    pub y: DMatrix<Complex64>,
}

impl ReceivedSignal {
    pub fn num_antennas(&self) -> usize {
        self.y.ncols()
    }
}

/// Dimensions and noise level for building `Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalModel {
    pub max_delay: usize,
    pub num_antennas: usize,
    pub noise_var: f64,
}

impl SignalModel {
    /// Working model with unit noise variance.
    pub fn from_config(config: &SystemConfig) -> Self {
        SignalModel {
            max_delay: config.max_delay,
            num_antennas: config.num_antennas,
            noise_var: 1.0,
        }
    }
}

/// `Y = sum_n sqrt(beta_n) sbar_{n,tau_n} h_n^T + Z` for given channels and noise.
///
/// `channels` is `N x M` with row `n` equal to `h_n^T`; rows of inactive
/// devices are ignored. `noise` is `(L + tau_max) x M`.
pub fn synthesize_with(
    preambles: &PreambleSet,
    truth: &GroundTruth,
    max_delay: usize,
    channels: &DMatrix<Complex64>,
    noise: &DMatrix<Complex64>,
) -> Result<ReceivedSignal> {
    let dim = preambles.len() + max_delay;
    let m = noise.ncols();
    if noise.nrows() != dim || channels.ncols() != m || channels.nrows() != preambles.num_devices() {
        return Err(Error::DimensionMismatch(format!(
            "channels {}x{}, noise {}x{}, expected {}x{m} and {dim}x{m}",
            channels.nrows(),
            channels.ncols(),
            noise.nrows(),
            noise.ncols(),
            preambles.num_devices()
        )));
    }
    if truth.num_devices() != preambles.num_devices() {
        return Err(Error::DimensionMismatch("truth and preambles disagree on N".into()));
    }
    let mut y = noise.clone();
    for (&n, &tau) in truth.delays() {
        let sbar = effective_sequence(preambles.sequence_slice(n), tau, max_delay)?;
        let amp = Complex64::from(truth.gains()[n].sqrt());
        y.ger(amp, &sbar, &channels.row(n).transpose(), Complex64::from(1.0));
    }
    Ok(ReceivedSignal { y })
}

/// Draws `h_n ~ CN(0, I_M)` for each active device (ascending order), then
/// `Z` with `CN(0, noise_var)` entries, and assembles `Y`.
pub fn synthesize_received_signal<R: Rng + ?Sized>(
    preambles: &PreambleSet,
    truth: &GroundTruth,
    model: &SignalModel,
    rng: &mut R,
) -> Result<ReceivedSignal> {
    let m = model.num_antennas;
    let mut channels = DMatrix::zeros(preambles.num_devices(), m);
    for &n in truth.delays().keys() {
        for j in 0..m {
            channels[(n, j)] = complex_gaussian(rng, 1.0);
        }
    }
    let dim = preambles.len() + model.max_delay;
    let noise = if model.noise_var > 0.0 {
        complex_gaussian_matrix(rng, dim, m, model.noise_var)
    } else {
        DMatrix::zeros(dim, m)
    };
    synthesize_with(preambles, truth, model.max_delay, &channels, &noise)
}

/// `Sigma_tilde = Y Y^H / M`, optionally carrying the factor `Y / sqrt(M)`.
///
/// The factor makes quadratic forms `u^H Sigma_tilde u` cost `D M` instead of
/// `D^2` when there are fewer antennas than samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    matrix: DMatrix<Complex64>,
    factor: Option<DMatrix<Complex64>>,
}

impl SampleCovariance {
    /// Builds from an explicit Hermitian matrix.
    pub fn from_matrix(matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch("sample covariance must be square".into()));
        }
        Ok(SampleCovariance {
            matrix,
            factor: None,
        })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// `Re(u^H Sigma_tilde u)`.
    pub fn quad_form(&self, u: &DVector<Complex64>) -> f64 {
        match &self.factor {
            Some(f) if f.ncols() < f.nrows() => {
                let dim = f.nrows();
                f.as_slice()
                    .chunks_exact(dim)
                    .map(|col| {
                        let w: Complex64 = col.iter().zip(u.iter()).map(|(a, b)| a.conj() * b).sum();
                        w.norm_sqr()
                    })
                    .sum()
            }
            _ => u.dotc(&(&self.matrix * u)).re,
        }
    }
}

/// `(1/M) Y Y^H`.
pub fn sample_covariance(signal: &ReceivedSignal) -> Result<SampleCovariance> {
    let m = signal.y.ncols();
    if m == 0 {
        return Err(Error::DimensionMismatch("need at least one antenna".into()));
    }
    let factor = signal.y.scale(1.0 / (m as f64).sqrt());
    let matrix = &factor * factor.adjoint();
    Ok(SampleCovariance {
        matrix,
        factor: Some(factor),
    })
}

/// Everything drawn for one Monte Carlo trial.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub preambles: PreambleSet,
    pub truth: GroundTruth,
    pub signal: ReceivedSignal,
    pub sample: SampleCovariance,
}

impl Scenario {
    /// Draws preambles, then ground truth, then channels and noise, all from `rng`.
    pub fn generate<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<Self> {
        let preambles = generate_preambles(config, rng);
        let truth = draw_ground_truth(config, rng);
        let signal = synthesize_received_signal(&preambles, &truth, &SignalModel::from_config(config), rng)?;
        let sample = sample_covariance(&signal)?;
        Ok(Scenario {
            preambles,
            truth,
            signal,
            sample,
        })
    }
}

/// Writes a complex matrix as text: a `rows,cols` header, then one line per
/// row holding `re,im` pairs in column order.
pub fn write_matrix_csv<W: Write>(mut out: W, m: &DMatrix<Complex64>) -> std::io::Result<()> {
    writeln!(out, "{},{}", m.nrows(), m.ncols())?;
    for row in m.row_iter() {
        let line: Vec<String> = row
            .iter()
            .flat_map(|z| [z.re.to_string(), z.im.to_string()])
            .collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Reads the format produced by [`write_matrix_csv`].
pub fn read_matrix_csv<R: BufRead>(input: R) -> Result<DMatrix<Complex64>> {
    let bad = |msg: String| Error::MatrixFormat(msg);
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad("empty input".into()))?
        .map_err(|e| bad(e.to_string()))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| bad(format!("header: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(bad(format!("header must be rows,cols, got {header:?}")));
    };
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("missing row {i}")))?
            .map_err(|e| bad(e.to_string()))?;
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("row {i}: {e}")))?;
        if vals.len() != 2 * cols {
            return Err(bad(format!("row {i} has {} values, expected {}", vals.len(), 2 * cols)));
        }
        for j in 0..cols {
            m[(i, j)] = Complex64::new(vals[2 * j], vals[2 * j + 1]);
        }
    }
    Ok(m)
}
