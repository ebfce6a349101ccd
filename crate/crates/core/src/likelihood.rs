//! The covariance-matching likelihood and the machinery for optimizing it
//! one coordinate at a time.
//!
//! The model covariance is `Sigma = S gamma S^H + sigma^2 I` and the negative
//! log-likelihood, up to constants and a factor `M`, is
//!
//! ```text
//! f(gamma) = log det Sigma + tr(Sigma^{-1} Sigma_tilde)
//! ```
//!
//! Moving a single coordinate `gamma_{n,tau}` by `eta` perturbs `Sigma` by
//! `eta sbar sbar^H`. With `u = Sigma^{-1} sbar`, `a = sbar^H u` and
//! `b = u^H Sigma_tilde u`, the change in `f` is
//! `log(1 + eta a) - eta b / (1 + eta a)`, minimized at `eta = (b - a) / a^2`,
//! and the inverse follows from Sherman-Morrison:
//! `Sigma^{-1} - eta u u^H / (1 + eta a)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::siggen::SampleCovariance;
use crate::sysmodel::{GammaEstimate, PreambleSet};

/// Denominators `1 + eta a` below this are treated as a broken inverse.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// `Sigma = sum gamma_{n,tau} sbar_{n,tau} sbar_{n,tau}^H + noise_var I`.
pub fn assemble_covariance(
    preambles: &PreambleSet,
    gamma: &GammaEstimate,
    noise_var: f64,
) -> Result<DMatrix<Complex64>> {
    if gamma.num_devices() != preambles.num_devices() {
        return Err(Error::DimensionMismatch(format!(
            "gamma has {} devices, preambles {}",
            gamma.num_devices(),
            preambles.num_devices()
        )));
    }
    let l = preambles.len();
    let dim = l + gamma.max_delay();
    let mut sigma = DMatrix::identity(dim, dim).scale(noise_var);
    for (i, &v) in gamma.values().iter().enumerate() {
        let (n, tau) = (i / gamma.num_delays(), i % gamma.num_delays());
        if v.is_nan() || v < 0.0 {
            return Err(Error::NegativeGamma { device: n, delay: tau, value: v });
        }
        if v == 0.0 {
            continue;
        }
        let s = preambles.sequence_slice(n);
        for (j, sj) in s.iter().enumerate() {
            let cj = sj.conj() * v;
            let mut col = sigma.column_mut(tau + j);
            for (k, sk) in s.iter().enumerate() {
                col[tau + k] += sk * cj;
            }
        }
    }
    Ok(sigma)
}

fn cholesky(sigma: &DMatrix<Complex64>) -> Result<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
    let not_pd = || Error::Degenerate("covariance is not positive definite".into());
    let chol = sigma.clone().cholesky().ok_or_else(not_pd)?;
    // complex square roots never fail, so check the pivots are real and positive
    let pivots_ok = chol
        .l_dirty()
        .diagonal()
        .iter()
        .all(|d| d.re > 0.0 && d.im.abs() <= 1e-10 * d.re);
    if pivots_ok {
        Ok(chol)
    } else {
        Err(not_pd())
    }
}

fn log_det(chol: &nalgebra::Cholesky<Complex64, nalgebra::Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.re.ln()).sum::<f64>()
}

/// `log det Sigma + tr(Sigma^{-1} Sigma_tilde)` through a Cholesky factor.
pub fn evaluate_objective(sigma: &DMatrix<Complex64>, sample: &DMatrix<Complex64>) -> Result<f64> {
    if sigma.shape() != sample.shape() {
        return Err(Error::DimensionMismatch("Sigma and Sigma_tilde differ in shape".into()));
    }
    let chol = cholesky(sigma)?;
    let trace = chol.solve(sample).trace().re;
    Ok(log_det(&chol) + trace)
}

/// `Sigma^{-1} sbar` and the two quadratic forms that drive a coordinate move.
#[derive(Debug, Clone)]
pub struct Direction {
    /// `u = Sigma^{-1} sbar`.
    pub u: DVector<Complex64>,
    /// `a = sbar^H Sigma^{-1} sbar`.
    pub s_inv_s: f64,
    /// `b = sbar^H Sigma^{-1} Sigma_tilde Sigma^{-1} sbar`.
    pub quad: f64,
}

impl Direction {
    /// Direction of an arbitrary vector `s` given `inv = Sigma^{-1}`.
    pub fn compute(
        inv: &DMatrix<Complex64>,
        sample: &SampleCovariance,
        s: &DVector<Complex64>,
    ) -> Result<Self> {
        if s.len() != inv.nrows() || sample.dim() != inv.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "direction of length {} in dimension {}",
                s.len(),
                inv.nrows()
            )));
        }
        let u = inv * s;
        let a = s.dotc(&u).re;
        let b = sample.quad_form(&u);
        Direction::checked(u, a, b)
    }

    fn checked(u: DVector<Complex64>, s_inv_s: f64, quad: f64) -> Result<Self> {
        if s_inv_s.is_nan() || s_inv_s <= 0.0 {
            return Err(Error::Degenerate(format!(
                "s^H Sigma^-1 s = {s_inv_s} is not positive"
            )));
        }
        Ok(Direction { u, s_inv_s, quad })
    }

    /// Derivative of the objective along this direction at the current point:
    /// `a - b`.
    pub fn gradient(&self) -> f64 {
        self.s_inv_s - self.quad
    }
}

/// Closed-form minimizer of the objective along one coordinate, clipped so
/// that `current + eta >= 0`.
pub fn coordinate_step(dir: &Direction, current: f64) -> f64 {
    let a = dir.s_inv_s;
    let unconstrained = (dir.quad - a) / (a * a);
    unconstrained.max(-current)
}

/// Objective change from moving `eta` along `dir`.
pub fn objective_delta(dir: &Direction, eta: f64) -> Result<f64> {
    if eta == 0.0 {
        return Ok(0.0);
    }
    let denom = 1.0 + eta * dir.s_inv_s;
    if denom < DENOMINATOR_FLOOR {
        return Err(Error::Degenerate(format!("1 + eta a = {denom:e}")));
    }
    Ok(denom.ln() - eta * dir.quad / denom)
}

/// Sherman-Morrison: replaces `inv` (= `Sigma^{-1}`) with `(Sigma + eta s s^H)^{-1}`.
pub fn rank_one_inverse_update(
    inv: &mut DMatrix<Complex64>,
    dir: &Direction,
    eta: f64,
) -> Result<()> {
    if eta == 0.0 {
        return Ok(());
    }
    let denom = 1.0 + eta * dir.s_inv_s;
    if denom < DENOMINATOR_FLOOR {
        return Err(Error::Degenerate(format!("1 + eta a = {denom:e}")));
    }
    let coef = eta / denom;
    let dim = inv.nrows();
    let u = dir.u.as_slice();
    for (j, col) in inv.as_mut_slice().chunks_exact_mut(dim).enumerate() {
        let cj = u[j].conj() * coef;
        for (x, ui) in col.iter_mut().zip(u) {
            *x -= ui * cj;
        }
    }
    Ok(())
}

/// `Sigma^{-1}`, the estimate it corresponds to, and the objective there.
#[derive(Debug, Clone)]
pub struct CovarianceState {
    inv_sigma: DMatrix<Complex64>,
    gamma: GammaEstimate,
    objective: f64,
    noise_var: f64,
}

impl CovarianceState {
    /// State at `gamma = 0`: `Sigma = noise_var I`, objective
    /// `D log noise_var + tr(Sigma_tilde) / noise_var`.
    pub fn initial(
        sample: &SampleCovariance,
        num_devices: usize,
        num_delays: usize,
        noise_var: f64,
    ) -> Result<Self> {
        if noise_var.is_nan() || noise_var <= 0.0 {
            return Err(Error::Degenerate(format!("noise variance {noise_var} must be positive")));
        }
        let dim = sample.dim();
        Ok(CovarianceState {
            inv_sigma: DMatrix::identity(dim, dim).scale(1.0 / noise_var),
            gamma: GammaEstimate::zeros(num_devices, num_delays),
            objective: dim as f64 * noise_var.ln() + sample.trace() / noise_var,
            noise_var,
        })
    }

    /// Builds a state for an arbitrary estimate by dense factorization.
    pub fn from_gamma(
        preambles: &PreambleSet,
        sample: &SampleCovariance,
        gamma: GammaEstimate,
        noise_var: f64,
    ) -> Result<Self> {
        let mut state = CovarianceState {
            inv_sigma: DMatrix::zeros(0, 0),
            gamma,
            objective: f64::NAN,
            noise_var,
        };
        state.refresh(preambles, sample)?;
        Ok(state)
    }

    pub fn inv_sigma(&self) -> &DMatrix<Complex64> {
        &self.inv_sigma
    }

    pub fn gamma(&self) -> &GammaEstimate {
        &self.gamma
    }

    pub fn into_gamma(self) -> GammaEstimate {
        self.gamma
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn dim(&self) -> usize {
        self.inv_sigma.nrows()
    }

    /// Recomputes `Sigma^{-1}` and the objective from scratch, discarding
    /// accumulated rank-one drift.
    pub fn refresh(&mut self, preambles: &PreambleSet, sample: &SampleCovariance) -> Result<()> {
        let sigma = assemble_covariance(preambles, &self.gamma, self.noise_var)?;
        if sigma.shape() != sample.matrix().shape() {
            return Err(Error::DimensionMismatch("Sigma and Sigma_tilde differ in shape".into()));
        }
        let chol = cholesky(&sigma)?;
        self.objective = log_det(&chol) + chol.solve(sample.matrix()).trace().re;
        self.inv_sigma = chol.inverse();
        Ok(())
    }

    /// Direction for an arbitrary dense vector `s` of length `D`.
    pub fn direction(&self, sample: &SampleCovariance, s: &DVector<Complex64>) -> Result<Direction> {
        Direction::compute(&self.inv_sigma, sample, s)
    }

    /// Direction for the effective sequence `sbar_{n,tau}`, using only the `L`
    /// columns of `Sigma^{-1}` it touches.
    pub fn delayed_direction(
        &self,
        sample: &SampleCovariance,
        preambles: &PreambleSet,
        device: usize,
        delay: usize,
    ) -> Result<Direction> {
        if delay > self.gamma.max_delay() {
            return Err(Error::DelayOutOfRange { delay, max_delay: self.gamma.max_delay() });
        }
        let dim = self.dim();
        let s = preambles.sequence_slice(device);
        let mut u = DVector::<Complex64>::zeros(dim);
        let inv = self.inv_sigma.as_slice();
        {
            let us = u.as_mut_slice();
            for (j, sj) in s.iter().enumerate() {
                let col = &inv[(delay + j) * dim..(delay + j + 1) * dim];
                for (x, c) in us.iter_mut().zip(col) {
                    *x += c * sj;
                }
            }
        }
        let a: f64 = s
            .iter()
            .zip(&u.as_slice()[delay..delay + s.len()])
            .map(|(sj, uj)| (sj.conj() * uj).re)
            .sum();
        let b = sample.quad_form(&u);
        Direction::checked(u, a, b)
    }

    /// Adds `eta` to `gamma_{device,delay}`, updating `Sigma^{-1}` and the
    /// objective incrementally. `dir` must be the direction of that coordinate
    /// at the current state. Returns the objective change.
    pub fn commit(&mut self, device: usize, delay: usize, dir: &Direction, eta: f64) -> Result<f64> {
        if eta == 0.0 {
            return Ok(0.0);
        }
        let new_value = self.gamma.get(device, delay) + eta;
        if new_value < 0.0 {
            return Err(Error::NegativeGamma { device, delay, value: new_value });
        }
        let delta = objective_delta(dir, eta)?;
        rank_one_inverse_update(&mut self.inv_sigma, dir, eta)?;
        self.gamma.set(device, delay, new_value);
        self.objective += delta;
        Ok(delta)
    }
}
