//! Slow, independent reference computations for testing `covdetect`.
//!
//! Nothing here calls the library's numerical routines: covariances are built
//! from explicitly padded sequences, and inverses and determinants come from
//! a local Gauss-Jordan elimination rather than the Cholesky path the
//! detectors use. Only the value types are shared.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use covdetect::{GammaEstimate, PreambleSet};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("{needed} supports exceed the budget of {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
}

/// Inverse and `log |det|` by Gauss-Jordan elimination with partial pivoting.
pub fn inverse_and_log_det(m: &DMatrix<Complex64>) -> Result<(DMatrix<Complex64>, f64), OracleError> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "square matrix required");
    let mut a = m.clone();
    let mut inv = DMatrix::<Complex64>::identity(n, n);
    let mut log_det = 0.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[(i, col)].norm().total_cmp(&a[(j, col)].norm()))
            .unwrap();
        let p = a[(pivot, col)];
        if p.norm() < 1e-300 {
            return Err(OracleError::Singular);
        }
        a.swap_rows(col, pivot);
        inv.swap_rows(col, pivot);
        log_det += p.norm().ln();
        for j in 0..n {
            a[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = a[(i, col)];
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                let (ac, ic) = (a[(col, j)], inv[(col, j)]);
                a[(i, j)] -= f * ac;
                inv[(i, j)] -= f * ic;
            }
        }
    }
    Ok((inv, log_det))
}

/// The zero-padded sequence of `device` at `delay`, built element by element.
pub fn padded(preambles: &PreambleSet, device: usize, delay: usize, max_delay: usize) -> DVector<Complex64> {
    let l = preambles.len();
    DVector::from_fn(l + max_delay, |i, _| {
        if i >= delay && i < delay + l {
            preambles.matrix()[(i - delay, device)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// `Sigma(gamma)` as an explicit sum of outer products.
pub fn covariance(preambles: &PreambleSet, gamma: &GammaEstimate, noise_var: f64) -> DMatrix<Complex64> {
    let max_delay = gamma.max_delay();
    let d = preambles.len() + max_delay;
    let mut sigma = DMatrix::<Complex64>::identity(d, d) * Complex64::new(noise_var, 0.0);
    for n in 0..gamma.num_devices() {
        for t in 0..gamma.num_delays() {
            let g = gamma.get(n, t);
            if g != 0.0 {
                let s = padded(preambles, n, t, max_delay);
                sigma += &s * s.adjoint() * Complex64::new(g, 0.0);
            }
        }
    }
    sigma
}

pub fn dense_inverse(preambles: &PreambleSet, gamma: &GammaEstimate, noise_var: f64) -> Result<DMatrix<Complex64>, OracleError> {
    Ok(inverse_and_log_det(&covariance(preambles, gamma, noise_var))?.0)
}

/// `log det Sigma + tr(Sigma^{-1} Sigma_tilde)` with no incremental state.
pub fn dense_objective(
    preambles: &PreambleSet,
    gamma: &GammaEstimate,
    noise_var: f64,
    sample: &DMatrix<Complex64>,
) -> Result<f64, OracleError> {
    let (inv, log_det) = inverse_and_log_det(&covariance(preambles, gamma, noise_var))?;
    Ok(log_det + (inv * sample).trace().re)
}

/// Evaluates the objective with `gamma_{device,delay}` moved by `offset`.
pub fn objective_along(
    preambles: &PreambleSet,
    gamma: &GammaEstimate,
    noise_var: f64,
    sample: &DMatrix<Complex64>,
    device: usize,
    delay: usize,
    offset: f64,
) -> Result<f64, OracleError> {
    let mut g = gamma.clone();
    g.set(device, delay, gamma.get(device, delay) + offset);
    dense_objective(preambles, &g, noise_var, sample)
}

/// Grid argmin of the one-coordinate restriction over `[-gamma_{n,tau}, upper]`.
#[allow(clippy::too_many_arguments)]
pub fn grid_min_1d(
    preambles: &PreambleSet,
    gamma: &GammaEstimate,
    noise_var: f64,
    sample: &DMatrix<Complex64>,
    device: usize,
    delay: usize,
    upper: f64,
    points: usize,
) -> Result<f64, OracleError> {
    assert!(points >= 2);
    let lower = -gamma.get(device, delay);
    let spacing = (upper - lower) / (points - 1) as f64;
    let mut best = (f64::INFINITY, lower);
    for i in 0..points {
        let x = lower + spacing * i as f64;
        let f = objective_along(preambles, gamma, noise_var, sample, device, delay, x)?;
        if f < best.0 {
            best = (f, x);
        }
    }
    Ok(best.1)
}

/// Central finite difference of the objective along one coordinate.
pub fn finite_difference(
    preambles: &PreambleSet,
    gamma: &GammaEstimate,
    noise_var: f64,
    sample: &DMatrix<Complex64>,
    device: usize,
    delay: usize,
    step: f64,
) -> Result<f64, OracleError> {
    let plus = objective_along(preambles, gamma, noise_var, sample, device, delay, step)?;
    let minus = objective_along(preambles, gamma, noise_var, sample, device, delay, -step)?;
    Ok((plus - minus) / (2.0 * step))
}

/// Best support found by enumeration, with its optimized values.
#[derive(Debug, Clone)]
pub struct SupportFit {
    pub gamma: GammaEstimate,
    pub objective: f64,
}

/// Minimizes the objective over `gamma >= 0` restricted to `support` by
/// cyclic exact line minimization, recomputing the inverse densely each step.
pub fn fit_support(
    preambles: &PreambleSet,
    sample: &DMatrix<Complex64>,
    noise_var: f64,
    max_delay: usize,
    support: &[(usize, usize)],
) -> Result<SupportFit, OracleError> {
    let mut gamma = GammaEstimate::zeros(preambles.num_devices(), max_delay + 1);
    for _ in 0..2000 {
        let mut largest = 0.0f64;
        for &(n, t) in support {
            let inv = dense_inverse(preambles, &gamma, noise_var)?;
            let s = padded(preambles, n, t, max_delay);
            let u = &inv * &s;
            let a = s.dotc(&u).re;
            let b = u.dotc(&(sample * &u)).re;
            let current = gamma.get(n, t);
            let next = (current + (b - a) / (a * a)).max(0.0);
            largest = largest.max((next - current).abs());
            gamma.set(n, t, next);
        }
        if largest < 1e-12 {
            break;
        }
    }
    let objective = dense_objective(preambles, &gamma, noise_var, sample)?;
    Ok(SupportFit { gamma, objective })
}

/// Enumerates every block-sparse support (each device off or at exactly one
/// delay), fits each, and returns the one with the lowest objective. Among
/// equal objectives the first in enumeration order wins; the empty support
/// comes first.
pub fn exhaustive_support_search(
    preambles: &PreambleSet,
    sample: &DMatrix<Complex64>,
    noise_var: f64,
    max_delay: usize,
    candidate_budget: u128,
) -> Result<SupportFit, OracleError> {
    let n = preambles.num_devices();
    let radix = (max_delay + 2) as u128;
    let needed = (0..n).try_fold(1u128, |acc, _| acc.checked_mul(radix)).unwrap_or(u128::MAX);
    if needed > candidate_budget {
        return Err(OracleError::BudgetExceeded { needed, budget: candidate_budget });
    }
    let mut best: Option<SupportFit> = None;
    for code in 0..needed {
        let mut rest = code;
        let mut support = Vec::new();
        for device in 0..n {
            let digit = (rest % radix) as usize;
            rest /= radix;
            if digit > 0 {
                support.push((device, digit - 1));
            }
        }
        let fit = fit_support(preambles, sample, noise_var, max_delay, &support)?;
        if best.as_ref().is_none_or(|b| fit.objective < b.objective) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least the empty support"))
}
