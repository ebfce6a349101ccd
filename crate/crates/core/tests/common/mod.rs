#![allow(dead_code)]

use covdetect::siggen::{complex_gaussian, Scenario};
use covdetect::{GammaEstimate, SystemConfig};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn small_config(l: usize, n: usize, k: usize, tau_max: usize, m: usize) -> SystemConfig {
    SystemConfig {
        num_devices: n,
        num_active: k,
        preamble_len: l,
        max_delay: tau_max,
        num_antennas: m,
        ..SystemConfig::desk_scale()
    }
    .validate()
    .unwrap()
}

/// A scenario plus a random non-negative estimate with about half its entries zero.
pub fn random_point(rng: &mut ChaCha8Rng, cfg: &SystemConfig) -> (Scenario, GammaEstimate) {
    let sc = Scenario::generate(cfg, rng).unwrap();
    let values = (0..cfg.num_devices * cfg.num_delays())
        .map(|_| if rng.random_bool(0.5) { rng.random_range(0.0..1.5) } else { 0.0 })
        .collect();
    (sc, GammaEstimate::from_values(values, cfg.num_delays()).unwrap())
}

pub fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> DVector<Complex64> {
    DVector::from_fn(dim, |_, _| complex_gaussian(rng, 1.0))
}

pub fn relative_frobenius(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).norm() / b.norm()
}
