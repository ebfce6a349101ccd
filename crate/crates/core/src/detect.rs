//! The two detectors: coordinate descent followed by per-device constraint
//! enforcement (CD-E), and block coordinate descent over device blocks (BCD).

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::likelihood::{coordinate_step, objective_delta, CovarianceState, Direction};
use crate::siggen::SampleCovariance;
use crate::sysmodel::{DetectionResult, GammaEstimate, PreambleSet, SystemConfig};

/// Loop controls shared by both detectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOptions {
    pub noise_var: f64,
    pub convergence_delta: f64,
    pub max_sweeps: usize,
    pub refresh_interval: usize,
    /// When set, devices are visited in a fresh seeded permutation each sweep.
    pub shuffle_seed: Option<u64>,
}

impl DetectorOptions {
    pub fn from_config(config: &SystemConfig) -> Self {
        DetectorOptions {
            noise_var: 1.0,
            convergence_delta: config.convergence_delta,
            max_sweeps: config.max_sweeps,
            refresh_interval: config.refresh_interval,
            shuffle_seed: config.shuffle_coordinates.then_some(config.rng_seed),
        }
    }
}

/// Result of the optimization loop alone, before any post-processing.
#[derive(Debug, Clone)]
pub struct Optimized {
    pub state: CovarianceState,
    /// `f_0, f_1, ...`, one value per completed sweep.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
}

struct DeviceOrder {
    order: Vec<usize>,
    rng: Option<ChaCha8Rng>,
}

impl DeviceOrder {
    fn new(num_devices: usize, shuffle_seed: Option<u64>) -> Self {
        DeviceOrder {
            order: (0..num_devices).collect(),
            rng: shuffle_seed.map(ChaCha8Rng::seed_from_u64),
        }
    }

    fn next_sweep(&mut self) -> &[usize] {
        if let Some(rng) = &mut self.rng {
            self.order.shuffle(rng);
        }
        &self.order
    }
}

fn check_inputs(preambles: &PreambleSet, sample: &SampleCovariance, num_delays: usize) -> Result<()> {
    let dim = preambles.len() + num_delays - 1;
    if sample.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "sample covariance is {0}x{0}, expected {dim}x{dim}",
            sample.dim()
        )));
    }
    Ok(())
}

/// Runs outer sweeps until the per-sweep decrease is at most the tolerance.
fn outer_loop(
    preambles: &PreambleSet,
    sample: &SampleCovariance,
    num_delays: usize,
    opts: &DetectorOptions,
    mut sweep: impl FnMut(&mut CovarianceState, &[usize]) -> Result<()>,
) -> Result<Optimized> {
    check_inputs(preambles, sample, num_delays)?;
    let mut state = CovarianceState::initial(sample, preambles.num_devices(), num_delays, opts.noise_var)?;
    let mut order = DeviceOrder::new(preambles.num_devices(), opts.shuffle_seed);
    let mut trace = vec![state.objective()];
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        sweep(&mut state, order.next_sweep())?;
        if sweeps % opts.refresh_interval == 0 {
            state.refresh(preambles, sample)?;
        }
        let f = state.objective();
        let decrease = trace[trace.len() - 1] - f;
        trace.push(f);
        if decrease <= opts.convergence_delta {
            break;
        }
        if sweeps >= opts.max_sweeps {
            return Err(Error::NotConverged { sweeps, last_decrease: decrease });
        }
    }
    Ok(Optimized { state, objective_trace: trace, sweeps })
}

/// Plain coordinate descent on the relaxed problem (no per-device constraint).
pub fn coordinate_descent(
    preambles: &PreambleSet,
    sample: &SampleCovariance,
    num_delays: usize,
    opts: &DetectorOptions,
) -> Result<Optimized> {
    outer_loop(preambles, sample, num_delays, opts, |state, order| {
        for &n in order {
            for tau in 0..num_delays {
                let dir = state.delayed_direction(sample, preambles, n, tau)?;
                let eta = coordinate_step(&dir, state.gamma().get(n, tau));
                state.commit(n, tau, &dir, eta)?;
            }
        }
        Ok(())
    })
}

/// Block coordinate descent: each device block is cleared, every delay is
/// scored as the sole nonzero entry, and the best candidate is committed.
///
/// `observer` sees the estimate after every block commit.
pub fn block_coordinate_descent(
    preambles: &PreambleSet,
    sample: &SampleCovariance,
    num_delays: usize,
    opts: &DetectorOptions,
    observer: &mut dyn FnMut(&GammaEstimate),
) -> Result<Optimized> {
    outer_loop(preambles, sample, num_delays, opts, |state, order| {
        for &n in order {
            clear_block(state, sample, preambles, n)?;
            let base = state.objective();
            let mut best: Option<(usize, f64, Direction, f64)> = None;
            for tau in 0..num_delays {
                let dir = state.delayed_direction(sample, preambles, n, tau)?;
                let eta = coordinate_step(&dir, 0.0);
                let f = base + objective_delta(&dir, eta)?;
                // strict comparison keeps the smallest delay on ties
                if best.as_ref().is_none_or(|b| f < b.3) {
                    best = Some((tau, eta, dir, f));
                }
            }
            let (tau, eta, dir, _) = best.expect("at least one delay");
            state.commit(n, tau, &dir, eta)?;
            observer(state.gamma());
        }
        Ok(())
    })
}

fn clear_block(
    state: &mut CovarianceState,
    sample: &SampleCovariance,
    preambles: &PreambleSet,
    device: usize,
) -> Result<()> {
    for tau in 0..state.gamma().num_delays() {
        let current = state.gamma().get(device, tau);
        if current != 0.0 {
            let dir = state.delayed_direction(sample, preambles, device, tau)?;
            // x + (-x) is exactly zero, so the block ends up cleared
            state.commit(device, tau, &dir, -current)?;
        }
    }
    Ok(())
}

/// Keeps, per device, only the largest entry (smallest delay on ties).
pub fn enforce_block_sparsity(gamma: &GammaEstimate) -> GammaEstimate {
    let mut out = gamma.clone();
    for n in 0..gamma.num_devices() {
        let block = out.block_mut(n);
        let mut keep = 0;
        for (tau, &v) in block.iter().enumerate() {
            if v > block[keep] {
                keep = tau;
            }
        }
        for (tau, v) in block.iter_mut().enumerate() {
            if tau != keep {
                *v = 0.0;
            }
        }
    }
    out
}

/// Zeroes entries below `t`; entries equal to `t` survive.
pub fn threshold(gamma: &GammaEstimate, t: f64) -> GammaEstimate {
    let mut out = gamma.clone();
    for n in 0..gamma.num_devices() {
        for v in out.block_mut(n) {
            if *v < t {
                *v = 0.0;
            }
        }
    }
    out
}

/// The `(device, delay)` pairs with a positive estimate.
pub fn to_indicators(gamma: &GammaEstimate) -> BTreeSet<(usize, usize)> {
    gamma.nonzeros().map(|(n, t, _)| (n, t)).collect()
}

fn finish(opt: Optimized, gamma: GammaEstimate, t: f64) -> DetectionResult {
    let gamma_hat = threshold(&gamma, t);
    DetectionResult {
        theta_hat: to_indicators(&gamma_hat),
        gamma_hat,
        iterations: opt.sweeps,
        final_objective: opt.state.objective(),
        objective_trace: opt.objective_trace,
    }
}

/// CD-E with explicit options and threshold.
pub fn cd_e(
    preambles: &PreambleSet,
    sample: &SampleCovariance,
    num_delays: usize,
    opts: &DetectorOptions,
    t: f64,
) -> Result<DetectionResult> {
    let opt = coordinate_descent(preambles, sample, num_delays, opts)?;
    let enforced = enforce_block_sparsity(opt.state.gamma());
    Ok(finish(opt, enforced, t))
}

/// BCD with explicit options, threshold and a per-block observer.
pub fn bcd(
    preambles: &PreambleSet,
    sample: &SampleCovariance,
    num_delays: usize,
    opts: &DetectorOptions,
    t: f64,
    observer: &mut dyn FnMut(&GammaEstimate),
) -> Result<DetectionResult> {
    let opt = block_coordinate_descent(preambles, sample, num_delays, opts, observer)?;
    let gamma = opt.state.gamma().clone();
    Ok(finish(opt, gamma, t))
}

/// CD-E with the loop settings and threshold `t_CD` from `config`.
pub fn run_cd_e(
    preambles: &PreambleSet,
    sample: &SampleCovariance,
    config: &SystemConfig,
) -> Result<DetectionResult> {
    cd_e(
        preambles,
        sample,
        config.num_delays(),
        &DetectorOptions::from_config(config),
        config.threshold_cd,
    )
}

/// BCD with the loop settings and threshold `t_BCD` from `config`.
pub fn run_bcd(
    preambles: &PreambleSet,
    sample: &SampleCovariance,
    config: &SystemConfig,
) -> Result<DetectionResult> {
    bcd(
        preambles,
        sample,
        config.num_delays(),
        &DetectorOptions::from_config(config),
        config.threshold_bcd,
        &mut |_| {},
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siggen::Scenario;
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    fn gamma(blocks: &[&[f64]]) -> GammaEstimate {
        GammaEstimate::from_values(blocks.concat(), blocks[0].len()).unwrap()
    }

    #[test]
    fn enforcement_keeps_block_max() {
        assert_eq!(enforce_block_sparsity(&gamma(&[&[0.3, 0.1, 0.0]])), gamma(&[&[0.3, 0.0, 0.0]]));
        assert_eq!(enforce_block_sparsity(&gamma(&[&[0.0, 0.0, 0.0]])), gamma(&[&[0.0, 0.0, 0.0]]));
        assert_eq!(enforce_block_sparsity(&gamma(&[&[0.2, 0.2]])), gamma(&[&[0.2, 0.0]]));
        assert_eq!(
            enforce_block_sparsity(&gamma(&[&[0.1, 0.4, 0.4], &[0.0, 0.0, 0.5]])),
            gamma(&[&[0.0, 0.4, 0.0], &[0.0, 0.0, 0.5]])
        );
    }

    #[test]
    fn threshold_is_inclusive() {
        assert_eq!(threshold(&gamma(&[&[0.05, 0.15]]), 0.1), gamma(&[&[0.0, 0.15]]));
        assert_eq!(threshold(&gamma(&[&[0.5, 0.15]]), 0.1), gamma(&[&[0.5, 0.15]]));
        assert_eq!(threshold(&gamma(&[&[0.1, 0.0]]), 0.1), gamma(&[&[0.1, 0.0]]));
    }

    #[test]
    fn indicators() {
        assert!(to_indicators(&GammaEstimate::zeros(5, 2)).is_empty());
        let mut g = GammaEstimate::zeros(5, 2);
        g.set(3, 1, 0.5);
        assert_eq!(to_indicators(&g), BTreeSet::from([(3, 1)]));
        g.set(0, 0, 0.2);
        assert_eq!(to_indicators(&g), BTreeSet::from([(0, 0), (3, 1)]));
    }

    fn noise_only(l: usize, n: usize, tau_max: usize) -> (PreambleSet, SampleCovariance) {
        let cfg = SystemConfig {
            num_devices: n,
            preamble_len: l,
            max_delay: tau_max,
            ..SystemConfig::desk_scale()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = crate::siggen::generate_preambles(&cfg, &mut rng);
        let sample = SampleCovariance::from_matrix(DMatrix::<Complex64>::identity(l + tau_max, l + tau_max)).unwrap();
        (p, sample)
    }

    #[test]
    fn pure_noise_gives_nothing() {
        let (p, sample) = noise_only(12, 8, 2);
        let opts = DetectorOptions::from_config(&SystemConfig::desk_scale());
        let r = cd_e(&p, &sample, 3, &opts, 0.1).unwrap();
        assert!(r.theta_hat.is_empty());
        assert!(r.gamma_hat.values().iter().all(|v| *v == 0.0));
        let r = bcd(&p, &sample, 3, &opts, 0.12, &mut |_| {}).unwrap();
        assert!(r.theta_hat.is_empty());
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (p, _) = noise_only(12, 8, 2);
        let sample = SampleCovariance::from_matrix(DMatrix::<Complex64>::identity(5, 5)).unwrap();
        let opts = DetectorOptions::from_config(&SystemConfig::desk_scale());
        assert!(matches!(cd_e(&p, &sample, 3, &opts, 0.1), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn sweep_cap_is_an_error() {
        let cfg = SystemConfig {
            max_sweeps: 1,
            ..SystemConfig::desk_scale()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sc = Scenario::generate(&cfg, &mut rng).unwrap();
        assert!(matches!(
            run_cd_e(&sc.preambles, &sc.sample, &cfg),
            Err(Error::NotConverged { sweeps: 1, .. })
        ));
    }

    #[test]
    fn small_high_snr_recovery() {
        let cfg = SystemConfig {
            num_devices: 8,
            num_active: 2,
            preamble_len: 16,
            max_delay: 2,
            num_antennas: 256,
            tx_power_dbm: 43.0,
            ..SystemConfig::desk_scale()
        };
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sc = Scenario::generate(&cfg, &mut rng).unwrap();
            let truth = sc.truth.support();
            let r = run_cd_e(&sc.preambles, &sc.sample, &cfg).unwrap();
            assert_eq!(r.theta_hat, truth, "CD-E seed {seed}");
            let r = run_bcd(&sc.preambles, &sc.sample, &cfg).unwrap();
            assert_eq!(r.theta_hat, truth, "BCD seed {seed}");
        }
    }

    #[test]
    fn traces_non_increasing_and_deterministic() {
        let cfg = SystemConfig::desk_scale();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sc = Scenario::generate(&cfg, &mut rng).unwrap();
        let a = run_cd_e(&sc.preambles, &sc.sample, &cfg).unwrap();
        let b = run_bcd(&sc.preambles, &sc.sample, &cfg).unwrap();
        for r in [&a, &b] {
            assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        }
        assert_eq!(a, run_cd_e(&sc.preambles, &sc.sample, &cfg).unwrap());
        assert_eq!(b, run_bcd(&sc.preambles, &sc.sample, &cfg).unwrap());
    }

    #[test]
    fn shuffled_order_still_converges() {
        let cfg = SystemConfig {
            shuffle_coordinates: true,
            ..SystemConfig::desk_scale()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let sc = Scenario::generate(&cfg, &mut rng).unwrap();
        let r = run_bcd(&sc.preambles, &sc.sample, &cfg).unwrap();
        assert!(r.gamma_hat.is_block_sparse());
    }
}
