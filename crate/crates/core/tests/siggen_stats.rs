mod common;

use std::collections::BTreeMap;

use common::*;
use covdetect::likelihood::assemble_covariance;
use covdetect::siggen::{
    draw_ground_truth, effective_sequence, generate_preambles, sample_covariance, synthesize_received_signal,
    Scenario, SignalModel,
};
use covdetect::{GroundTruth, SystemConfig};
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn delays_are_uniform() {
    let cfg = SystemConfig {
        num_devices: 100_000,
        num_active: 100_000,
        max_delay: 4,
        ..SystemConfig::paper_scale()
    };
    let truth = draw_ground_truth(&cfg, &mut rng(200));
    let mut counts = [0usize; 5];
    for &tau in truth.delays().values() {
        counts[tau] += 1;
    }
    let n = 100_000.0;
    let expected = n / 5.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    for c in counts {
        assert!((c as f64 / n - 0.2).abs() < 0.01, "{counts:?}");
    }
    // 0.999 quantile of chi-square with 4 degrees of freedom
    assert!(chi2 < 18.467, "chi2 = {chi2}");
}

#[test]
fn active_set_is_uniform_without_replacement() {
    let cfg = small_config(4, 10, 3, 1, 1);
    let mut hits = [0usize; 10];
    let mut r = rng(201);
    for _ in 0..20_000 {
        let t = draw_ground_truth(&cfg, &mut r);
        assert_eq!(t.num_active(), 3);
        for n in t.active_set() {
            hits[n] += 1;
        }
    }
    for h in hits {
        // each device active with probability 0.3
        assert!((h as f64 / 20_000.0 - 0.3).abs() < 0.015, "{hits:?}");
    }
}

#[test]
fn received_energy_matches_expectation() {
    let (l, tau_max, m) = (16, 2, 8);
    let cfg = small_config(l, 6, 1, tau_max, m);
    let mut r = rng(202);
    let preambles = generate_preambles(&cfg, &mut r);
    // unit-norm-per-symbol preamble keeps the expectation exact: ||s||^2 = L
    let scale = (l as f64 / preambles.matrix().column(2).norm_squared()).sqrt();
    let mut p = preambles.matrix().clone();
    p.column_mut(2).scale_mut(scale);
    let preambles = covdetect::PreambleSet::new(p).unwrap();
    let truth = GroundTruth::new(BTreeMap::from([(2, 1)]), vec![1.0; 6], tau_max).unwrap();
    let model = SignalModel { max_delay: tau_max, num_antennas: m, noise_var: 1.0 };
    let draws = 4000;
    let total: f64 = (0..draws)
        .map(|_| synthesize_received_signal(&preambles, &truth, &model, &mut r).unwrap().y.norm_squared())
        .sum();
    let expected = (m * (l + (l + tau_max))) as f64;
    let mean = total / draws as f64;
    assert!((mean / expected - 1.0).abs() < 0.02, "mean {mean}, expected {expected}");
}

#[test]
fn sample_covariance_error_halves_when_antennas_quadruple() {
    let cfg = small_config(10, 8, 3, 2, 1);
    let mut r = rng(203);
    let preambles = generate_preambles(&cfg, &mut r);
    let truth = draw_ground_truth(&cfg, &mut r);
    let sigma = assemble_covariance(&preambles, &truth.gamma(2), 1.0).unwrap();
    let error_at = |m: usize, r: &mut rand_chacha::ChaCha8Rng| {
        let model = SignalModel { max_delay: 2, num_antennas: m, noise_var: 1.0 };
        let reps = 40;
        (0..reps)
            .map(|_| {
                let y = synthesize_received_signal(&preambles, &truth, &model, r).unwrap();
                let s = sample_covariance(&y).unwrap();
                relative_frobenius(s.matrix(), &sigma)
            })
            .sum::<f64>()
            / reps as f64
    };
    let errors: Vec<f64> = [64, 256, 1024].iter().map(|&m| error_at(m, &mut r)).collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.7..2.3).contains(&ratio), "errors {errors:?}");
    }
}

#[test]
fn sample_covariance_is_hermitian_psd() {
    let mut r = rng(204);
    for m in [1, 3, 40] {
        let cfg = SystemConfig { num_antennas: m, ..small_config(12, 10, 4, 2, m) };
        let sc = Scenario::generate(&cfg, &mut r).unwrap();
        let s = sc.sample.matrix();
        assert_eq!(s, &s.adjoint());
        let eig = s.clone().symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e >= -1e-10), "{eig}");
    }
}

#[test]
fn generation_is_bit_reproducible() {
    let cfg = SystemConfig::desk_scale();
    let a = Scenario::generate(&cfg, &mut rng(205)).unwrap();
    let b = Scenario::generate(&cfg, &mut rng(205)).unwrap();
    assert_eq!(a.preambles, b.preambles);
    assert_eq!(a.truth, b.truth);
    assert_eq!(a.signal, b.signal);
    assert_eq!(a.sample, b.sample);
    let c = Scenario::generate(&cfg, &mut rng(206)).unwrap();
    assert_ne!(a.signal, c.signal);
}

proptest! {
    #[test]
    fn padding_preserves_norm(
        parts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20),
        tau_max in 0usize..6,
        tau_frac in 0.0f64..1.0,
    ) {
        let s: Vec<Complex64> = parts.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
        let tau = ((tau_max as f64) * tau_frac).round() as usize;
        let padded = effective_sequence(&s, tau, tau_max).unwrap();
        prop_assert_eq!(padded.len(), s.len() + tau_max);
        let norm: f64 = s.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((padded.norm_squared() - norm).abs() <= 1e-12 * norm.max(1.0));
        prop_assert_eq!(&padded.as_slice()[tau..tau + s.len()], &s[..]);
    }
}
