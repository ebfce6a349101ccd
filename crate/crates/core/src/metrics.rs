//! Missed-detection and false-alarm probabilities for one detection run.

use crate::error::{Error, Result};
use crate::sysmodel::{DetectionResult, GroundTruth};

/// Fraction of active devices that were either not declared or declared
/// with the wrong delay.
pub fn compute_mdp(result: &DetectionResult, truth: &GroundTruth) -> Result<f64> {
    let k = truth.num_active();
    if k == 0 {
        return Err(Error::UndefinedMetric("MDP needs at least one active device"));
    }
    let missed = truth
        .delays()
        .iter()
        .filter(|(&n, &tau)| result.detected_delay(n) != Some(tau))
        .count();
    Ok(missed as f64 / k as f64)
}

/// Fraction of inactive devices declared active (at any delay).
pub fn compute_fap(result: &DetectionResult, truth: &GroundTruth) -> Result<f64> {
    let inactive = truth.num_devices() - truth.num_active();
    if inactive == 0 {
        return Err(Error::UndefinedMetric("FAP needs at least one inactive device"));
    }
    let false_alarms = result
        .detected_devices()
        .into_iter()
        .filter(|&n| !truth.is_active(n))
        .count();
    Ok(false_alarms as f64 / inactive as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::GammaEstimate;
    use std::collections::{BTreeMap, BTreeSet};

    fn truth(n: usize, active: &[(usize, usize)]) -> GroundTruth {
        GroundTruth::new(active.iter().copied().collect::<BTreeMap<_, _>>(), vec![1.0; n], 4).unwrap()
    }

    fn result(pairs: &[(usize, usize)]) -> DetectionResult {
        DetectionResult {
            theta_hat: pairs.iter().copied().collect::<BTreeSet<_>>(),
            gamma_hat: GammaEstimate::zeros(1, 1),
            iterations: 0,
            final_objective: 0.0,
            objective_trace: vec![],
        }
    }

    const ACTIVE: [(usize, usize); 4] = [(0, 1), (3, 0), (5, 2), (7, 4)];

    #[test]
    fn perfect_detection() {
        let t = truth(10, &ACTIVE);
        let r = result(&ACTIVE);
        assert_eq!(compute_mdp(&r, &t).unwrap(), 0.0);
        assert_eq!(compute_fap(&r, &t).unwrap(), 0.0);
    }

    #[test]
    fn one_missing() {
        let r = result(&ACTIVE[1..]);
        assert_eq!(compute_mdp(&r, &truth(10, &ACTIVE)).unwrap(), 0.25);
    }

    #[test]
    fn wrong_delay_is_a_miss_not_a_false_alarm() {
        let mut pairs = ACTIVE.to_vec();
        pairs[2] = (5, 1);
        let r = result(&pairs);
        let t = truth(10, &ACTIVE);
        assert_eq!(compute_mdp(&r, &t).unwrap(), 0.25);
        assert_eq!(compute_fap(&r, &t).unwrap(), 0.0);
    }

    #[test]
    fn false_alarm_fractions() {
        let t = truth(200, &(0..90).map(|n| (n, 0)).collect::<Vec<_>>());
        let r = result(&(90..101).map(|n| (n, 3)).collect::<Vec<_>>());
        assert!((compute_fap(&r, &t).unwrap() - 0.1).abs() < 1e-15);
        let r = result(&(90..200).map(|n| (n, 0)).collect::<Vec<_>>());
        assert_eq!(compute_fap(&r, &t).unwrap(), 1.0);
    }

    #[test]
    fn undefined_cases() {
        assert!(compute_mdp(&result(&[]), &truth(3, &[])).is_err());
        assert!(compute_fap(&result(&[]), &truth(2, &[(0, 0), (1, 0)])).is_err());
    }
}
