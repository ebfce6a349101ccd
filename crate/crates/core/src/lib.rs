//! Covariance-based joint device activity and delay detection for
//! asynchronous grant-free random access.
//!
//! A base station with `M` antennas observes `L + tau_max` symbols while an
//! unknown subset of `N` devices sends its preamble, each shifted by an
//! unknown integer delay. Every `(device, delay)` pair becomes one column of
//! an effective dictionary, and the detectors fit the diagonal `gamma` of
//!
//! ```text
//! Sigma = S gamma S^H + sigma^2 I
//! ```
//!
//! to the sample covariance by maximum likelihood, subject to at most one
//! nonzero delay per device.
//!
//! * [`sysmodel`]: configuration and value types.
//! * [`siggen`]: synthetic preambles, ground truth, received signal.
//! * [`likelihood`]: objective, closed-form coordinate step, rank-one inverse updates.
//! * [`detect`]: the CD-E and BCD detectors.
//! * [`metrics`]: missed-detection and false-alarm probabilities.
//! * [`experiment`]: Monte Carlo sweeps and CSV output.
//!
//! ```
//! use covdetect::{detect, metrics, siggen::Scenario, SystemConfig};
//! use rand::SeedableRng;
//!
//! let config = SystemConfig::desk_scale().validate()?;
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let scenario = Scenario::generate(&config, &mut rng)?;
//! let result = detect::run_bcd(&scenario.preambles, &scenario.sample, &config)?;
//! let mdp = metrics::compute_mdp(&result, &scenario.truth)?;
//! assert!(mdp <= 1.0);
//! # Ok::<(), covdetect::Error>(())
//! ```

pub mod detect;
pub mod error;
pub mod experiment;
pub mod likelihood;
pub mod metrics;
pub mod siggen;
pub mod sysmodel;

pub use error::{Error, Result};
pub use sysmodel::{DetectionResult, GammaEstimate, GroundTruth, PreambleSet, SystemConfig};

// The book's code listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/system-model.md")]
    mod system_model {}
    #[doc = include_str!("../../../book/src/likelihood.md")]
    mod likelihood {}
    #[doc = include_str!("../../../book/src/detectors.md")]
    mod detectors {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
