//! Gaussian model of preparation, loss, the beam-splitting tap and Stokes
//! detection.
//!
//! Amplitudes are dark-mode displacements in vacuum-noise units: a
//! measurement of an axis carrying amplitude `a` returns `x ~ N(a, σ0² + e)`
//! with `σ0² = 1/2` and `e` the configured excess noise.

use crate::rng::RngStream;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Vacuum variance of a single Stokes-axis outcome.
pub const VACUUM_VARIANCE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("transmission eta must lie in (0, 1], got {0}")]
    Transmission(f64),
    #[error("excess noise must be finite and >= 0, got {0}")]
    ExcessNoise(f64),
    #[error("need at least 2 events for a correlation, got {0}")]
    InsufficientData(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    S2,
    S3,
}

impl Basis {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Basis::S3
        } else {
            Basis::S2
        }
    }

    pub fn as_bit(self) -> bool {
        self == Basis::S3
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::S2 => f.write_str("S2"),
            Basis::S3 => f.write_str("S3"),
        }
    }
}

/// Dark-mode displacement riding on the bright S1 reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    pub s2_amp: f64,
    pub s3_amp: f64,
}

impl Signal {
    pub const VACUUM: Signal = Signal {
        s2_amp: 0.0,
        s3_amp: 0.0,
    };

    pub fn new(s2_amp: f64, s3_amp: f64) -> Self {
        Self { s2_amp, s3_amp }
    }

    pub fn axis(&self, basis: Basis) -> f64 {
        match basis {
            Basis::S2 => self.s2_amp,
            Basis::S3 => self.s3_amp,
        }
    }

    pub fn scaled(&self, k: f64) -> Signal {
        Signal::new(self.s2_amp * k, self.s3_amp * k)
    }

    pub fn power(&self) -> f64 {
        self.s2_amp * self.s2_amp + self.s3_amp * self.s3_amp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    eta: f64,
    excess_noise: f64,
}

impl ChannelParams {
    pub fn new(eta: f64, excess_noise: f64) -> Result<Self, ChannelError> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(ChannelError::Transmission(eta));
        }
        if !(excess_noise.is_finite() && excess_noise >= 0.0) {
            return Err(ChannelError::ExcessNoise(excess_noise));
        }
        Ok(Self { eta, excess_noise })
    }

    pub fn lossy(eta: f64) -> Result<Self, ChannelError> {
        Self::new(eta, 0.0)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn excess_noise(&self) -> f64 {
        self.excess_noise
    }

    /// Outcome variance `σ0² + excess_noise`.
    pub fn outcome_variance(&self) -> f64 {
        VACUUM_VARIANCE + self.excess_noise
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementOutcome {
    pub basis: Basis,
    pub x: f64,
}

/// Amplitude reaching Bob: scaled by `√η`.
pub fn apply_loss(sig: Signal, ch: &ChannelParams) -> Signal {
    sig.scaled(ch.eta.sqrt())
}

/// Amplitude split off by a beam-splitting eavesdropper: scaled by `√(1−η)`.
pub fn eve_tap(sig: Signal, ch: &ChannelParams) -> Signal {
    sig.scaled((1.0 - ch.eta).sqrt())
}

/// Stokes detection on one axis.
pub fn measure(
    sig: Signal,
    basis: Basis,
    excess_noise: f64,
    rng: &mut RngStream,
) -> MeasurementOutcome {
    let sigma = (VACUUM_VARIANCE + excess_noise).sqrt();
    MeasurementOutcome {
        basis,
        x: sig.axis(basis) + sigma * rng.normal(),
    }
}

/// Paired S2 outcomes of the two detectors behind a 50:50 splitter.
#[derive(Debug, Clone, PartialEq)]
pub struct DualDetectorRun {
    pub detector1: Vec<f64>,
    pub detector2: Vec<f64>,
    pub correlation: f64,
}

/// Splits the signal on a 50:50 beam splitter and measures S2 behind both
/// outputs. When `modulated`, every event carries `±α` with a random sign
/// shared by both halves (each half sees `±α/√2`); otherwise the S1 beam
/// is unmodulated and both detectors see vacuum noise only.
pub fn dual_detector_experiment(
    alpha: f64,
    n_events: usize,
    modulated: bool,
    rng: &mut RngStream,
) -> Result<DualDetectorRun, ChannelError> {
    if n_events < 2 {
        return Err(ChannelError::InsufficientData(n_events));
    }
    let half = ChannelParams::lossy(0.5).expect("0.5 is a valid transmission");
    let mut detector1 = Vec::with_capacity(n_events);
    let mut detector2 = Vec::with_capacity(n_events);
    for _ in 0..n_events {
        let sig = if modulated {
            let a = if rng.bit() { alpha } else { -alpha };
            Signal::new(a, 0.0)
        } else {
            Signal::VACUUM
        };
        // Both output ports of a 50:50 splitter carry amplitude a/√2.
        let port1 = apply_loss(sig, &half);
        let port2 = eve_tap(sig, &half);
        detector1.push(measure(port1, Basis::S2, 0.0, rng).x);
        detector2.push(measure(port2, Basis::S2, 0.0, rng).x);
    }
    let correlation = pearson(&detector1, &detector2);
    Ok(DualDetectorRun {
        detector1,
        detector2,
        correlation,
    })
}

/// Large-sample correlation of the shared-sign dual-detector model,
/// `μ² / (μ² + σ0²)` with `μ = α/√2`.
pub fn dual_detector_correlation_limit(alpha: f64) -> f64 {
    let mu_sq = alpha * alpha / 2.0;
    mu_sq / (mu_sq + VACUUM_VARIANCE)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::streams;

    #[test]
    fn channel_params_validation() {
        assert!(ChannelParams::new(1.0, 0.0).is_ok());
        assert_eq!(
            ChannelParams::new(0.0, 0.0),
            Err(ChannelError::Transmission(0.0))
        );
        assert_eq!(
            ChannelParams::new(1.2, 0.0),
            Err(ChannelError::Transmission(1.2))
        );
        assert_eq!(
            ChannelParams::new(0.5, -0.1),
            Err(ChannelError::ExcessNoise(-0.1))
        );
        assert!(ChannelParams::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn loss_examples() {
        let sig = Signal::new(0.6, -0.6);
        let id = ChannelParams::lossy(1.0).unwrap();
        assert_eq!(apply_loss(sig, &id), sig);
        assert_eq!(eve_tap(sig, &id), Signal::new(0.0, -0.0));

        let ch = ChannelParams::lossy(0.79).unwrap();
        assert!((apply_loss(sig, &ch).s2_amp - 0.6 * 0.79f64.sqrt()).abs() < 1e-15);
        assert!((apply_loss(sig, &ch).s2_amp - 0.5333).abs() < 1e-4);

        let ch = ChannelParams::lossy(0.36).unwrap();
        assert!((apply_loss(sig, &ch).s2_amp - 0.36).abs() < 1e-15);
        assert!((eve_tap(sig, &ch).s2_amp - 0.48).abs() < 1e-15);
    }

    #[test]
    fn vacuum_measurement_statistics() {
        let mut rng = RngStream::new(7, streams::BOB);
        let n = 200_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| measure(Signal::VACUUM, Basis::S2, 0.0, &mut rng).x)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        // Standard errors: σ/√N for the mean, σ²·√(2/N) for the variance.
        assert!(mean.abs() < 5.0 * (0.5f64 / n as f64).sqrt());
        assert!((var - 0.5).abs() < 5.0 * 0.5 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn measure_reads_the_chosen_axis() {
        let mut rng = RngStream::new(11, streams::BOB);
        let sig = Signal::new(0.6, -0.6);
        let n = 50_000;
        let m2: f64 = (0..n)
            .map(|_| measure(sig, Basis::S2, 0.0, &mut rng).x)
            .sum::<f64>()
            / n as f64;
        let m3: f64 = (0..n)
            .map(|_| measure(sig, Basis::S3, 0.0, &mut rng).x)
            .sum::<f64>()
            / n as f64;
        assert!((m2 - 0.6).abs() < 0.02);
        assert!((m3 + 0.6).abs() < 0.02);
    }

    #[test]
    fn dual_detector_needs_two_events() {
        let mut rng = RngStream::new(1, streams::SCATTER);
        assert_eq!(
            dual_detector_experiment(0.6, 1, true, &mut rng),
            Err(ChannelError::InsufficientData(1))
        );
    }

    #[test]
    fn dual_detector_bright_limit() {
        let mut rng = RngStream::new(3, streams::SCATTER);
        let run = dual_detector_experiment(50.0, 2_000, true, &mut rng).unwrap();
        assert!(run.correlation > 0.999);
        assert!((dual_detector_correlation_limit(0.6) - 0.18 / 0.68).abs() < 1e-15);
    }
}
