//! Error probabilities, mutual informations and post-selection.
//!
//! Bob receives `±α√η` and Eve (beam-splitting attack) receives `±α√(1−η)`;
//! both read outcomes with variance `σ²`. Bob keeps only events with
//! `|x| ≥ t`, where `t` is the smallest threshold at which his per-event
//! information exceeds Eve's average information.

use crate::quadrature::integrate;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("variance must be > 0, got {0}")]
    Variance(f64),
    #[error("amplitude must be finite and >= 0, got {0}")]
    Amplitude(f64),
    #[error("transmission eta must lie in (0, 1], got {0}")]
    Transmission(f64),
    #[error("threshold must be finite and >= 0, got {0}")]
    Threshold(f64),
    #[error("Eve's information {0} reaches 1 bit; no threshold can beat it")]
    NoThreshold(f64),
    #[error("target yield {0} outside (0, 1]")]
    Yield(f64),
    #[error("threshold {0} keeps no events")]
    DegenerateSelection(f64),
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

fn normal_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Binary entropy in bits, with `0 · log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// `1 + p log₂ p + (1 − p) log₂(1 − p)`.
pub fn binary_mutual_info(p_e: f64) -> Result<f64, InfoError> {
    if !(0.0..=1.0).contains(&p_e) {
        return Err(InfoError::Probability(p_e));
    }
    Ok(1.0 - binary_entropy(p_e))
}

fn check_variance(sigma2: f64) -> Result<(), InfoError> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(InfoError::Variance(sigma2))
    }
}

/// Sign-error probability `Φ(−α/σ)` of a single outcome.
pub fn mean_error(alpha_eff: f64, sigma2: f64) -> Result<f64, InfoError> {
    check_variance(sigma2)?;
    if alpha_eff.is_nan() || alpha_eff < 0.0 {
        return Err(InfoError::Amplitude(alpha_eff));
    }
    Ok(normal_cdf(-alpha_eff / sigma2.sqrt()))
}

/// Probability that the sign of outcome `x` is wrong, given equal priors on
/// `±α`: `1 / (1 + exp(2α|x|/σ²))`.
pub fn posterior_error(x: f64, alpha_eff: f64, sigma2: f64) -> Result<f64, InfoError> {
    check_variance(sigma2)?;
    Ok(posterior(x, alpha_eff, sigma2))
}

fn posterior(x: f64, alpha_eff: f64, sigma2: f64) -> f64 {
    1.0 / (1.0 + (2.0 * alpha_eff * x.abs() / sigma2).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoParams {
    alpha: f64,
    eta: f64,
    sigma2: f64,
}

impl InfoParams {
    pub fn new(alpha: f64, eta: f64, sigma2: f64) -> Result<Self, InfoError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(InfoError::Amplitude(alpha));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(InfoError::Transmission(eta));
        }
        check_variance(sigma2)?;
        Ok(Self { alpha, eta, sigma2 })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `α√η`
    pub fn bob_amplitude(&self) -> f64 {
        self.alpha * self.eta.sqrt()
    }

    /// `α√(1−η)`
    pub fn eve_amplitude(&self) -> f64 {
        self.alpha * (1.0 - self.eta).sqrt()
    }

    pub fn bob_error(&self) -> f64 {
        normal_cdf(-self.bob_amplitude() / self.sigma2.sqrt())
    }

    pub fn eve_error(&self) -> f64 {
        normal_cdf(-self.eve_amplitude() / self.sigma2.sqrt())
    }

    /// Bob's information about Alice's bit for a single outcome `x`.
    pub fn bob_info_at(&self, x: f64) -> f64 {
        1.0 - binary_entropy(posterior(x, self.bob_amplitude(), self.sigma2))
    }

    /// Posterior sign-error probability of outcome `x` at Bob.
    pub fn bob_posterior(&self, x: f64) -> f64 {
        posterior(x, self.bob_amplitude(), self.sigma2)
    }
}

/// Eve's average information `I_AE` from her tapped share.
pub fn eve_info(params: &InfoParams) -> f64 {
    1.0 - binary_entropy(params.eve_error())
}

/// Absolute bisection tolerance on thresholds.
pub const THRESHOLD_TOLERANCE: f64 = 1e-9;

/// Smallest `t ≥ 0` such that every outcome with `|x| > t` carries more
/// information for Bob than Eve's average `I_AE`.
pub fn solve_threshold(params: &InfoParams) -> Result<f64, InfoError> {
    let target = eve_info(params);
    if target <= 0.0 {
        return Ok(0.0);
    }
    if target >= 1.0 {
        return Err(InfoError::NoThreshold(target));
    }
    let excess = |t: f64| params.bob_info_at(t) - target;
    let mut hi = params.sigma2.sqrt();
    while excess(hi) <= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(InfoError::NoThreshold(target));
        }
    }
    let mut lo = 0.0;
    while hi - lo > THRESHOLD_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Fraction of events with `|x| ≥ t`.
pub fn selection_yield(params: &InfoParams, t: f64) -> f64 {
    let mu = params.bob_amplitude();
    let s = params.sigma2.sqrt();
    normal_cdf((mu - t) / s) + normal_cdf((-t - mu) / s)
}

/// Threshold whose closed-form yield equals `target`.
pub fn threshold_for_yield(params: &InfoParams, target: f64) -> Result<f64, InfoError> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(InfoError::Yield(target));
    }
    if target == 1.0 {
        return Ok(0.0);
    }
    let mut hi = params.sigma2.sqrt();
    while selection_yield(params, hi) > target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    while hi - lo > THRESHOLD_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if selection_yield(params, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageEstimator {
    /// `E[1 − h(p(x)) | |x| ≥ t] − I_AE`
    #[default]
    PerEvent,
    /// `1 − h(post_error) − I_AE`
    Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub threshold: f64,
    pub yield_fraction: f64,
    pub post_error: f64,
    /// Per-event average advantage over kept events.
    pub advantage: f64,
    /// Advantage from the aggregate error rate of kept events.
    pub advantage_aggregate: f64,
    pub eve_info: f64,
}

impl SelectionResult {
    pub fn advantage_by(&self, estimator: AdvantageEstimator) -> f64 {
        match estimator {
            AdvantageEstimator::PerEvent => self.advantage,
            AdvantageEstimator::Aggregate => self.advantage_aggregate,
        }
    }
}

/// Relative tolerance of the advantage quadrature.
const ADVANTAGE_RTOL: f64 = 1e-8;

/// Closed-form yield and error of the kept events, plus the information
/// advantage by quadrature over the kept region.
pub fn selection_stats(params: &InfoParams, t: f64) -> Result<SelectionResult, InfoError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(InfoError::Threshold(t));
    }
    let mu = params.bob_amplitude();
    let s = params.sigma2.sqrt();
    let yield_fraction = selection_yield(params, t);
    if yield_fraction <= 0.0 {
        return Err(InfoError::DegenerateSelection(t));
    }
    let post_error = normal_cdf((-t - mu) / s) / yield_fraction;

    // Outcome density is the equal mixture of N(±μ, σ²); by symmetry the
    // kept mass is twice the integral over [t, ∞).
    let density = |x: f64| 0.5 * (normal_pdf(x, mu, s) + normal_pdf(x, -mu, s));
    let upper = t.max(mu) + 14.0 * s;
    let kept_info = 2.0
        * integrate(
            |x| density(x) * params.bob_info_at(x),
            t,
            upper,
            ADVANTAGE_RTOL * yield_fraction,
        );
    let i_ae = eve_info(params);
    Ok(SelectionResult {
        threshold: t,
        yield_fraction,
        post_error,
        advantage: kept_info / yield_fraction - i_ae,
        advantage_aggregate: 1.0 - binary_entropy(post_error) - i_ae,
        eve_info: i_ae,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(alpha: f64, eta: f64) -> InfoParams {
        InfoParams::new(alpha, eta, 0.5).unwrap()
    }

    #[test]
    fn mutual_info_examples() {
        assert_eq!(binary_mutual_info(0.5).unwrap(), 0.0);
        assert_eq!(binary_mutual_info(0.0).unwrap(), 1.0);
        assert_eq!(binary_mutual_info(1.0).unwrap(), 1.0);
        // 1 + 0.06 log2 0.06 + 0.94 log2 0.94
        let direct = 1.0 + 0.06 * 0.06f64.log2() + 0.94 * 0.94f64.log2();
        let v = binary_mutual_info(0.06).unwrap();
        assert!((v - direct).abs() < 1e-15);
        assert!((v - 0.6726).abs() < 1e-4);
        assert_eq!(binary_mutual_info(1.5), Err(InfoError::Probability(1.5)));
        assert_eq!(binary_mutual_info(-0.1), Err(InfoError::Probability(-0.1)));
    }

    #[test]
    fn mean_error_examples() {
        assert_eq!(mean_error(0.0, 0.5).unwrap(), 0.5);
        let alpha_eff = 0.6 * 0.79f64.sqrt();
        let v = mean_error(alpha_eff, 0.5).unwrap();
        assert!((v - 0.5 * libm::erfc(alpha_eff)).abs() < 1e-15);
        assert!((v - 0.22537).abs() < 1e-5);
        assert!(mean_error(40.0, 0.5).unwrap() < 1e-300);
        assert_eq!(mean_error(0.5, 0.0), Err(InfoError::Variance(0.0)));
    }

    #[test]
    fn posterior_examples() {
        assert_eq!(posterior_error(0.0, 0.5333, 0.5).unwrap(), 0.5);
        let v = posterior_error(1.0, 0.5333, 0.5).unwrap();
        assert!((v - 1.0 / (1.0 + (2.1332f64).exp())).abs() < 1e-12);
        assert!((v - 0.1059).abs() < 1e-4);
        assert_eq!(
            posterior_error(1.0, 0.5, -1.0),
            Err(InfoError::Variance(-1.0))
        );
    }

    #[test]
    fn posterior_total_probability() {
        // Independent check: integrate p(x)·f(x) over the outcome density.
        for &(a, s2) in &[(0.5333, 0.5), (0.36, 0.5), (1.0, 0.8)] {
            let s: f64 = f64::sqrt(s2);
            let f = |x: f64| 0.5 * (normal_pdf(x, a, s) + normal_pdf(x, -a, s));
            let lim = a + 14.0 * s;
            let e = integrate(|x| f(x) * posterior(x, a, s2), -lim, lim, 1e-12);
            assert!((e - mean_error(a, s2).unwrap()).abs() < 1e-3);
            assert!((e - mean_error(a, s2).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn eve_info_examples() {
        assert_eq!(eve_info(&params(0.6, 1.0)), 0.0);
        let p = params(0.6, 0.36);
        assert!((p.eve_error() - 0.5 * libm::erfc(0.48)).abs() < 1e-15);
        assert!((p.eve_error() - 0.2487).abs() < 1e-4);
        // Frozen from 1 − h(½erfc(0.48)) evaluated independently.
        assert!((eve_info(&p) - 0.190908).abs() < 1e-6);
        let near_zero = eve_info(&params(0.6, 1e-12));
        let bob_full = 1.0 - binary_entropy(mean_error(0.6, 0.5).unwrap());
        assert!((near_zero - bob_full).abs() < 1e-6);
    }

    #[test]
    fn threshold_lossless_is_zero() {
        assert_eq!(solve_threshold(&params(0.6, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn threshold_meets_condition() {
        for eta in [0.2, 0.36, 0.5, 0.79, 0.95] {
            let p = params(0.6, eta);
            let t = solve_threshold(&p).unwrap();
            assert!(t > 0.0);
            assert!((p.bob_info_at(t) - eve_info(&p)).abs() < 1e-6);
            assert!(p.bob_info_at(t) > eve_info(&p));
            assert!(p.bob_info_at(t - 1e-6) < eve_info(&p));
        }
    }

    #[test]
    fn threshold_closed_form_at_reference_points() {
        // For the logistic posterior, p(t) = p_E gives t = σ² ln((1−p_E)/p_E) / (2α√η).
        for eta in [0.79, 0.36] {
            let p = params(0.6, eta);
            let pe = p.eve_error();
            let t_exact = 0.5 * ((1.0 - pe) / pe).ln() / (2.0 * p.bob_amplitude());
            assert!((solve_threshold(&p).unwrap() - t_exact).abs() < 2e-9);
        }
    }

    #[test]
    fn threshold_increases_with_loss() {
        let mut prev = 0.0;
        for i in (1..=10).rev() {
            let t = solve_threshold(&params(0.6, i as f64 / 10.0)).unwrap();
            assert!(t >= prev);
            prev = t;
        }
    }

    #[test]
    fn selection_without_threshold() {
        let p = params(0.6, 0.79);
        let r = selection_stats(&p, 0.0).unwrap();
        assert!((r.yield_fraction - 1.0).abs() < 1e-15);
        assert!((r.post_error - p.bob_error()).abs() < 1e-15);
    }

    #[test]
    fn selection_rejects_bad_threshold() {
        let p = params(0.6, 0.79);
        assert_eq!(selection_stats(&p, -1.0), Err(InfoError::Threshold(-1.0)));
        assert_eq!(
            selection_stats(&p, 100.0),
            Err(InfoError::DegenerateSelection(100.0))
        );
    }

    #[test]
    fn yield_inversion() {
        let p = params(0.6, 0.79);
        let t = threshold_for_yield(&p, 415.0 / 1069.0).unwrap();
        assert!((selection_yield(&p, t) - 415.0 / 1069.0).abs() < 1e-8);
        assert_eq!(threshold_for_yield(&p, 1.0).unwrap(), 0.0);
        assert!(threshold_for_yield(&p, 0.0).is_err());
    }

    #[test]
    fn per_event_advantage_exceeds_aggregate() {
        let p = params(0.6, 0.79);
        let r = selection_stats(&p, 0.8).unwrap();
        assert!(r.advantage > r.advantage_aggregate);
    }

    proptest! {
        #[test]
        fn posterior_even_and_bounded(x in -20.0f64..20.0, a in 0.01f64..3.0, s2 in 0.1f64..3.0) {
            let p = posterior(x, a, s2);
            prop_assert_eq!(p, posterior(-x, a, s2));
            prop_assert!(p > 0.0 || x.abs() * a / s2 > 300.0);
            prop_assert!(p <= 0.5);
            prop_assert!(posterior(x.abs() + 0.1, a, s2) <= p);
        }

        #[test]
        fn mutual_info_symmetric(p in 0.0f64..=1.0) {
            let a = binary_mutual_info(p).unwrap();
            let b = binary_mutual_info(1.0 - p).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn threshold_scale_free(alpha in 0.2f64..2.0, eta in 0.1f64..0.99, k in 0.1f64..10.0) {
            let base = InfoParams::new(alpha, eta, 0.5).unwrap();
            let scaled = InfoParams::new(alpha * k, eta, 0.5 * k * k).unwrap();
            let t0 = solve_threshold(&base).unwrap();
            let t1 = solve_threshold(&scaled).unwrap();
            prop_assert!((t1 - k * t0).abs() < 1e-7 * k.max(1.0));
        }

        #[test]
        fn advantage_non_decreasing(eta in 0.2f64..1.0, t in 0.0f64..2.5, dt in 0.01f64..0.5) {
            let p = params(0.6, eta);
            let a = selection_stats(&p, t).unwrap();
            let b = selection_stats(&p, t + dt).unwrap();
            prop_assert!(b.advantage >= a.advantage - 1e-9);
            prop_assert!(b.yield_fraction <= a.yield_fraction);
            prop_assert!(a.post_error <= p.bob_error() + 1e-12);
        }
    }
}
