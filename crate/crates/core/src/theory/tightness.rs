//! Exact reproduction of the boundary-tightness example: one MGD step on
//! `f(x) = sum (x_i - alpha/2)^2` from `x = 0` lands in the corner set
//! `{0, alpha}^n`, so cost and squared distance are conserved exactly.

use serde::Serialize;

use crate::error::{Result, SmgdError};
use crate::problems::SeparableQuadratic;
use crate::theory::oracle::enumerate_expectation_over_flips;

#[derive(Debug, Clone, Serialize)]
pub struct TightnessReport {
    pub n: usize,
    pub alpha: f64,
    pub eta: f64,
    /// `E f(x^1)` by 2^n outcome enumeration.
    pub expected_cost: f64,
    /// `E ||x^1 - x*||^2` by 2^n outcome enumeration.
    pub expected_dist_sq: f64,
    /// The analytic value `n alpha^2 / 4`, equal to both `f(x^0)` and
    /// `||x^0 - x*||^2`.
    pub analytic: f64,
}

impl TightnessReport {
    /// Both enumerated expectations match the analytic value to machine
    /// precision (the outcome probabilities are the only rounding source).
    pub fn exact(&self) -> bool {
        let tol = 1e-12 * self.analytic.max(1.0);
        (self.expected_cost - self.analytic).abs() <= tol
            && (self.expected_dist_sq - self.analytic).abs() <= tol
    }
}

pub fn reproduce_tightness_example(n: usize, alpha: f64, eta: f64) -> Result<TightnessReport> {
    if n == 0 || n > 16 {
        return Err(SmgdError::InvalidArgument(format!(
            "enumeration guard: n must be in 1..=16, got {n}"
        )));
    }
    if !(alpha > 0.0) {
        return Err(SmgdError::InvalidArgument(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if eta < alpha {
        return Err(SmgdError::InvalidArgument(format!(
            "eta = {eta} must be at least alpha = {alpha} so the clip event holds"
        )));
    }

    let quad = SeparableQuadratic::tightness_example(n, alpha);
    let x0 = vec![0.0f64; n];
    let grad = quad.gradient(&x0);
    debug_assert!(grad.iter().all(|&g| g == -alpha));

    let q = quad.clone();
    let expected_cost = enumerate_expectation_over_flips(&x0, &grad, alpha, eta, &|p| q.value(p))?;
    let xstar = quad.minimizer();
    let expected_dist_sq = enumerate_expectation_over_flips(&x0, &grad, alpha, eta, &|p| {
        p.iter()
            .zip(&xstar)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    })?;

    Ok(TightnessReport {
        n,
        alpha,
        eta,
        expected_cost,
        expected_dist_sq,
        analytic: n as f64 * alpha * alpha / 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_checked_small_cases() {
        let r = reproduce_tightness_example(1, 0.5, 1.0).unwrap();
        assert_eq!(r.analytic, 0.0625);
        assert!(r.exact(), "{r:?}");

        let r = reproduce_tightness_example(3, 0.5, 1.0).unwrap();
        assert_eq!(r.analytic, 0.1875);
        assert!(r.exact(), "{r:?}");
    }

    #[test]
    fn independent_of_eta() {
        // Every outcome sits at the same distance, so the flip
        // probabilities are immaterial.
        for n in [1, 2, 5, 8] {
            let a = reproduce_tightness_example(n, 0.25, 0.25).unwrap();
            let b = reproduce_tightness_example(n, 0.25, 0.5).unwrap();
            let c = reproduce_tightness_example(n, 0.25, 2.5).unwrap();
            assert!(a.exact() && b.exact() && c.exact());
            assert!((a.expected_cost - c.expected_cost).abs() < 1e-15);
            assert!((b.expected_dist_sq - c.expected_dist_sq).abs() < 1e-15);
        }
    }

    #[test]
    fn guards() {
        assert!(reproduce_tightness_example(17, 0.5, 1.0).is_err());
        assert!(reproduce_tightness_example(0, 0.5, 1.0).is_err());
        assert!(reproduce_tightness_example(2, 0.5, 0.25).is_err());
    }
}
