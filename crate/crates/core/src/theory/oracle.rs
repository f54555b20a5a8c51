//! Independent conditional-expectation oracles for one SMGD step.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmgdError};
use crate::problems::SeparableQuadratic;
use crate::step::sgn;

/// How a checker evaluates `E[. | x^t, E^t]` for the bound's left side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ConditionalExpectationOracle {
    /// Per-coordinate closed form; exact, requires a coordinate-separable
    /// quadratic objective.
    ClosedFormPerCoordinate,
    /// Sum over all 2^n flip outcomes for a fixed gradient realization;
    /// exact, requires n <= 20 and the exact-gradient estimator.
    OutcomeEnumeration,
    /// Clip-conditioned Monte Carlo over estimator realizations, with the
    /// per-realization flip expectation taken in closed form.
    MonteCarlo { n_draws: u64 },
}

fn flip_probability(gi: f64, eta: f64) -> f64 {
    (gi.abs() / eta).min(1.0)
}

/// Exact `E[f(x^1) | x^0, G = g]` for a separable quadratic: each
/// coordinate independently stays or moves one cell against sgn(g_i).
pub fn expected_cost_after_step(
    quad: &SeparableQuadratic,
    x: &[f64],
    g: &[f64],
    alpha: f64,
    eta: f64,
) -> f64 {
    quad.coeffs
        .iter()
        .zip(&quad.center)
        .zip(x.iter().zip(g))
        .map(|((c, s), (xi, gi))| {
            let p = flip_probability(*gi, eta);
            let stay = xi - s;
            let moved = xi - alpha * sgn(*gi) as f64 - s;
            0.5 * c * ((1.0 - p) * stay * stay + p * moved * moved)
        })
        .sum()
}

/// Exact `E[||x^1 - target||^2 | x^0, G = g]`, same per-coordinate law.
pub fn expected_dist_sq_after_step(
    x: &[f64],
    target: &[f64],
    g: &[f64],
    alpha: f64,
    eta: f64,
) -> f64 {
    x.iter()
        .zip(target)
        .zip(g)
        .map(|((xi, ti), gi)| {
            let p = flip_probability(*gi, eta);
            let stay = xi - ti;
            let moved = xi - alpha * sgn(*gi) as f64 - ti;
            (1.0 - p) * stay * stay + p * moved * moved
        })
        .sum()
}

/// Exact expectation of an arbitrary functional of `x^1` by enumerating
/// all 2^n flip outcomes for a fixed gradient realization.
pub fn enumerate_expectation_over_flips(
    x: &[f64],
    g: &[f64],
    alpha: f64,
    eta: f64,
    functional: &dyn Fn(&[f64]) -> f64,
) -> Result<f64> {
    let n = x.len();
    if n > 20 {
        return Err(SmgdError::InvalidArgument(format!(
            "outcome enumeration limited to n <= 20, got {n}"
        )));
    }
    let probs: Vec<f64> = g.iter().map(|&gi| flip_probability(gi, eta)).collect();
    let mut point = vec![0.0f64; n];
    let mut total = 0.0f64;
    for mask in 0u32..(1u32 << n) {
        let mut weight = 1.0f64;
        for i in 0..n {
            if mask >> i & 1 == 1 {
                weight *= probs[i];
                point[i] = x[i] - alpha * sgn(g[i]) as f64;
            } else {
                weight *= 1.0 - probs[i];
                point[i] = x[i];
            }
        }
        if weight > 0.0 {
            total += weight * functional(&point);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_matches_spec_worked_values() {
        // f = 0.5 ||x||^2 at (0.4, -0.2), alpha 0.1, eta 1: E f(x^1) = 0.083
        // and E ||x^1||^2 = 0.166.
        let quad = SeparableQuadratic::isotropic(2, 1.0, vec![0.0, 0.0]);
        let x = [0.4, -0.2];
        let g = quad.gradient(&x);
        let ef = expected_cost_after_step(&quad, &x, &g, 0.1, 1.0);
        assert!((ef - 0.083).abs() < 1e-15, "E f = {ef}");
        let ed = expected_dist_sq_after_step(&x, &[0.0, 0.0], &g, 0.1, 1.0);
        assert!((ed - 0.166).abs() < 1e-15, "E dist^2 = {ed}");
    }

    #[test]
    fn enumeration_agrees_with_closed_form() {
        let quad = SeparableQuadratic::new(vec![1.0, 2.5, 0.7], vec![0.1, -0.2, 0.4]);
        let x = [0.5, -0.5, 0.0];
        let g = quad.gradient(&x);
        let (alpha, eta) = (0.25, 3.0);
        let closed = expected_cost_after_step(&quad, &x, &g, alpha, eta);
        let q = quad.clone();
        let enumerated =
            enumerate_expectation_over_flips(&x, &g, alpha, eta, &|p| q.value(p)).unwrap();
        assert!((closed - enumerated).abs() < 1e-14);
    }

    #[test]
    fn zero_gradient_leaves_expectation_at_the_current_value() {
        let quad = SeparableQuadratic::isotropic(2, 2.0, vec![0.0, 0.0]);
        let x = [0.0, 0.0];
        let g = [0.0, 0.0];
        assert_eq!(expected_cost_after_step(&quad, &x, &g, 0.1, 1.0), 0.0);
        assert_eq!(expected_dist_sq_after_step(&x, &[0.0, 0.0], &g, 0.1, 1.0), 0.0);
    }
}
