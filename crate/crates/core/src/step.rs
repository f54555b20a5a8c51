//! The SMGD per-step update rule.
//!
//! Each coordinate flips one lattice cell against the sign of its gradient
//! estimate with probability `min(|g_i| / eta, 1)`. Exactly one uniform
//! variate is consumed per coordinate in ascending index order, including
//! zero-probability coordinates, so trace reproducibility never depends on
//! gradient sparsity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmgdError};
use crate::lattice::{LatticeVector, SmgdConfig};

/// One realization of the gradient estimator, together with whether the
/// clip event `||g||_inf <= eta` held at the eta it was evaluated against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSample {
    pub values: Vec<f64>,
    pub clip_event: bool,
}

impl GradientSample {
    pub fn new(values: Vec<f64>, eta: f64) -> Self {
        let clip_event = values.iter().all(|v| v.abs() <= eta);
        Self { values, clip_event }
    }
}

/// Per-step record of the Bernoulli draws and the realized update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// The Bernoulli draws, one per coordinate.
    pub flips: Vec<bool>,
    /// Number of coordinates that flipped.
    pub support_size: usize,
    /// Signed lattice steps, each in {-1, 0, +1}.
    pub update: Vec<i8>,
}

/// sgn with sgn(0) = 0: a coordinate whose gradient estimate is exactly
/// zero has flip probability zero and must never move.
pub(crate) fn sgn(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Draw the per-coordinate flips for gradient values `g`, writing the signed
/// update into `update`. Consumes exactly one uniform per coordinate.
pub(crate) fn draw_flips<R: Rng>(g: &[f64], eta: f64, rng: &mut R, update: &mut [i8]) -> usize {
    let mut support = 0;
    for (u, &gi) in update.iter_mut().zip(g) {
        let p = (gi.abs() / eta).min(1.0);
        let flip = rng.gen::<f64>() < p;
        *u = if flip { -sgn(gi) } else { 0 };
        support += flip as usize;
    }
    support
}

/// One SMGD update: `x' = x - alpha * sgn(g_i) * Delta_i` per coordinate,
/// with `Delta_i ~ Bernoulli(min(|g_i|/eta, 1))`.
///
/// The state is unchanged on error; in particular a non-finite gradient
/// entry aborts the step before any variate is consumed.
pub fn smgd_step<R: Rng>(
    x: &LatticeVector,
    g: &GradientSample,
    config: &SmgdConfig,
    rng: &mut R,
) -> Result<(LatticeVector, StepOutcome)> {
    if g.values.len() != x.dim() {
        return Err(SmgdError::DimensionMismatch {
            expected: x.dim(),
            got: g.values.len(),
        });
    }
    if x.alpha() != config.alpha {
        return Err(SmgdError::InvalidArgument(format!(
            "state lattice resolution {} does not match config alpha {}",
            x.alpha(),
            config.alpha
        )));
    }
    if let Some(i) = g.values.iter().position(|v| !v.is_finite()) {
        return Err(SmgdError::NonFinite {
            context: "gradient sample".into(),
            index: i,
        });
    }

    let mut update = vec![0i8; x.dim()];
    let support_size = draw_flips(&g.values, config.eta, rng, &mut update);
    let next = x.offset(&update)?;
    let flips = update.iter().map(|&u| u != 0).collect();
    Ok((
        next,
        StepOutcome {
            flips,
            support_size,
            update,
        },
    ))
}

/// Exact conditional expectation of the next iterate given the gradient
/// realization `grad`: coordinate i maps to `x_i - (alpha/eta) * grad_i`.
///
/// Only valid on the clip event; callers asserting `||grad||_inf > eta`
/// get a precondition error because the closed form does not hold there.
pub fn expected_update(x: &LatticeVector, grad: &[f64], config: &SmgdConfig) -> Result<Vec<f64>> {
    if grad.len() != x.dim() {
        return Err(SmgdError::DimensionMismatch {
            expected: x.dim(),
            got: grad.len(),
        });
    }
    let sup = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sup > config.eta {
        return Err(SmgdError::Precondition(format!(
            "||grad||_inf = {sup} exceeds eta = {}; the conditional expectation \
             identity only holds on the clip event",
            config.eta
        )));
    }
    let scale = config.alpha / config.eta;
    Ok(x.to_real()
        .iter()
        .zip(grad)
        .map(|(xi, gi)| xi - scale * gi)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn cfg(alpha: f64, eta: f64) -> SmgdConfig {
        SmgdConfig::new(alpha, eta, 1, 0)
    }

    #[test]
    fn zero_gradient_never_moves() {
        let x = LatticeVector::zero(2, 0.1).unwrap();
        let mut rng = substream(1, 0, 0);
        let (x1, out) = smgd_step(&x, &GradientSample::new(vec![0.0, 0.0], 1.0), &cfg(0.1, 1.0), &mut rng).unwrap();
        assert_eq!(x1, x);
        assert_eq!(out.support_size, 0);
        assert_eq!(out.update, vec![0, 0]);
    }

    #[test]
    fn clamped_probability_forces_the_update() {
        // |g_i|/eta > 1 on both coordinates: the flip is deterministic.
        let x = LatticeVector::new(vec![3, -1], 0.1).unwrap();
        let g = GradientSample::new(vec![2.5, -7.0], 2.0);
        assert!(!g.clip_event);
        for seed in 0..32 {
            let mut rng = substream(seed, 0, 0);
            let (x1, out) = smgd_step(&x, &g, &cfg(0.1, 2.0), &mut rng).unwrap();
            assert_eq!(x1.coords(), &[2, 0]);
            assert_eq!(out.support_size, 2);
        }
    }

    #[test]
    fn tightness_example_outcomes_stay_in_the_corner_set() {
        // f(x) = sum (x_i - alpha/2)^2 at x = 0: every reachable next
        // iterate has coordinates in {0, alpha}.
        let alpha = 0.5;
        let x = LatticeVector::zero(3, alpha).unwrap();
        let g = GradientSample::new(vec![-0.5, -0.5, -0.5], 1.0);
        for seed in 0..256 {
            let mut rng = substream(seed, 0, 0);
            let (x1, _) = smgd_step(&x, &g, &cfg(alpha, 1.0), &mut rng).unwrap();
            assert!(x1.coords().iter().all(|&c| c == 0 || c == 1));
        }
    }

    #[test]
    fn non_finite_gradient_aborts_without_state_change() {
        let x = LatticeVector::zero(2, 0.1).unwrap();
        let g = GradientSample::new(vec![0.0, f64::NAN], 1.0);
        let mut rng = substream(0, 0, 0);
        let err = smgd_step(&x, &g, &cfg(0.1, 1.0), &mut rng).unwrap_err();
        assert!(matches!(err, SmgdError::NonFinite { index: 1, .. }));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let x = LatticeVector::zero(2, 0.1).unwrap();
        let g = GradientSample::new(vec![1.0], 1.0);
        let mut rng = substream(0, 0, 0);
        assert!(matches!(
            smgd_step(&x, &g, &cfg(0.1, 1.0), &mut rng),
            Err(SmgdError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn expected_update_closed_form() {
        let x = LatticeVector::new(vec![4, -2], 0.1).unwrap();
        let e = expected_update(&x, &[0.4, -0.2], &cfg(0.1, 1.0)).unwrap();
        assert!((e[0] - 0.36).abs() < 1e-15);
        assert!((e[1] - -0.18).abs() < 1e-15);

        let same = expected_update(&x, &[0.0, 0.0], &cfg(0.1, 1.0)).unwrap();
        assert_eq!(same, x.to_real());

        assert!(matches!(
            expected_update(&x, &[2.0, 0.0], &cfg(0.1, 1.0)),
            Err(SmgdError::Precondition(_))
        ));
    }

    #[test]
    fn expected_update_matches_monte_carlo_mean() {
        let x = LatticeVector::new(vec![4, -2], 0.1).unwrap();
        let grad = vec![0.4, -0.2];
        let config = cfg(0.1, 1.0);
        let g = GradientSample::new(grad.clone(), config.eta);
        let n = 100_000u64;
        let mut sum = vec![0.0f64; 2];
        for rep in 0..n {
            let mut rng = substream(99, rep, 0);
            let (x1, _) = smgd_step(&x, &g, &config, &mut rng).unwrap();
            for (s, v) in sum.iter_mut().zip(x1.to_real()) {
                *s += v;
            }
        }
        let expect = expected_update(&x, &grad, &config).unwrap();
        for i in 0..2 {
            let mean = sum[i] / n as f64;
            let p = (grad[i].abs() / config.eta).min(1.0);
            // std of one coordinate is alpha * sqrt(p(1-p))
            let se = config.alpha * (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (mean - expect[i]).abs() <= 4.0 * se,
                "coordinate {i}: mean {mean} vs expectation {}",
                expect[i]
            );
        }
    }

    #[test]
    fn flip_frequency_matches_bernoulli_parameter() {
        let x = LatticeVector::zero(3, 0.1).unwrap();
        let grad = vec![0.3, -0.7, 0.0];
        let config = cfg(0.1, 1.0);
        let g = GradientSample::new(grad.clone(), config.eta);
        let n = 100_000u64;
        let mut counts = [0u64; 3];
        let mut support_sum = 0u64;
        for rep in 0..n {
            let mut rng = substream(5, rep, 0);
            let (_, out) = smgd_step(&x, &g, &config, &mut rng).unwrap();
            for (c, &f) in counts.iter_mut().zip(&out.flips) {
                *c += f as u64;
            }
            support_sum += out.support_size as u64;
        }
        for i in 0..3 {
            let p = grad[i].abs() / config.eta;
            let rate = counts[i] as f64 / n as f64;
            let tol = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
            assert!((rate - p).abs() <= tol.max(1e-12), "coord {i}: {rate} vs {p}");
        }
        // E|Omega| = ||g||_1 / eta
        let l1: f64 = grad.iter().map(|v| v.abs()).sum();
        let mean_support = support_sum as f64 / n as f64;
        assert!((mean_support - l1 / config.eta).abs() < 0.01);
    }
}
