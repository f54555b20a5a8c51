//! Quadratic test problems with exact analytic constants.
//!
//! Every theorem checker needs exact L, mu and minimizer, so the test
//! problems are diagonal quadratics `f(x) = sum c_i/2 (x_i - s_i)^2` with
//! affine component gradients. Finite-sum versions split the quadratic
//! across m components with zero-mean linear perturbations so component
//! gradients disagree at the minimizer.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Result, SmgdError};
use crate::estimators::{Component, CostProblem};
use crate::rng::substream;

/// `f(x) = sum_i (coeffs[i]/2) (x_i - center[i])^2`.
///
/// Gradient coordinate i is `coeffs[i] (x_i - center[i])`, so
/// L = max coeffs, mu = min coeffs, and per-coordinate conditional
/// expectations under an SMGD step have closed forms.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableQuadratic {
    pub coeffs: Vec<f64>,
    pub center: Vec<f64>,
}

impl SeparableQuadratic {
    pub fn new(coeffs: Vec<f64>, center: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), center.len());
        assert!(coeffs.iter().all(|&c| c > 0.0));
        Self { coeffs, center }
    }

    /// Uniform curvature `c` in every coordinate.
    pub fn isotropic(n: usize, c: f64, center: Vec<f64>) -> Self {
        assert_eq!(center.len(), n);
        Self::new(vec![c; n], center)
    }

    /// The boundary-tightness example: `f(x) = sum (x_i - alpha/2)^2`,
    /// i.e. curvature 2 centered at alpha/2 in every coordinate.
    pub fn tightness_example(n: usize, alpha: f64) -> Self {
        Self::isotropic(n, 2.0, vec![alpha / 2.0; n])
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.center)
            .zip(x)
            .map(|((c, s), xi)| 0.5 * c * (xi - s) * (xi - s))
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.coeffs
            .iter()
            .zip(&self.center)
            .zip(x)
            .map(|((c, s), xi)| c * (xi - s))
            .collect()
    }

    pub fn lipschitz(&self) -> f64 {
        self.coeffs.iter().fold(f64::MIN, |m, &c| m.max(c))
    }

    pub fn strong_mu(&self) -> f64 {
        self.coeffs.iter().fold(f64::MAX, |m, &c| m.min(c))
    }

    pub fn minimizer(&self) -> Vec<f64> {
        self.center.clone()
    }

    /// Package as a [`CostProblem`] with full metadata, no components.
    pub fn to_problem(&self) -> CostProblem {
        let a = self.clone();
        let b = self.clone();
        CostProblem {
            dimension: self.dim(),
            value: Arc::new(move |x: &[f64]| a.value(x)),
            gradient: Arc::new(move |x: &[f64]| b.gradient(x)),
            components: None,
            lipschitz_l: Some(self.lipschitz()),
            strong_mu: Some(self.strong_mu()),
            minimizer: Some(self.minimizer()),
        }
    }

    /// Finite-sum version: component i has gradient
    /// `grad f(x) + b_i` with perturbations `b_i` summing to zero, entries
    /// uniform in `[-spread, spread]`. Each component gradient keeps the
    /// same Lipschitz constant, and component gradients disagree at the
    /// minimizer whenever `spread > 0`.
    pub fn split_components(&self, m: usize, spread: f64, seed: u64) -> CostProblem {
        assert!(m >= 1);
        let n = self.dim();
        let mut rng = substream(seed, 0, 2);
        let mut perturbations: Vec<Vec<f64>> = (0..m - 1)
            .map(|_| (0..n).map(|_| rng.gen_range(-spread..=spread)).collect())
            .collect();
        let last: Vec<f64> = (0..n)
            .map(|i| -perturbations.iter().map(|b| b[i]).sum::<f64>())
            .collect();
        perturbations.push(last);

        let components = perturbations
            .into_iter()
            .map(|b| {
                let quad_v = self.clone();
                let quad_g = self.clone();
                let bv = b.clone();
                Component {
                    value: Arc::new(move |x: &[f64]| {
                        quad_v.value(x)
                            + x.iter()
                                .zip(&quad_v.center)
                                .zip(&bv)
                                .map(|((xi, s), bi)| bi * (xi - s))
                                .sum::<f64>()
                    }),
                    gradient: Arc::new(move |x: &[f64]| {
                        quad_g
                            .gradient(x)
                            .iter()
                            .zip(&b)
                            .map(|(g, bi)| g + bi)
                            .collect()
                    }),
                }
            })
            .collect();

        let mut problem = self.to_problem();
        problem.components = Some(components);
        problem
    }

    /// Largest `|G(x)|_inf` any single component gradient can reach at `x`
    /// for a finite-sum split with the given spread; every mini-batch mean
    /// is bounded by it. Used to pick an eta making the clip event sure.
    pub fn sup_grad_inf(&self, x: &[f64], spread: f64) -> f64 {
        self.gradient(x)
            .iter()
            .fold(0.0f64, |m, g| m.max(g.abs() + spread))
    }
}

/// Random diagonal quadratic: curvatures uniform in `[mu0, l0]`, center
/// uniform in `[-center_range, center_range]^n`.
pub fn random_separable(
    n: usize,
    mu0: f64,
    l0: f64,
    center_range: f64,
    seed: u64,
) -> Result<SeparableQuadratic> {
    if !(0.0 < mu0 && mu0 <= l0) {
        return Err(SmgdError::InvalidArgument(format!(
            "need 0 < mu0 <= l0, got mu0 = {mu0}, l0 = {l0}"
        )));
    }
    let mut rng = substream(seed, 0, 3);
    let coeffs = (0..n).map(|_| rng.gen_range(mu0..=l0)).collect();
    let center = (0..n)
        .map(|_| rng.gen_range(-center_range..=center_range))
        .collect();
    Ok(SeparableQuadratic::new(coeffs, center))
}

/// Random isotropic quadratic (single curvature), for the bound-tightness
/// checks that need L equal to the true curvature in every coordinate.
pub fn random_isotropic(
    n: usize,
    mu0: f64,
    l0: f64,
    center_range: f64,
    seed: u64,
) -> Result<SeparableQuadratic> {
    if !(0.0 < mu0 && mu0 <= l0) {
        return Err(SmgdError::InvalidArgument(format!(
            "need 0 < mu0 <= l0, got mu0 = {mu0}, l0 = {l0}"
        )));
    }
    let mut rng = substream(seed, 1, 3);
    let c = rng.gen_range(mu0..=l0);
    let center = (0..n)
        .map(|_| rng.gen_range(-center_range..=center_range))
        .collect();
    Ok(SeparableQuadratic::isotropic(n, c, center))
}
