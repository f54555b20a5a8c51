//! Cost functions and unbiased gradient estimators.
//!
//! A [`CostProblem`] is a differentiable objective, optionally with
//! finite-sum structure `f = (1/m) sum f^i` and analytic metadata (L, mu,
//! minimizer). Estimators produce realizations `G(x)` with
//! `E[G(x)] = grad f(x)`: the exact gradient, a uniformly drawn single
//! component, or a size-k mini-batch mean drawn without replacement.

use std::sync::Arc;

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmgdError};
use crate::rng::substream;
use crate::step::GradientSample;

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// One summand `f^i` of a finite-sum cost.
#[derive(Clone)]
pub struct Component {
    pub value: ScalarFn,
    pub gradient: VectorFn,
}

#[derive(Clone)]
pub struct CostProblem {
    pub dimension: usize,
    pub value: ScalarFn,
    pub gradient: VectorFn,
    /// The `f^i` with `f = (1/m) sum f^i`, when the cost is a finite sum.
    pub components: Option<Vec<Component>>,
    /// Lipschitz constant of the gradient, when known analytically.
    pub lipschitz_l: Option<f64>,
    /// Strong convexity parameter, when known analytically.
    pub strong_mu: Option<f64>,
    /// The unique minimizer, when known analytically.
    pub minimizer: Option<Vec<f64>>,
}

impl std::fmt::Debug for CostProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CostProblem")
            .field("dimension", &self.dimension)
            .field("components", &self.components.as_ref().map(Vec::len))
            .field("lipschitz_l", &self.lipschitz_l)
            .field("strong_mu", &self.strong_mu)
            .field("minimizer", &self.minimizer)
            .finish()
    }
}

impl CostProblem {
    pub fn num_components(&self) -> Option<usize> {
        self.components.as_ref().map(Vec::len)
    }

    /// Spot-check the structural invariants at a few random points:
    /// component mean equals the full value/gradient, the stored minimizer
    /// is stationary, and mu <= L.
    pub fn validate_spot(&self, seed: u64) -> Result<()> {
        if let (Some(mu), Some(l)) = (self.strong_mu, self.lipschitz_l) {
            if mu > l {
                return Err(SmgdError::InvalidArgument(format!(
                    "strong_mu = {mu} exceeds lipschitz_l = {l}"
                )));
            }
        }
        if let Some(xs) = &self.minimizer {
            let g = (self.gradient)(xs);
            let sup = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if sup > 1e-10 {
                return Err(SmgdError::InvalidArgument(format!(
                    "stored minimizer is not stationary: ||grad||_inf = {sup}"
                )));
            }
        }
        if let Some(comps) = &self.components {
            let m = comps.len() as f64;
            let mut rng = substream(seed, 0, 0);
            for _ in 0..3 {
                let x: Vec<f64> = (0..self.dimension)
                    .map(|_| rng.gen_range(-2.0..2.0))
                    .collect();
                let full = (self.value)(&x);
                let mean: f64 = comps.iter().map(|c| (c.value)(&x)).sum::<f64>() / m;
                let scale = full.abs().max(1.0);
                if (full - mean).abs() > 1e-12 * scale {
                    return Err(SmgdError::InvalidArgument(format!(
                        "component mean {mean} disagrees with value {full}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Which unbiased estimator to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EstimatorSpec {
    /// `G = grad f` exactly; this is the MGD (non-stochastic) mode.
    Exact,
    /// `G = grad f^i` for i uniform on {1..m}.
    UniformSingle,
    /// Mean of `batch_size` distinct component gradients drawn uniformly
    /// without replacement.
    Minibatch { batch_size: usize },
}

impl EstimatorSpec {
    pub fn validate_for(&self, problem: &CostProblem) -> Result<()> {
        match *self {
            EstimatorSpec::Exact => Ok(()),
            EstimatorSpec::UniformSingle => match problem.num_components() {
                Some(m) if m >= 1 => Ok(()),
                _ => Err(SmgdError::InvalidArgument(
                    "uniform_single estimator requires finite-sum components".into(),
                )),
            },
            EstimatorSpec::Minibatch { batch_size } => match problem.num_components() {
                None => Err(SmgdError::InvalidArgument(
                    "minibatch estimator requires finite-sum components".into(),
                )),
                Some(m) if batch_size >= 1 && batch_size <= m => Ok(()),
                Some(m) => Err(SmgdError::InvalidArgument(format!(
                    "minibatch size {batch_size} out of range 1..={m}"
                ))),
            },
        }
    }
}

fn check_finite(g: &[f64], context: String) -> Result<()> {
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(SmgdError::NonFinite { context, index: i });
    }
    Ok(())
}

/// Draw `k` distinct indices from `0..m` by partial Fisher-Yates shuffle.
fn sample_without_replacement<R: Rng>(m: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m).collect();
    for j in 0..k {
        let pick = j + rng.gen_range(0..m - j);
        idx.swap(j, pick);
    }
    idx.truncate(k);
    idx
}

/// One realization of the chosen estimator at `x`, with its clip event
/// evaluated against `eta`.
pub fn sample_gradient<R: Rng>(
    problem: &CostProblem,
    spec: &EstimatorSpec,
    x: &[f64],
    eta: f64,
    rng: &mut R,
) -> Result<GradientSample> {
    if x.len() != problem.dimension {
        return Err(SmgdError::DimensionMismatch {
            expected: problem.dimension,
            got: x.len(),
        });
    }
    spec.validate_for(problem)?;
    let values = match *spec {
        EstimatorSpec::Exact => {
            let g = (problem.gradient)(x);
            check_finite(&g, "exact gradient".into())?;
            g
        }
        EstimatorSpec::UniformSingle => {
            let comps = problem.components.as_ref().unwrap();
            let i = rng.gen_range(0..comps.len());
            let g = (comps[i].gradient)(x);
            check_finite(&g, format!("component {i} gradient"))?;
            g
        }
        EstimatorSpec::Minibatch { batch_size } => {
            let comps = problem.components.as_ref().unwrap();
            let picks = sample_without_replacement(comps.len(), batch_size, rng);
            let mut acc = vec![0.0f64; problem.dimension];
            for &i in &picks {
                let g = (comps[i].gradient)(x);
                check_finite(&g, format!("component {i} gradient"))?;
                for (a, v) in acc.iter_mut().zip(&g) {
                    *a += v;
                }
            }
            let inv = 1.0 / batch_size as f64;
            acc.iter_mut().for_each(|a| *a *= inv);
            acc
        }
    };
    Ok(GradientSample::new(values, eta))
}

/// Per-coordinate z-scores of the Monte Carlo mean of `sample_gradient`
/// against the exact gradient.
#[derive(Debug, Clone, Serialize)]
pub struct UnbiasednessReport {
    pub z_scores: Vec<f64>,
    pub n_draws: u64,
}

impl UnbiasednessReport {
    pub fn max_abs_z(&self) -> f64 {
        self.z_scores.iter().fold(0.0f64, |m, z| m.max(z.abs()))
    }

    /// True when no coordinate deviates by more than 4 standard errors.
    pub fn passed(&self) -> bool {
        self.max_abs_z() < 4.0
    }
}

pub fn unbiasedness_check(
    problem: &CostProblem,
    spec: &EstimatorSpec,
    x: &[f64],
    n_draws: u64,
    seed: u64,
) -> Result<UnbiasednessReport> {
    if n_draws < 1_000 {
        return Err(SmgdError::InvalidArgument(format!(
            "n_draws = {n_draws} is below the minimum of 1000"
        )));
    }
    let n = problem.dimension;
    let truth = (problem.gradient)(x);
    let mut sum = vec![0.0f64; n];
    let mut sum_sq = vec![0.0f64; n];
    let mut rng = substream(seed, 0, 0);
    // eta is irrelevant to the estimate itself; use infinity.
    for _ in 0..n_draws {
        let s = sample_gradient(problem, spec, x, f64::INFINITY, &mut rng)?;
        for i in 0..n {
            sum[i] += s.values[i];
            sum_sq[i] += s.values[i] * s.values[i];
        }
    }
    let nd = n_draws as f64;
    let z_scores = (0..n)
        .map(|i| {
            let mean = sum[i] / nd;
            let var = (sum_sq[i] / nd - mean * mean).max(0.0);
            let se = (var / nd).sqrt();
            let diff = mean - truth[i];
            if se == 0.0 {
                if diff.abs() <= 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                diff / se
            }
        })
        .collect();
    Ok(UnbiasednessReport { z_scores, n_draws })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

const SUBSET_GUARD: u128 = 1_000_000;

fn binomial(m: usize, k: usize) -> u128 {
    let k = k.min(m - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (m - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exact `E ||G_k(x)||` by full enumeration of all size-k subsets of the
/// component gradients.
pub fn enumerate_expected_l1(
    problem: &CostProblem,
    x: &[f64],
    k: usize,
    norm: Norm,
) -> Result<f64> {
    let comps = problem.components.as_ref().ok_or_else(|| {
        SmgdError::InvalidArgument("subset enumeration requires finite-sum components".into())
    })?;
    let m = comps.len();
    if k == 0 || k > m {
        return Err(SmgdError::InvalidArgument(format!(
            "subset size {k} out of range 1..={m}"
        )));
    }
    let count = binomial(m, k);
    if count > SUBSET_GUARD {
        return Err(SmgdError::EnumerationGuard {
            count,
            guard: SUBSET_GUARD,
        });
    }
    let grads: Vec<Vec<f64>> = comps.iter().map(|c| (c.gradient)(x)).collect();
    for (i, g) in grads.iter().enumerate() {
        check_finite(g, format!("component {i} gradient"))?;
    }
    let n = problem.dimension;
    let mut total = 0.0f64;
    let inv_k = 1.0 / k as f64;
    let mut mean = vec![0.0f64; n];
    for subset in (0..m).combinations(k) {
        mean.iter_mut().for_each(|v| *v = 0.0);
        for &i in &subset {
            for (a, v) in mean.iter_mut().zip(&grads[i]) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|v| *v *= inv_k);
        total += norm.eval(&mean);
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::SeparableQuadratic;

    /// m components with constant gradients; values are linear so the mean
    /// invariant holds trivially.
    fn constant_gradient_problem(grads: Vec<Vec<f64>>) -> CostProblem {
        let n = grads[0].len();
        let m = grads.len() as f64;
        let mean: Vec<f64> = (0..n)
            .map(|i| grads.iter().map(|g| g[i]).sum::<f64>() / m)
            .collect();
        let components = grads
            .into_iter()
            .map(|g| {
                let gv = g.clone();
                Component {
                    value: Arc::new(move |x: &[f64]| {
                        x.iter().zip(&gv).map(|(a, b)| a * b).sum()
                    }),
                    gradient: Arc::new(move |_: &[f64]| g.clone()),
                }
            })
            .collect();
        let mean_v = mean.clone();
        CostProblem {
            dimension: n,
            value: Arc::new(move |x: &[f64]| x.iter().zip(&mean_v).map(|(a, b)| a * b).sum()),
            gradient: Arc::new(move |_: &[f64]| mean.clone()),
            components: Some(components),
            lipschitz_l: None,
            strong_mu: None,
            minimizer: None,
        }
    }

    #[test]
    fn exact_estimator_is_the_gradient() {
        let quad = SeparableQuadratic::isotropic(2, 1.0, vec![0.0, 0.0]);
        let problem = quad.to_problem();
        let mut rng = substream(0, 0, 0);
        let s = sample_gradient(&problem, &EstimatorSpec::Exact, &[0.4, -0.2], 1.0, &mut rng)
            .unwrap();
        assert_eq!(s.values, vec![0.4, -0.2]);
        assert!(s.clip_event);
    }

    #[test]
    fn full_batch_of_two_opposed_components_is_zero() {
        let problem = constant_gradient_problem(vec![vec![1.0], vec![-1.0]]);
        let mut rng = substream(3, 0, 0);
        for _ in 0..20 {
            let s = sample_gradient(
                &problem,
                &EstimatorSpec::Minibatch { batch_size: 2 },
                &[0.0],
                1.0,
                &mut rng,
            )
            .unwrap();
            assert_eq!(s.values, vec![0.0]);
        }
    }

    #[test]
    fn single_draw_frequency_follows_uniform_law() {
        let problem = constant_gradient_problem(vec![vec![1.0], vec![-1.0]]);
        let mut rng = substream(11, 0, 0);
        let n = 100_000;
        let mut positive = 0u64;
        for _ in 0..n {
            let s = sample_gradient(
                &problem,
                &EstimatorSpec::Minibatch { batch_size: 1 },
                &[0.0],
                10.0,
                &mut rng,
            )
            .unwrap();
            positive += (s.values[0] > 0.0) as u64;
        }
        let freq = positive as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.006, "frequency {freq}");
    }

    #[test]
    fn minibatch_k_above_m_is_rejected() {
        let problem = constant_gradient_problem(vec![vec![1.0], vec![-1.0]]);
        let mut rng = substream(0, 0, 0);
        assert!(sample_gradient(
            &problem,
            &EstimatorSpec::Minibatch { batch_size: 3 },
            &[0.0],
            1.0,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn unbiasedness_zero_variance_cases() {
        let quad = SeparableQuadratic::isotropic(2, 1.0, vec![0.0, 0.0]);
        let problem = quad.to_problem();
        let r = unbiasedness_check(&problem, &EstimatorSpec::Exact, &[0.3, 0.7], 2_000, 1).unwrap();
        assert_eq!(r.z_scores, vec![0.0, 0.0]);

        let fs = constant_gradient_problem(vec![vec![1.0], vec![-1.0]]);
        let r = unbiasedness_check(&fs, &EstimatorSpec::Minibatch { batch_size: 2 }, &[0.0], 2_000, 1)
            .unwrap();
        assert_eq!(r.z_scores, vec![0.0]);
    }

    #[test]
    fn unbiasedness_uniform_single() {
        let fs = constant_gradient_problem(vec![vec![1.0], vec![-1.0]]);
        let r = unbiasedness_check(&fs, &EstimatorSpec::UniformSingle, &[0.0], 100_000, 7).unwrap();
        assert!(r.passed(), "z = {:?}", r.z_scores);
    }

    #[test]
    fn enumeration_hand_checked_values() {
        let p2 = constant_gradient_problem(vec![vec![1.0], vec![-1.0]]);
        assert_eq!(enumerate_expected_l1(&p2, &[0.0], 1, Norm::L1).unwrap(), 1.0);
        assert_eq!(enumerate_expected_l1(&p2, &[0.0], 2, Norm::L1).unwrap(), 0.0);

        // Nonnegative coordinates make the l1 norm linear: equal for all k.
        let p3 = constant_gradient_problem(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        for k in 1..=3 {
            let v = enumerate_expected_l1(&p3, &[0.0, 0.0], k, Norm::L1).unwrap();
            assert!((v - 4.0 / 3.0).abs() < 1e-15, "k={k}: {v}");
        }
    }

    #[test]
    fn full_subset_equals_gradient_norm() {
        let p3 = constant_gradient_problem(vec![vec![1.0, 2.0], vec![-0.5, 0.25], vec![2.0, -1.0]]);
        let g = (p3.gradient)(&[0.0, 0.0]);
        for norm in [Norm::L1, Norm::L2] {
            let v = enumerate_expected_l1(&p3, &[0.0, 0.0], 3, norm).unwrap();
            assert!((v - norm.eval(&g)).abs() < 1e-15);
        }
    }

    #[test]
    fn enumeration_guard_trips() {
        let grads: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let p = constant_gradient_problem(grads);
        assert!(matches!(
            enumerate_expected_l1(&p, &[0.0], 20, Norm::L1),
            Err(SmgdError::EnumerationGuard { .. })
        ));
    }

    #[test]
    fn without_replacement_subsets_are_uniform() {
        // m = 4, k = 2: six subsets, chi-square sanity at 4 sigma.
        let m = 4;
        let k = 2;
        let mut rng = substream(21, 0, 0);
        let mut counts = std::collections::HashMap::new();
        let n = 60_000;
        for _ in 0..n {
            let mut picks = sample_without_replacement(m, k, &mut rng);
            picks.sort_unstable();
            *counts.entry(picks).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 6);
        let expect = n as f64 / 6.0;
        let se = (n as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for (subset, c) in counts {
            assert!(
                (c as f64 - expect).abs() < 4.0 * se,
                "subset {subset:?}: count {c}"
            );
        }
    }
}
