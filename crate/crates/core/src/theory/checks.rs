//! Bound checkers for the cost-decrease theorem, the rate theorem, the
//! mini-batch estimator theorem, and the MGD corollaries.

use crate::error::{Result, SmgdError};
use crate::estimators::{enumerate_expected_l1, sample_gradient, CostProblem, EstimatorSpec, Norm};
use crate::lattice::{LatticeVector, SmgdConfig};
use crate::problems::SeparableQuadratic;
use crate::rng::substream;
use crate::theory::oracle::{
    enumerate_expectation_over_flips, expected_cost_after_step, expected_dist_sq_after_step,
    ConditionalExpectationOracle,
};
use crate::theory::report::{InstanceRecord, TheoremId, TheoremReport};

const EXACT_TOL: f64 = 1e-12;
const MIN_SURVIVING_DRAWS: u64 = 1_000;

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn l2_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `E ||G(x)||_1` for the given estimator: the gradient itself for the
/// exact estimator, subset enumeration for finite sums.
fn expected_l1_for(problem: &CostProblem, spec: &EstimatorSpec, x: &[f64]) -> Result<f64> {
    match *spec {
        EstimatorSpec::Exact => Ok(l1(&(problem.gradient)(x))),
        EstimatorSpec::UniformSingle => enumerate_expected_l1(problem, x, 1, Norm::L1),
        EstimatorSpec::Minibatch { batch_size } => {
            enumerate_expected_l1(problem, x, batch_size, Norm::L1)
        }
    }
}

/// Clip-conditioned Monte Carlo: average `per_draw` over estimator
/// realizations with `||g||_inf <= eta`, reporting mean and standard error.
fn mc_conditional(
    problem: &CostProblem,
    spec: &EstimatorSpec,
    x: &[f64],
    eta: f64,
    n_draws: u64,
    seed: u64,
    lane: u64,
    per_draw: &dyn Fn(&[f64]) -> f64,
) -> Result<(f64, f64)> {
    let mut rng = substream(seed, lane, 101);
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut kept = 0u64;
    for _ in 0..n_draws {
        let g = sample_gradient(problem, spec, x, eta, &mut rng)?;
        if !g.clip_event {
            continue;
        }
        let v = per_draw(&g.values);
        sum += v;
        sum_sq += v * v;
        kept += 1;
    }
    if kept < MIN_SURVIVING_DRAWS {
        return Err(SmgdError::Statistical(format!(
            "only {kept} of {n_draws} draws survived clip conditioning \
             (need at least {MIN_SURVIVING_DRAWS}); raise eta or n_draws"
        )));
    }
    let mean = sum / kept as f64;
    let var = (sum_sq / kept as f64 - mean * mean).max(0.0);
    Ok((mean, (var / kept as f64).sqrt()))
}

fn require_clip_event(grad: &[f64], eta: f64) -> Result<()> {
    let sup = linf(grad);
    if sup > eta {
        return Err(SmgdError::Precondition(format!(
            "||grad||_inf = {sup} exceeds eta = {eta}; the conditioning event is empty"
        )));
    }
    Ok(())
}

/// Check the per-step cost bound
/// `E[f(x^1) | x, E] <= f(x) + (L a^2 / 2 eta) E||G||_1 - (a/eta) ||grad f||_2^2`
/// at one lattice point.
pub fn check_cost_bound(
    quad: &SeparableQuadratic,
    problem: &CostProblem,
    spec: &EstimatorSpec,
    x: &LatticeVector,
    config: &SmgdConfig,
    oracle: &ConditionalExpectationOracle,
) -> Result<TheoremReport> {
    let lipschitz = problem
        .lipschitz_l
        .ok_or_else(|| SmgdError::InvalidArgument("cost bound requires lipschitz_l".into()))?;
    let (alpha, eta) = (config.alpha, config.eta);
    let xr = x.to_real();
    let grad = (problem.gradient)(&xr);
    let f0 = (problem.value)(&xr);
    let e_g_l1 = expected_l1_for(problem, spec, &xr)?;
    let rhs = f0 + lipschitz * alpha * alpha / (2.0 * eta) * e_g_l1 - alpha / eta * l2_sq(&grad);

    let (lhs, std_err) = match (*oracle, *spec) {
        (ConditionalExpectationOracle::ClosedFormPerCoordinate, EstimatorSpec::Exact) => {
            require_clip_event(&grad, eta)?;
            (expected_cost_after_step(quad, &xr, &grad, alpha, eta), None)
        }
        (ConditionalExpectationOracle::OutcomeEnumeration, EstimatorSpec::Exact) => {
            require_clip_event(&grad, eta)?;
            let value = problem.value.clone();
            (
                enumerate_expectation_over_flips(&xr, &grad, alpha, eta, &|p| value(p))?,
                None,
            )
        }
        (ConditionalExpectationOracle::MonteCarlo { n_draws }, _) => {
            let (mean, se) = mc_conditional(problem, spec, &xr, eta, n_draws, config.seed, 0, &|g| {
                expected_cost_after_step(quad, &xr, g, alpha, eta)
            })?;
            (mean, Some(se))
        }
        _ => {
            return Err(SmgdError::InvalidArgument(
                "deterministic oracles only apply to the exact estimator; \
                 use the monte_carlo oracle for stochastic estimators"
                    .into(),
            ))
        }
    };

    TheoremReport::timed(TheoremId::CostBoundS4, EXACT_TOL, |report| {
        report.record(InstanceRecord {
            label: format!("x={:?} alpha={alpha} eta={eta} spec={spec:?}", x.coords()),
            lhs,
            rhs,
            slack: rhs - lhs,
            std_err,
        });
        Ok(())
    })
}

/// Check the strongly convex rate bound
/// `E[||x^1 - x*||^2 | x, E] <= (1 - 2 a mu / eta) ||x - x*||^2
///  + (L a^2 sqrt(n) / eta) ||x - x*|| + (a^2 / eta) E||G(x*)||_1`
/// at one lattice point.
pub fn check_rate_bound(
    quad: &SeparableQuadratic,
    problem: &CostProblem,
    spec: &EstimatorSpec,
    x: &LatticeVector,
    config: &SmgdConfig,
    oracle: &ConditionalExpectationOracle,
) -> Result<TheoremReport> {
    let lipschitz = problem
        .lipschitz_l
        .ok_or_else(|| SmgdError::InvalidArgument("rate bound requires lipschitz_l".into()))?;
    let mu = problem
        .strong_mu
        .ok_or_else(|| SmgdError::InvalidArgument("rate bound requires strong_mu".into()))?;
    let xstar = problem
        .minimizer
        .clone()
        .ok_or_else(|| SmgdError::InvalidArgument("rate bound requires the minimizer".into()))?;

    let (alpha, eta) = (config.alpha, config.eta);
    let n = problem.dimension as f64;
    let xr = x.to_real();
    let dist_sq: f64 = xr
        .iter()
        .zip(&xstar)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let dist = dist_sq.sqrt();
    let e_gstar_l1 = expected_l1_for(problem, spec, &xstar)?;
    let rhs = (1.0 - 2.0 * alpha * mu / eta) * dist_sq
        + lipschitz * alpha * alpha * n.sqrt() / eta * dist
        + alpha * alpha / eta * e_gstar_l1;

    let (lhs, std_err) = match (*oracle, *spec) {
        (ConditionalExpectationOracle::ClosedFormPerCoordinate, EstimatorSpec::Exact) => {
            let grad = quad.gradient(&xr);
            require_clip_event(&grad, eta)?;
            (
                expected_dist_sq_after_step(&xr, &xstar, &grad, alpha, eta),
                None,
            )
        }
        (ConditionalExpectationOracle::OutcomeEnumeration, EstimatorSpec::Exact) => {
            let grad = quad.gradient(&xr);
            require_clip_event(&grad, eta)?;
            let target = xstar.clone();
            (
                enumerate_expectation_over_flips(&xr, &grad, alpha, eta, &|p| {
                    p.iter()
                        .zip(&target)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum()
                })?,
                None,
            )
        }
        (ConditionalExpectationOracle::MonteCarlo { n_draws }, _) => {
            let (mean, se) = mc_conditional(problem, spec, &xr, eta, n_draws, config.seed, 1, &|g| {
                expected_dist_sq_after_step(&xr, &xstar, g, alpha, eta)
            })?;
            (mean, Some(se))
        }
        _ => {
            return Err(SmgdError::InvalidArgument(
                "deterministic oracles only apply to the exact estimator; \
                 use the monte_carlo oracle for stochastic estimators"
                    .into(),
            ))
        }
    };

    TheoremReport::timed(TheoremId::RateS5, EXACT_TOL, |report| {
        report.record(InstanceRecord {
            label: format!("x={:?} alpha={alpha} eta={eta} spec={spec:?}", x.coords()),
            lhs,
            rhs,
            slack: rhs - lhs,
            std_err,
        });
        Ok(())
    })
}

/// Check the mini-batch estimator theorem by full subset enumeration:
/// `E ||G_k||` is non-increasing in k, satisfies the recursive bound
/// `E||G_k|| <= (m/k) ||grad f|| + ((m-k)/k) E||G_{m-k}||`, and equals
/// `||grad f||` at k = m. Checked for both l1 and l2.
pub fn check_minibatch_theorem(
    problem: &CostProblem,
    x: &[f64],
) -> Result<TheoremReport> {
    let m = problem.num_components().ok_or_else(|| {
        SmgdError::InvalidArgument("mini-batch theorem requires finite-sum components".into())
    })?;
    let grad = (problem.gradient)(x);

    TheoremReport::timed(TheoremId::MinibatchS42, 1e-10, |report| {
        for norm in [Norm::L1, Norm::L2] {
            let values: Vec<f64> = (1..=m)
                .map(|k| enumerate_expected_l1(problem, x, k, norm))
                .collect::<Result<_>>()?;
            let full = norm.eval(&grad);

            for k in 2..=m {
                report.record(InstanceRecord {
                    label: format!("{norm:?} monotone k={k}"),
                    lhs: values[k - 1],
                    rhs: values[k - 2],
                    slack: values[k - 2] - values[k - 1],
                    std_err: None,
                });
            }
            for k in 1..m {
                let mf = m as f64;
                let kf = k as f64;
                let bound = mf / kf * full + (mf - kf) / kf * values[m - k - 1];
                report.record(InstanceRecord {
                    label: format!("{norm:?} recursive k={k}"),
                    lhs: values[k - 1],
                    rhs: bound,
                    slack: bound - values[k - 1],
                    std_err: None,
                });
            }
            report.record(InstanceRecord {
                label: format!("{norm:?} endpoint k={m}"),
                lhs: values[m - 1],
                rhs: full,
                slack: -(values[m - 1] - full).abs(),
                std_err: None,
            });
        }
        Ok(())
    })
}

/// The three MGD corollary suites, checked by closed form.
#[derive(Debug, Clone)]
pub struct MgdCorollaryReports {
    /// Large gradient norm implies expected cost decrease.
    pub decrease: TheoremReport,
    /// Small enough alpha for a tolerance level implies decrease while
    /// `f(x) - f(x*) > epsilon`.
    pub tolerance_level: TheoremReport,
    /// Large distance from the minimizer implies expected squared-distance
    /// decrease.
    pub distance: TheoremReport,
}

impl MgdCorollaryReports {
    pub fn passed(&self) -> bool {
        self.decrease.passed() && self.tolerance_level.passed() && self.distance.passed()
    }

    pub fn into_vec(self) -> Vec<TheoremReport> {
        vec![self.decrease, self.tolerance_level, self.distance]
    }
}

/// Evaluate the MGD corollaries at every point whose hypothesis holds
/// strictly; points where the clip event fails are skipped (the
/// conditional expectations are undefined there).
pub fn check_mgd_corollaries(
    quad: &SeparableQuadratic,
    config: &SmgdConfig,
    points: &[LatticeVector],
    epsilons: &[f64],
) -> Result<MgdCorollaryReports> {
    let (alpha, eta) = (config.alpha, config.eta);
    let n = quad.dim() as f64;
    let lipschitz = quad.lipschitz();
    let mu = quad.strong_mu();
    let xstar = quad.minimizer();
    let fstar = quad.value(&xstar);

    let mut decrease = TheoremReport::new(TheoremId::MgdDecreaseS6, 0.0);
    let mut tolerance_level = TheoremReport::new(TheoremId::MgdStrongconvS6, 0.0);
    let mut distance = TheoremReport::new(TheoremId::MgdRateS6, 0.0);

    for x in points {
        let xr = x.to_real();
        let grad = quad.gradient(&xr);
        if linf(&grad) > eta {
            continue;
        }
        let f0 = quad.value(&xr);
        let grad_l2 = l2_sq(&grad).sqrt();
        let dist = xr
            .iter()
            .zip(&xstar)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();

        if grad_l2 > lipschitz * alpha * n.sqrt() / 2.0 {
            let ef = expected_cost_after_step(quad, &xr, &grad, alpha, eta);
            decrease.record(InstanceRecord {
                label: format!("x={:?}", x.coords()),
                lhs: ef,
                rhs: f0,
                slack: f0 - ef,
                std_err: None,
            });
        }

        for &eps in epsilons {
            let alpha_limit = (4.0 * eps * mu / (lipschitz * lipschitz * n)).sqrt();
            if alpha < alpha_limit && f0 - fstar > eps {
                let ef = expected_cost_after_step(quad, &xr, &grad, alpha, eta);
                tolerance_level.record(InstanceRecord {
                    label: format!("x={:?} eps={eps}", x.coords()),
                    lhs: ef,
                    rhs: f0,
                    slack: f0 - ef,
                    std_err: None,
                });
            }
        }

        if dist > lipschitz * alpha * n.sqrt() / (2.0 * mu) {
            let ed = expected_dist_sq_after_step(&xr, &xstar, &grad, alpha, eta);
            distance.record(InstanceRecord {
                label: format!("x={:?}", x.coords()),
                lhs: ed,
                rhs: dist * dist,
                slack: dist * dist - ed,
                std_err: None,
            });
        }
    }

    Ok(MgdCorollaryReports {
        decrease,
        tolerance_level,
        distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard_instance() -> (SeparableQuadratic, CostProblem, LatticeVector, SmgdConfig) {
        let quad = SeparableQuadratic::isotropic(2, 1.0, vec![0.0, 0.0]);
        let problem = quad.to_problem();
        let x = LatticeVector::new(vec![4, -2], 0.1).unwrap();
        let config = SmgdConfig::new(0.1, 1.0, 1, 0);
        (quad, problem, x, config)
    }

    #[test]
    fn cost_bound_is_tight_on_the_standard_instance() {
        // LHS = RHS = 0.083 exactly.
        let (quad, problem, x, config) = standard_instance();
        let report = check_cost_bound(
            &quad,
            &problem,
            &EstimatorSpec::Exact,
            &x,
            &config,
            &ConditionalExpectationOracle::ClosedFormPerCoordinate,
        )
        .unwrap();
        assert!(report.passed());
        let inst = &report.details[0];
        assert!((inst.lhs - 0.083).abs() < 1e-15);
        assert!((inst.rhs - 0.083).abs() < 1e-15);
        assert!(inst.slack.abs() < 1e-15);
    }

    #[test]
    fn cost_bound_trivial_at_the_minimizer() {
        let (quad, problem, _, config) = standard_instance();
        let x = LatticeVector::zero(2, 0.1).unwrap();
        let report = check_cost_bound(
            &quad,
            &problem,
            &EstimatorSpec::Exact,
            &x,
            &config,
            &ConditionalExpectationOracle::ClosedFormPerCoordinate,
        )
        .unwrap();
        let inst = &report.details[0];
        assert_eq!(inst.lhs, 0.0);
        assert_eq!(inst.rhs, 0.0);
    }

    #[test]
    fn cost_bound_example6_rhs_predicts_zero_decrease() {
        // L = 2, ||grad||_1 = n alpha, ||grad||_2^2 = n alpha^2 at x = 0:
        // the bound's RHS equals f(x) exactly, matching the exact zero
        // expected decrease.
        let n = 4;
        let alpha = 0.5;
        let quad = SeparableQuadratic::tightness_example(n, alpha);
        let problem = quad.to_problem();
        let x = LatticeVector::zero(n, alpha).unwrap();
        let config = SmgdConfig::new(alpha, 1.0, 1, 0);
        let report = check_cost_bound(
            &quad,
            &problem,
            &EstimatorSpec::Exact,
            &x,
            &config,
            &ConditionalExpectationOracle::ClosedFormPerCoordinate,
        )
        .unwrap();
        let inst = &report.details[0];
        let f0 = quad.value(&x.to_real());
        assert!((inst.rhs - f0).abs() < 1e-14, "rhs {} vs f0 {f0}", inst.rhs);
        assert!((inst.lhs - f0).abs() < 1e-14);
    }

    #[test]
    fn rate_bound_standard_instance_worked_values() {
        let (quad, problem, x, config) = standard_instance();
        let report = check_rate_bound(
            &quad,
            &problem,
            &EstimatorSpec::Exact,
            &x,
            &config,
            &ConditionalExpectationOracle::ClosedFormPerCoordinate,
        )
        .unwrap();
        let inst = &report.details[0];
        assert!((inst.lhs - 0.166).abs() < 1e-15, "lhs {}", inst.lhs);
        // RHS = 0.8 * 0.2 + 0.01 * sqrt(2) * sqrt(0.2) = 0.16632...
        assert!((inst.rhs - 0.1663245553).abs() < 1e-9, "rhs {}", inst.rhs);
        assert!(inst.slack > 0.0);
        assert!(report.passed());
    }

    #[test]
    fn rate_bound_trivial_at_the_minimizer() {
        let (quad, problem, _, config) = standard_instance();
        let x = LatticeVector::zero(2, 0.1).unwrap();
        let report = check_rate_bound(
            &quad,
            &problem,
            &EstimatorSpec::Exact,
            &x,
            &config,
            &ConditionalExpectationOracle::ClosedFormPerCoordinate,
        )
        .unwrap();
        let inst = &report.details[0];
        assert_eq!(inst.lhs, 0.0);
        assert_eq!(inst.rhs, 0.0);
    }

    #[test]
    fn closed_form_oracle_rejects_stochastic_estimators() {
        let (quad, _, x, config) = standard_instance();
        let problem = quad.split_components(4, 0.2, 3);
        let err = check_cost_bound(
            &quad,
            &problem,
            &EstimatorSpec::Minibatch { batch_size: 2 },
            &x,
            &config,
            &ConditionalExpectationOracle::ClosedFormPerCoordinate,
        )
        .unwrap_err();
        assert!(matches!(err, SmgdError::InvalidArgument(_)));
    }

    #[test]
    fn enumeration_oracle_agrees_with_closed_form() {
        let (quad, problem, x, config) = standard_instance();
        let closed = check_cost_bound(
            &quad,
            &problem,
            &EstimatorSpec::Exact,
            &x,
            &config,
            &ConditionalExpectationOracle::ClosedFormPerCoordinate,
        )
        .unwrap();
        let enumerated = check_cost_bound(
            &quad,
            &problem,
            &EstimatorSpec::Exact,
            &x,
            &config,
            &ConditionalExpectationOracle::OutcomeEnumeration,
        )
        .unwrap();
        assert!((closed.details[0].lhs - enumerated.details[0].lhs).abs() < 1e-14);
    }

    #[test]
    fn understated_lipschitz_constant_is_caught() {
        // Negative control: halving L falsifies the bound at points where
        // it was tight.
        let (quad, mut problem, x, config) = standard_instance();
        problem.lipschitz_l = Some(0.5);
        let report = check_cost_bound(
            &quad,
            &problem,
            &EstimatorSpec::Exact,
            &x,
            &config,
            &ConditionalExpectationOracle::ClosedFormPerCoordinate,
        )
        .unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn minibatch_theorem_on_a_random_split() {
        let quad = crate::problems::random_separable(3, 0.5, 2.0, 1.0, 5).unwrap();
        let problem = quad.split_components(6, 0.8, 5);
        let report = check_minibatch_theorem(&problem, &[0.4, -0.1, 0.9]).unwrap();
        assert!(report.passed(), "worst slack {}", report.max_slack);
    }

    #[test]
    fn mgd_corollaries_standard_instance() {
        let (quad, _, x, config) = standard_instance();
        let reports =
            check_mgd_corollaries(&quad, &config, &[x], &[0.1, 0.01, 0.001]).unwrap();
        // ||grad||_2 = 0.447 > L alpha sqrt(n)/2 = 0.0707: hypothesis holds
        // and E f drops from 0.1 to 0.083.
        assert_eq!(reports.decrease.instances_checked, 1);
        let inst = &reports.decrease.details[0];
        assert!((inst.rhs - 0.1).abs() < 1e-15);
        assert!((inst.lhs - 0.083).abs() < 1e-15);
        assert!(reports.passed());
    }

    #[test]
    fn mgd_corollaries_skip_the_exact_boundary() {
        // Example-6 point sits exactly on both hypothesis boundaries, so
        // neither strict hypothesis is satisfied and nothing is recorded.
        let n = 3;
        let alpha = 0.5;
        let quad = SeparableQuadratic::tightness_example(n, alpha);
        let config = SmgdConfig::new(alpha, 1.0, 1, 0);
        let x = LatticeVector::zero(n, alpha).unwrap();
        let reports = check_mgd_corollaries(&quad, &config, &[x], &[]).unwrap();
        assert_eq!(reports.decrease.instances_checked, 0);
        assert_eq!(reports.distance.instances_checked, 0);
    }
}
