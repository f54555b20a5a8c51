//! Unconstrained SGD baseline producing traces in the run schema, for the
//! learning-rate-vs-lattice-resolution comparison and bit-for-bit memory
//! studies. Baseline plumbing, not a theorem checker.

use crate::error::Result;
use crate::estimators::{sample_gradient, CostProblem, EstimatorSpec};
use crate::rng::substream;
use crate::run::{trace_entry, RunTrace};

const DIVERGENCE_COST: f64 = 1e12;

/// Fixed-learning-rate SGD: `x' = x - gamma * G(x)`. A cost above 1e12 is
/// reported as divergence and truncates the trace.
pub fn sgd_comparison_run(
    problem: &CostProblem,
    estimator: &EstimatorSpec,
    gamma: f64,
    iterations: u64,
    seed: u64,
    trace_stride: u64,
    x0: &[f64],
) -> Result<RunTrace> {
    estimator.validate_for(problem)?;
    let mut x = x0.to_vec();
    let mut entries = vec![trace_entry(problem, &x, 0, 0, 0)];
    let mut diverged = false;

    for t in 1..=iterations {
        let mut rng = substream(seed, t, 0);
        let g = sample_gradient(problem, estimator, &x, f64::INFINITY, &mut rng)
            .map_err(|e| e.at_step(t))?;
        for (xi, gi) in x.iter_mut().zip(&g.values) {
            *xi -= gamma * gi;
        }
        let cost = (problem.value)(&x);
        diverged = !cost.is_finite() || cost > DIVERGENCE_COST;
        if t % trace_stride.max(1) == 0 || t == iterations || diverged {
            entries.push(trace_entry(problem, &x, t, 0, 0));
        }
        if diverged {
            break;
        }
    }
    Ok(RunTrace {
        entries,
        final_lattice: None,
        final_real: x,
        diverged,
    })
}
