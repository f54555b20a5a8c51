//! The SMGD outer loop: fresh i.i.d. gradient estimate each step, traced.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimators::{sample_gradient, CostProblem, EstimatorSpec};
use crate::lattice::{LatticeVector, SmgdConfig};
use crate::rng::substream;
use crate::step::smgd_step;

/// One recorded trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: u64,
    /// Cost f(x^t).
    pub cost: f64,
    /// l1 norm of the true gradient at x^t.
    pub grad_l1: f64,
    /// l2 norm of the true gradient at x^t.
    pub grad_l2: f64,
    /// Squared distance to the minimizer, when the problem knows one.
    pub dist_sq: Option<f64>,
    /// Support size of the step taken to reach this state (0 at step 0).
    pub support: usize,
    /// Fraction of steps so far on which the clip event failed.
    pub clip_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub entries: Vec<TraceEntry>,
    /// Final lattice state for SMGD runs; absent for real-valued baselines.
    pub final_lattice: Option<LatticeVector>,
    /// Final state embedded in R^n.
    pub final_real: Vec<f64>,
    pub diverged: bool,
}

impl RunTrace {
    pub fn final_cost(&self) -> f64 {
        self.entries.last().map(|e| e.cost).unwrap_or(f64::NAN)
    }
}

pub(crate) fn trace_entry(
    problem: &CostProblem,
    x: &[f64],
    step: u64,
    support: usize,
    clip_failures: u64,
) -> TraceEntry {
    let g = (problem.gradient)(x);
    let dist_sq = problem.minimizer.as_ref().map(|xs| {
        x.iter()
            .zip(xs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    });
    TraceEntry {
        step,
        cost: (problem.value)(x),
        grad_l1: g.iter().map(|v| v.abs()).sum(),
        grad_l2: g.iter().map(|v| v * v).sum::<f64>().sqrt(),
        dist_sq,
        support,
        clip_rate: if step == 0 {
            0.0
        } else {
            clip_failures as f64 / step as f64
        },
    }
}

/// Run SMGD for `config.iterations` steps from `x0`, replicate index 0.
pub fn run(
    problem: &CostProblem,
    estimator: &EstimatorSpec,
    config: &SmgdConfig,
    x0: &LatticeVector,
) -> Result<RunTrace> {
    run_replicate(problem, estimator, config, x0, 0)
}

/// Run one replicate. Each step draws from the substream keyed by
/// (seed, step, replicate); the estimator consumes variates first, then the
/// coordinate flips, so traces are bit-identical for identical inputs and
/// replicates are independent.
pub fn run_replicate(
    problem: &CostProblem,
    estimator: &EstimatorSpec,
    config: &SmgdConfig,
    x0: &LatticeVector,
    replicate: u64,
) -> Result<RunTrace> {
    config.validate()?;
    estimator.validate_for(problem)?;
    let mut x = x0.clone();
    let mut entries = vec![trace_entry(problem, &x.to_real(), 0, 0, 0)];
    let mut clip_failures = 0u64;
    let mut best_cost = entries[0].cost;
    let mut since_best = 0u64;

    for t in 1..=config.iterations {
        let mut rng = substream(config.seed, t, replicate);
        let xr = x.to_real();
        let g = sample_gradient(problem, estimator, &xr, config.eta, &mut rng)
            .map_err(|e| e.at_step(t))?;
        clip_failures += !g.clip_event as u64;
        let (next, outcome) = smgd_step(&x, &g, config, &mut rng).map_err(|e| e.at_step(t))?;
        x = next;

        let last = t == config.iterations;
        let mut stop = false;
        if let Some(window) = config.stagnation_window {
            let cost = (problem.value)(&x.to_real());
            if cost < best_cost {
                best_cost = cost;
                since_best = 0;
            } else {
                since_best += 1;
                stop = since_best >= window;
            }
        }
        if t % config.trace_stride == 0 || last || stop {
            entries.push(trace_entry(
                problem,
                &x.to_real(),
                t,
                outcome.support_size,
                clip_failures,
            ));
        }
        if stop {
            break;
        }
    }
    Ok(RunTrace {
        final_real: x.to_real(),
        final_lattice: Some(x),
        diverged: false,
        entries,
    })
}
