//! Oracles and checkers for the per-step cost bound, the mini-batch
//! estimator theorem, the strongly convex rate bound, and the MGD
//! corollaries, including the exact boundary-tightness example.
//!
//! Checkers compute the bound's left side through an independent oracle
//! (closed form for diagonal quadratics, 2^n outcome enumeration, or
//! clip-conditioned Monte Carlo) and the right side from exact problem
//! metadata plus subset enumeration, then report signed slack so tight
//! cases stay visible.

mod checks;
mod oracle;
mod report;
mod sgd;
mod tightness;

pub use checks::{
    check_cost_bound, check_mgd_corollaries, check_minibatch_theorem, check_rate_bound,
    MgdCorollaryReports,
};
pub use oracle::{
    enumerate_expectation_over_flips, expected_cost_after_step, expected_dist_sq_after_step,
    ConditionalExpectationOracle,
};
pub use report::{InstanceRecord, TheoremId, TheoremReport};
pub use sgd::sgd_comparison_run;
pub use tightness::{reproduce_tightness_example, TightnessReport};
