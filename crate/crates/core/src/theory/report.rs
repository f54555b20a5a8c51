use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::SmgdError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    CostBoundS4,
    MinibatchS42,
    RateS5,
    MgdDecreaseS6,
    MgdStrongconvS6,
    MgdRateS6,
    TightnessExampleS6,
}

impl TheoremId {
    pub const ALL: [TheoremId; 7] = [
        TheoremId::CostBoundS4,
        TheoremId::MinibatchS42,
        TheoremId::RateS5,
        TheoremId::MgdDecreaseS6,
        TheoremId::MgdStrongconvS6,
        TheoremId::MgdRateS6,
        TheoremId::TightnessExampleS6,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TheoremId::CostBoundS4 => "cost_bound_s4",
            TheoremId::MinibatchS42 => "minibatch_s42",
            TheoremId::RateS5 => "rate_s5",
            TheoremId::MgdDecreaseS6 => "mgd_decrease_s6",
            TheoremId::MgdStrongconvS6 => "mgd_strongconv_s6",
            TheoremId::MgdRateS6 => "mgd_rate_s6",
            TheoremId::TightnessExampleS6 => "tightness_example_s6",
        }
    }
}

impl FromStr for TheoremId {
    type Err = SmgdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TheoremId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                SmgdError::InvalidArgument(format!(
                    "unknown theorem id {s:?}; expected one of {:?}",
                    TheoremId::ALL.map(|id| id.as_str())
                ))
            })
    }
}

impl std::fmt::Display for TheoremId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One checked (problem, point) instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    /// rhs - lhs; negative means the bound was exceeded.
    pub slack: f64,
    /// Standard error of the lhs estimate, when Monte Carlo.
    pub std_err: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem_id: TheoremId,
    pub instances_checked: u64,
    /// Instances where the bound failed beyond tolerance.
    pub violations: u64,
    /// Most negative slack observed (infinity when nothing was checked).
    pub max_slack: f64,
    pub tolerance: f64,
    pub runtime_ms: u128,
    pub details: Vec<InstanceRecord>,
}

impl TheoremReport {
    pub fn new(theorem_id: TheoremId, tolerance: f64) -> Self {
        Self {
            theorem_id,
            instances_checked: 0,
            violations: 0,
            max_slack: f64::INFINITY,
            tolerance,
            runtime_ms: 0,
            details: Vec::new(),
        }
    }

    /// Record an instance; it counts as a violation when the bound is
    /// exceeded by more than the instance tolerance (4 standard errors for
    /// Monte Carlo, the report tolerance otherwise).
    pub fn record(&mut self, instance: InstanceRecord) {
        let tol = match instance.std_err {
            Some(se) => 4.0 * se + self.tolerance,
            None => self.tolerance,
        };
        self.instances_checked += 1;
        self.violations += (instance.slack < -tol) as u64;
        self.max_slack = self.max_slack.min(instance.slack);
        self.details.push(instance);
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// Merge by summing counts and keeping the worst slack; report-level
    /// merges are order-independent.
    pub fn merge(&mut self, other: TheoremReport) {
        debug_assert_eq!(self.theorem_id, other.theorem_id);
        self.instances_checked += other.instances_checked;
        self.violations += other.violations;
        self.max_slack = self.max_slack.min(other.max_slack);
        self.runtime_ms += other.runtime_ms;
        self.details.extend(other.details);
    }

    /// Run `body`, recording wall time into the report it returns.
    pub fn timed<E>(
        theorem_id: TheoremId,
        tolerance: f64,
        body: impl FnOnce(&mut TheoremReport) -> Result<(), E>,
    ) -> Result<TheoremReport, E> {
        let start = Instant::now();
        let mut report = TheoremReport::new(theorem_id, tolerance);
        body(&mut report)?;
        report.runtime_ms = start.elapsed().as_millis();
        Ok(report)
    }
}
