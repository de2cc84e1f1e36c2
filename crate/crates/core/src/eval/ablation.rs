use serde::{Deserialize, Serialize};

use super::harness::{DecisionSource, Harness, RunSpec};
use super::metrics::EvalReport;
use crate::controller::Mode;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::store::{ActivationRecord, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub alpha: f64,
    pub tau: f64,
    pub baseline: EvalReport,
    /// One report per requested mode, in request order, each with deltas
    /// against `baseline`.
    pub modes: Vec<EvalReport>,
}

impl AblationResult {
    pub fn get(&self, mode: Mode) -> Option<&EvalReport> {
        self.modes.iter().find(|r| r.mode == mode.as_str())
    }
}

/// Every mode at one operating point on the same samples, plus the
/// uninjected baseline.
pub fn run_ablations<T: Scalar, S: DecisionSource<T>>(
    modes: &[Mode],
    alpha: f64,
    tau: f64,
    harness: &Harness<'_, T, S>,
    samples: &[&ActivationRecord],
) -> Result<AblationResult> {
    if modes.is_empty() {
        return Err(Error::InvalidParameter("ablation needs at least one mode".into()));
    }
    let baseline = harness.evaluate(samples, RunSpec::Baseline, Purpose::Reporting)?;
    let reports = modes
        .iter()
        .map(|&mode| {
            harness
                .evaluate(samples, RunSpec::Steered { mode, alpha, tau }, Purpose::Reporting)
                .map(|r| r.with_deltas(&baseline))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationResult { alpha, tau, baseline, modes: reports })
}
