use serde::{Deserialize, Serialize};

use super::harness::{ensure_disjoint, DecisionSource, Harness, RunSpec};
use super::metrics::EvalReport;
use crate::controller::Mode;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::store::{ActivationRecord, Purpose};

pub const DEFAULT_TAUS: [f64; 5] = [0.50, 0.55, 0.60, 0.65, 0.70];
pub const DEFAULT_ALPHAS: [f64; 5] = [0.5, 1.0, 2.0, 3.0, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub taus: Vec<f64>,
    pub modes: Vec<Mode>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self { alphas: DEFAULT_ALPHAS.to_vec(), taus: DEFAULT_TAUS.to_vec(), modes: vec![Mode::Full] }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.taus.is_empty() || self.modes.is_empty() {
            return Err(Error::InvalidParameter("sweep grid has an empty axis".into()));
        }
        if self.alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidParameter("alphas must be finite and >= 0".into()));
        }
        if self.taus.iter().any(|t| !(0.5..1.0).contains(t)) {
            return Err(Error::InvalidParameter("taus must lie in [0.5, 1)".into()));
        }
        Ok(())
    }

    /// Cells in canonical order: mode order, then alpha, then tau ascending.
    fn cells(&self) -> Vec<(Mode, f64, f64)> {
        let mut modes = self.modes.clone();
        modes.sort();
        modes.dedup();
        let mut alphas = self.alphas.clone();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        let mut taus = self.taus.clone();
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        let mut out = Vec::new();
        for &m in &modes {
            for &a in &alphas {
                for &t in &taus {
                    out.push((m, a, t));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub mode: Mode,
    pub alpha: f64,
    pub tau: f64,
    pub val_f1: Option<f64>,
    pub val_precision: Option<f64>,
    pub val_recall: Option<f64>,
    pub val_fpr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: SweepGrid,
    pub cells: Vec<SweepCell>,
    pub selected: SweepCell,
    pub val_baseline: EvalReport,
    /// Selected operating point on the test split, with deltas vs the test
    /// baseline.
    pub test: EvalReport,
    pub test_baseline: EvalReport,
}

/// Picks the cell with the best F1; ties go to smaller alpha, then smaller
/// tau, then the earlier mode. Undefined F1 ranks below every number.
pub fn select_cell(cells: &[SweepCell]) -> Option<&SweepCell> {
    let key = |c: &SweepCell| c.val_f1.unwrap_or(f64::NEG_INFINITY);
    cells.iter().reduce(|best, c| {
        let better = key(c) > key(best)
            || (key(c) == key(best)
                && (c.alpha, c.tau, c.mode).partial_cmp(&(best.alpha, best.tau, best.mode))
                    == Some(std::cmp::Ordering::Less));
        if better {
            c
        } else {
            best
        }
    })
}

/// Evaluates every grid cell on validation, selects one, and reports it on
/// test. Test data never influences the selection.
pub fn run_sweep<T: Scalar, S: DecisionSource<T>>(
    grid: &SweepGrid,
    harness: &Harness<'_, T, S>,
    val: &[&ActivationRecord],
    test: &[&ActivationRecord],
) -> Result<SweepResult> {
    grid.validate()?;
    if val.is_empty() || test.is_empty() {
        return Err(Error::EmptyInput("sweep needs non-empty val and test sets".into()));
    }
    ensure_disjoint(val, test)?;
    let cells = grid
        .cells()
        .into_iter()
        .map(|(mode, alpha, tau)| {
            let r = harness.evaluate(val, RunSpec::Steered { mode, alpha, tau }, Purpose::Tuning)?;
            Ok(SweepCell {
                mode,
                alpha,
                tau,
                val_f1: r.f1,
                val_precision: r.precision,
                val_recall: r.recall,
                val_fpr: r.fpr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let selected = select_cell(&cells).cloned().expect("grid validated non-empty");
    let val_baseline = harness.evaluate(val, RunSpec::Baseline, Purpose::Tuning)?;
    let test_baseline = harness.evaluate(test, RunSpec::Baseline, Purpose::Reporting)?;
    let spec = RunSpec::Steered { mode: selected.mode, alpha: selected.alpha, tau: selected.tau };
    let test_report = harness.evaluate(test, spec, Purpose::Reporting)?.with_deltas(&test_baseline);
    Ok(SweepResult {
        grid: grid.clone(),
        cells,
        selected,
        val_baseline,
        test: test_report,
        test_baseline,
    })
}
