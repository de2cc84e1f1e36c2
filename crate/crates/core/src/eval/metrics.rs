use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parser::SampleFlags;

/// One evaluated sample: the evidence every report field is computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub id: String,
    pub domain: String,
    pub label: u8,
    pub reference_tool: Option<String>,
    pub routed_domain: Option<String>,
    pub intent_p: Option<f64>,
    pub gate: Option<i8>,
    pub text: String,
    #[serde(flatten)]
    pub flags: SampleFlags,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Relative change against a baseline report, `(x - base) / base`;
/// null when either side is null or the baseline is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub baseline: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub fpr: Option<f64>,
    pub exec_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Ablation mode, or "baseline" for the uninjected run.
    pub mode: String,
    pub alpha: Option<f64>,
    pub tau: Option<f64>,
    pub n: usize,
    pub counts: Counts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Only reported when both classes are present.
    pub accuracy: Option<f64>,
    pub fpr: Option<f64>,
    pub call_count: usize,
    pub format_acc: Option<f64>,
    pub tool_name_acc: Option<f64>,
    pub args_acc: Option<f64>,
    pub exec_precision: Option<f64>,
    pub success_recall: Option<f64>,
    pub deltas: Option<Deltas>,
    pub samples: Vec<SampleRow>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Aggregates per-sample rows into the metric suite. Label 1
/// (Tool-Necessary) is the positive class; "predicted positive" means the
/// trigger tag was emitted.
pub fn compute_metrics(rows: Vec<SampleRow>, mode: &str, alpha: Option<f64>, tau: Option<f64>) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no samples to evaluate".into()));
    }
    let mut c = Counts::default();
    let (mut calls, mut fmt, mut args, mut exec) = (0, 0, 0, 0);
    let (mut tool_known, mut tool_hit) = (0, 0);
    let mut success_pos = 0;
    for r in &rows {
        let f = &r.flags;
        match (r.label, f.triggered) {
            (1, true) => c.tp += 1,
            (1, false) => c.fn_ += 1,
            (0, true) => c.fp += 1,
            (0, false) => c.tn += 1,
            (l, _) => return Err(Error::InvalidParameter(format!("label {l} of {} is not 0/1", r.id))),
        }
        if f.triggered {
            calls += 1;
            fmt += usize::from(f.format_ok);
            args += usize::from(f.args_ok);
            exec += usize::from(f.format_ok && f.tool_ok == Some(true));
            if let Some(ok) = f.tool_ok {
                tool_known += 1;
                tool_hit += usize::from(ok);
            }
        }
        if r.label == 1 && f.success {
            success_pos += 1;
        }
    }
    let pos = c.tp + c.fn_;
    let neg = c.fp + c.tn;
    Ok(EvalReport {
        mode: mode.to_string(),
        alpha,
        tau,
        n: rows.len(),
        counts: c,
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, pos),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        accuracy: if pos > 0 && neg > 0 { ratio(c.tp + c.tn, c.total()) } else { None },
        fpr: ratio(c.fp, neg),
        call_count: calls,
        format_acc: ratio(fmt, calls),
        tool_name_acc: ratio(tool_hit, tool_known),
        args_acc: ratio(args, calls),
        exec_precision: ratio(exec, calls),
        success_recall: ratio(success_pos, pos),
        deltas: None,
        samples: rows,
    })
}

fn rel(x: Option<f64>, base: Option<f64>) -> Option<f64> {
    match (x, base) {
        (Some(x), Some(b)) if b != 0.0 => Some((x - b) / b),
        _ => None,
    }
}

impl EvalReport {
    pub fn with_deltas(mut self, baseline: &EvalReport) -> Self {
        self.deltas = Some(Deltas {
            baseline: baseline.mode.clone(),
            precision: rel(self.precision, baseline.precision),
            recall: rel(self.recall, baseline.recall),
            f1: rel(self.f1, baseline.f1),
            accuracy: rel(self.accuracy, baseline.accuracy),
            fpr: rel(self.fpr, baseline.fpr),
            exec_precision: rel(self.exec_precision, baseline.exec_precision),
        });
        self
    }

    /// The same report without its per-sample evidence.
    pub fn summary(&self) -> EvalReport {
        EvalReport { samples: Vec::new(), ..self.clone() }
    }
}
