use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, EvalReport, SampleRow};
use crate::controller::{apply_injection, AssetBundle, Mode, OperatingPoint};
use crate::error::{Error, Result};
use crate::parser::{parse_calls, score_sample, ToolSchema};
use crate::scalar::{lift, Scalar};
use crate::store::{check_access, ActivationRecord, Purpose};
use crate::synth::BehaviorOracle;

/// Anything that turns a (possibly injected) hidden state into generated
/// text: the synthetic oracle here, a real model behind the wire protocol
/// elsewhere.
pub trait DecisionSource<T: Scalar>: Sync {
    fn generate(&self, record: &ActivationRecord, state: &[T], key: u64) -> Result<String>;
}

impl<T: Scalar> DecisionSource<T> for BehaviorOracle {
    fn generate(&self, record: &ActivationRecord, state: &[T], key: u64) -> Result<String> {
        self.generate_text(state, &record.domain, key)
    }
}

/// 64-bit FNV-1a, used to derive stable per-sample keys from ids.
pub fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Which injection, if any, to apply to every sample of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RunSpec {
    Baseline,
    Steered { mode: Mode, alpha: f64, tau: f64 },
}

impl RunSpec {
    pub fn label(&self) -> String {
        match self {
            RunSpec::Baseline => "baseline".into(),
            RunSpec::Steered { mode, .. } => mode.to_string(),
        }
    }
}

/// Runs a bundle against a decision source and scores the outputs.
pub struct Harness<'a, T, S> {
    pub bundle: &'a AssetBundle<T>,
    pub source: &'a S,
    pub schema: &'a ToolSchema,
    pub seed: u64,
}

impl<'a, T: Scalar, S: DecisionSource<T>> Harness<'a, T, S> {
    pub fn new(bundle: &'a AssetBundle<T>, source: &'a S, schema: &'a ToolSchema, seed: u64) -> Self {
        Self { bundle, source, schema, seed }
    }

    fn row(&self, record: &ActivationRecord, spec: RunSpec) -> Result<SampleRow> {
        let h: Vec<T> = lift(&record.hidden);
        let key = fnv1a(&record.id);
        let (state, decision) = match spec {
            RunSpec::Baseline => (h, None),
            RunSpec::Steered { mode, alpha, tau } => {
                let op = OperatingPoint { alpha: T::of(alpha), tau: T::of(tau) };
                let d = self
                    .bundle
                    .decide_at(&h, mode, Some(&record.domain), self.seed ^ key, op)?;
                (apply_injection(&h, &d)?, Some(d))
            }
        };
        let text = self.source.generate(record, &state, key)?;
        let outcome = parse_calls(&text, self.schema, &record.domain);
        Ok(SampleRow {
            id: record.id.clone(),
            domain: record.domain.clone(),
            label: record.label,
            reference_tool: record.reference_tool.clone(),
            routed_domain: decision.as_ref().map(|d| d.routed_domain.clone()),
            intent_p: decision.as_ref().map(|d| d.intent_p.as_f64()),
            gate: decision.as_ref().map(|d| d.gate),
            flags: score_sample(&outcome, record.reference_tool.as_deref()),
            text,
        })
    }

    /// Scores `records` under `spec`. `purpose` is checked against the
    /// records' splits before anything runs.
    pub fn evaluate(&self, records: &[&ActivationRecord], spec: RunSpec, purpose: Purpose) -> Result<EvalReport> {
        check_access(purpose, records.iter().copied())?;
        let rows = records
            .par_iter()
            .map(|r| self.row(r, spec))
            .collect::<Result<Vec<_>>>()?;
        let (alpha, tau) = match spec {
            RunSpec::Baseline => (None, None),
            RunSpec::Steered { alpha, tau, .. } => (Some(alpha), Some(tau)),
        };
        compute_metrics(rows, &spec.label(), alpha, tau)
    }
}

pub(crate) fn ensure_disjoint(a: &[&ActivationRecord], b: &[&ActivationRecord]) -> Result<()> {
    let ids: BTreeSet<&str> = a.iter().map(|r| r.id.as_str()).collect();
    let shared: Vec<String> = b
        .iter()
        .filter(|r| ids.contains(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::SplitOverlap(shared))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a("a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a("foobar"), 0x8594_4171_f739_67e8);
    }
}
