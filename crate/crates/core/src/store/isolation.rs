//! Split isolation: calibration data feeds only the steering vectors, the
//! training split feeds the standardizer, router and probes, validation
//! feeds hyperparameter selection and test feeds only the final report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Mutex;

use serde::Serialize;

use super::record::{ActivationRecord, Dataset, Split, SplitCounts};
use crate::error::{Error, Result};

/// What a consumer of records intends to do with them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    SteeringVectors,
    Standardization,
    RouterTraining,
    ProbeTraining,
    LayerSelection,
    Tuning,
    Reporting,
}

impl Purpose {
    /// The access matrix.
    pub fn allowed(self) -> &'static [Split] {
        match self {
            Purpose::SteeringVectors => &[Split::Cal],
            Purpose::Standardization | Purpose::RouterTraining | Purpose::ProbeTraining => {
                &[Split::Train]
            }
            // Probe sweeps fit on train and score on val.
            Purpose::LayerSelection => &[Split::Train, Split::Val],
            Purpose::Tuning => &[Split::Val],
            Purpose::Reporting => &[Split::Test],
        }
    }

    pub fn may_read(self, split: Split) -> bool {
        self.allowed().contains(&split)
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Purpose::SteeringVectors => "steering-vector estimation",
            Purpose::Standardization => "standardization",
            Purpose::RouterTraining => "router training",
            Purpose::ProbeTraining => "probe training",
            Purpose::LayerSelection => "layer selection",
            Purpose::Tuning => "hyperparameter tuning",
            Purpose::Reporting => "reporting",
        };
        f.write_str(s)
    }
}

/// Rejects `records` if any of them lies outside the splits `purpose` may read.
pub fn check_access<'a, I>(purpose: Purpose, records: I) -> Result<()>
where
    I: IntoIterator<Item = &'a ActivationRecord>,
{
    let mut offending: BTreeMap<Split, usize> = BTreeMap::new();
    for r in records {
        if !purpose.may_read(r.split) {
            *offending.entry(r.split).or_default() += 1;
        }
    }
    match offending.into_iter().next() {
        None => Ok(()),
        Some((split, count)) => Err(Error::SplitViolation {
            purpose: purpose.to_string(),
            split: split.to_string(),
            count,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AccessEntry {
    pub purpose: Purpose,
    pub split: Split,
    pub count: usize,
}

/// Records which splits each pipeline stage actually read, so a whole run can
/// be audited against the access matrix after the fact.
#[derive(Debug, Default)]
pub struct AccessTrace {
    entries: Mutex<Vec<AccessEntry>>,
}

impl AccessTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Logs the access and fails immediately if it breaks the matrix.
    pub fn read<'a, I>(&self, purpose: Purpose, records: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a ActivationRecord>,
    {
        let mut per_split: BTreeMap<Split, usize> = BTreeMap::new();
        for r in records {
            *per_split.entry(r.split).or_default() += 1;
        }
        let mut entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
        for (&split, &count) in &per_split {
            entries.push(AccessEntry { purpose, split, count });
        }
        drop(entries);
        match per_split.iter().find(|(s, _)| !purpose.may_read(**s)) {
            None => Ok(()),
            Some((split, count)) => Err(Error::SplitViolation {
                purpose: purpose.to_string(),
                split: split.to_string(),
                count: *count,
            }),
        }
    }

    pub fn entries(&self) -> Vec<AccessEntry> {
        self.entries.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// All logged accesses that break the matrix.
    pub fn violations(&self) -> Vec<AccessEntry> {
        self.entries()
            .into_iter()
            .filter(|e| !e.purpose.may_read(e.split))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IsolationReport {
    pub counts: SplitCounts,
    pub ok: bool,
}

/// Verifies that no calibration id also appears in train, val or test.
pub fn enforce_split_isolation(dataset: &Dataset) -> Result<IsolationReport> {
    enforce_over(dataset.records())
}

/// Same check over an arbitrary record collection (ids may repeat across
/// splits here, which is exactly what the check looks for).
pub fn enforce_over(records: &[ActivationRecord]) -> Result<IsolationReport> {
    let cal: BTreeSet<&str> = records
        .iter()
        .filter(|r| r.split == Split::Cal)
        .map(|r| r.id.as_str())
        .collect();
    let overlap: BTreeSet<String> = records
        .iter()
        .filter(|r| r.split != Split::Cal && cal.contains(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    if !overlap.is_empty() {
        return Err(Error::SplitOverlap(overlap.into_iter().collect()));
    }
    let mut counts = SplitCounts::default();
    for r in records {
        match r.split {
            Split::Cal => counts.cal += 1,
            Split::Train => counts.train += 1,
            Split::Val => counts.val += 1,
            Split::Test => counts.test += 1,
        }
    }
    Ok(IsolationReport { counts, ok: true })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, split: Split) -> ActivationRecord {
        ActivationRecord {
            id: id.into(),
            domain: "math".into(),
            label: 0,
            split,
            layer: 0,
            hidden: vec![0.0],
            reference_tool: None,
        }
    }

    #[test]
    fn disjoint_splits_pass() {
        let recs = vec![rec("a", Split::Cal), rec("b", Split::Train), rec("c", Split::Test)];
        let report = enforce_over(&recs).unwrap();
        assert!(report.ok);
        assert_eq!(report.counts.total(), 3);
    }

    #[test]
    fn overlap_lists_offending_id() {
        let recs = vec![rec("x7", Split::Cal), rec("x7", Split::Test), rec("y", Split::Val)];
        match enforce_over(&recs) {
            Err(Error::SplitOverlap(ids)) => assert_eq!(ids, vec!["x7".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn standard_layout_trace_is_accepted_and_test_read_rejected() {
        let cal = vec![rec("c1", Split::Cal), rec("c2", Split::Cal)];
        let train = vec![rec("t1", Split::Train), rec("t2", Split::Train)];
        let val = vec![rec("v1", Split::Val)];
        let test = vec![rec("s1", Split::Test)];

        let trace = AccessTrace::new();
        trace.read(Purpose::SteeringVectors, &cal).unwrap();
        trace.read(Purpose::Standardization, &train).unwrap();
        trace.read(Purpose::RouterTraining, &train).unwrap();
        trace.read(Purpose::ProbeTraining, &train).unwrap();
        trace.read(Purpose::Tuning, &val).unwrap();
        trace.read(Purpose::Reporting, &test).unwrap();
        assert!(trace.violations().is_empty());
        assert_eq!(trace.entries().len(), 6);

        let leaky: Vec<_> = train.iter().chain(&test).cloned().collect();
        let err = trace.read(Purpose::ProbeTraining, &leaky).unwrap_err();
        assert!(matches!(err, Error::SplitViolation { ref split, count: 1, .. } if split == "test"));
        assert_eq!(trace.violations().len(), 1);
        assert!(check_access(Purpose::SteeringVectors, &train).is_err());
    }
}
