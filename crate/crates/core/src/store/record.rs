use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Data partition a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Cal,
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Cal, Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Cal => "cal",
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cal" => Ok(Split::Cal),
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(other.to_string()),
        }
    }
}

/// One labeled hidden-state sample. `label` is 1 for Tool-Necessary inputs
/// and 0 for Non-Tool inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub id: String,
    pub domain: String,
    pub label: u8,
    pub split: Split,
    pub layer: u32,
    pub hidden: Vec<f32>,
    pub reference_tool: Option<String>,
}

impl ActivationRecord {
    pub fn is_positive(&self) -> bool {
        self.label == 1
    }

    pub fn dim(&self) -> usize {
        self.hidden.len()
    }
}

/// On-disk shape of a record line.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    domain: String,
    label: u8,
    split: String,
    layer: u32,
    dim: usize,
    hidden: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_tool: Option<String>,
}

#[derive(Serialize)]
struct RecordLineOut<'a> {
    id: &'a str,
    domain: &'a str,
    label: u8,
    split: Split,
    layer: u32,
    dim: usize,
    hidden: &'a [f32],
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_tool: Option<&'a str>,
}

/// Per-split record counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub cal: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Cal => self.cal,
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    fn bump(&mut self, split: Split) {
        match split {
            Split::Cal => self.cal += 1,
            Split::Train => self.train += 1,
            Split::Val => self.val += 1,
            Split::Test => self.test += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.cal + self.train + self.val + self.test
    }
}

/// A validated set of records sharing one hidden dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    records: Vec<ActivationRecord>,
}

impl Dataset {
    /// Validates dimension consistency, labels and id uniqueness.
    pub fn new(records: Vec<ActivationRecord>, expected_dim: Option<usize>) -> Result<Self> {
        let dim = match (expected_dim, records.first()) {
            (Some(d), _) => d,
            (None, Some(r)) => r.dim(),
            (None, None) => 0,
        };
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.dim() != dim {
                return Err(Error::dim(dim, r.dim(), format!("record {:?} (#{})", r.id, i + 1)));
            }
            if r.label > 1 {
                return Err(Error::MalformedLine {
                    line: i + 1,
                    reason: format!("label must be 0 or 1, got {}", r.label),
                });
            }
            if r.hidden.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("record {:?}", r.id)));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self { dim, records })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[ActivationRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ActivationRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> Vec<&ActivationRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn split_counts(&self) -> SplitCounts {
        let mut c = SplitCounts::default();
        for r in &self.records {
            c.bump(r.split);
        }
        c
    }

    /// Distinct domain names in sorted order.
    pub fn domains(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| r.domain.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        write_records(&mut w, &self.records).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Reads line-delimited records; blank lines are skipped.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<ActivationRecord>> {
    Ok(read_numbered(reader)?.into_iter().map(|(_, r)| r).collect())
}

fn read_numbered<R: BufRead>(reader: R) -> Result<Vec<(usize, ActivationRecord)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::MalformedLine {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((line_no, parse_line(&line, line_no)?));
    }
    Ok(out)
}

fn parse_line(line: &str, line_no: usize) -> Result<ActivationRecord> {
    let raw: RecordLine = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
        line: line_no,
        reason: e.to_string(),
    })?;
    let split = raw.split.parse::<Split>().map_err(|tag| Error::UnknownSplit {
        line: line_no,
        tag,
    })?;
    if raw.label > 1 {
        return Err(Error::MalformedLine {
            line: line_no,
            reason: format!("label must be 0 or 1, got {}", raw.label),
        });
    }
    if raw.hidden.len() != raw.dim {
        return Err(Error::dim(raw.dim, raw.hidden.len(), format!("line {line_no}")));
    }
    let hidden: Vec<f32> = raw.hidden.iter().map(|&v| v as f32).collect();
    if hidden.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("line {line_no}")));
    }
    Ok(ActivationRecord {
        id: raw.id,
        domain: raw.domain,
        label: raw.label,
        split,
        layer: raw.layer,
        hidden,
        reference_tool: raw.reference_tool,
    })
}

pub fn write_records<W: Write>(w: &mut W, records: &[ActivationRecord]) -> std::io::Result<()> {
    for r in records {
        let line = RecordLineOut {
            id: &r.id,
            domain: &r.domain,
            label: r.label,
            split: r.split,
            layer: r.layer,
            dim: r.hidden.len(),
            hidden: &r.hidden,
            reference_tool: r.reference_tool.as_deref(),
        };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Loads a single-layer activation file.
///
/// Dimension errors name the offending line; the returned dataset carries
/// its per-split counts via [`Dataset::split_counts`].
pub fn load_records(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<Dataset> {
    let numbered = read_numbered(open(path.as_ref())?)?;
    let dim = expected_dim.or_else(|| numbered.first().map(|(_, r)| r.dim()));
    if let Some(d) = dim {
        if let Some((line, r)) = numbered.iter().find(|(_, r)| r.dim() != d) {
            return Err(Error::dim(d, r.dim(), format!("line {line}")));
        }
    }
    Dataset::new(numbered.into_iter().map(|(_, r)| r).collect(), dim)
}

/// Records from several layers sharing ids, labels and domains.
#[derive(Debug, Clone)]
pub struct MultiLayerDump {
    layers: BTreeMap<u32, Dataset>,
}

impl MultiLayerDump {
    pub fn new(records: Vec<ActivationRecord>) -> Result<Self> {
        let mut grouped: BTreeMap<u32, Vec<ActivationRecord>> = BTreeMap::new();
        for r in records {
            grouped.entry(r.layer).or_default().push(r);
        }
        let mut layers = BTreeMap::new();
        for (layer, recs) in grouped {
            layers.insert(layer, Dataset::new(recs, None)?);
        }
        let dump = Self { layers };
        dump.check_alignment()?;
        Ok(dump)
    }

    fn check_alignment(&self) -> Result<()> {
        let mut iter = self.layers.iter();
        let Some((_, first)) = iter.next() else {
            return Err(Error::EmptyInput("multi-layer dump".into()));
        };
        let reference: BTreeMap<&str, (u8, &str, Split)> = first
            .records()
            .iter()
            .map(|r| (r.id.as_str(), (r.label, r.domain.as_str(), r.split)))
            .collect();
        for (layer, ds) in iter {
            if ds.len() != reference.len() {
                return Err(Error::Invariant(format!(
                    "layer {layer} has {} records, expected {}",
                    ds.len(),
                    reference.len()
                )));
            }
            for r in ds.records() {
                match reference.get(r.id.as_str()) {
                    Some(&(label, domain, split))
                        if label == r.label && domain == r.domain && split == r.split => {}
                    Some(_) => {
                        return Err(Error::Invariant(format!(
                            "record {:?} disagrees across layers",
                            r.id
                        )))
                    }
                    None => {
                        return Err(Error::Invariant(format!(
                            "record {:?} missing from some layers",
                            r.id
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(read_records(open(path.as_ref())?)?)
    }

    pub fn layers(&self) -> impl Iterator<Item = (u32, &Dataset)> {
        self.layers.iter().map(|(&l, d)| (l, d))
    }

    pub fn layer(&self, layer: u32) -> Option<&Dataset> {
        self.layers.get(&layer)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }
}
