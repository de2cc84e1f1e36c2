use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, EvalReport, SampleRow};
use crate::error::{Error, Result};
use crate::parser::{parse_calls, score_sample, ToolSchema};

/// One line of a generation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRecord {
    pub id: String,
    pub domain: String,
    pub label: u8,
    pub reference_tool: Option<String>,
    pub text: String,
}

pub fn read_generation_log(path: impl AsRef<Path>) -> Result<Vec<GenerationRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GenerationRecord = serde_json::from_str(&line)
            .map_err(|e| Error::MalformedLine { line: i + 1, reason: e.to_string() })?;
        if rec.label > 1 {
            return Err(Error::MalformedLine { line: i + 1, reason: format!("label {} is not 0/1", rec.label) });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_generation_log(path: impl AsRef<Path>, records: &[GenerationRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Scores pre-generated texts, e.g. from a live model run.
pub fn score_generation_log(records: &[GenerationRecord], schema: &ToolSchema, label: &str) -> Result<EvalReport> {
    let rows = records
        .iter()
        .map(|r| {
            let outcome = parse_calls(&r.text, schema, &r.domain);
            SampleRow {
                id: r.id.clone(),
                domain: r.domain.clone(),
                label: r.label,
                reference_tool: r.reference_tool.clone(),
                routed_domain: None,
                intent_p: None,
                gate: None,
                flags: score_sample(&outcome, r.reference_tool.as_deref()),
                text: r.text.clone(),
            }
        })
        .collect();
    compute_metrics(rows, label, None, None)
}

/// `out` for the JSON document, `out` with a `.csv` extension for the table.
pub fn report_paths(out: &Path) -> (PathBuf, PathBuf) {
    let json = if out.extension().is_some() { out.to_path_buf() } else { out.with_extension("json") };
    (json.clone(), json.with_extension("csv"))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

pub const SUMMARY_COLUMNS: [&str; 22] = [
    "mode", "alpha", "tau", "n", "tp", "fp", "fn", "tn", "precision", "recall", "f1", "accuracy", "fpr",
    "call_count", "format_acc", "tool_name_acc", "args_acc", "exec_precision", "success_recall",
    "delta_f1", "delta_precision", "delta_fpr",
];

/// One summary line per report.
pub fn write_summary_csv<W: Write>(w: W, reports: &[&EvalReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_COLUMNS)?;
    for r in reports {
        let d = r.deltas.as_ref();
        out.write_record([
            r.mode.clone(),
            cell(r.alpha),
            cell(r.tau),
            r.n.to_string(),
            r.counts.tp.to_string(),
            r.counts.fp.to_string(),
            r.counts.fn_.to_string(),
            r.counts.tn.to_string(),
            cell(r.precision),
            cell(r.recall),
            cell(r.f1),
            cell(r.accuracy),
            cell(r.fpr),
            r.call_count.to_string(),
            cell(r.format_acc),
            cell(r.tool_name_acc),
            cell(r.args_acc),
            cell(r.exec_precision),
            cell(r.success_recall),
            cell(d.and_then(|d| d.f1)),
            cell(d.and_then(|d| d.precision)),
            cell(d.and_then(|d| d.fpr)),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

/// Per-sample evidence of a report.
pub fn write_samples_csv<W: Write>(w: W, report: &EvalReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "id", "domain", "label", "reference_tool", "routed_domain", "intent_p", "gate", "triggered",
        "format_ok", "tool_ok", "args_ok", "success",
    ])?;
    for s in &report.samples {
        let f = &s.flags;
        out.write_record([
            s.id.clone(),
            s.domain.clone(),
            s.label.to_string(),
            s.reference_tool.clone().unwrap_or_default(),
            s.routed_domain.clone().unwrap_or_default(),
            cell(s.intent_p),
            s.gate.map(|g| g.to_string()).unwrap_or_default(),
            f.triggered.to_string(),
            f.format_ok.to_string(),
            f.tool_ok.map(|t| t.to_string()).unwrap_or_default(),
            f.args_ok.to_string(),
            f.success.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn save_summary_csv(path: impl AsRef<Path>, reports: &[&EvalReport]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_summary_csv(BufWriter::new(file), reports)
}
