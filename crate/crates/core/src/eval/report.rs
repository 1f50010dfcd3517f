//! Per-sequence report rows plus an average row, written either as an aligned table or
//! as `key=value` blocks:
//!
//! ```text
//! row=sequence
//! name=c001
//! idf1=0.95
//! ...
//!
//! row=average
//! name=Avg
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{detection_pr, id_measures, IdentityBox};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sequence: String,
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub detection_precision: f64,
    pub detection_recall: f64,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

pub fn evaluate(sequence: &str, gt: &[IdentityBox], pred: &[IdentityBox], iou_threshold: f64) -> EvalReport {
    let id = id_measures(gt, pred, iou_threshold);
    let det = detection_pr(gt, pred, iou_threshold);
    EvalReport {
        sequence: sequence.to_string(),
        idf1: id.idf1(),
        idp: id.idp(),
        idr: id.idr(),
        detection_precision: det.precision(),
        detection_recall: det.recall(),
        idtp: id.idtp,
        idfp: id.idfp,
        idfn: id.idfn,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub sequences: Vec<EvalReport>,
    /// Ratios are the unweighted mean over sequences; counts are summed.
    pub average: EvalReport,
}

impl EvalSummary {
    pub fn new(sequences: Vec<EvalReport>) -> Self {
        let n = sequences.len().max(1) as f64;
        let mean = |f: fn(&EvalReport) -> f64| sequences.iter().map(f).sum::<f64>() / n;
        let average = EvalReport {
            sequence: "Avg".into(),
            idf1: mean(|r| r.idf1),
            idp: mean(|r| r.idp),
            idr: mean(|r| r.idr),
            detection_precision: mean(|r| r.detection_precision),
            detection_recall: mean(|r| r.detection_recall),
            idtp: sequences.iter().map(|r| r.idtp).sum(),
            idfp: sequences.iter().map(|r| r.idfp).sum(),
            idfn: sequences.iter().map(|r| r.idfn).sum(),
        };
        Self { sequences, average }
    }

    pub fn to_structured(&self) -> String {
        let mut out = String::new();
        let rows = self.sequences.iter().map(|r| ("sequence", r)).chain([("average", &self.average)]);
        for (i, (kind, r)) in rows.enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "row={kind}");
            let _ = writeln!(out, "name={}", r.sequence);
            let _ = writeln!(out, "idf1={}", r.idf1);
            let _ = writeln!(out, "idp={}", r.idp);
            let _ = writeln!(out, "idr={}", r.idr);
            let _ = writeln!(out, "precision={}", r.detection_precision);
            let _ = writeln!(out, "recall={}", r.detection_recall);
            let _ = writeln!(out, "idtp={}", r.idtp);
            let _ = writeln!(out, "idfp={}", r.idfp);
            let _ = writeln!(out, "idfn={}", r.idfn);
        }
        out
    }
}

/// Aligned table with columns Seq, IDF1, IDP, IDR, Prec., Recall and a closing Avg row.
pub fn format_report_table(summary: &EvalSummary) -> String {
    let width = summary
        .sequences
        .iter()
        .map(|r| r.sequence.len())
        .chain([4])
        .max()
        .unwrap_or(4);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}",
        "Seq", "IDF1", "IDP", "IDR", "Prec.", "Recall"
    );
    for r in summary.sequences.iter().chain([&summary.average]) {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}",
            r.sequence, r.idf1, r.idp, r.idr, r.detection_precision, r.detection_recall
        );
    }
    out
}

pub fn write_report(path: &Path, summary: &EvalSummary) -> Result<()> {
    std::fs::write(path, summary.to_structured()).map_err(|e| Error::io(path, e))
}

#[derive(Default)]
struct Partial {
    kind: String,
    line: usize,
    fields: Vec<(String, String, usize)>,
}

impl Partial {
    fn finish(self, path: &Path) -> Result<(String, EvalReport)> {
        let get = |key: &str| -> Result<(&str, usize)> {
            self.fields
                .iter()
                .find(|(k, _, _)| k == key)
                .map(|(_, v, l)| (v.as_str(), *l))
                .ok_or_else(|| Error::parse(path, self.line, format!("report row is missing '{key}'")))
        };
        let real = |key: &str| -> Result<f64> {
            let (v, l) = get(key)?;
            v.parse().map_err(|_| Error::parse(path, l, format!("invalid {key} '{v}'")))
        };
        let count = |key: &str| -> Result<usize> {
            let (v, l) = get(key)?;
            v.parse().map_err(|_| Error::parse(path, l, format!("invalid {key} '{v}'")))
        };
        let report = EvalReport {
            sequence: get("name")?.0.to_string(),
            idf1: real("idf1")?,
            idp: real("idp")?,
            idr: real("idr")?,
            detection_precision: real("precision")?,
            detection_recall: real("recall")?,
            idtp: count("idtp")?,
            idfp: count("idfp")?,
            idfn: count("idfn")?,
        };
        Ok((self.kind, report))
    }
}

pub fn parse_report(text: &str, path: &Path) -> Result<EvalSummary> {
    let mut blocks: Vec<Partial> = Vec::new();
    for (n, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, n, "expected key=value"))?;
        if k == "row" {
            blocks.push(Partial {
                kind: v.to_string(),
                line: n,
                fields: Vec::new(),
            });
        } else {
            blocks
                .last_mut()
                .ok_or_else(|| Error::parse(path, n, "value before the first row= line"))?
                .fields
                .push((k.to_string(), v.to_string(), n));
        }
    }
    let mut sequences = Vec::new();
    let mut average = None;
    for b in blocks {
        let line = b.line;
        match b.finish(path)? {
            (k, r) if k == "sequence" => sequences.push(r),
            (k, r) if k == "average" && average.is_none() => average = Some(r),
            (k, _) => return Err(Error::parse(path, line, format!("unexpected row kind '{k}'"))),
        }
    }
    let average = average.ok_or_else(|| Error::parse(path, 0, "report has no average row"))?;
    Ok(EvalSummary { sequences, average })
}
