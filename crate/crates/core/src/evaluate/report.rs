use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{ConfusionCounts, SessionResult};
use crate::error::{Error, Result};
use crate::recognize::Outcome;
use crate::types::Gallery;

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub model: String,
    pub counts: ConfusionCounts,
    /// Closed-set accuracy on the test split, percent.
    pub training_accuracy: Option<f64>,
    pub threshold: f64,
    pub sessions: Vec<SessionResult>,
}

impl EvaluationReport {
    pub fn deployment_accuracy(&self) -> Option<f64> {
        self.counts.accuracy().ok()
    }

    pub fn fpr(&self) -> Option<f64> {
        self.counts.fpr().ok()
    }

    pub fn fnr(&self) -> Option<f64> {
        self.counts.fnr().ok()
    }

    /// One line per session: name, truth, decision, confidence, verdict.
    pub fn render_sessions(&self, gallery: &Gallery) -> String {
        let name_of = |id: usize| gallery.label(id).map_or("?".to_string(), |l| l.name.clone());
        let mut out = String::new();
        for r in &self.sessions {
            let truth = match r.participant {
                super::Participant::Known(id) => name_of(id),
                super::Participant::Unknown => "UNKNOWN".into(),
            };
            let decided = match r.decision.outcome {
                Outcome::Identified { class, .. } => name_of(class),
                Outcome::Unknown { .. } => "UNKNOWN".into(),
            };
            writeln!(
                out,
                "{:<16} truth={:<16} decision={:<16} confidence={:.4} {}",
                r.name,
                truth,
                decided,
                r.decision.confidence(),
                r.verdict.as_str()
            )
            .expect("writing to a String");
        }
        out
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Better {
    Higher,
    Lower,
}

const COLUMNS: [(&str, Better); 4] = [
    ("Training Accuracy", Better::Higher),
    ("Deployment Accuracy", Better::Higher),
    ("FPR", Better::Lower),
    ("FNR", Better::Lower),
];

fn values(r: &EvaluationReport) -> [Option<f64>; 4] {
    [r.training_accuracy, r.deployment_accuracy(), r.fpr(), r.fnr()]
}

/// Which cells hold the best value of their column (ties all count).
fn best_flags(reports: &[EvaluationReport]) -> Vec<[bool; 4]> {
    let rows: Vec<[Option<f64>; 4]> = reports.iter().map(values).collect();
    let mut flags = vec![[false; 4]; rows.len()];
    for (col, (_, better)) in COLUMNS.iter().enumerate() {
        let present = rows.iter().filter_map(|r| r[col]);
        let best = match better {
            Better::Higher => present.fold(f64::NEG_INFINITY, f64::max),
            Better::Lower => present.fold(f64::INFINITY, f64::min),
        };
        for (row, flag) in rows.iter().zip(flags.iter_mut()) {
            flag[col] = row[col] == Some(best);
        }
    }
    flags
}

/// Aligned text table, percentages to two decimals, best value per column
/// in `**bold**`; missing or undefined values print as `n/a`.
pub fn render_table(reports: &[EvaluationReport]) -> String {
    let flags = best_flags(reports);
    let mut header = vec!["Model".to_string()];
    header.extend(COLUMNS.iter().map(|(name, better)| {
        let hint = if *better == Better::Higher { "↑" } else { "↓" };
        format!("{name} {hint}")
    }));
    let mut rows = vec![header];
    for (r, flag) in reports.iter().zip(&flags) {
        let mut row = vec![r.model.clone()];
        for (v, best) in values(r).iter().zip(flag) {
            row.push(match v {
                Some(v) if *best => format!("**{v:.2}**"),
                Some(v) => format!("{v:.2}"),
                None => "n/a".into(),
            });
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| {
                let pad = w - cell.chars().count();
                if c == 0 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect();
        writeln!(out, "| {} |", cells.join(" | ")).expect("writing to a String");
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            writeln!(out, "|-{}-|", rule.join("-|-")).expect("writing to a String");
        }
    }
    out
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct CsvRow {
    model: String,
    training_accuracy: Option<f64>,
    deployment_accuracy: Option<f64>,
    fpr: Option<f64>,
    fnr: Option<f64>,
    tp: u64,
    tn: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    threshold: f64,
}

/// CSV with full-precision percentages; undefined values are empty cells.
pub fn render_csv(reports: &[EvaluationReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(CsvRow {
            model: r.model.clone(),
            training_accuracy: r.training_accuracy,
            deployment_accuracy: r.deployment_accuracy(),
            fpr: r.fpr(),
            fnr: r.fnr(),
            tp: r.counts.tp,
            tn: r.counts.tn,
            fp: r.counts.fp,
            fn_: r.counts.fn_,
            threshold: r.threshold,
        })
        .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid("report", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
}

/// Reads reports back from [`render_csv`] output. Rates are recomputed from
/// the counts and must match the stored columns.
pub fn parse_csv<R: Read>(r: R) -> Result<Vec<EvaluationReport>> {
    let mut reports = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize::<CsvRow>() {
        let row = row.map_err(csv_error)?;
        let report = EvaluationReport {
            model: row.model.clone(),
            counts: ConfusionCounts::new(row.tp, row.tn, row.fp, row.fn_),
            training_accuracy: row.training_accuracy,
            threshold: row.threshold,
            sessions: Vec::new(),
        };
        let consistent = report.deployment_accuracy() == row.deployment_accuracy
            && report.fpr() == row.fpr
            && report.fnr() == row.fnr;
        if !consistent {
            return Err(Error::invalid(
                "report",
                format!("{}: rates disagree with counts", row.model),
            ));
        }
        reports.push(report);
    }
    Ok(reports)
}

fn csv_error(e: csv::Error) -> Error {
    Error::invalid("report", e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(model: &str, counts: ConfusionCounts, train: Option<f64>) -> EvaluationReport {
        EvaluationReport {
            model: model.into(),
            counts,
            training_accuracy: train,
            threshold: 0.8,
            sessions: Vec::new(),
        }
    }

    #[test]
    fn single_report_all_best() {
        let text = render_table(&[report("clip", ConfusionCounts::new(9, 0, 2, 1), Some(96.0))]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("| Model"));
        assert!(lines[2].contains("**96.00**"));
        assert!(lines[2].contains("**75.00**"));
        assert!(lines[2].contains("**100.00**"));
        assert!(lines[2].contains("**10.00**"));
    }

    #[test]
    fn lower_fpr_is_best() {
        let reports = [
            report("a", ConfusionCounts::new(1, 4, 1, 1), None),
            report("b", ConfusionCounts::new(0, 1, 9, 2), None),
        ];
        let text = render_table(&reports);
        let a = text.lines().find(|l| l.starts_with("| a")).unwrap();
        let b = text.lines().find(|l| l.starts_with("| b")).unwrap();
        assert!(a.contains("**20.00**"));
        assert!(b.contains(" 90.00"));
        assert!(!b.contains("**90.00**"));
        assert!(!b.contains("**100.00**"));
        assert!(a.contains("n/a"));
        let widths: Vec<usize> = text.lines().map(|l| l.chars().count()).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn csv_round_trip() {
        let reports = vec![
            report("clip", ConfusionCounts::new(1, 4, 1, 1), Some(96.666_666_666_666_67)),
            report("other", ConfusionCounts::new(0, 0, 0, 3), None),
        ];
        let text = render_csv(&reports).unwrap();
        assert!(text.starts_with(
            "model,training_accuracy,deployment_accuracy,fpr,fnr,tp,tn,fp,fn,threshold\n"
        ));
        let back = parse_csv(text.as_bytes()).unwrap();
        assert_eq!(back, reports);
        let tampered = text.replace(",20.0,", ",21.0,");
        assert!(parse_csv(tampered.as_bytes()).is_err());
    }
}
