//! Human and spreadsheet renderings of an [`EvalReport`].

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvalMode, EvalReport, ModalityReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Text,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format `{other}` (json, text, csv)")),
        }
    }
}

struct Column {
    header: &'static str,
    csv: &'static str,
    value: fn(&ModalityReport) -> Option<f64>,
}

fn columns(mode: EvalMode) -> Vec<Column> {
    let mut cols = vec![Column {
        header: "Detection F1",
        csv: "detection_f1",
        value: |r| Some(r.detection_f1),
    }];
    if mode.scores_diagnosis() {
        cols.push(Column {
            header: "Diagnosis F1",
            csv: "diagnosis_f1",
            value: |r| r.diagnosis_f1,
        });
    }
    if mode.scores_segmentation() {
        cols.push(Column {
            header: "Dice-Org",
            csv: "dice_org",
            value: |r| r.dice_org_mean,
        });
        cols.push(Column {
            header: "Dice-Abn",
            csv: "dice_abn",
            value: |r| r.dice_abn_mean,
        });
    }
    cols
}

// Text output uses display names, CSV the manifest codes.
fn rows(report: &EvalReport, display: bool) -> Vec<(String, &ModalityReport)> {
    let mut out: Vec<(String, &ModalityReport)> = report
        .modalities
        .iter()
        .map(|(m, r)| {
            let name = if display { m.display_name() } else { m.code() };
            (name.to_string(), r)
        })
        .collect();
    out.push(("ALL".to_string(), &report.overall));
    out
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Text => render_text(report),
        ReportFormat::Csv => render_csv(report),
    }
}

fn render_text(report: &EvalReport) -> String {
    let meta = &report.metadata;
    let cols = columns(meta.mode);
    let mut table: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Modality".to_string(), "N".to_string()];
    header.extend(cols.iter().map(|c| c.header.to_string()));
    table.push(header);
    for (name, r) in rows(report, true) {
        let mut line = vec![name, r.n_samples.to_string()];
        line.extend(cols.iter().map(|c| cell((c.value)(r))));
        table.push(line);
    }

    let mut out = String::new();
    let _ = writeln!(out, "{}  mode={}", meta.tool_version, meta.mode);
    let _ = writeln!(out, "manifest    sha256:{}", meta.manifest_sha256);
    let _ = writeln!(out, "predictions sha256:{}", meta.predictions_sha256);
    out.push('\n');
    write_aligned(&mut out, &table);

    out.push('\n');
    let mut gates = vec![vec![
        "Modality".to_string(),
        "Passed".to_string(),
        "FailDet".to_string(),
        "FailDiag".to_string(),
        "FailBind".to_string(),
        "Missing".to_string(),
        "InvalidMasks".to_string(),
    ]];
    for (name, r) in rows(report, true) {
        let g = &r.gates;
        gates.push(vec![
            name,
            g.passed.to_string(),
            g.failed_detection.to_string(),
            g.failed_diagnosis.to_string(),
            g.failed_binding.to_string(),
            g.missing_prediction.to_string(),
            r.invalid_masks.to_string(),
        ]);
    }
    write_aligned(&mut out, &gates);

    if meta.mode.scores_segmentation() {
        let o = &report.overall;
        let _ = writeln!(
            out,
            "\nDice policy: binding failures scored as 0 ({}); excluding them: Dice-Org {}, Dice-Abn {}",
            meta.dice_binding_failure_policy,
            cell(o.dice_org_mean_excluding_binding_failures),
            cell(o.dice_abn_mean_excluding_binding_failures),
        );
    }
    if !meta.warnings.is_empty() {
        let _ = writeln!(out, "\n{} warnings:", meta.warnings.len());
        for w in &meta.warnings {
            let _ = writeln!(out, "  {w}");
        }
    }
    out
}

fn write_aligned(out: &mut String, table: &[Vec<String>]) {
    let ncols = table.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..ncols)
        .map(|c| table.iter().map(|r| r.get(c).map_or(0, String::len)).max().unwrap_or(0))
        .collect();
    for row in table {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if i == 0 {
                    format!("{v:<w$}", w = widths[i])
                } else {
                    format!("{v:>w$}", w = widths[i])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
}

fn render_csv(report: &EvalReport) -> String {
    let cols = columns(report.metadata.mode);
    let mut out = String::from("modality,n_samples");
    for c in &cols {
        out.push(',');
        out.push_str(c.csv);
    }
    out.push_str(",passed,failed_detection,failed_diagnosis,failed_binding,missing_prediction\n");
    for (name, r) in rows(report, false) {
        let _ = write!(out, "{name},{}", r.n_samples);
        for c in &cols {
            match (c.value)(r) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        let g = &r.gates;
        let _ = writeln!(
            out,
            ",{},{},{},{},{}",
            g.passed, g.failed_detection, g.failed_diagnosis, g.failed_binding, g.missing_prediction
        );
    }
    out
}
