use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::str::FromStr;

use super::{BaselineKind, RunReport};
use crate::datamodel::Dimension;

pub const REPORT_COLUMNS: [&str; 9] = ["VS", "SC", "AU", "AG", "CO", "Overall", "BL-2", "MET", "F1"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(format!("unknown format `{s}`: expected json or markdown")),
        }
    }
}

/// One table row: percentages rounded to one decimal, `None` for empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub cells: [Option<f64>; 9],
}

fn pct(v: Option<f64>) -> Option<f64> {
    v.map(|x| format!("{:.1}", x * 100.0).parse().expect("formatted float parses"))
}

/// The main row followed by baseline rows, in table order.
pub fn report_rows(report: &RunReport) -> Vec<TableRow> {
    let acc = &report.accuracy;
    let mut main = [None; 9];
    for (i, d) in Dimension::ALL.into_iter().enumerate() {
        main[i] = pct(report.dimension_rate(d));
    }
    main[5] = pct(acc.overall.rate());
    main[6] = pct(report.open_ended.bleu2);
    main[7] = pct(report.open_ended.meteor);
    main[8] = pct(report.open_ended.semantic_f1);
    let mut rows = vec![TableRow { method: report.metadata.label.replace('|', "/"), cells: main }];
    for b in &report.baselines {
        let mut cells = [None; 9];
        for (i, d) in Dimension::ALL.into_iter().enumerate() {
            cells[i] = pct(b.by_dimension.get(&d).copied());
        }
        cells[5] = pct(Some(b.overall));
        let method = match b.kind {
            BaselineKind::Random => "Random guess",
            BaselineKind::Frequent => "Frequent guess",
        };
        rows.push(TableRow { method: method.to_string(), cells });
    }
    rows
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"))
}

pub fn render_report(report: &RunReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => markdown(report),
    }
}

fn markdown(report: &RunReport) -> String {
    let m = &report.metadata;
    let mut s = String::new();
    let _ = writeln!(s, "# Evaluation report\n");
    let _ = writeln!(
        s,
        "Run `{}`, templates `{}`, {} questions ({} open-ended).\n",
        m.run_digest, m.template_version, m.questions, report.open_ended.count
    );
    let _ = writeln!(s, "| Method | {} |", REPORT_COLUMNS.join(" | "));
    let _ = writeln!(s, "|---|{}", "---:|".repeat(REPORT_COLUMNS.len()));
    for row in report_rows(report) {
        let cells: Vec<String> = row.cells.iter().map(|c| cell(*c)).collect();
        let _ = writeln!(s, "| {} | {} |", row.method, cells.join(" | "));
    }
    let f = &report.failures;
    let _ = writeln!(s, "\nFailures: {}", f.total);
    if f.total > 0 {
        let _ = writeln!(s, "\n| Stage | Count |\n|---|---:|");
        for (stage, n) in &f.by_stage {
            let _ = writeln!(
                s,
                "| {} | {n} |",
                serde_json::to_value(stage).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
            );
        }
    }
    if !report.accuracy.by_subtask.is_empty() {
        let _ = writeln!(s, "\n## Subtasks\n\n| Subtask | Correct | Total | Accuracy |\n|---|---:|---:|---:|");
        for (id, t) in &report.accuracy.by_subtask {
            let _ = writeln!(s, "| {id} | {} | {} | {} |", t.correct, t.total, cell(pct(t.rate())));
        }
    }
    s
}

/// Reads the main table back out of a rendered markdown report.
pub fn parse_markdown_table(md: &str) -> Vec<TableRow> {
    let mut lines = md.lines().skip_while(|l| !l.starts_with("| Method |"));
    lines.next();
    lines.next();
    lines
        .take_while(|l| l.starts_with('|'))
        .filter_map(|l| {
            let parts: Vec<&str> = l.trim().trim_matches('|').split('|').map(str::trim).collect();
            if parts.len() != 10 {
                return None;
            }
            let mut cells = [None; 9];
            for (c, p) in cells.iter_mut().zip(&parts[1..]) {
                *c = if *p == "-" { None } else { Some(p.parse().ok()?) };
            }
            Some(TableRow { method: parts[0].to_string(), cells })
        })
        .collect()
}
