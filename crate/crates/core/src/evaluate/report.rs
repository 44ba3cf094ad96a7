//! Text, line-delimited and HTML renderings of evaluation results.

use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{select_optimal_shots, DiffReport, DistributionReport, MetricSet, SweepReport, FAILURE_POLICY};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Jsonl,
    Html,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" | "table" | "txt" => Ok(ReportFormat::Text),
            "jsonl" | "json" | "ndjson" => Ok(ReportFormat::Jsonl),
            "html" => Ok(ReportFormat::Html),
            other => Err(format!("unknown report format {other:?} (expected text, jsonl or html)")),
        }
    }
}

/// Scores of one training strategy on one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: String,
    pub dataset: String,
    pub metrics: MetricSet,
    pub scored: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReportSection {
    Sweep(SweepReport),
    Strategies(Vec<StrategyResult>),
    Distribution(DistributionReport),
    Diff { name: String, report: DiffReport },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub title: String,
    pub sections: Vec<ReportSection>,
}

/// Two decimals, rounding half up. The small nudge keeps values such as
/// 0.735, stored just below the midpoint, rounding up as written.
pub fn fmt2(x: f64) -> String {
    let scaled = (x * 100.0 + 0.5 + 1e-9).floor() / 100.0;
    format!("{scaled:.2}")
}

const METRIC_HEADERS: [&str; 8] = ["Acc", "M-F1", "F1+", "R+", "P+", "F1-", "R-", "P-"];

struct Table {
    caption: String,
    header: Vec<String>,
    rows: Vec<(bool, Vec<String>)>,
}

impl Table {
    fn text(&self, out: &mut String) {
        let cols = self.header.len();
        let mut width = vec![0; cols];
        for cells in std::iter::once(&self.header).chain(self.rows.iter().map(|(_, r)| r)) {
            for (w, c) in width.iter_mut().zip(cells) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |mark: &str, cells: &[String]| {
            let body: Vec<String> = cells
                .iter()
                .zip(&width)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            format!("{mark} {}", body.join("  ")).trim_end().to_string()
        };
        let _ = writeln!(out, "{}", self.caption);
        let _ = writeln!(out, "{}", line(" ", &self.header));
        for (bold, row) in &self.rows {
            let _ = writeln!(out, "{}", line(if *bold { "*" } else { " " }, row));
        }
    }

    fn html(&self, out: &mut String) {
        let _ = writeln!(out, "<table>\n<caption>{}</caption>", escape(&self.caption));
        let head: String = self.header.iter().map(|h| format!("<th>{}</th>", escape(h))).collect();
        let _ = writeln!(out, "<tr>{head}</tr>");
        for (bold, row) in &self.rows {
            let cells: String = row
                .iter()
                .map(|c| {
                    if *bold {
                        format!("<td><strong>{}</strong></td>", escape(c))
                    } else {
                        format!("<td>{}</td>", escape(c))
                    }
                })
                .collect();
            let _ = writeln!(out, "<tr>{cells}</tr>");
        }
        let _ = writeln!(out, "</table>");
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn metric_cells(m: &MetricSet) -> Vec<String> {
    m.values().iter().map(|&v| fmt2(v)).collect()
}

fn tables(section: &ReportSection) -> Vec<Table> {
    match section {
        ReportSection::Sweep(r) => {
            let best = select_optimal_shots(r);
            let mut header = vec!["N".to_string()];
            header.extend(METRIC_HEADERS.map(String::from));
            vec![Table {
                caption: format!("Few-shot sweep: model {}, dataset {}", r.model_id, r.dataset_id),
                header,
                rows: r
                    .rows
                    .iter()
                    .map(|row| {
                        let mut cells = vec![row.n_shots.to_string()];
                        cells.extend(metric_cells(&row.metrics));
                        (Some(row.n_shots) == best, cells)
                    })
                    .collect(),
            }]
        }
        ReportSection::Strategies(results) => {
            let mut header = vec!["Strategy".to_string(), "Dataset".to_string()];
            header.extend(METRIC_HEADERS.map(String::from));
            vec![Table {
                caption: "Strategy comparison".into(),
                header,
                rows: results
                    .iter()
                    .map(|r| {
                        let mut cells = vec![r.strategy.clone(), r.dataset.clone()];
                        cells.extend(metric_cells(&r.metrics));
                        (false, cells)
                    })
                    .collect(),
            }]
        }
        ReportSection::Distribution(d) => {
            let counts = Table {
                caption: format!("Label distribution: {} under {}", d.dataset_id, d.task_id),
                header: vec!["Class".into(), "Before".into(), "After".into()],
                rows: vec![
                    (
                        false,
                        vec![d.positive_word.clone(), d.before.positive.to_string(), d.after.positive.to_string()],
                    ),
                    (
                        false,
                        vec![d.negative_word.clone(), d.before.negative.to_string(), d.after.negative.to_string()],
                    ),
                    (
                        false,
                        vec!["total".into(), d.before.total().to_string(), d.after.total().to_string()],
                    ),
                ],
            };
            let by_source = Table {
                caption: format!(
                    "Final labels by source label ({} to {}: {}, {} to {}: {})",
                    d.positive_word, d.negative_word, d.pos_to_neg, d.negative_word, d.positive_word, d.neg_to_pos
                ),
                header: vec!["Source label".into(), d.positive_word.clone(), d.negative_word.clone()],
                rows: d
                    .by_source_label
                    .iter()
                    .map(|(k, c)| (false, vec![k.clone(), c.positive.to_string(), c.negative.to_string()]))
                    .collect(),
            };
            vec![counts, by_source]
        }
        ReportSection::Diff { name, report } => vec![Table {
            caption: format!("Prediction diff: {name}"),
            header: vec!["Change".into(), "Count".into(), "Items".into()],
            rows: vec![
                (
                    false,
                    vec!["corrected".into(), report.corrected.to_string(), report.corrected_ids.join(" ")],
                ),
                (
                    false,
                    vec!["introduced".into(), report.introduced.to_string(), report.introduced_ids.join(" ")],
                ),
            ],
        }],
    }
}

fn json_lines(section: &ReportSection) -> Vec<serde_json::Value> {
    match section {
        ReportSection::Sweep(r) => {
            let best = select_optimal_shots(r);
            r.rows
                .iter()
                .map(|row| {
                    json!({
                        "section": "sweep",
                        "model": r.model_id,
                        "dataset": r.dataset_id,
                        "n_shots": row.n_shots,
                        "metrics": row.metrics,
                        "scored": row.scored,
                        "failed": row.failed,
                        "demo_ids": row.demo_ids,
                        "optimal": Some(row.n_shots) == best,
                    })
                })
                .collect()
        }
        ReportSection::Strategies(results) => results
            .iter()
            .map(|r| {
                json!({
                    "section": "strategy",
                    "strategy": r.strategy,
                    "dataset": r.dataset,
                    "metrics": r.metrics,
                    "scored": r.scored,
                    "failed": r.failed,
                })
            })
            .collect(),
        ReportSection::Distribution(d) => {
            let mut v = serde_json::to_value(d).expect("distribution serializes");
            v["section"] = json!("distribution");
            vec![v]
        }
        ReportSection::Diff { name, report } => {
            let mut v = serde_json::to_value(report).expect("diff serializes");
            v["section"] = json!("diff");
            v["name"] = json!(name);
            vec![v]
        }
    }
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Text => {
            if !report.title.is_empty() {
                let _ = writeln!(out, "# {}", report.title);
            }
            let _ = writeln!(out, "# policy: {FAILURE_POLICY}");
            let _ = writeln!(out, "# values rounded half up to two decimals; * marks the selected N");
            for section in &report.sections {
                for table in tables(section) {
                    out.push('\n');
                    table.text(&mut out);
                }
            }
        }
        ReportFormat::Jsonl => {
            for section in &report.sections {
                for line in json_lines(section) {
                    out.push_str(&line.to_string());
                    out.push('\n');
                }
            }
        }
        ReportFormat::Html => {
            let title = if report.title.is_empty() { "Evaluation report" } else { &report.title };
            let _ = writeln!(
                out,
                "<!DOCTYPE html>\n<html>\n<head><meta charset=\"utf-8\"><title>{}</title></head>\n<body>",
                escape(title)
            );
            let _ = writeln!(out, "<h1>{}</h1>\n<p>Policy: {}</p>", escape(title), escape(FAILURE_POLICY));
            for section in &report.sections {
                for table in tables(section) {
                    table.html(&mut out);
                }
            }
            let _ = writeln!(out, "</body>\n</html>");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::SweepRow;

    #[test]
    fn rounding() {
        assert_eq!(fmt2(0.8125), "0.81");
        assert_eq!(fmt2(0.735), "0.74");
        assert_eq!(fmt2(0.125), "0.13");
        assert_eq!(fmt2(1.0), "1.00");
        assert_eq!(fmt2(0.0), "0.00");
        assert_eq!(fmt2(2.0 / 3.0), "0.67");
    }

    #[test]
    fn empty_report_is_valid() {
        let r = EvalReport::default();
        assert_eq!(render_report(&r, ReportFormat::Jsonl), "");
        let text = render_report(&r, ReportFormat::Text);
        assert!(text.contains("policy"));
        let html = render_report(&r, ReportFormat::Html);
        assert!(html.starts_with("<!DOCTYPE html>") && html.trim_end().ends_with("</html>"));
    }

    #[test]
    fn sweep_marks_optimum() {
        let row = |n, acc, f1| SweepRow {
            n_shots: n,
            metrics: MetricSet { acc, macro_f1: f1, ..Default::default() },
            scored: 10,
            failed: 0,
            demo_ids: vec![],
        };
        let sweep = SweepReport::new("m", "d", vec![row(0, 0.5, 0.4), row(2, 0.8125, 0.7)]).unwrap();
        let report = EvalReport {
            title: "t".into(),
            sections: vec![ReportSection::Sweep(sweep)],
        };
        let text = render_report(&report, ReportFormat::Text);
        let starred: Vec<&str> = text.lines().filter(|l| l.starts_with('*')).collect();
        assert_eq!(starred.len(), 1);
        assert!(starred[0].contains("0.81"), "{text}");
        let html = render_report(&report, ReportFormat::Html);
        assert!(html.contains("<td><strong>2</strong></td>"));
        let lines: Vec<serde_json::Value> = render_report(&report, ReportFormat::Jsonl)
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1]["metrics"]["acc"], 0.8125);
        assert_eq!(lines[1]["optimal"], true);
    }
}
