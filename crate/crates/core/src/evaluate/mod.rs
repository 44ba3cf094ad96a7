//! Metrics, the few-shot sweep, prediction diffs and label distributions.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{write_lines, Dataset, IngestError};
use crate::inference::{
    build_prompt, predict_batch, select_demos, AnswerMap, ChatBackend, EndpointConfig, InferenceError, Prediction,
    PredictionJob, PromptMode, RunLog,
};
use crate::labels::{BinaryLabel, LabelError, LabelMapping, TaskDef};
use crate::reannotate::ReannotatedDataset;
use crate::seed;

mod report;

pub use report::{fmt2, render_report, EvalReport, ReportFormat, ReportSection, StrategyResult};

/// Printed in every report: how failed predictions were scored.
pub const FAILURE_POLICY: &str =
    "failed and unparseable predictions are scored as incorrect (counted against the true class)";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("nothing to score")]
    Empty,
    #[error("item sets differ: {0}")]
    IdMismatch(String),
    #[error("shot counts must be strictly increasing")]
    UnorderedShots,
    #[error("{path}, line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Counts with POSITIVE as the reference class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    /// Tally predictions against ground truth. A failed prediction counts as
    /// the class opposite to the truth.
    pub fn tally(gt: &[BinaryLabel], pred: &[Prediction]) -> Result<Self, EvalError> {
        check_len("predictions", gt.len(), pred.len())?;
        let mut cm = ConfusionMatrix::default();
        for (g, p) in gt.iter().zip(pred) {
            let p = p.label().unwrap_or(g.flip());
            match (g, p) {
                (BinaryLabel::Positive, BinaryLabel::Positive) => cm.tp += 1,
                (BinaryLabel::Negative, BinaryLabel::Positive) => cm.fp += 1,
                (BinaryLabel::Negative, BinaryLabel::Negative) => cm.tn += 1,
                (BinaryLabel::Positive, BinaryLabel::Negative) => cm.fn_ += 1,
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn metrics(&self) -> MetricSet {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let f1_pos = ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_);
        let f1_neg = ratio(2 * self.tn, 2 * self.tn + self.fn_ + self.fp);
        MetricSet {
            acc: ratio(self.tp + self.tn, self.total()),
            macro_f1: (f1_pos + f1_neg) / 2.0,
            f1_pos,
            recall_pos: ratio(self.tp, self.tp + self.fn_),
            precision_pos: ratio(self.tp, self.tp + self.fp),
            f1_neg,
            recall_neg: ratio(self.tn, self.tn + self.fp),
            precision_neg: ratio(self.tn, self.tn + self.fn_),
        }
    }
}

/// Field order follows the usual results-table layout.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub acc: f64,
    pub macro_f1: f64,
    pub f1_pos: f64,
    pub recall_pos: f64,
    pub precision_pos: f64,
    pub f1_neg: f64,
    pub recall_neg: f64,
    pub precision_neg: f64,
}

impl MetricSet {
    pub const FIELDS: [&'static str; 8] = [
        "acc",
        "macro_f1",
        "f1_pos",
        "recall_pos",
        "precision_pos",
        "f1_neg",
        "recall_neg",
        "precision_neg",
    ];

    pub fn values(&self) -> [f64; 8] {
        [
            self.acc,
            self.macro_f1,
            self.f1_pos,
            self.recall_pos,
            self.precision_pos,
            self.f1_neg,
            self.recall_neg,
            self.precision_neg,
        ]
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), EvalError> {
    if expected != got {
        return Err(EvalError::LengthMismatch { what, expected, got });
    }
    Ok(())
}

pub fn compute_metrics(gt: &[BinaryLabel], pred: &[Prediction]) -> Result<MetricSet, EvalError> {
    if gt.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(ConfusionMatrix::tally(gt, pred)?.metrics())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_shots: usize,
    pub metrics: MetricSet,
    #[serde(default)]
    pub scored: usize,
    #[serde(default)]
    pub failed: usize,
    #[serde(default)]
    pub demo_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub model_id: String,
    pub dataset_id: String,
    pub rows: Vec<SweepRow>,
    /// Endpoint calls made while producing the report.
    #[serde(default)]
    pub endpoint_calls: u64,
}

impl SweepReport {
    pub fn new(model_id: &str, dataset_id: &str, rows: Vec<SweepRow>) -> Result<Self, EvalError> {
        if rows.windows(2).any(|w| w[0].n_shots >= w[1].n_shots) {
            return Err(EvalError::UnorderedShots);
        }
        Ok(SweepReport {
            model_id: model_id.to_string(),
            dataset_id: dataset_id.to_string(),
            rows,
            endpoint_calls: 0,
        })
    }

    pub fn row(&self, n_shots: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.n_shots == n_shots)
    }
}

const TIE_EPS: f64 = 1e-9;

/// Best N by macro-F1; ties go to the smaller N, then the higher accuracy.
pub fn select_optimal_shots(report: &SweepReport) -> Option<usize> {
    let mut best: Option<&SweepRow> = None;
    for row in &report.rows {
        best = match best {
            None => Some(row),
            Some(b) => {
                let d = row.metrics.macro_f1 - b.metrics.macro_f1;
                let better = if d.abs() <= TIE_EPS {
                    row.n_shots < b.n_shots
                        || (row.n_shots == b.n_shots && row.metrics.acc > b.metrics.acc + TIE_EPS)
                } else {
                    d > 0.0
                };
                Some(if better { row } else { b })
            }
        };
    }
    best.map(|r| r.n_shots)
}

/// What a sweep runs over.
#[derive(Debug, Clone)]
pub struct SweepPlan<'a> {
    pub eval: &'a Dataset,
    pub eval_mapping: &'a LabelMapping,
    pub demo_pool: &'a Dataset,
    pub demo_mapping: &'a LabelMapping,
    pub task: &'a TaskDef,
    pub mode: PromptMode,
    pub n_values: Vec<usize>,
    pub seed: u64,
    pub balanced: bool,
}

/// Demo seed for shot count `n`; the same draw is reused wherever that N is
/// used again.
pub fn demo_seed(seed: u64, n_shots: usize) -> u64 {
    seed::derive_seed(seed, &[b"demos", &(n_shots as u64).to_le_bytes()])
}

/// Predict the evaluation set once per shot count and score each pass.
/// Answers already in `log` are reused, so a rerun makes no calls.
pub fn sweep_shots(
    plan: &SweepPlan,
    backend: &dyn ChatBackend,
    cfg: &EndpointConfig,
    log: &RunLog,
) -> Result<SweepReport, EvalError> {
    let mut n_values = plan.n_values.clone();
    n_values.sort_unstable();
    n_values.dedup();
    let gt: Vec<BinaryLabel> = plan.eval.remapped(plan.eval_mapping)?.into_iter().map(|(_, l)| l).collect();
    let answers = AnswerMap::for_task(plan.task);
    let mut rows = Vec::new();
    let mut calls = 0u64;
    for n in n_values {
        let demos = select_demos(plan.demo_pool, plan.demo_mapping, plan.task, n, demo_seed(plan.seed, n), plan.balanced)?;
        let jobs = plan
            .eval
            .items
            .iter()
            .map(|item| {
                Ok(PredictionJob {
                    item_id: item.item_id.clone(),
                    bundle: build_prompt(item, &plan.eval.root, &demos, plan.task, plan.mode, plan.seed)?,
                })
            })
            .collect::<Result<Vec<_>, InferenceError>>()?;
        let outcomes = predict_batch(&jobs, backend, cfg, &answers, log)?;
        calls += outcomes.iter().map(|o| o.calls as u64).sum::<u64>();
        let preds: Vec<Prediction> = outcomes.iter().map(|o| o.prediction).collect();
        rows.push(SweepRow {
            n_shots: n,
            metrics: compute_metrics(&gt, &preds)?,
            scored: preds.len(),
            failed: preds.iter().filter(|p| p.label().is_none()).count(),
            demo_ids: demos.iter().map(|d| d.item_id.clone()).collect(),
        });
    }
    let mut report = SweepReport::new(cfg.model_name.as_str(), &plan.eval.dataset_id, rows)?;
    report.endpoint_calls = calls;
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffReport {
    /// Wrong under A, right under B.
    pub corrected: usize,
    /// Right under A, wrong under B.
    pub introduced: usize,
    pub corrected_ids: Vec<String>,
    pub introduced_ids: Vec<String>,
}

/// Compare two prediction runs against ground truth, item by item.
pub fn diff_predictions(
    ids: &[String],
    gt: &[BinaryLabel],
    pred_a: &[Prediction],
    pred_b: &[Prediction],
) -> Result<DiffReport, EvalError> {
    check_len("ids", gt.len(), ids.len())?;
    check_len("predictions A", gt.len(), pred_a.len())?;
    check_len("predictions B", gt.len(), pred_b.len())?;
    let mut out = DiffReport::default();
    for i in 0..gt.len() {
        let a_ok = pred_a[i].label() == Some(gt[i]);
        let b_ok = pred_b[i].label() == Some(gt[i]);
        match (a_ok, b_ok) {
            (false, true) => out.corrected_ids.push(ids[i].clone()),
            (true, false) => out.introduced_ids.push(ids[i].clone()),
            _ => {}
        }
    }
    out.corrected = out.corrected_ids.len();
    out.introduced = out.introduced_ids.len();
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub positive: usize,
    pub negative: usize,
}

impl ClassCounts {
    fn add(&mut self, label: BinaryLabel) {
        match label {
            BinaryLabel::Positive => self.positive += 1,
            BinaryLabel::Negative => self.negative += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.positive + self.negative
    }
}

/// Class counts before and after re-annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub dataset_id: String,
    pub task_id: String,
    pub positive_word: String,
    pub negative_word: String,
    pub before: ClassCounts,
    pub after: ClassCounts,
    pub pos_to_neg: usize,
    pub neg_to_pos: usize,
    /// Final class counts per source label.
    pub by_source_label: BTreeMap<String, ClassCounts>,
}

pub fn label_distribution(
    before: &Dataset,
    mapping: &LabelMapping,
    after: &ReannotatedDataset,
) -> Result<DistributionReport, EvalError> {
    let finals: BTreeMap<&str, BinaryLabel> = after
        .dataset
        .items
        .iter()
        .map(|i| {
            let l = after.task.parse_word(&i.original_label).ok_or_else(|| {
                EvalError::IdMismatch(format!("item {:?} has non-task label {:?}", i.item_id, i.original_label))
            })?;
            Ok((i.item_id.as_str(), l))
        })
        .collect::<Result<_, EvalError>>()?;
    if finals.len() != before.len() || before.items.iter().any(|i| !finals.contains_key(i.item_id.as_str())) {
        return Err(EvalError::IdMismatch(format!(
            "{} has {} items, re-annotated set has {}",
            before.dataset_id,
            before.len(),
            finals.len()
        )));
    }
    let mut report = DistributionReport {
        dataset_id: before.dataset_id.clone(),
        task_id: after.task.task_id.clone(),
        positive_word: after.task.positive_word.clone(),
        negative_word: after.task.negative_word.clone(),
        before: ClassCounts::default(),
        after: ClassCounts::default(),
        pos_to_neg: 0,
        neg_to_pos: 0,
        by_source_label: BTreeMap::new(),
    };
    for (item, (_, orig)) in before.items.iter().zip(before.remapped(mapping)?) {
        let fin = finals[item.item_id.as_str()];
        report.before.add(orig);
        report.after.add(fin);
        report
            .by_source_label
            .entry(item.original_label.clone())
            .or_default()
            .add(fin);
        match (orig, fin) {
            (BinaryLabel::Positive, BinaryLabel::Negative) => report.pos_to_neg += 1,
            (BinaryLabel::Negative, BinaryLabel::Positive) => report.neg_to_pos += 1,
            _ => {}
        }
    }
    Ok(report)
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub item_id: String,
    pub prediction: Prediction,
}

pub fn write_predictions(path: &Path, lines: &[PredictionLine]) -> Result<(), EvalError> {
    Ok(write_lines(path, lines)?)
}

pub fn read_predictions(path: &Path) -> Result<BTreeMap<String, Prediction>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: PredictionLine = serde_json::from_str(line).map_err(|e| EvalError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.insert(rec.item_id.clone(), rec.prediction).is_some() {
            return Err(EvalError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("duplicate item {:?}", rec.item_id),
            });
        }
    }
    Ok(out)
}

/// Predictions for `ids` in order; items absent from `preds` count as failed.
pub fn align_predictions(ids: &[String], preds: &BTreeMap<String, Prediction>) -> Vec<Prediction> {
    ids.iter()
        .map(|id| preds.get(id).copied().unwrap_or(Prediction::PredictionFailed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use BinaryLabel::{Negative as N, Positive as P};

    fn p(v: &[BinaryLabel]) -> Vec<Prediction> {
        v.iter().map(|&l| l.into()).collect()
    }

    #[test]
    fn perfect_predictor() {
        let gt = [P, N, P, N, N];
        let m = compute_metrics(&gt, &p(&gt)).unwrap();
        assert!(m.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn degenerate_negative_class() {
        let gt = [N, N, N];
        let m = compute_metrics(&gt, &p(&gt)).unwrap();
        assert_eq!((m.acc, m.f1_pos, m.f1_neg, m.macro_f1), (1.0, 0.0, 1.0, 0.5));
    }

    #[test]
    fn failures_score_as_wrong() {
        let gt = [P, N];
        let pred = [Prediction::PredictionFailed, Prediction::Unparseable];
        let cm = ConfusionMatrix::tally(&gt, &pred).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 0, fp: 1, tn: 0, fn_: 1 });
        assert_eq!(compute_metrics(&gt, &pred).unwrap().acc, 0.0);
    }

    #[test]
    fn length_checks() {
        assert!(matches!(compute_metrics(&[P], &p(&[P, N])), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(compute_metrics(&[], &[]), Err(EvalError::Empty)));
    }

    #[test]
    fn diff_example() {
        let ids: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let d = diff_predictions(&ids, &[P, N, P], &p(&[N, N, P]), &p(&[P, N, N])).unwrap();
        assert_eq!((d.corrected, d.introduced), (1, 1));
        assert_eq!((d.corrected_ids[0].as_str(), d.introduced_ids[0].as_str()), ("a", "c"));
        let same = diff_predictions(&ids, &[P, N, P], &p(&[N, N, P]), &p(&[N, N, P])).unwrap();
        assert_eq!((same.corrected, same.introduced), (0, 0));
    }

    #[test]
    fn optimal_single_row_and_order() {
        let row = |n, f1| SweepRow {
            n_shots: n,
            metrics: MetricSet { macro_f1: f1, ..Default::default() },
            scored: 0,
            failed: 0,
            demo_ids: vec![],
        };
        let r = SweepReport::new("m", "d", vec![row(4, 0.5)]).unwrap();
        assert_eq!(select_optimal_shots(&r), Some(4));
        assert!(SweepReport::new("m", "d", vec![row(2, 0.5), row(2, 0.6)]).is_err());
        let empty = SweepReport::new("m", "d", vec![]).unwrap();
        assert_eq!(select_optimal_shots(&empty), None);
    }
}
