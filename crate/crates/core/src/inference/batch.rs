//! Prediction over many items with bounded concurrency. Log records are
//! committed in job order whatever order responses arrive in.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use super::runlog::{RunLog, RunLogRecord, STATUS_OK};
use super::wire::render_request;
use super::{call_with_retry, parse_label, AnswerMap, ChatBackend, EndpointConfig, InferenceError, Prediction, PromptBundle};
use crate::seed::sha256_hex;

/// Appended to the query when the first answer could not be parsed.
pub const REASK_INSTRUCTION: &str = "Answer with exactly one word: yes or no.";

#[derive(Debug, Clone)]
pub struct PredictionJob {
    pub item_id: String,
    pub bundle: PromptBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub item_id: String,
    pub prediction: Prediction,
    pub response_text: Option<String>,
    pub error: Option<String>,
    /// Endpoint calls made (0 when every answer came from the cache).
    pub calls: u32,
}

enum Answer {
    Text(String),
    Failed(String),
}

fn ask(
    item_id: &str,
    bundle: &PromptBundle,
    instruction: Option<&str>,
    backend: &dyn ChatBackend,
    cfg: &EndpointConfig,
    log: &RunLog,
    records: &mut Vec<RunLogRecord>,
    calls: &mut u32,
) -> Answer {
    let request = match render_request(bundle, cfg, instruction) {
        Ok(r) => r,
        Err(e) => {
            records.push(RunLogRecord {
                item_id: item_id.to_string(),
                prompt_hash: String::new(),
                response_text: String::new(),
                latency_ms: 0,
                status: "render_error".into(),
            });
            return Answer::Failed(e.to_string());
        }
    };
    let prompt_hash = sha256_hex(&serde_json::to_vec(&request).expect("request serializes"));
    if let Some(hit) = log.cached(&prompt_hash) {
        return Answer::Text(hit.response_text.clone());
    }
    *calls += 1;
    match call_with_retry(backend, &request, cfg) {
        Ok(raw) => {
            records.push(RunLogRecord {
                item_id: item_id.to_string(),
                prompt_hash,
                response_text: raw.text.clone(),
                latency_ms: raw.latency_ms,
                status: STATUS_OK.into(),
            });
            Answer::Text(raw.text)
        }
        Err(e) => {
            let status = match &e {
                InferenceError::Timeout { .. } => "timeout",
                InferenceError::Connect { .. } => "connect_error",
                InferenceError::Http { .. } => "http_error",
                _ => "malformed",
            };
            records.push(RunLogRecord {
                item_id: item_id.to_string(),
                prompt_hash,
                response_text: String::new(),
                latency_ms: 0,
                status: status.into(),
            });
            Answer::Failed(e.to_string())
        }
    }
}

/// Predict one item, re-asking once with [`REASK_INSTRUCTION`] when the
/// first answer is unparseable. Returns the log records to commit.
pub fn predict_with_reask(
    job: &PredictionJob,
    backend: &dyn ChatBackend,
    cfg: &EndpointConfig,
    answers: &AnswerMap,
    log: &RunLog,
) -> (PredictionOutcome, Vec<RunLogRecord>) {
    let mut records = Vec::new();
    let mut calls = 0;
    let mut outcome = PredictionOutcome {
        item_id: job.item_id.clone(),
        prediction: Prediction::PredictionFailed,
        response_text: None,
        error: None,
        calls: 0,
    };
    for instruction in [None, Some(REASK_INSTRUCTION)] {
        match ask(&job.item_id, &job.bundle, instruction, backend, cfg, log, &mut records, &mut calls) {
            Answer::Failed(e) => {
                outcome.prediction = Prediction::PredictionFailed;
                outcome.error = Some(e);
                break;
            }
            Answer::Text(text) => {
                outcome.prediction = parse_label(&text, answers);
                outcome.response_text = Some(text);
                if outcome.prediction != Prediction::Unparseable {
                    break;
                }
            }
        }
    }
    outcome.calls = calls;
    (outcome, records)
}

/// Run every job through `backend` with `cfg.concurrency` requests in
/// flight. Outcomes come back in job order; failures are values, not errors.
pub fn predict_batch(
    jobs: &[PredictionJob],
    backend: &dyn ChatBackend,
    cfg: &EndpointConfig,
    answers: &AnswerMap,
    log: &RunLog,
) -> Result<Vec<PredictionOutcome>, InferenceError> {
    cfg.validate()?;
    let workers = cfg.concurrency.min(jobs.len()).max(1);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    let mut outcomes: Vec<Option<PredictionOutcome>> = vec![None; jobs.len()];
    let mut ready: BTreeMap<usize, Vec<RunLogRecord>> = BTreeMap::new();
    let mut commit_error = None;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(idx) else { break };
                let result = predict_with_reask(job, backend, cfg, answers, log);
                if tx.send((idx, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut cursor = 0;
        for (idx, (outcome, records)) in rx {
            outcomes[idx] = Some(outcome);
            ready.insert(idx, records);
            while let Some(records) = ready.remove(&cursor) {
                for record in records {
                    if let Err(e) = log.append(record) {
                        commit_error.get_or_insert(e);
                    }
                }
                cursor += 1;
            }
        }
    });
    if let Some(e) = commit_error {
        return Err(e);
    }
    Ok(outcomes.into_iter().map(|o| o.expect("every job reported")).collect())
}
