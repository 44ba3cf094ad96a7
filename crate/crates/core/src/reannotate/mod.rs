//! Majority-vote re-annotation: resolver, disagreement queue and the
//! durable store behind it.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Dataset, IngestError};
use crate::inference::Prediction;
use crate::labels::{BinaryLabel, LabelError, LabelMapping, TaskDef};

mod finalize;
mod store;

pub use finalize::{finalize_dataset, load_finalized, FinalizedRecord, Provenance, ReannotatedDataset};
pub use store::{Clock, Event, EventBody, Lease, ManualClock, Store, StoreOptions, SystemClock, EVENTS_FILE, SNAPSHOT_FILE};

#[derive(Debug, Error)]
pub enum ReannotateError {
    #[error("no prediction for item {0:?}")]
    MissingPrediction(String),
    #[error("item {item_id:?} already enqueued with different votes")]
    EnqueueConflict { item_id: String },
    #[error("unknown lease token")]
    UnknownLease,
    #[error("lease on item {item_id:?} has expired")]
    LeaseExpired { item_id: String },
    #[error("lease token belongs to item {leased:?}, not {submitted:?}")]
    LeaseMismatch { leased: String, submitted: String },
    #[error("lease on item {item_id:?} was already used")]
    Duplicate { item_id: String, outcome: VoteOutcome },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("{} item(s) still pending: {}", .0.len(), .0.join(", "))]
    IncompleteQueue(Vec<String>),
    #[error("{path}, line {line}: corrupt event log ({reason}); last good seq {last_good_seq}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        last_good_seq: u64,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

impl ReannotateError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ReannotateError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VoteState {
    Agreed,
    Queued,
    Leased,
    Resolved,
    Failed,
}

impl VoteState {
    pub fn as_str(self) -> &'static str {
        match self {
            VoteState::Agreed => "AGREED",
            VoteState::Queued => "QUEUED",
            VoteState::Leased => "LEASED",
            VoteState::Resolved => "RESOLVED",
            VoteState::Failed => "FAILED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteOutcome {
    #[serde(rename = "final")]
    pub final_label: Option<BinaryLabel>,
    pub state: VoteState,
}

/// Three-way vote over binary labels. A model failure counts as no vote,
/// which leaves the human to decide.
pub fn resolve_vote(original: BinaryLabel, model: Prediction, human: Option<BinaryLabel>) -> VoteOutcome {
    match (model.label(), human) {
        (Some(m), None) if m == original => VoteOutcome {
            final_label: Some(original),
            state: VoteState::Agreed,
        },
        (Some(m), Some(h)) => VoteOutcome {
            final_label: Some(majority(original, m, h)),
            state: VoteState::Resolved,
        },
        (Some(_), None) => VoteOutcome {
            final_label: None,
            state: VoteState::Queued,
        },
        (None, Some(h)) => VoteOutcome {
            final_label: Some(h),
            state: VoteState::Resolved,
        },
        (None, None) => VoteOutcome {
            final_label: None,
            state: VoteState::Failed,
        },
    }
}

fn majority(a: BinaryLabel, b: BinaryLabel, c: BinaryLabel) -> BinaryLabel {
    let pos = [a, b, c].iter().filter(|l| l.is_positive()).count();
    if pos >= 2 {
        BinaryLabel::Positive
    } else {
        BinaryLabel::Negative
    }
}

/// Vote state of one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub item_id: String,
    /// Ingest position; the queue is FIFO over it.
    pub order: u64,
    pub original: BinaryLabel,
    pub model: Prediction,
    pub human: Option<BinaryLabel>,
    #[serde(rename = "final")]
    pub final_label: Option<BinaryLabel>,
    pub state: VoteState,
    pub annotator_id: Option<String>,
    pub elapsed_s: Option<f64>,
}

impl VoteRecord {
    pub fn new(item_id: &str, order: u64, original: BinaryLabel, model: Prediction) -> Self {
        let outcome = resolve_vote(original, model, None);
        VoteRecord {
            item_id: item_id.to_string(),
            order,
            original,
            model,
            human: None,
            final_label: outcome.final_label,
            state: outcome.state,
            annotator_id: None,
            elapsed_s: None,
        }
    }

    pub fn model_failed(&self) -> bool {
        self.model.label().is_none()
    }

    /// State an unleased, unresolved record rests in.
    pub fn waiting_state(&self) -> VoteState {
        if self.model_failed() {
            VoteState::Failed
        } else {
            VoteState::Queued
        }
    }

    pub fn is_final(&self) -> bool {
        matches!(self.state, VoteState::Agreed | VoteState::Resolved)
    }

    pub fn outcome(&self) -> VoteOutcome {
        VoteOutcome {
            final_label: self.final_label,
            state: self.state,
        }
    }
}

/// Per-state record counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCounts {
    pub total: usize,
    pub agreed: usize,
    pub queued: usize,
    pub leased: usize,
    pub resolved: usize,
    pub failed: usize,
    /// Records whose model vote failed, whatever their current state.
    pub model_failures: usize,
}

impl StateCounts {
    pub(crate) fn add(&mut self, state: VoteState, delta: isize) {
        let slot = match state {
            VoteState::Agreed => &mut self.agreed,
            VoteState::Queued => &mut self.queued,
            VoteState::Leased => &mut self.leased,
            VoteState::Resolved => &mut self.resolved,
            VoteState::Failed => &mut self.failed,
        };
        *slot = slot.checked_add_signed(delta).expect("state count underflow");
    }

    /// Items sent to a human because original and model disagreed, over all
    /// items. Model failures that reach a human are counted here as well;
    /// `model_failures` reports them separately.
    pub fn disagreement_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            (self.queued + self.leased + self.resolved) as f64 / self.total as f64
        }
    }

    /// Items still needing a human answer.
    pub fn outstanding(&self) -> usize {
        self.queued + self.leased + self.failed
    }
}

/// Counts returned by an enqueue pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub agreed: usize,
    pub queued: usize,
    pub failed: usize,
}

/// A submitted human label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub item_id: String,
    #[serde(default)]
    pub annotator_id: String,
    pub label: BinaryLabel,
    pub elapsed_s: f64,
    pub lease_token: String,
}

/// Human time spent, read off accepted annotations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub annotations: usize,
    pub total_elapsed_s: f64,
    pub mean_elapsed_s: f64,
}

impl CostLedger {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a VoteRecord>) -> Self {
        let times: Vec<f64> = records.into_iter().filter_map(|r| r.elapsed_s).collect();
        let total: f64 = times.iter().sum();
        CostLedger {
            annotations: times.len(),
            total_elapsed_s: total,
            mean_elapsed_s: if times.is_empty() { 0.0 } else { total / times.len() as f64 },
        }
    }

    pub fn total_hours(&self) -> f64 {
        self.total_elapsed_s / 3600.0
    }
}

/// What an annotator sees for a leased item. The two candidate labels are
/// always listed positive first, so their order says nothing about which
/// source proposed them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeasedTask {
    pub item_id: String,
    pub lease_token: String,
    /// Unix milliseconds.
    pub expires_at: u64,
    pub ttl_s: f64,
    pub text: String,
    pub title: Option<String>,
    pub media_url: String,
    pub task_id: String,
    pub definition_text: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Value to submit.
    pub label: BinaryLabel,
    /// Task word to display.
    pub word: String,
}

impl LeasedTask {
    pub fn new(lease: &Lease, dataset: &Dataset, task: &TaskDef) -> Result<Self, ReannotateError> {
        let item = dataset
            .get(&lease.item_id)
            .ok_or_else(|| ReannotateError::UnknownItem(lease.item_id.clone()))?;
        Ok(LeasedTask {
            item_id: item.item_id.clone(),
            lease_token: lease.lease_token.clone(),
            expires_at: lease.expires_at,
            ttl_s: lease.ttl_s,
            text: item.text.clone(),
            title: item.title.clone(),
            media_url: format!("/media/{}", item.item_id),
            task_id: task.task_id.clone(),
            definition_text: task.definition_text.clone(),
            candidates: [BinaryLabel::Positive, BinaryLabel::Negative]
                .into_iter()
                .map(|label| Candidate {
                    label,
                    word: task.render(label).to_string(),
                })
                .collect(),
        })
    }
}

/// Pair each dataset item with its remapped label and model vote, in dataset
/// order. Every item must have a prediction.
pub fn vote_inputs(
    dataset: &Dataset,
    mapping: &LabelMapping,
    predictions: &BTreeMap<String, Prediction>,
) -> Result<Vec<(String, BinaryLabel, Prediction)>, ReannotateError> {
    dataset
        .remapped(mapping)?
        .into_iter()
        .map(|(id, original)| {
            let model = *predictions
                .get(&id)
                .ok_or_else(|| ReannotateError::MissingPrediction(id.clone()))?;
            Ok((id, original, model))
        })
        .collect()
}

/// Record every item's votes in the store: agreements resolve at once,
/// conflicts and model failures wait for a human. Items already in the
/// store are left alone, so re-running is harmless.
pub fn enqueue_disagreements(
    store: &Store,
    dataset: &Dataset,
    mapping: &LabelMapping,
    predictions: &BTreeMap<String, Prediction>,
) -> Result<QueueStats, ReannotateError> {
    let inputs = vote_inputs(dataset, mapping, predictions)?;
    store.enqueue(&inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use BinaryLabel::{Negative as N, Positive as P};

    #[test]
    fn examples() {
        assert_eq!(
            resolve_vote(P, P.into(), None),
            VoteOutcome { final_label: Some(P), state: VoteState::Agreed }
        );
        assert_eq!(resolve_vote(P, N.into(), Some(N)).final_label, Some(N));
        assert_eq!(resolve_vote(N, P.into(), Some(P)).final_label, Some(P));
    }

    #[test]
    fn failed_model_goes_to_human() {
        for m in [Prediction::PredictionFailed, Prediction::Unparseable] {
            assert_eq!(resolve_vote(P, m, None).state, VoteState::Failed);
            assert_eq!(resolve_vote(P, m, None).final_label, None);
            assert_eq!(resolve_vote(P, m, Some(N)).final_label, Some(N));
            assert_eq!(resolve_vote(P, m, Some(N)).state, VoteState::Resolved);
        }
    }

    #[test]
    fn agreement_with_human_stays_with_majority() {
        let o = resolve_vote(N, N.into(), Some(P));
        assert_eq!(o, VoteOutcome { final_label: Some(N), state: VoteState::Resolved });
    }

    #[test]
    fn outcome_serializes_final_key() {
        let o = resolve_vote(P, P.into(), None);
        assert_eq!(
            serde_json::to_string(&o).unwrap(),
            r#"{"final":"positive","state":"AGREED"}"#
        );
    }
}
