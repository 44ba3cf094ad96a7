use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ReannotateError, VoteRecord, VoteState};
use crate::ingest::{load_dataset, write_lines, Dataset, IngestError, ManifestRecord};
use crate::item::MediaKind;
use crate::labels::TaskDef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Provenance {
    Agreed,
    Resolved,
}

/// Finalized manifest line: the ingest fields with `label` holding the final
/// task word, plus where that label came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizedRecord {
    #[serde(flatten)]
    pub record: ManifestRecord,
    pub final_label: String,
    pub provenance: Provenance,
}

/// A dataset whose labels are final vote outcomes in the task vocabulary.
#[derive(Debug, Clone)]
pub struct ReannotatedDataset {
    pub dataset: Dataset,
    pub task: TaskDef,
    pub provenance: BTreeMap<String, Provenance>,
}

impl ReannotatedDataset {
    pub fn to_records(&self, to_root: &Path) -> Vec<FinalizedRecord> {
        self.dataset
            .to_records(to_root)
            .into_iter()
            .map(|record| FinalizedRecord {
                final_label: record.label.clone(),
                provenance: self.provenance[&record.id],
                record,
            })
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), IngestError> {
        let root = path.parent().unwrap_or(Path::new(""));
        write_lines(path, &self.to_records(root))
    }

    /// Ids whose final label differs from `originals` (task words by id).
    pub fn changed_from(&self, originals: &BTreeMap<String, String>) -> Vec<String> {
        self.dataset
            .items
            .iter()
            .filter(|i| originals.get(&i.item_id) != Some(&i.original_label))
            .map(|i| i.item_id.clone())
            .collect()
    }
}

/// Replace every item's label with its final vote. Fails listing every item
/// that is not yet AGREED or RESOLVED (or was never enqueued).
pub fn finalize_dataset(
    dataset: &Dataset,
    records: &[VoteRecord],
    task: &TaskDef,
) -> Result<ReannotatedDataset, ReannotateError> {
    let by_id: BTreeMap<&str, &VoteRecord> = records.iter().map(|r| (r.item_id.as_str(), r)).collect();
    let mut pending = Vec::new();
    let mut items = Vec::with_capacity(dataset.len());
    let mut provenance = BTreeMap::new();
    for item in &dataset.items {
        let rec = by_id.get(item.item_id.as_str());
        let (Some(rec), true) = (rec, rec.is_some_and(|r| r.is_final())) else {
            pending.push(item.item_id.clone());
            continue;
        };
        let label = rec.final_label.expect("final record has a label");
        let mut item = item.clone();
        item.original_label = task.render(label).to_string();
        items.push(item);
        provenance.insert(
            rec.item_id.clone(),
            if rec.state == VoteState::Agreed {
                Provenance::Agreed
            } else {
                Provenance::Resolved
            },
        );
    }
    if !pending.is_empty() {
        return Err(ReannotateError::IncompleteQueue(pending));
    }
    let mut out = dataset.with_items(items);
    out.schema = task.label_schema();
    Ok(ReannotatedDataset {
        dataset: out,
        task: task.clone(),
        provenance,
    })
}

/// Read a manifest written by [`ReannotatedDataset::write`].
pub fn load_finalized(path: &Path, task: &TaskDef, kind: MediaKind) -> Result<ReannotatedDataset, ReannotateError> {
    let dataset = load_dataset(path, &task.label_schema(), kind)?;
    let text = fs::read_to_string(path).map_err(|e| ReannotateError::io(path, e))?;
    let mut provenance = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: FinalizedRecord = serde_json::from_str(line).map_err(|e| IngestError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if task.parse_word(&rec.final_label) != task.parse_word(&rec.record.label) {
            return Err(IngestError::Invalid {
                line: i + 1,
                item_id: rec.record.id,
                reason: "final_label disagrees with label".into(),
            }
            .into());
        }
        provenance.insert(rec.record.id, rec.provenance);
    }
    Ok(ReannotatedDataset {
        dataset,
        task: task.clone(),
        provenance,
    })
}
