//! Dataset manifests: one JSON object per line, paths relative to the
//! manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::item::{valid_item_id, MediaItem, MediaKind, Split, VisionSource};
use crate::labels::{LabelError, LabelMapping, LabelSchema};
use crate::seed;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: item {item_id:?} has label {label:?} not in schema {schema}")]
    UnknownLabel {
        line: usize,
        item_id: String,
        label: String,
        schema: String,
    },
    #[error("line {line}: duplicate item id {item_id:?}")]
    DuplicateId { line: usize, item_id: String },
    #[error("line {line}: item {item_id:?} has no media path ({expected})")]
    MissingMedia {
        line: usize,
        item_id: String,
        expected: &'static str,
    },
    #[error("line {line}: item {item_id:?}: {reason}")]
    Invalid {
        line: usize,
        item_id: String,
        reason: String,
    },
    #[error("dataset {0:?} is empty")]
    Empty(String),
    #[error("cannot sample {requested} items from a dataset of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Label(#[from] LabelError),
}

impl IngestError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Wire form of one manifest line. Field order is the serialized order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    pub label: String,
    #[serde(default, skip_serializing_if = "is_unsplit")]
    pub split: Split,
}

fn is_unsplit(split: &Split) -> bool {
    *split == Split::Unsplit
}

fn path_string(path: &Path) -> String {
    path.to_string_lossy().replace('\\', "/")
}

impl ManifestRecord {
    /// Record for `item` with media paths rewritten from `from_root` to be
    /// relative to `to_root`.
    pub fn from_item(item: &MediaItem, from_root: &Path, to_root: &Path) -> Self {
        let rebase = |p: &Path| path_string(&rebase_path(p, from_root, to_root));
        let mut rec = ManifestRecord {
            id: item.item_id.clone(),
            label: item.original_label.clone(),
            split: item.split,
            ..Default::default()
        };
        match item.kind {
            MediaKind::Meme => rec.text = Some(item.text.clone()),
            MediaKind::Video => {
                rec.title = Some(item.title.clone().unwrap_or_default());
                rec.transcript = Some(item.text.clone());
                rec.duration_s = item.duration_s;
            }
        }
        match &item.vision {
            VisionSource::Image(p) => rec.image = Some(rebase(p)),
            VisionSource::FrameDir { dir, frame_count } => {
                rec.frames_dir = Some(rebase(dir));
                rec.frame_count = Some(*frame_count);
            }
            VisionSource::VideoFile { path, frame_count } => {
                rec.video = Some(rebase(path));
                rec.frame_count = Some(*frame_count);
            }
        }
        rec
    }

    fn into_item(self, kind: MediaKind, line: usize) -> Result<MediaItem, IngestError> {
        let invalid = |reason: String| IngestError::Invalid {
            line,
            item_id: self.id.clone(),
            reason,
        };
        let nonempty = |s: &Option<String>| s.as_deref().filter(|s| !s.trim().is_empty()).map(PathBuf::from);
        let vision = match kind {
            MediaKind::Meme => match nonempty(&self.image) {
                Some(p) => VisionSource::Image(p),
                None => {
                    return Err(IngestError::MissingMedia {
                        line,
                        item_id: self.id,
                        expected: "image",
                    })
                }
            },
            MediaKind::Video => {
                let frame_count = self
                    .frame_count
                    .ok_or_else(|| invalid("video record missing frame_count".into()))?;
                match (nonempty(&self.frames_dir), nonempty(&self.video)) {
                    (Some(dir), None) => VisionSource::FrameDir { dir, frame_count },
                    (None, Some(path)) => VisionSource::VideoFile { path, frame_count },
                    (Some(_), Some(_)) => {
                        return Err(invalid("give either frames_dir or video, not both".into()))
                    }
                    (None, None) => {
                        return Err(IngestError::MissingMedia {
                            line,
                            item_id: self.id,
                            expected: "frames_dir or video",
                        })
                    }
                }
            }
        };
        let (title, text) = match kind {
            MediaKind::Meme => (None, self.text.clone().unwrap_or_default()),
            MediaKind::Video => (
                self.title.clone(),
                self.transcript.clone().unwrap_or_default(),
            ),
        };
        let item = MediaItem {
            item_id: self.id.clone(),
            kind,
            title,
            text,
            vision,
            duration_s: self.duration_s,
            original_label: self.label.clone(),
            split: self.split,
        };
        item.check_shape().map_err(invalid)?;
        Ok(item)
    }
}

/// `path` (relative to `from_root`, or absolute) expressed relative to
/// `to_root` where possible.
pub fn rebase_path(path: &Path, from_root: &Path, to_root: &Path) -> PathBuf {
    if from_root == to_root && path.is_relative() {
        return path.to_path_buf();
    }
    let absolute = absolutize(&from_root.join(path));
    let to_root = absolutize(to_root);
    pathdiff::diff_paths(&absolute, &to_root).unwrap_or(absolute)
}

fn absolutize(path: &Path) -> PathBuf {
    if let Ok(p) = path.canonicalize() {
        return p;
    }
    let joined = if path.is_absolute() {
        path.to_path_buf()
    } else {
        std::env::current_dir()
            .map(|d| d.join(path))
            .unwrap_or_else(|_| path.to_path_buf())
    };
    // Canonicalize the longest existing prefix, keep the rest lexically.
    let mut existing = joined.clone();
    let mut tail = Vec::new();
    while !existing.exists() {
        match (existing.file_name().map(|s| s.to_os_string()), existing.parent()) {
            (Some(name), Some(parent)) => {
                tail.push(name);
                existing = parent.to_path_buf();
            }
            _ => return joined,
        }
    }
    let mut out = existing.canonicalize().unwrap_or(existing);
    for part in tail.into_iter().rev() {
        out.push(part);
    }
    out
}

/// An ordered collection of items of one kind under one label schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dataset_id: String,
    pub schema: LabelSchema,
    pub kind: MediaKind,
    /// Directory media paths are relative to.
    pub root: PathBuf,
    pub items: Vec<MediaItem>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn get(&self, item_id: &str) -> Option<&MediaItem> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.item_id.as_str()).collect()
    }

    /// Count of items per source label, in schema order.
    pub fn label_counts(&self) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> =
            self.schema.labels().iter().map(|l| (l.clone(), 0)).collect();
        for item in &self.items {
            *counts.entry(item.original_label.clone()).or_default() += 1;
        }
        counts
    }

    /// Same dataset restricted to `items`, which must come from `self`.
    pub fn with_items(&self, items: Vec<MediaItem>) -> Dataset {
        Dataset {
            dataset_id: self.dataset_id.clone(),
            schema: self.schema.clone(),
            kind: self.kind,
            root: self.root.clone(),
            items,
        }
    }

    /// Binary label of every item under `mapping`, in item order.
    pub fn remapped(
        &self,
        mapping: &LabelMapping,
    ) -> Result<Vec<(String, crate::labels::BinaryLabel)>, LabelError> {
        self.items
            .iter()
            .map(|i| Ok((i.item_id.clone(), crate::labels::remap_label(&i.original_label, mapping)?)))
            .collect()
    }

    pub fn to_records(&self, to_root: &Path) -> Vec<ManifestRecord> {
        self.items
            .iter()
            .map(|i| ManifestRecord::from_item(i, &self.root, to_root))
            .collect()
    }
}

/// Read and validate a manifest. The dataset id defaults to the schema id.
pub fn load_dataset(
    manifest_path: &Path,
    schema: &LabelSchema,
    kind: MediaKind,
) -> Result<Dataset, IngestError> {
    let file = fs::File::open(manifest_path).map_err(|e| IngestError::io(manifest_path, e))?;
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IngestError::io(manifest_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !valid_item_id(&rec.id) {
            return Err(IngestError::Invalid {
                line: line_no,
                item_id: rec.id,
                reason: "item ids may only contain ASCII letters, digits, '-', '_' and '.'".into(),
            });
        }
        let label = schema
            .normalize(&rec.label)
            .map_err(|_| IngestError::UnknownLabel {
                line: line_no,
                item_id: rec.id.clone(),
                label: rec.label.clone(),
                schema: schema.schema_id.clone(),
            })?;
        if !seen.insert(rec.id.clone()) {
            return Err(IngestError::DuplicateId {
                line: line_no,
                item_id: rec.id,
            });
        }
        let mut item = rec.into_item(kind, line_no)?;
        item.original_label = label;
        items.push(item);
    }
    Ok(Dataset {
        dataset_id: schema.schema_id.clone(),
        schema: schema.clone(),
        kind,
        root,
        items,
    })
}

/// Serialize `records` as a line-delimited manifest, creating parent dirs.
pub fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IngestError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| IngestError::io(parent, e))?;
    }
    let mut buf = Vec::new();
    for rec in records {
        serde_json::to_writer(&mut buf, rec).expect("manifest records serialize");
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| IngestError::io(path, e))?;
    file.write_all(&buf).map_err(|e| IngestError::io(path, e))
}

/// Write `dataset` as a manifest at `path`, rebasing media paths onto the
/// manifest's directory.
pub fn write_manifest(dataset: &Dataset, path: &Path) -> Result<(), IngestError> {
    let to_root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    if !to_root.as_os_str().is_empty() {
        fs::create_dir_all(&to_root).map_err(|e| IngestError::io(&to_root, e))?;
    }
    write_lines(path, &dataset.to_records(&to_root))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self, IngestError> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(IngestError::InvalidSplit(format!(
                "train_fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        Ok(SplitSpec {
            train_fraction,
            seed,
        })
    }

    /// Training-set size for `n` items, rounding half up.
    pub fn train_size(&self, n: usize) -> usize {
        ((self.train_fraction * n as f64) + 0.5).floor() as usize
    }
}

/// Seeded shuffle of a copy, cut at the rounding boundary. Items keep their
/// dataset order within each side and are tagged with their split.
pub fn split_dataset(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset), IngestError> {
    if dataset.is_empty() {
        return Err(IngestError::Empty(dataset.dataset_id.clone()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut seed::rng(spec.seed));
    let cut = spec.train_size(dataset.len()).min(dataset.len());
    let mut train_idx = order[..cut].to_vec();
    let mut test_idx = order[cut..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let take = |idx: &[usize], split: Split| {
        idx.iter()
            .map(|&i| MediaItem {
                split,
                ..dataset.items[i].clone()
            })
            .collect()
    };
    Ok((
        dataset.with_items(take(&train_idx, Split::Train)),
        dataset.with_items(take(&test_idx, Split::Test)),
    ))
}

/// Uniform sample of `n` items without replacement; members keep their
/// dataset order.
pub fn sample_items(dataset: &Dataset, n: usize, seed: u64) -> Result<Dataset, IngestError> {
    if n > dataset.len() {
        return Err(IngestError::SampleTooLarge {
            requested: n,
            available: dataset.len(),
        });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut picked = order[..n].to_vec();
    picked.sort_unstable();
    Ok(dataset.with_items(picked.iter().map(|&i| dataset.items[i].clone()).collect()))
}
