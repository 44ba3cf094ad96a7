//! Fine-tune manifests for the five training strategies, and the
//! annotation-time cost model.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{rebase_path, write_lines, Dataset, IngestError};
use crate::item::{MediaItem, MediaKind, VisionSource};
use crate::labels::{BinaryLabel, LabelError, LabelMapping, TaskDef};
use crate::reannotate::ReannotatedDataset;
use crate::seed;
use crate::visionprep::{
    augment_to_pseudo_video, load_image, sample_k_frames, sample_single_frame, write_pseudo_video, AugConfig,
    FrameRef, VisionError,
};

mod cost;

pub use cost::{estimate_annotation_hours, estimate_video_hours, CostParams};

/// Question appended to every training input. It names neither label word,
/// so the input never depends on the target.
pub const TRAINING_QUESTION: &str = "Classify this {content_kind} under the task definition.\nAnswer:";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("item {item_id:?}: {source}")]
    Vision {
        item_id: String,
        #[source]
        source: VisionError,
    },
    #[error("{0}")]
    Stale(String),
    #[error("strategy {strategy} needs {what}")]
    MissingSource { strategy: StrategyId, what: &'static str },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Label(#[from] LabelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Profile {
    /// Single-image model: one frame per example.
    ImageModel,
    /// Video model: sixteen frames per example.
    VideoModel,
}

impl Profile {
    pub fn frames(self) -> u32 {
        match self {
            Profile::ImageModel => 1,
            Profile::VideoModel => 16,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::ImageModel => "IMAGE_MODEL",
            Profile::VideoModel => "VIDEO_MODEL",
        }
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "image" | "image_model" => Ok(Profile::ImageModel),
            "video" | "video_model" => Ok(Profile::VideoModel),
            other => Err(format!("unknown profile {other:?} (expected image or video)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StrategyId {
    NoFt,
    VidFt,
    OmFt,
    RmFt,
    VidRmFt,
}

impl StrategyId {
    pub const ALL: [StrategyId; 5] = [
        StrategyId::NoFt,
        StrategyId::VidFt,
        StrategyId::OmFt,
        StrategyId::RmFt,
        StrategyId::VidRmFt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::NoFt => "NO_FT",
            StrategyId::VidFt => "VID_FT",
            StrategyId::OmFt => "OM_FT",
            StrategyId::RmFt => "RM_FT",
            StrategyId::VidRmFt => "VID_RM_FT",
        }
    }

    /// Lowercase form used in file names.
    pub fn file_stem(self) -> String {
        self.as_str().to_ascii_lowercase()
    }

    pub fn label_sources(self) -> &'static [LabelSource] {
        match self {
            StrategyId::NoFt => &[],
            StrategyId::VidFt => &[LabelSource::VideoGroundTruth],
            StrategyId::OmFt => &[LabelSource::OriginalRemapped],
            StrategyId::RmFt => &[LabelSource::FinalVoted],
            StrategyId::VidRmFt => &[LabelSource::VideoGroundTruth, LabelSource::FinalVoted],
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', '+'], "_");
        StrategyId::ALL
            .into_iter()
            .find(|id| id.as_str() == norm)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected one of no_ft, vid_ft, om_ft, rm_ft, vid_rm_ft)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelSource {
    OriginalRemapped,
    FinalVoted,
    VideoGroundTruth,
}

/// A dataset with one binary label per item, in item order.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub dataset: Dataset,
    pub labels: Vec<BinaryLabel>,
    pub source: LabelSource,
}

impl LabeledSet {
    pub fn from_mapping(dataset: &Dataset, mapping: &LabelMapping, source: LabelSource) -> Result<Self, ExportError> {
        let labels = dataset.remapped(mapping)?.into_iter().map(|(_, l)| l).collect();
        Ok(LabeledSet {
            dataset: dataset.clone(),
            labels,
            source,
        })
    }

    pub fn from_final(re: &ReannotatedDataset) -> Self {
        let labels = re
            .dataset
            .items
            .iter()
            .map(|i| re.task.parse_word(&i.original_label).expect("finalized label is a task word"))
            .collect();
        LabeledSet {
            dataset: re.dataset.clone(),
            labels,
            source: LabelSource::FinalVoted,
        }
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.dataset.items.iter().map(|i| i.item_id.as_str()).collect()
    }
}

/// One training example: the prompt words, frames and the target word the
/// fine-tuned model should emit after them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub item_id: String,
    pub dataset_id: String,
    pub kind: MediaKind,
    pub label: BinaryLabel,
    pub label_source: LabelSource,
    /// Item text followed by the question.
    pub prompt: String,
    pub input_text: Vec<String>,
    /// Frame paths relative to the manifest directory.
    pub vision: Vec<String>,
    pub target_word: String,
}

impl TrainingExample {
    /// `input_text` followed by the target word.
    pub fn target_sequence(&self) -> Vec<String> {
        let mut seq = self.input_text.clone();
        seq.push(self.target_word.clone());
        seq
    }

    pub fn to_record(&self) -> ChatRecord {
        let mut content: Vec<Part> = self.vision.iter().map(|p| Part::Image { image: p.clone() }).collect();
        content.push(Part::Text {
            text: self.prompt.clone(),
        });
        ChatRecord {
            messages: vec![
                ChatTurn {
                    role: "user".into(),
                    content: TurnContent::Parts(content),
                },
                ChatTurn {
                    role: "assistant".into(),
                    content: TurnContent::Text(self.target_word.clone()),
                },
            ],
            meta: RecordMeta {
                item_id: self.item_id.clone(),
                dataset: self.dataset_id.clone(),
                kind: self.kind,
                label: self.label,
                label_source: self.label_source,
                frames: self.vision.len(),
            },
        }
    }
}

/// One manifest line in chat fine-tuning form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRecord {
    pub messages: Vec<ChatTurn>,
    pub meta: RecordMeta,
}

impl ChatRecord {
    pub fn target_word(&self) -> Option<&str> {
        self.messages.iter().rev().find_map(|m| match &m.content {
            TurnContent::Text(t) if m.role == "assistant" => Some(t.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: String,
    pub content: TurnContent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TurnContent {
    Text(String),
    Parts(Vec<Part>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Part {
    Image { image: String },
    Text { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub item_id: String,
    pub dataset: String,
    pub kind: MediaKind,
    pub label: BinaryLabel,
    pub label_source: LabelSource,
    pub frames: usize,
}

/// Training hyperparameters handed to the external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub epochs: u32,
    pub batch_size: u32,
    pub learning_rate: f64,
    pub adapter: String,
    pub epoch_selection: String,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            epochs: 5,
            batch_size: 8,
            learning_rate: 2e-4,
            adapter: "LoRA q,v layers".into(),
            epoch_selection: "evaluate after every epoch and keep the checkpoint with the best macro-F1 on the video test set"
                .into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExportConfig {
    pub task: TaskDef,
    pub profile: Profile,
    /// Pseudo-video settings; `k` is forced to the profile's frame count.
    pub aug: AugConfig,
    /// Seed for the single-frame draw on videos.
    pub frame_seed: u64,
    /// Seed for the VID_RM_FT shuffle.
    pub shuffle_seed: u64,
    pub hyper: Hyperparams,
    /// Word used for the content in the training question.
    pub content_kind: String,
}

impl ExportConfig {
    pub fn new(task: TaskDef, profile: Profile) -> Self {
        ExportConfig {
            task,
            profile,
            aug: AugConfig::default(),
            frame_seed: 0,
            shuffle_seed: 0,
            hyper: Hyperparams::default(),
            content_kind: "video".into(),
        }
    }

    pub fn question(&self) -> String {
        TRAINING_QUESTION.replace("{content_kind}", &self.content_kind)
    }
}

/// Demonstrations used when no fine-tuning happens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoFtPlan {
    pub n_shots: usize,
    pub demo_ids: Vec<String>,
}

/// Data available to the strategies. Which fields are needed depends on the
/// strategy.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExportSources<'a> {
    pub video_train: Option<&'a LabeledSet>,
    pub memes_original: Option<&'a LabeledSet>,
    pub memes_final: Option<&'a LabeledSet>,
    pub no_ft: Option<&'a NoFtPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportSummary {
    pub strategy: StrategyId,
    pub train_manifest: Option<PathBuf>,
    pub meta: PathBuf,
    pub examples: usize,
    pub sources: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct MetaDoc<'a> {
    strategy: StrategyId,
    profile: Profile,
    task: &'a str,
    content_kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_manifest: Option<String>,
    examples: usize,
    frames_per_example: u32,
    epochs: u32,
    batch_size: u32,
    learning_rate: f64,
    adapter: &'a str,
    epoch_selection: &'a str,
    seeds: SeedsDoc,
    aug: &'a AugConfig,
    sources: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    no_ft: Option<&'a NoFtPlan>,
}

#[derive(Serialize)]
struct SeedsDoc {
    aug: u64,
    frame: u64,
    shuffle: u64,
}

fn slash_path(path: &Path) -> String {
    path.to_string_lossy().replace('\\', "/")
}

/// Writes manifests into one output directory. Pseudo-video frames go under
/// `<out_dir>/frames/<dataset>/<item>/` and are generated once per item.
pub struct Exporter {
    out_dir: PathBuf,
    cfg: ExportConfig,
    vision_cache: Mutex<HashMap<(String, String), Vec<String>>>,
}

impl Exporter {
    pub fn new(out_dir: &Path, mut cfg: ExportConfig) -> Result<Self, ExportError> {
        cfg.task.validate()?;
        cfg.aug.k = cfg.profile.frames();
        cfg.aug.validate().map_err(|e| ExportError::Config(e.to_string()))?;
        fs::create_dir_all(out_dir).map_err(|source| ExportError::Io {
            path: out_dir.to_path_buf(),
            source,
        })?;
        Ok(Exporter {
            out_dir: out_dir.to_path_buf(),
            cfg,
            vision_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn config(&self) -> &ExportConfig {
        &self.cfg
    }

    fn rel(&self, file: &Path) -> String {
        slash_path(&rebase_path(file, Path::new(""), &self.out_dir))
    }

    fn vision(&self, dataset: &Dataset, item: &MediaItem) -> Result<Vec<String>, ExportError> {
        let key = (dataset.dataset_id.clone(), item.item_id.clone());
        if let Some(v) = self.vision_cache.lock().get(&key) {
            return Ok(v.clone());
        }
        let wrap = |source| ExportError::Vision {
            item_id: item.item_id.clone(),
            source,
        };
        let resolve = |refs: Vec<FrameRef>| -> Result<Vec<String>, ExportError> {
            refs.iter()
                .map(|r| r.resolve_file(&dataset.root).map(|p| self.rel(&p)).map_err(wrap))
                .collect()
        };
        let image_path = || match &item.vision {
            VisionSource::Image(p) => Ok(dataset.resolve(p)),
            _ => Err(wrap(VisionError::WrongKind {
                item_id: item.item_id.clone(),
                expected: "meme",
            })),
        };
        let paths = match (item.kind, self.cfg.profile) {
            (MediaKind::Meme, Profile::ImageModel) => vec![self.rel(&image_path()?)],
            (MediaKind::Meme, Profile::VideoModel) => {
                let p = image_path()?;
                let image = load_image(&item.item_id, &p).map_err(wrap)?;
                let frames = augment_to_pseudo_video(&image, &item.item_id, &self.cfg.aug).map_err(wrap)?;
                let frames_root = self.out_dir.join("frames").join(&dataset.dataset_id);
                write_pseudo_video(&frames, &frames_root, &item.item_id)
                    .map_err(wrap)?
                    .into_iter()
                    .map(|rel| slash_path(&Path::new("frames").join(&dataset.dataset_id).join(rel)))
                    .collect()
            }
            (MediaKind::Video, Profile::ImageModel) => {
                resolve(vec![sample_single_frame(item, self.cfg.frame_seed).map_err(wrap)?])?
            }
            (MediaKind::Video, Profile::VideoModel) => {
                resolve(sample_k_frames(item, self.cfg.profile.frames()).map_err(wrap)?)?
            }
        };
        self.vision_cache.lock().insert(key, paths.clone());
        Ok(paths)
    }

    pub fn build_training_example(
        &self,
        dataset: &Dataset,
        item: &MediaItem,
        label: BinaryLabel,
        label_source: LabelSource,
    ) -> Result<TrainingExample, ExportError> {
        let vision = self.vision(dataset, item)?;
        let question = self.cfg.question();
        let text = item.full_text();
        let prompt = if text.is_empty() {
            question
        } else {
            format!("{text}\n{question}")
        };
        Ok(TrainingExample {
            item_id: item.item_id.clone(),
            dataset_id: dataset.dataset_id.clone(),
            kind: item.kind,
            label,
            label_source,
            input_text: prompt.split_whitespace().map(str::to_string).collect(),
            prompt,
            vision,
            target_word: self.cfg.task.render(label).to_string(),
        })
    }

    /// Examples for every item of `set`, in item order.
    pub fn examples(&self, set: &LabeledSet) -> Result<Vec<TrainingExample>, ExportError> {
        set.dataset
            .items
            .par_iter()
            .zip(set.labels.par_iter())
            .map(|(item, label)| self.build_training_example(&set.dataset, item, *label, set.source))
            .collect()
    }

    fn write_examples(&self, path: &Path, examples: &[TrainingExample]) -> Result<(), ExportError> {
        let records: Vec<ChatRecord> = examples.iter().map(TrainingExample::to_record).collect();
        write_lines(path, &records)?;
        Ok(())
    }

    /// Evaluation manifest `eval_<dataset>.mft` for a labelled test set.
    pub fn export_eval(&self, set: &LabeledSet) -> Result<PathBuf, ExportError> {
        let path = self.out_dir.join(format!("eval_{}.mft", set.dataset.dataset_id));
        self.write_examples(&path, &self.examples(set)?)?;
        Ok(path)
    }

    fn rm_source<'a>(&self, strategy: StrategyId, sources: &ExportSources<'a>) -> Result<&'a LabeledSet, ExportError> {
        let fin = sources.memes_final.ok_or_else(|| {
            ExportError::Stale(format!("{strategy} needs a finalized meme set; run finalize first"))
        })?;
        if fin.source != LabelSource::FinalVoted {
            return Err(ExportError::Stale(format!("{strategy} meme labels are not final votes")));
        }
        if let Some(orig) = sources.memes_original {
            if orig.ids() != fin.ids() {
                return Err(ExportError::Stale(format!(
                    "{strategy}: finalized memes do not match the sampled meme set"
                )));
            }
        }
        Ok(fin)
    }

    pub fn export(&self, strategy: StrategyId, sources: &ExportSources) -> Result<ExportSummary, ExportError> {
        let video = || {
            sources.video_train.ok_or(ExportError::MissingSource {
                strategy,
                what: "a video training set",
            })
        };
        let mut source_counts = BTreeMap::new();
        let mut count = |set: &LabeledSet| {
            *source_counts.entry(set.dataset.dataset_id.clone()).or_insert(0) += set.dataset.len();
        };
        let examples = match strategy {
            StrategyId::NoFt => None,
            StrategyId::VidFt => {
                count(video()?);
                Some(self.examples(video()?)?)
            }
            StrategyId::OmFt => {
                let om = sources.memes_original.ok_or(ExportError::MissingSource {
                    strategy,
                    what: "a sampled meme set",
                })?;
                count(om);
                Some(self.examples(om)?)
            }
            StrategyId::RmFt => {
                let rm = self.rm_source(strategy, sources)?;
                count(rm);
                Some(self.examples(rm)?)
            }
            StrategyId::VidRmFt => {
                let (vid, rm) = (video()?, self.rm_source(strategy, sources)?);
                count(vid);
                count(rm);
                let mut all = self.examples(vid)?;
                all.extend(self.examples(rm)?);
                let shuffle = seed::derive_seed(self.cfg.shuffle_seed, &[strategy.as_str().as_bytes()]);
                all.shuffle(&mut seed::rng(shuffle));
                Some(all)
            }
        };
        if strategy == StrategyId::NoFt && sources.no_ft.is_none() {
            return Err(ExportError::MissingSource {
                strategy,
                what: "a demonstration plan",
            });
        }

        let stem = strategy.file_stem();
        let train_manifest = match &examples {
            Some(ex) => {
                let path = self.out_dir.join(format!("train_{stem}.mft"));
                self.write_examples(&path, ex)?;
                Some(path)
            }
            None => None,
        };
        let n = examples.as_ref().map_or(0, Vec::len);
        let meta = MetaDoc {
            strategy,
            profile: self.cfg.profile,
            task: &self.cfg.task.task_id,
            content_kind: &self.cfg.content_kind,
            train_manifest: train_manifest
                .as_ref()
                .and_then(|p| p.file_name())
                .map(|f| f.to_string_lossy().into_owned()),
            examples: n,
            frames_per_example: self.cfg.profile.frames(),
            epochs: self.cfg.hyper.epochs,
            batch_size: self.cfg.hyper.batch_size,
            learning_rate: self.cfg.hyper.learning_rate,
            adapter: &self.cfg.hyper.adapter,
            epoch_selection: &self.cfg.hyper.epoch_selection,
            seeds: SeedsDoc {
                aug: self.cfg.aug.seed,
                frame: self.cfg.frame_seed,
                shuffle: self.cfg.shuffle_seed,
            },
            aug: &self.cfg.aug,
            sources: source_counts.clone(),
            no_ft: if strategy == StrategyId::NoFt { sources.no_ft } else { None },
        };
        let meta_path = self.out_dir.join(format!("meta_{stem}.toml"));
        let text = toml::to_string(&meta).map_err(|e| ExportError::Config(e.to_string()))?;
        fs::write(&meta_path, text).map_err(|source| ExportError::Io {
            path: meta_path.clone(),
            source,
        })?;
        Ok(ExportSummary {
            strategy,
            train_manifest,
            meta: meta_path,
            examples: n,
            sources: source_counts,
        })
    }
}

/// Read a training or evaluation manifest back.
pub fn read_manifest(path: &Path) -> Result<Vec<ChatRecord>, ExportError> {
    let text = fs::read_to_string(path).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                ExportError::Ingest(IngestError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_round_trip() {
        for s in StrategyId::ALL {
            assert_eq!(s.as_str().parse::<StrategyId>().unwrap(), s);
            assert_eq!(s.file_stem().parse::<StrategyId>().unwrap(), s);
        }
        assert_eq!("vid+rm-ft".parse::<StrategyId>().unwrap(), StrategyId::VidRmFt);
        assert!("rm".parse::<StrategyId>().is_err());
        assert!(StrategyId::NoFt.label_sources().is_empty());
    }

    #[test]
    fn hyperparams_default() {
        let h = Hyperparams::default();
        assert_eq!((h.epochs, h.batch_size, h.learning_rate), (5, 8, 2e-4));
        assert_eq!(h.adapter, "LoRA q,v layers");
    }

    #[test]
    fn question_omits_label_words() {
        let cfg = ExportConfig::new(TaskDef::hatemm(), Profile::VideoModel);
        let q = cfg.question();
        assert!(!q.contains("hateful"));
        assert!(q.contains("video"));
    }
}
