//! Few-shot prompting against a vision-chat endpoint.
//!
//! Demonstrations are drawn from a labelled video training split, the query
//! reuses their question template, and answers are parsed back onto the
//! task's binary label.

mod batch;
mod client;
mod runlog;
mod wire;

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Dataset;
use crate::item::{MediaItem, MediaKind};
use crate::labels::{remap_label, BinaryLabel, LabelError, LabelMapping, TaskDef};
use crate::seed;
use crate::visionprep::{sample_k_frames, sample_single_frame, FrameRef, FrameSource, VisionError};

pub use batch::{predict_batch, predict_with_reask, PredictionJob, PredictionOutcome, REASK_INSTRUCTION};
pub use client::{
    call_with_retry, CallError, ChatBackend, Completion, EndpointConfig, HttpBackend, RawResponse,
    StubBackend, Usage, API_KEY_ENV,
};
pub use runlog::{RunLog, RunLogRecord};
pub use wire::{render_request, ChatMessage, ChatRequest, ContentPart, ImageUrl};

/// Frames the video-profile query carries.
pub const VIDEO_QUERY_FRAMES: u32 = 16;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("not enough demonstrations: need {needed} {class}, have {available}")]
    Shortage {
        class: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("invalid demo request: {0}")]
    InvalidRequest(String),
    #[error("config error: demo {item_id:?}: {reason}")]
    Config { item_id: String, reason: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("connection failed after {attempts} attempt(s): {message}")]
    Connect { attempts: u32, message: String },
    #[error("HTTP {status} after {attempts} attempt(s): {body}")]
    Http {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// The model's vote for one item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Prediction {
    Label(BinaryLabel),
    Unparseable,
    PredictionFailed,
}

impl Prediction {
    pub fn label(self) -> Option<BinaryLabel> {
        match self {
            Prediction::Label(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Prediction::Label(l) => l.as_str(),
            Prediction::Unparseable => "unparseable",
            Prediction::PredictionFailed => "prediction_failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "unparseable" => Some(Prediction::Unparseable),
            "prediction_failed" | "failed" => Some(Prediction::PredictionFailed),
            other => other.parse().ok().map(Prediction::Label),
        }
    }
}

impl From<Prediction> for String {
    fn from(p: Prediction) -> Self {
        p.as_str().to_string()
    }
}

impl TryFrom<String> for Prediction {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Prediction::parse(&s).ok_or_else(|| format!("unknown prediction {s:?}"))
    }
}

impl From<BinaryLabel> for Prediction {
    fn from(l: BinaryLabel) -> Self {
        Prediction::Label(l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// Demonstrations carry their own frames (image-model profile).
    MultiImage,
    /// Demonstrations carry a human-written description in place of frames;
    /// the query carries sampled video frames (video-model profile).
    Description,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoVision {
    Frames(Vec<FrameRef>),
    Description(String),
}

/// One demonstration block, or the query when `label_word` is `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demo {
    pub item_id: String,
    pub vision: DemoVision,
    pub text: String,
    /// Question in open form (answer slot empty).
    pub question: String,
    pub label_word: Option<String>,
    /// Directory frame paths are relative to.
    pub root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub demos: Vec<Demo>,
    pub query: Demo,
    pub task: TaskDef,
    pub mode: PromptMode,
}

impl PromptBundle {
    pub fn n_shots(&self) -> usize {
        self.demos.len()
    }
}

/// Answer vocabularies for parsing model output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerMap {
    positive_words: Vec<String>,
    negative_words: Vec<String>,
}

impl AnswerMap {
    /// The first word of each list is the canonical rendering.
    pub fn new<S: AsRef<str>>(positive: &[S], negative: &[S]) -> Result<Self, InferenceError> {
        let norm = |words: &[S]| -> Vec<String> {
            let mut seen = BTreeSet::new();
            words
                .iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty() && seen.insert(w.clone()))
                .collect()
        };
        let positive_words = norm(positive);
        let negative_words = norm(negative);
        if positive_words.is_empty() || negative_words.is_empty() {
            return Err(InferenceError::InvalidRequest("answer sets must be non-empty".into()));
        }
        if positive_words.iter().any(|w| negative_words.contains(w)) {
            return Err(InferenceError::InvalidRequest("answer sets must be disjoint".into()));
        }
        Ok(AnswerMap {
            positive_words,
            negative_words,
        })
    }

    /// `yes`/`no` plus the task's own label words.
    pub fn for_task(task: &TaskDef) -> Self {
        AnswerMap::new(
            &["yes", task.positive_word.as_str()],
            &["no", task.negative_word.as_str()],
        )
        .expect("task words are distinct and non-empty")
    }

    pub fn render(&self, label: BinaryLabel) -> &str {
        match label {
            BinaryLabel::Positive => &self.positive_words[0],
            BinaryLabel::Negative => &self.negative_words[0],
        }
    }
}

/// Lowercased word tokens; hyphenated words stay whole.
fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .map(|t| t.trim_matches('-').to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

fn phrase_at(hay: &[String], at: usize, phrase: &[String]) -> bool {
    !phrase.is_empty() && hay.len() >= at + phrase.len() && hay[at..at + phrase.len()] == *phrase
}

/// First-token rule, then a scan of the whole text for the earliest answer
/// word (whole words only). Returns [`Prediction::Unparseable`] otherwise.
pub fn parse_label(raw_text: &str, answers: &AnswerMap) -> Prediction {
    let toks = tokens(raw_text);
    let phrases: Vec<(Vec<String>, BinaryLabel)> = answers
        .positive_words
        .iter()
        .map(|w| (tokens(w), BinaryLabel::Positive))
        .chain(answers.negative_words.iter().map(|w| (tokens(w), BinaryLabel::Negative)))
        .collect();
    for at in 0..toks.len() {
        let hit = phrases
            .iter()
            .filter(|(p, _)| phrase_at(&toks, at, p))
            .max_by_key(|(p, _)| p.len());
        if let Some((_, label)) = hit {
            return Prediction::Label(*label);
        }
    }
    Prediction::Unparseable
}

/// Deterministic test double: positive iff the item text contains a lexicon
/// term as whole words, ignoring case.
pub fn stub_predict<S: AsRef<str>>(item: &MediaItem, lexicon: &[S]) -> BinaryLabel {
    if lexicon_hit(&item.full_text(), lexicon) {
        BinaryLabel::Positive
    } else {
        BinaryLabel::Negative
    }
}

pub(crate) fn lexicon_hit<S: AsRef<str>>(text: &str, lexicon: &[S]) -> bool {
    let toks = tokens(text);
    lexicon.iter().any(|term| {
        let term = tokens(term.as_ref());
        (0..toks.len()).any(|at| phrase_at(&toks, at, &term))
    })
}

fn content_kind(kind: MediaKind) -> &'static str {
    kind.as_str()
}

/// Vision for a demonstration or image-profile query: the meme image, or
/// one seeded frame of a video.
fn single_vision(item: &MediaItem, seed: u64) -> Result<Vec<FrameRef>, VisionError> {
    match item.kind {
        MediaKind::Meme => Ok(vec![FrameRef {
            item_id: item.item_id.clone(),
            frame_index: 0,
            source: match &item.vision {
                crate::item::VisionSource::Image(p) => FrameSource::Image(p.clone()),
                _ => unreachable!("meme shape checked at ingest"),
            },
        }]),
        MediaKind::Video => Ok(vec![sample_single_frame(item, seed)?]),
    }
}

/// Draw `n_shots` labelled demonstrations from `train`.
///
/// Balanced draws take `n/2` of each class and alternate positive, negative.
/// Unbalanced draws take the first `n` of a seeded shuffle.
pub fn select_demos(
    train: &Dataset,
    mapping: &LabelMapping,
    task: &TaskDef,
    n_shots: usize,
    seed: u64,
    balanced: bool,
) -> Result<Vec<Demo>, InferenceError> {
    if n_shots == 0 {
        return Ok(Vec::new());
    }
    if n_shots > train.len() {
        return Err(InferenceError::InvalidRequest(format!(
            "{n_shots} demonstrations requested from {} items",
            train.len()
        )));
    }
    let labelled: Vec<(&MediaItem, BinaryLabel)> = train
        .items
        .iter()
        .map(|i| Ok((i, remap_label(&i.original_label, mapping)?)))
        .collect::<Result<_, LabelError>>()?;
    let mut rng = seed::rng(seed);
    let picked: Vec<(&MediaItem, BinaryLabel)> = if balanced {
        if n_shots % 2 != 0 {
            return Err(InferenceError::InvalidRequest(format!(
                "balanced demos need an even count, got {n_shots}"
            )));
        }
        let half = n_shots / 2;
        let mut pools: Vec<Vec<(&MediaItem, BinaryLabel)>> = BinaryLabel::ALL
            .iter()
            .map(|want| labelled.iter().filter(|(_, l)| l == want).copied().collect())
            .collect();
        for (pool, label) in pools.iter_mut().zip(BinaryLabel::ALL) {
            if pool.len() < half {
                return Err(InferenceError::Shortage {
                    class: label.as_str(),
                    needed: half,
                    available: pool.len(),
                });
            }
            pool.shuffle(&mut rng);
        }
        (0..half)
            .flat_map(|i| [pools[0][i], pools[1][i]])
            .collect()
    } else {
        let mut all = labelled;
        all.shuffle(&mut rng);
        all.truncate(n_shots);
        all
    };
    let answers = AnswerMap::for_task(task);
    picked
        .into_iter()
        .map(|(item, label)| {
            Ok(Demo {
                item_id: item.item_id.clone(),
                vision: DemoVision::Frames(single_vision(item, seed)?),
                text: item.full_text(),
                question: task.question(content_kind(item.kind), ""),
                label_word: Some(answers.render(label).to_string()),
                root: train.root.clone(),
            })
        })
        .collect()
}

/// Video descriptions keyed by item id, from a line-delimited sidecar of
/// `{"id": ..., "description": ...}` records.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Descriptions(pub HashMap<String, String>);

impl Descriptions {
    pub fn load(path: &Path) -> Result<Self, InferenceError> {
        #[derive(Deserialize)]
        struct Rec {
            id: String,
            description: String,
        }
        let text = std::fs::read_to_string(path).map_err(|source| InferenceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: Rec = serde_json::from_str(line).map_err(|e| InferenceError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            map.insert(rec.id, rec.description);
        }
        Ok(Descriptions(map))
    }
}

/// Replace each demo's frames with its description.
pub fn attach_descriptions(demos: Vec<Demo>, descriptions: &Descriptions) -> Result<Vec<Demo>, InferenceError> {
    demos
        .into_iter()
        .map(|mut d| {
            let text = descriptions.0.get(&d.item_id).ok_or_else(|| InferenceError::Config {
                item_id: d.item_id.clone(),
                reason: "no description in sidecar".into(),
            })?;
            d.vision = DemoVision::Description(text.clone());
            Ok(d)
        })
        .collect()
}

/// Assemble the few-shot bundle for `item`. The query never carries a label.
pub fn build_prompt(
    item: &MediaItem,
    root: &Path,
    demos: &[Demo],
    task: &TaskDef,
    mode: PromptMode,
    seed: u64,
) -> Result<PromptBundle, InferenceError> {
    for demo in demos {
        match (mode, &demo.vision) {
            (PromptMode::Description, DemoVision::Frames(_)) => {
                return Err(InferenceError::Config {
                    item_id: demo.item_id.clone(),
                    reason: "description mode requires description_text".into(),
                })
            }
            (PromptMode::MultiImage, DemoVision::Description(_)) => {
                return Err(InferenceError::Config {
                    item_id: demo.item_id.clone(),
                    reason: "multi-image mode requires demo frames".into(),
                })
            }
            _ => {}
        }
    }
    let frames = match (mode, item.kind) {
        (PromptMode::Description, MediaKind::Video) => sample_k_frames(item, VIDEO_QUERY_FRAMES)?,
        _ => single_vision(item, seed)?,
    };
    Ok(PromptBundle {
        demos: demos.to_vec(),
        query: Demo {
            item_id: item.item_id.clone(),
            vision: DemoVision::Frames(frames),
            text: item.full_text(),
            question: task.question(content_kind(item.kind), ""),
            label_word: None,
            root: root.to_path_buf(),
        },
        task: task.clone(),
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::item::{Split, VisionSource};
    use crate::labels::{LabelSchema, MappingDoc};

    fn video(id: &str, label: &str) -> MediaItem {
        MediaItem {
            item_id: id.into(),
            kind: MediaKind::Video,
            title: Some(format!("title {id}")),
            text: format!("transcript {id}"),
            vision: VisionSource::FrameDir {
                dir: format!("frames/{id}").into(),
                frame_count: 12,
            },
            duration_s: Some(30.0),
            original_label: label.into(),
            split: Split::Train,
        }
    }

    fn meme(id: &str, text: &str) -> MediaItem {
        MediaItem {
            item_id: id.into(),
            kind: MediaKind::Meme,
            title: None,
            text: text.into(),
            vision: VisionSource::Image(format!("img/{id}.png").into()),
            duration_s: None,
            original_label: "hateful".into(),
            split: Split::Unsplit,
        }
    }

    fn train() -> Dataset {
        let labels = ["hateful", "normal", "offensive", "normal", "normal", "hateful", "normal", "normal"];
        Dataset {
            dataset_id: "mhc".into(),
            schema: LabelSchema::builtin("mhc").unwrap(),
            kind: MediaKind::Video,
            root: "/videos".into(),
            items: labels.iter().enumerate().map(|(i, l)| video(&format!("v{i}"), l)).collect(),
        }
    }

    fn mhc_mapping() -> LabelMapping {
        LabelMapping::resolve(
            &MappingDoc::builtin("mhc-mhc").unwrap(),
            &LabelSchema::builtin("mhc").unwrap(),
            &TaskDef::mhc(),
        )
        .unwrap()
    }

    #[test]
    fn balanced_two_shots_one_each() {
        let demos = select_demos(&train(), &mhc_mapping(), &TaskDef::mhc(), 2, 1, true).unwrap();
        assert_eq!(demos.len(), 2);
        assert_eq!(demos[0].label_word.as_deref(), Some("yes"));
        assert_eq!(demos[1].label_word.as_deref(), Some("no"));
    }

    #[test]
    fn balanced_demos_alternate() {
        let demos = select_demos(&train(), &mhc_mapping(), &TaskDef::mhc(), 6, 4, true).unwrap();
        let words: Vec<_> = demos.iter().map(|d| d.label_word.clone().unwrap()).collect();
        assert_eq!(words, ["yes", "no", "yes", "no", "yes", "no"]);
    }

    #[test]
    fn zero_shots_is_empty() {
        assert!(select_demos(&train(), &mhc_mapping(), &TaskDef::mhc(), 0, 1, true).unwrap().is_empty());
    }

    #[test]
    fn demo_selection_is_deterministic() {
        let ids = |seed| {
            select_demos(&train(), &mhc_mapping(), &TaskDef::mhc(), 4, seed, true)
                .unwrap()
                .into_iter()
                .map(|d| d.item_id)
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(3), ids(3));
    }

    #[test]
    fn shortage_reports_counts() {
        // three positives available
        let err = select_demos(&train(), &mhc_mapping(), &TaskDef::mhc(), 8, 1, true).unwrap_err();
        assert!(
            matches!(err, InferenceError::Shortage { class: "positive", needed: 4, available: 3 }),
            "{err}"
        );
        assert!(select_demos(&train(), &mhc_mapping(), &TaskDef::mhc(), 3, 1, true).is_err());
        assert_eq!(select_demos(&train(), &mhc_mapping(), &TaskDef::mhc(), 7, 1, false).unwrap().len(), 7);
    }

    #[test]
    fn meme_bundle_structure() {
        let demos = select_demos(&train(), &mhc_mapping(), &TaskDef::mhc(), 2, 1, true).unwrap();
        let item = meme("m1", "look at this");
        let bundle = build_prompt(&item, Path::new("/memes"), &demos, &TaskDef::mhc(), PromptMode::MultiImage, 1).unwrap();
        assert_eq!(bundle.n_shots(), 2);
        assert!(bundle.query.label_word.is_none());
        assert_eq!(bundle.query.question, "Is this meme offensive? Answer yes or no.\nAnswer:");
        assert_eq!(bundle.demos[0].question, "Is this video offensive? Answer yes or no.\nAnswer:");
        assert!(matches!(&bundle.query.vision, DemoVision::Frames(f) if f.len() == 1));
    }

    #[test]
    fn zero_shot_bundle() {
        let bundle = build_prompt(&meme("m1", "x"), Path::new("."), &[], &TaskDef::hatemm(), PromptMode::MultiImage, 0).unwrap();
        assert!(bundle.demos.is_empty());
        assert!(bundle.query.question.contains("hateful"));
    }

    #[test]
    fn description_mode() {
        let demos = select_demos(&train(), &mhc_mapping(), &TaskDef::mhc(), 2, 1, true).unwrap();
        let task = TaskDef::mhc();
        let item = video("q1", "normal");
        let err = build_prompt(&item, Path::new("."), &demos, &task, PromptMode::Description, 0).unwrap_err();
        assert!(matches!(err, InferenceError::Config { .. }));

        let mut descriptions = Descriptions::default();
        descriptions.0.insert(demos[0].item_id.clone(), "a person talking".into());
        let missing = attach_descriptions(demos.clone(), &descriptions).unwrap_err();
        assert!(missing.to_string().contains(&demos[1].item_id), "{missing}");

        descriptions.0.insert(demos[1].item_id.clone(), "a crowd".into());
        let described = attach_descriptions(demos, &descriptions).unwrap();
        let bundle = build_prompt(&item, Path::new("."), &described, &task, PromptMode::Description, 0).unwrap();
        assert!(bundle.demos.iter().all(|d| matches!(d.vision, DemoVision::Description(_))));
        assert!(matches!(&bundle.query.vision, DemoVision::Frames(f) if f.len() == 16));
    }

    #[test]
    fn description_sidecar_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("desc.jsonl");
        std::fs::write(&path, "{\"id\":\"v1\",\"description\":\"a dog\"}\n\n{\"id\":\"v2\",\"description\":\"a cat\"}\n").unwrap();
        let d = Descriptions::load(&path).unwrap();
        assert_eq!(d.0["v2"], "a cat");
        std::fs::write(&path, "{\"id\":\"v1\"}\n").unwrap();
        assert!(matches!(Descriptions::load(&path), Err(InferenceError::Parse { line: 1, .. })));
    }

    #[test]
    fn parse_label_rules() {
        let answers = AnswerMap::for_task(&TaskDef::mhc());
        assert_eq!(parse_label("Yes, this is offensive.", &answers), Prediction::Label(BinaryLabel::Positive));
        assert_eq!(parse_label("no", &answers), Prediction::Label(BinaryLabel::Negative));
        assert_eq!(parse_label("I cannot determine.", &answers), Prediction::Unparseable);
        assert_eq!(parse_label("The meme is non-offensive.", &answers), Prediction::Label(BinaryLabel::Negative));
        assert_eq!(parse_label("  NO.", &answers), Prediction::Label(BinaryLabel::Negative));
        assert_eq!(parse_label("", &answers), Prediction::Unparseable);
    }

    #[test]
    fn parse_render_round_trip() {
        for task in [TaskDef::mhc(), TaskDef::hatemm()] {
            let answers = AnswerMap::for_task(&task);
            for label in BinaryLabel::ALL {
                assert_eq!(parse_label(answers.render(label), &answers), Prediction::Label(label));
                assert_eq!(parse_label(task.render(label), &answers), Prediction::Label(label));
            }
        }
    }

    #[test]
    fn answer_map_validation() {
        assert!(AnswerMap::new(&["yes"], &["YES"]).is_err());
        assert!(AnswerMap::new(&["yes"], &[] as &[&str]).is_err());
    }

    #[test]
    fn stub_predict_word_boundaries() {
        let lex = ["zorp", "blick kravn"];
        assert_eq!(stub_predict(&meme("a", "such ZORP energy"), &lex), BinaryLabel::Positive);
        assert_eq!(stub_predict(&meme("a", "zorpish but fine"), &lex), BinaryLabel::Negative);
        assert_eq!(stub_predict(&meme("a", "a Blick  kravn moment"), &lex), BinaryLabel::Positive);
        assert_eq!(stub_predict(&meme("a", ""), &lex), BinaryLabel::Negative);
        let m = meme("b", "zorp");
        assert_eq!(stub_predict(&m, &lex), stub_predict(&m, &lex));
    }

    #[test]
    fn prediction_string_forms() {
        for p in [
            Prediction::Label(BinaryLabel::Positive),
            Prediction::Label(BinaryLabel::Negative),
            Prediction::Unparseable,
            Prediction::PredictionFailed,
        ] {
            assert_eq!(Prediction::parse(p.as_str()), Some(p));
        }
    }
}
