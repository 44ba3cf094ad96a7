//! Run configuration and the file-to-file pipeline stages.
//!
//! Layout of a run directory:
//!
//! ```text
//! run.lock                      resolved configuration
//! data/memes.mft                sampled memes (source labels)
//! data/videos_train.mft         video split
//! data/videos_test.mft
//! reports/sweep.json            few-shot sweep
//! predict/run.log               endpoint log and cache
//! predict/predictions.jsonl     model votes on the memes
//! predict/demos.json            demonstrations used
//! store/events.log              vote store
//! final/memes.mft               re-annotated memes
//! export/                       training and evaluation manifests
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::{
    demo_seed, read_predictions, select_optimal_shots, sweep_shots, write_predictions, EvalError, PredictionLine,
    SweepPlan, SweepReport,
};
use crate::export::{
    CostParams, ExportConfig, ExportError, ExportSources, ExportSummary, Exporter, Hyperparams, LabelSource,
    LabeledSet, NoFtPlan, Profile, StrategyId,
};
use crate::ingest::{
    load_dataset, rebase_path, sample_items, split_dataset, write_manifest, Dataset, IngestError, SplitSpec,
};
use crate::inference::{
    attach_descriptions, build_prompt, predict_batch, select_demos, AnswerMap, ChatBackend, Descriptions,
    EndpointConfig, HttpBackend, InferenceError, PredictionJob, PromptMode, RunLog, StubBackend,
};
use crate::item::MediaKind;
use crate::labels::{LabelError, LabelMapping, LabelSchema, MappingDoc, TaskDef};
use crate::reannotate::{
    enqueue_disagreements, finalize_dataset, load_finalized, AnnotationEvent, QueueStats, ReannotateError,
    ReannotatedDataset, Store,
};
use crate::synth::ScriptedAnswer;
use crate::visionprep::AugConfig;

pub const LOCK_FILE: &str = "run.lock";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: missing input {path} (run the earlier stage first)")]
    MissingInput { stage: &'static str, path: PathBuf },
    #[error("no scripted answer for item {0:?}")]
    MissingAnswer(String),
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
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Reannotate(#[from] ReannotateError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    /// Whether the failure is a problem with the inputs rather than with the
    /// environment.
    pub fn is_validation(&self) -> bool {
        match self {
            PipelineError::Io { .. } => false,
            PipelineError::Inference(e) => !matches!(
                e,
                InferenceError::Io { .. }
                    | InferenceError::Connect { .. }
                    | InferenceError::Timeout { .. }
                    | InferenceError::Http { .. }
            ),
            PipelineError::Reannotate(e) => !matches!(e, ReannotateError::Io { .. }),
            PipelineError::Export(e) => !matches!(e, ExportError::Io { .. }),
            PipelineError::Eval(e) => !matches!(e, EvalError::Io { .. }),
            PipelineError::Ingest(e) => !matches!(e, IngestError::Io { .. }),
            _ => true,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A dataset manifest and how its labels map onto the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    pub manifest: PathBuf,
    pub schema: String,
    /// Mapping id `<schema>-<task>`, looked up in `mappings_file` first and
    /// then among the built-in mappings.
    pub mapping: String,
    /// Label set for schemas that are not built in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub split: u64,
    pub sample: u64,
    pub demo: u64,
    pub aug: u64,
    pub frame: u64,
    pub shuffle: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            split: 1,
            sample: 2,
            demo: 3,
            aug: 4,
            frame: 5,
            shuffle: 6,
        }
    }
}

/// Shot-count policy: a fixed N, or the sweep's best N.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Shots {
    #[default]
    Auto,
    Fixed(usize),
}

impl From<Shots> for String {
    fn from(s: Shots) -> String {
        match s {
            Shots::Auto => "auto".into(),
            Shots::Fixed(n) => n.to_string(),
        }
    }
}

impl TryFrom<String> for Shots {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for Shots {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "auto" => Ok(Shots::Auto),
            n => n
                .parse()
                .map(Shots::Fixed)
                .map_err(|_| format!("shots must be \"auto\" or a count, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Offline lexicon model.
    #[default]
    Stub,
    /// Chat-completions endpoint.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub backend: BackendKind,
    pub lexicon: Vec<String>,
    pub endpoint: EndpointConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backend: BackendKind::Stub,
            lexicon: Vec::new(),
            endpoint: EndpointConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn model_id(&self) -> String {
        match self.backend {
            BackendKind::Stub => "stub".into(),
            BackendKind::Http => self.endpoint.model_name.clone(),
        }
    }

    /// Endpoint settings as used for a run; the stub ignores the URL but
    /// shares the batching knobs.
    pub fn endpoint_config(&self) -> EndpointConfig {
        let mut cfg = self.endpoint.clone();
        cfg.model_name = self.model_id();
        cfg
    }

    pub fn backend(&self) -> Result<Box<dyn ChatBackend>, PipelineError> {
        Ok(match self.backend {
            BackendKind::Stub => {
                if self.lexicon.is_empty() {
                    return Err(PipelineError::Config("the stub backend needs a non-empty lexicon".into()));
                }
                Box::new(StubBackend::new(&self.lexicon))
            }
            BackendKind::Http => Box::new(HttpBackend::new(&self.endpoint)?),
        })
    }
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_n_values() -> Vec<usize> {
    vec![0, 2, 4, 6, 8]
}

fn default_true() -> bool {
    true
}

fn default_mode() -> PromptMode {
    PromptMode::MultiImage
}

fn default_profile() -> Profile {
    Profile::VideoModel
}

fn default_strategies() -> Vec<StrategyId> {
    StrategyId::ALL.to_vec()
}

fn default_ttl() -> f64 {
    600.0
}

/// Everything a run depends on. Written verbatim (with paths made relative
/// to the run directory) as `run.lock`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: String,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Memes to sample; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meme_sample: Option<usize>,
    #[serde(default)]
    pub shots: Shots,
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_true")]
    pub balanced_demos: bool,
    #[serde(default = "default_mode")]
    pub prompt_mode: PromptMode,
    #[serde(default = "default_profile")]
    pub profile: Profile,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<StrategyId>,
    #[serde(default = "default_ttl")]
    pub lease_ttl_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mappings_file: Option<PathBuf>,
    /// Demonstration descriptions, needed in description prompt mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptions: Option<PathBuf>,
    pub memes: DatasetRef,
    pub videos: DatasetRef,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub aug: AugConfig,
    #[serde(default)]
    pub cost: CostParams,
    #[serde(default)]
    pub hyper: Hyperparams,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Copy with every path rewritten from `from` to be relative to `to`.
    pub fn rebased(&self, from: &Path, to: &Path) -> RunConfig {
        let mut c = self.clone();
        let rb = |p: &Path| rebase_path(p, from, to);
        c.memes.manifest = rb(&c.memes.manifest);
        c.videos.manifest = rb(&c.videos.manifest);
        c.mappings_file = c.mappings_file.as_deref().map(rb);
        c.descriptions = c.descriptions.as_deref().map(rb);
        c
    }
}

/// Inputs shared by the stages after preparation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub memes: Dataset,
    pub videos_train: Dataset,
    pub videos_test: Dataset,
}

/// Counts from the predict stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictSummary {
    pub n_shots: usize,
    pub items: usize,
    pub failed: usize,
    pub endpoint_calls: u64,
}

/// A configured run rooted at an output directory.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub cfg: RunConfig,
    /// Directory the config's relative paths are relative to.
    pub base: PathBuf,
    pub out: PathBuf,
    pub task: TaskDef,
    pub meme_schema: LabelSchema,
    pub video_schema: LabelSchema,
    pub meme_mapping: LabelMapping,
    pub video_mapping: LabelMapping,
}

fn schema_for(r: &DatasetRef) -> Result<LabelSchema, PipelineError> {
    Ok(match &r.labels {
        Some(labels) => LabelSchema::new(&r.schema, labels)?,
        None => LabelSchema::builtin(&r.schema)?,
    })
}

/// A mapping by id `<source>-<task>`: user documents first, then built-ins.
pub fn lookup_mapping(id: &str, custom: &[MappingDoc]) -> Result<MappingDoc, LabelError> {
    match custom
        .iter()
        .find(|d| format!("{}-{}", d.source_schema, d.target_task).eq_ignore_ascii_case(id))
    {
        Some(d) => Ok(d.clone()),
        None => MappingDoc::builtin(id),
    }
}

fn mapping_for(
    r: &DatasetRef,
    schema: &LabelSchema,
    task: &TaskDef,
    custom: &[MappingDoc],
) -> Result<LabelMapping, PipelineError> {
    let doc = lookup_mapping(&r.mapping, custom)?;
    if doc.target_task != task.task_id {
        return Err(PipelineError::Config(format!(
            "mapping {} targets task {:?}, run task is {:?}",
            r.mapping, doc.target_task, task.task_id
        )));
    }
    Ok(LabelMapping::resolve(&doc, schema, task)?)
}

impl Pipeline {
    pub fn new(cfg: RunConfig, base: &Path, out: &Path) -> Result<Self, PipelineError> {
        if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
            return Err(PipelineError::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                cfg.train_fraction
            )));
        }
        if !(cfg.lease_ttl_s.is_finite() && cfg.lease_ttl_s > 0.0) {
            return Err(PipelineError::Config("lease_ttl_s must be positive".into()));
        }
        if cfg.n_values.is_empty() && cfg.shots == Shots::Auto {
            return Err(PipelineError::Config("shots = \"auto\" needs a non-empty n_values".into()));
        }
        cfg.cost.validate()?;
        cfg.aug.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.model.endpoint.validate()?;
        let task = TaskDef::builtin(&cfg.task)?;
        let custom = match &cfg.mappings_file {
            Some(p) => MappingDoc::load_all(&base.join(p))?,
            None => Vec::new(),
        };
        let meme_schema = schema_for(&cfg.memes)?;
        let video_schema = schema_for(&cfg.videos)?;
        let meme_mapping = mapping_for(&cfg.memes, &meme_schema, &task, &custom)?;
        let video_mapping = mapping_for(&cfg.videos, &video_schema, &task, &custom)?;
        Ok(Pipeline {
            cfg,
            base: base.to_path_buf(),
            out: out.to_path_buf(),
            task,
            meme_schema,
            video_schema,
            meme_mapping,
            video_mapping,
        })
    }

    /// Load a config file; relative paths are taken relative to its directory.
    pub fn from_file(config: &Path, out: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(config).map_err(io_err(config))?;
        let base = config.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::new(RunConfig::parse(&text)?, &base, out)
    }

    /// Load the `run.lock` of an existing run directory.
    pub fn from_run_dir(out: &Path) -> Result<Self, PipelineError> {
        let lock = out.join(LOCK_FILE);
        if !lock.exists() {
            return Err(PipelineError::MissingInput {
                stage: "run",
                path: lock,
            });
        }
        Self::from_file(&lock, out)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn store_dir(&self) -> PathBuf {
        self.path("store")
    }

    pub fn export_dir(&self) -> PathBuf {
        self.path("export")
    }

    pub fn final_manifest(&self) -> PathBuf {
        self.path("final/memes.mft")
    }

    pub fn predictions_path(&self) -> PathBuf {
        self.path("predict/predictions.jsonl")
    }

    /// Write `run.lock` into the run directory.
    pub fn write_lock(&self) -> Result<PathBuf, PipelineError> {
        fs::create_dir_all(&self.out).map_err(io_err(&self.out))?;
        let path = self.out.join(LOCK_FILE);
        let text = self.cfg.rebased(&self.base, &self.out).to_toml();
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(path)
    }

    fn require(&self, stage: &'static str, rel: &str) -> Result<PathBuf, PipelineError> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(PipelineError::MissingInput { stage, path: p })
        }
    }

    pub fn load_memes_source(&self) -> Result<Dataset, PipelineError> {
        Ok(load_dataset(&self.base.join(&self.cfg.memes.manifest), &self.meme_schema, MediaKind::Meme)?)
    }

    pub fn load_videos_source(&self) -> Result<Dataset, PipelineError> {
        Ok(load_dataset(&self.base.join(&self.cfg.videos.manifest), &self.video_schema, MediaKind::Video)?)
    }

    /// Validate sources, split the videos, sample the memes.
    pub fn prepare(&self) -> Result<Prepared, PipelineError> {
        self.write_lock()?;
        let memes = self.load_memes_source()?;
        let videos = self.load_videos_source()?;
        let memes = match self.cfg.meme_sample {
            Some(n) => sample_items(&memes, n, self.cfg.seeds.sample)?,
            None => memes,
        };
        let (train, test) = split_dataset(&videos, &SplitSpec::new(self.cfg.train_fraction, self.cfg.seeds.split)?)?;
        write_manifest(&memes, &self.path("data/memes.mft"))?;
        write_manifest(&train, &self.path("data/videos_train.mft"))?;
        write_manifest(&test, &self.path("data/videos_test.mft"))?;
        self.load_prepared()
    }

    pub fn load_prepared(&self) -> Result<Prepared, PipelineError> {
        let load = |rel: &str, schema: &LabelSchema, kind| -> Result<Dataset, PipelineError> {
            Ok(load_dataset(&self.require("prepare", rel)?, schema, kind)?)
        };
        Ok(Prepared {
            memes: load("data/memes.mft", &self.meme_schema, MediaKind::Meme)?,
            videos_train: load("data/videos_train.mft", &self.video_schema, MediaKind::Video)?,
            videos_test: load("data/videos_test.mft", &self.video_schema, MediaKind::Video)?,
        })
    }

    fn run_log(&self) -> Result<RunLog, PipelineError> {
        Ok(RunLog::open(&self.path("predict/run.log"))?)
    }

    fn descriptions(&self) -> Result<Option<Descriptions>, PipelineError> {
        match (self.cfg.prompt_mode, &self.cfg.descriptions) {
            (PromptMode::Description, Some(p)) => Ok(Some(Descriptions::load(&self.base.join(p))?)),
            (PromptMode::Description, None) => Err(PipelineError::Config(
                "prompt_mode = \"description\" needs a descriptions file".into(),
            )),
            _ => Ok(None),
        }
    }

    /// Few-shot sweep on the video test split with demonstrations from the
    /// video train split.
    pub fn sweep(&self, prepared: &Prepared, backend: &dyn ChatBackend) -> Result<SweepReport, PipelineError> {
        if self.descriptions()?.is_some() {
            return Err(PipelineError::Config("the sweep runs in multi_image mode only".into()));
        }
        let plan = SweepPlan {
            eval: &prepared.videos_test,
            eval_mapping: &self.video_mapping,
            demo_pool: &prepared.videos_train,
            demo_mapping: &self.video_mapping,
            task: &self.task,
            mode: self.cfg.prompt_mode,
            n_values: self.cfg.n_values.clone(),
            seed: self.cfg.seeds.demo,
            balanced: self.cfg.balanced_demos,
        };
        let report = sweep_shots(&plan, backend, &self.cfg.model.endpoint_config(), &self.run_log()?)?;
        let path = self.path("reports/sweep.json");
        fs::create_dir_all(path.parent().unwrap()).map_err(io_err(&path))?;
        fs::write(&path, serde_json::to_string_pretty(&report).expect("sweep serializes")).map_err(io_err(&path))?;
        Ok(report)
    }

    pub fn load_sweep(&self) -> Result<SweepReport, PipelineError> {
        let path = self.require("sweep", "reports/sweep.json")?;
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    /// N for the predict stage: fixed, or the best row of the saved sweep.
    pub fn chosen_shots(&self) -> Result<usize, PipelineError> {
        match self.cfg.shots {
            Shots::Fixed(n) => Ok(n),
            Shots::Auto => select_optimal_shots(&self.load_sweep()?)
                .ok_or_else(|| PipelineError::Config("the sweep report has no rows".into())),
        }
    }

    /// Ask the model about every sampled meme with N video demonstrations.
    pub fn predict(&self, prepared: &Prepared, backend: &dyn ChatBackend) -> Result<PredictSummary, PipelineError> {
        let n = self.chosen_shots()?;
        let mut demos = select_demos(
            &prepared.videos_train,
            &self.video_mapping,
            &self.task,
            n,
            demo_seed(self.cfg.seeds.demo, n),
            self.cfg.balanced_demos,
        )?;
        if let Some(desc) = self.descriptions()? {
            demos = attach_descriptions(demos, &desc)?;
        }
        let jobs = prepared
            .memes
            .items
            .iter()
            .map(|item| {
                Ok(PredictionJob {
                    item_id: item.item_id.clone(),
                    bundle: build_prompt(
                        item,
                        &prepared.memes.root,
                        &demos,
                        &self.task,
                        self.cfg.prompt_mode,
                        self.cfg.seeds.frame,
                    )?,
                })
            })
            .collect::<Result<Vec<_>, InferenceError>>()?;
        let outcomes = predict_batch(
            &jobs,
            backend,
            &self.cfg.model.endpoint_config(),
            &AnswerMap::for_task(&self.task),
            &self.run_log()?,
        )?;
        let lines: Vec<PredictionLine> = outcomes
            .iter()
            .map(|o| PredictionLine {
                item_id: o.item_id.clone(),
                prediction: o.prediction,
            })
            .collect();
        write_predictions(&self.predictions_path(), &lines)?;
        let plan = NoFtPlan {
            n_shots: n,
            demo_ids: demos.iter().map(|d| d.item_id.clone()).collect(),
        };
        let demos_path = self.path("predict/demos.json");
        fs::write(&demos_path, serde_json::to_string_pretty(&plan).expect("plan serializes"))
            .map_err(io_err(&demos_path))?;
        Ok(PredictSummary {
            n_shots: n,
            items: lines.len(),
            failed: lines.iter().filter(|l| l.prediction.label().is_none()).count(),
            endpoint_calls: outcomes.iter().map(|o| o.calls as u64).sum(),
        })
    }

    pub fn open_store(&self) -> Result<Store, PipelineError> {
        Ok(Store::open_default(&self.store_dir())?)
    }

    /// Record model votes against the remapped labels; disagreements queue.
    pub fn enqueue(&self, prepared: &Prepared, store: &Store) -> Result<QueueStats, PipelineError> {
        let path = self.require("predict", "predict/predictions.jsonl")?;
        let preds = read_predictions(&path)?;
        Ok(enqueue_disagreements(store, &prepared.memes, &self.meme_mapping, &preds)?)
    }

    /// Drain the queue with prerecorded answers. Returns the number applied.
    pub fn annotate_scripted(
        &self,
        store: &Store,
        answers: &BTreeMap<String, ScriptedAnswer>,
        annotator_id: &str,
    ) -> Result<usize, PipelineError> {
        let mut applied = 0;
        while let Some(lease) = store.lease_next(annotator_id, self.cfg.lease_ttl_s)? {
            let answer = answers
                .get(&lease.item_id)
                .ok_or_else(|| PipelineError::MissingAnswer(lease.item_id.clone()))?;
            store.submit(&AnnotationEvent {
                item_id: lease.item_id.clone(),
                annotator_id: annotator_id.to_string(),
                label: answer.label,
                elapsed_s: answer.elapsed_s,
                lease_token: lease.lease_token,
            })?;
            applied += 1;
        }
        Ok(applied)
    }

    pub fn finalize(&self, prepared: &Prepared, store: &Store) -> Result<ReannotatedDataset, PipelineError> {
        let re = finalize_dataset(&prepared.memes, &store.records(), &self.task)?;
        re.write(&self.final_manifest())?;
        Ok(re)
    }

    pub fn load_final(&self) -> Result<Option<ReannotatedDataset>, PipelineError> {
        let path = self.final_manifest();
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(load_finalized(&path, &self.task, MediaKind::Meme)?))
    }

    pub fn export_config(&self) -> ExportConfig {
        let mut cfg = ExportConfig::new(self.task.clone(), self.cfg.profile);
        cfg.aug = AugConfig {
            seed: self.cfg.seeds.aug,
            ..self.cfg.aug.clone()
        };
        cfg.frame_seed = self.cfg.seeds.frame;
        cfg.shuffle_seed = self.cfg.seeds.shuffle;
        cfg.hyper = self.cfg.hyper.clone();
        cfg
    }

    /// Write the evaluation manifest and one manifest per strategy.
    pub fn export(&self, prepared: &Prepared, strategies: &[StrategyId]) -> Result<Vec<ExportSummary>, PipelineError> {
        let exporter = Exporter::new(&self.export_dir(), self.export_config())?;
        let video_train = LabeledSet::from_mapping(&prepared.videos_train, &self.video_mapping, LabelSource::VideoGroundTruth)?;
        let video_test = LabeledSet::from_mapping(&prepared.videos_test, &self.video_mapping, LabelSource::VideoGroundTruth)?;
        let memes_original = LabeledSet::from_mapping(&prepared.memes, &self.meme_mapping, LabelSource::OriginalRemapped)?;
        let memes_final = self.load_final()?.map(|re| LabeledSet::from_final(&re));
        let demos_path = self.path("predict/demos.json");
        let no_ft: Option<NoFtPlan> = match fs::read_to_string(&demos_path) {
            Ok(t) => Some(serde_json::from_str(&t).map_err(|e| PipelineError::Config(format!("{}: {e}", demos_path.display())))?),
            Err(_) => None,
        };
        exporter.export_eval(&video_test)?;
        let sources = ExportSources {
            video_train: Some(&video_train),
            memes_original: Some(&memes_original),
            memes_final: memes_final.as_ref(),
            no_ft: no_ft.as_ref(),
        };
        Ok(strategies
            .iter()
            .map(|s| exporter.export(*s, &sources))
            .collect::<Result<Vec<_>, _>>()?)
    }
}

/// Read scripted answers, one `{item_id, label, elapsed_s}` object per line.
pub fn read_answers(path: &Path) -> Result<BTreeMap<String, ScriptedAnswer>, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let a: ScriptedAnswer = serde_json::from_str(line)
            .map_err(|e| PipelineError::Config(format!("{}, line {}: {e}", path.display(), i + 1)))?;
        out.insert(a.item_id.clone(), a);
    }
    Ok(out)
}

/// Summary of an end-to-end run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub sweep: Option<SweepReport>,
    pub predict: PredictSummary,
    pub queue: QueueStats,
    pub annotated: usize,
    pub changed: Vec<String>,
    pub exports: Vec<ExportSummary>,
}

/// Every stage in order, with scripted human answers.
pub fn run_all(
    pipeline: &Pipeline,
    backend: &dyn ChatBackend,
    answers: &BTreeMap<String, ScriptedAnswer>,
) -> Result<RunSummary, PipelineError> {
    let prepared = pipeline.prepare()?;
    let sweep = match pipeline.cfg.shots {
        Shots::Auto => Some(pipeline.sweep(&prepared, backend)?),
        Shots::Fixed(_) => None,
    };
    let predict = pipeline.predict(&prepared, backend)?;
    let store = pipeline.open_store()?;
    let queue = pipeline.enqueue(&prepared, &store)?;
    let annotated = pipeline.annotate_scripted(&store, answers, "script")?;
    let re = pipeline.finalize(&prepared, &store)?;
    store.write_snapshot()?;
    let originals: BTreeMap<String, String> = prepared
        .memes
        .remapped(&pipeline.meme_mapping)?
        .into_iter()
        .map(|(id, l)| (id, pipeline.task.render(l).to_string()))
        .collect();
    let changed = re.changed_from(&originals);
    let exports = pipeline.export(&prepared, &pipeline.cfg.strategies)?;
    Ok(RunSummary {
        sweep,
        predict,
        queue,
        annotated,
        changed,
        exports,
    })
}
