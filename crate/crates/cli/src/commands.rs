use std::collections::BTreeMap;
use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use xma_core::evaluate::{
    align_predictions, compute_metrics, diff_predictions, label_distribution, read_predictions, render_report,
    DiffReport, DistributionReport, EvalReport, ReportFormat, ReportSection, StrategyResult, SweepReport,
};
use xma_core::export::{estimate_annotation_hours, CostParams, LabeledSet, Profile, StrategyId};
use xma_core::ingest::{load_dataset, write_lines, Dataset, ManifestRecord};
use xma_core::item::MediaKind;
use xma_core::labels::{BinaryLabel, LabelMapping, LabelSchema, MappingDoc, TaskDef};
use xma_core::pipeline::{lookup_mapping, read_answers, run_all as run_pipeline, Pipeline, Prepared, Shots};
use xma_core::synth::write_corpus;
use xma_service::{AppState, ProgressSnapshot, ServeConfig};

use crate::fail::{self, Failure};

/// Where a run lives and, optionally, the config to (re)initialise it from.
#[derive(Args, Clone, Debug)]
pub struct RunArgs {
    /// Run directory holding every stage's outputs.
    #[arg(long, default_value = "xma-run")]
    pub run: PathBuf,
    /// Run configuration (TOML). Defaults to the run directory's run.lock.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn open(r: &RunArgs) -> Result<Pipeline, Failure> {
    Ok(match &r.config {
        Some(c) => Pipeline::from_file(c, &r.run)?,
        None => Pipeline::from_run_dir(&r.run)?,
    })
}

/// Open the run, bring its lock up to date and load the prepared data.
fn open_prepared(r: &RunArgs) -> Result<(Pipeline, Prepared), Failure> {
    let p = open(r)?;
    let prepared = p.load_prepared()?;
    p.write_lock()?;
    Ok((p, prepared))
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| fail::io(dir, e))?;
    }
    fs::write(path, serde_json::to_string_pretty(v).expect("serializable")).map_err(|e| fail::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| fail::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

/// Lock for an output written outside a run directory: `<output>.lock`,
/// recording the command and its arguments.
fn write_command_lock(output: &Path, command: &str, args: &[(&str, String)]) -> Result<PathBuf, Failure> {
    #[derive(Serialize)]
    struct Lock<'a> {
        command: &'a str,
        version: &'a str,
        args: BTreeMap<&'a str, &'a str>,
    }
    let lock = Lock {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args: args.iter().map(|(k, v)| (*k, v.as_str())).collect(),
    };
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".lock");
    let path = output.with_file_name(name);
    fs::write(&path, toml::to_string(&lock).expect("lock serializes")).map_err(|e| fail::io(&path, e))?;
    Ok(path)
}

fn schema_from(id: &str, labels: &[String]) -> Result<LabelSchema, Failure> {
    Ok(if labels.is_empty() {
        LabelSchema::builtin(id)?
    } else {
        LabelSchema::new(id, labels)?
    })
}

// ---------------------------------------------------------------- ingest

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Manifest to validate. Without it, prepares the run from its config.
    #[arg(long, requires = "schema")]
    manifest: Option<PathBuf>,
    /// Label schema of the manifest (fhm, mami, mhc, hatemm or custom).
    #[arg(long)]
    schema: Option<String>,
    /// Labels of a custom schema, comma separated.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    /// Media kind of the manifest.
    #[arg(long, default_value = "meme")]
    kind: MediaKind,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Serialize)]
struct DatasetReport {
    dataset_id: String,
    kind: MediaKind,
    items: usize,
    labels: BTreeMap<String, usize>,
}

fn dataset_report(d: &Dataset) -> DatasetReport {
    DatasetReport {
        dataset_id: d.dataset_id.clone(),
        kind: d.kind,
        items: d.len(),
        labels: d.label_counts(),
    }
}

fn print_dataset(name: &str, r: &DatasetReport) {
    let counts: Vec<String> = r.labels.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{name}: {} {} item(s) [{}]", r.items, r.kind.as_str(), counts.join(", "));
}

pub fn ingest(a: IngestArgs) -> Result<(), Failure> {
    if let Some(manifest) = &a.manifest {
        let schema = schema_from(a.schema.as_deref().unwrap_or_default(), &a.labels)?;
        let report = dataset_report(&load_dataset(manifest, &schema, a.kind)?);
        if a.json {
            print_json(&report);
        } else {
            print_dataset(&manifest.display().to_string(), &report);
        }
        return Ok(());
    }
    let p = open(&a.run)?;
    let prepared = p.prepare()?;
    let reports: BTreeMap<&str, DatasetReport> = [
        ("memes", dataset_report(&prepared.memes)),
        ("videos_train", dataset_report(&prepared.videos_train)),
        ("videos_test", dataset_report(&prepared.videos_test)),
    ]
    .into_iter()
    .collect();
    if a.json {
        print_json(&reports);
    } else {
        for (k, r) in &reports {
            print_dataset(k, r);
        }
        println!("prepared {}", p.out.display());
    }
    Ok(())
}

// ---------------------------------------------------------------- remap

#[derive(Args, Debug)]
pub struct RemapArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    schema: String,
    /// Labels of a custom schema, comma separated.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    #[arg(long, default_value = "meme")]
    kind: MediaKind,
    /// Mapping id, `<schema>-<task>`.
    #[arg(long)]
    mapping: String,
    /// TOML file with extra mapping documents.
    #[arg(long)]
    mappings: Option<PathBuf>,
    /// Write the manifest with task labels here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Serialize)]
struct RemapReport {
    mapping: String,
    task: String,
    source: BTreeMap<String, usize>,
    target: BTreeMap<String, usize>,
}

pub fn remap(a: RemapArgs) -> Result<(), Failure> {
    let schema = schema_from(&a.schema, &a.labels)?;
    let custom = match &a.mappings {
        Some(p) => MappingDoc::load_all(p)?,
        None => Vec::new(),
    };
    let doc = lookup_mapping(&a.mapping, &custom)?;
    let task = TaskDef::builtin(&doc.target_task)?;
    let mapping = LabelMapping::resolve(&doc, &schema, &task)?;
    let ds = load_dataset(&a.manifest, &schema, a.kind)?;
    let remapped = ds.remapped(&mapping)?;
    let mut target: BTreeMap<String, usize> =
        [&task.positive_word, &task.negative_word].iter().map(|w| (w.to_string(), 0)).collect();
    for (_, l) in &remapped {
        *target.get_mut(task.render(*l)).expect("task word") += 1;
    }
    let report = RemapReport {
        mapping: a.mapping.clone(),
        task: task.task_id.clone(),
        source: ds.label_counts(),
        target,
    };
    if let Some(out) = &a.out {
        let root = out.parent().unwrap_or(Path::new("")).to_path_buf();
        let records: Vec<ManifestRecord> = ds
            .to_records(&root)
            .into_iter()
            .zip(&remapped)
            .map(|(mut r, (_, l))| {
                r.label = task.render(*l).to_string();
                r
            })
            .collect();
        write_lines(out, &records)?;
        write_command_lock(
            out,
            "remap",
            &[
                ("manifest", a.manifest.display().to_string()),
                ("schema", a.schema.clone()),
                ("labels", a.labels.join(",")),
                ("kind", a.kind.as_str().to_string()),
                ("mapping", a.mapping.clone()),
                ("mappings", a.mappings.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ],
        )?;
    }
    if a.json {
        print_json(&report);
    } else {
        let fmt = |m: &BTreeMap<String, usize>| m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ");
        println!("{} -> {}: [{}] -> [{}]", ds.dataset_id, task.task_id, fmt(&report.source), fmt(&report.target));
    }
    Ok(())
}

// ---------------------------------------------------------------- sweep / predict

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Shot counts to try, comma separated (default: the config's).
    #[arg(long, value_delimiter = ',')]
    n_values: Vec<usize>,
}

fn print_sweep(r: &SweepReport) {
    let report = EvalReport {
        title: String::new(),
        sections: vec![ReportSection::Sweep(r.clone())],
    };
    print!("{}", render_report(&report, ReportFormat::Text));
}

pub fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let mut p = open(&a.run)?;
    if !a.n_values.is_empty() {
        let mut cfg = p.cfg.clone();
        cfg.n_values = a.n_values;
        p = Pipeline::new(cfg, &p.base, &p.out)?;
    }
    let prepared = p.load_prepared()?;
    p.write_lock()?;
    let backend = p.cfg.model.backend()?;
    let report = p.sweep(&prepared, backend.as_ref())?;
    print_sweep(&report);
    eprintln!("endpoint calls: {}", report.endpoint_calls);
    Ok(())
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    run: RunArgs,
    /// `auto` (best sweep row) or a shot count.
    #[arg(long)]
    shots: Option<Shots>,
    /// Target task; switches both mappings to `<schema>-<task>`.
    #[arg(long)]
    task: Option<String>,
    /// Expected meme schema; the run is refused if it differs.
    #[arg(long)]
    dataset: Option<String>,
}

pub fn predict(a: PredictArgs) -> Result<(), Failure> {
    let p = open(&a.run)?;
    let mut cfg = p.cfg.clone();
    if let Some(ds) = &a.dataset {
        if !ds.eq_ignore_ascii_case(&cfg.memes.schema) {
            return Err(Failure::invalid(format!(
                "--dataset {ds} does not match the run's meme schema {}",
                cfg.memes.schema
            )));
        }
    }
    if let Some(t) = &a.task {
        if !t.eq_ignore_ascii_case(&cfg.task) {
            cfg.memes.mapping = format!("{}-{t}", cfg.memes.schema);
            cfg.videos.mapping = format!("{}-{t}", cfg.videos.schema);
            cfg.task = t.clone();
        }
    }
    if let Some(s) = a.shots {
        cfg.shots = s;
    }
    let p = Pipeline::new(cfg, &p.base, &p.out)?;
    let prepared = p.load_prepared()?;
    p.write_lock()?;
    let backend = p.cfg.model.backend()?;
    if p.cfg.shots == Shots::Auto && !p.path("reports/sweep.json").exists() {
        eprintln!("no sweep report yet; sweeping {:?}", p.cfg.n_values);
        print_sweep(&p.sweep(&prepared, backend.as_ref())?);
    }
    let summary = p.predict(&prepared, backend.as_ref())?;
    let store = p.open_store()?;
    let stats = p.enqueue(&prepared, &store)?;
    println!(
        "predicted {} item(s) with N={} ({} failed, {} endpoint call(s))",
        summary.items, summary.n_shots, summary.failed, summary.endpoint_calls
    );
    println!("agreed {}, queued {}, failed {}", stats.agreed, stats.queued, stats.failed);
    Ok(())
}

// ---------------------------------------------------------------- queue

#[derive(Subcommand, Debug)]
pub enum QueueCommand {
    /// Vote states, disagreement rate and time spent.
    Stats {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        json: bool,
    },
    /// Drain the queue with prerecorded answers (`{item_id, label, elapsed_s}` lines).
    Annotate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        answers: PathBuf,
        #[arg(long, default_value = "script")]
        annotator: String,
    },
}

pub fn queue(cmd: QueueCommand) -> Result<(), Failure> {
    match cmd {
        QueueCommand::Stats { run, json } => {
            let p = open(&run)?;
            let store = p.open_store()?;
            let counts = store.counts();
            let ledger = store.cost_ledger();
            let snap = ProgressSnapshot::new(
                store.seq(),
                &counts,
                MediaKind::Meme,
                &p.cfg.cost,
                ledger.annotations,
                ledger.total_hours(),
            );
            if json {
                print_json(&snap);
            } else {
                println!(
                    "total {}  agreed {}  queued {}  leased {}  resolved {}  failed {}",
                    snap.total, snap.agreed, snap.queued, snap.leased, snap.resolved, snap.failed
                );
                println!("disagreement rate {:.1}%", snap.disagreement_rate * 100.0);
                println!("model failures {}", snap.model_failures);
                println!(
                    "annotations {} ({:.2} h), estimated remaining {:.1} h",
                    snap.annotations, snap.annotation_hours, snap.estimated_remaining_hours
                );
            }
            Ok(())
        }
        QueueCommand::Annotate { run, answers, annotator } => {
            let (p, _) = open_prepared(&run)?;
            let answers = read_answers(&answers)?;
            let store = p.open_store()?;
            let n = p.annotate_scripted(&store, &answers, &annotator)?;
            store.write_snapshot()?;
            println!("applied {n} answer(s); {} item(s) outstanding", store.counts().outstanding());
            Ok(())
        }
    }
}

// ---------------------------------------------------------------- serve

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Built annotator console to host at `/`.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
    /// Lease time-to-live in seconds (default: the config's).
    #[arg(long)]
    ttl: Option<f64>,
    /// Seconds between sweeps for expired leases.
    #[arg(long, default_value_t = 5.0)]
    reap_every: f64,
}

pub fn serve(a: ServeArgs) -> Result<(), Failure> {
    let (p, prepared) = open_prepared(&a.run)?;
    if !(a.reap_every.is_finite() && a.reap_every > 0.0) {
        return Err(Failure::invalid("--reap-every must be positive"));
    }
    let store = p.open_store()?;
    let cfg = ServeConfig {
        addr: SocketAddr::new(a.host, a.port),
        lease_ttl_s: a.ttl.unwrap_or(p.cfg.lease_ttl_s),
        static_assets_dir: a.static_dir,
        reports_dir: Some(p.path("reports")),
        cost: p.cfg.cost,
        reap_interval: Duration::from_secs_f64(a.reap_every),
    };
    let state = Arc::new(AppState::new(store, prepared.memes, p.task.clone(), cfg).map_err(fail::service)?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::runtime(e))?;
    rt.block_on(xma_service::serve(state)).map_err(fail::service)
}

// ---------------------------------------------------------------- finalize / export

#[derive(Args, Debug)]
pub struct FinalizeArgs {
    #[command(flatten)]
    run: RunArgs,
}

pub fn finalize(a: FinalizeArgs) -> Result<(), Failure> {
    let (p, prepared) = open_prepared(&a.run)?;
    let store = p.open_store()?;
    let re = p.finalize(&prepared, &store)?;
    let originals: BTreeMap<String, String> = prepared
        .memes
        .remapped(&p.meme_mapping)?
        .into_iter()
        .map(|(id, l)| (id, p.task.render(l).to_string()))
        .collect();
    let changed = re.changed_from(&originals);
    println!(
        "wrote {} ({} item(s), {} label(s) changed)",
        p.final_manifest().display(),
        re.dataset.len(),
        changed.len()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Strategies to export, comma separated: NO_FT, VID_FT, OM_FT, RM_FT, VID_RM_FT.
    #[arg(long, value_delimiter = ',')]
    strategy: Vec<StrategyId>,
    /// IMAGE_MODEL (one frame) or VIDEO_MODEL (16 frames).
    #[arg(long)]
    profile: Option<Profile>,
}

pub fn export(a: ExportArgs) -> Result<(), Failure> {
    let mut p = open(&a.run)?;
    if let Some(profile) = a.profile {
        let mut cfg = p.cfg.clone();
        cfg.profile = profile;
        p = Pipeline::new(cfg, &p.base, &p.out)?;
    }
    let prepared = p.load_prepared()?;
    p.write_lock()?;
    let strategies = if a.strategy.is_empty() { p.cfg.strategies.clone() } else { a.strategy };
    for s in p.export(&prepared, &strategies)? {
        match &s.train_manifest {
            Some(m) => println!("{}: {} example(s) -> {}", s.strategy.as_str(), s.examples, m.display()),
            None => println!("{}: no training set -> {}", s.strategy.as_str(), s.meta.display()),
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- eval / diff / dist

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSet {
    /// Video test split, video labels.
    Test,
    /// Sampled memes, final labels when finalized, else remapped originals.
    Memes,
}

struct Truth {
    dataset_id: String,
    ids: Vec<String>,
    labels: Vec<BinaryLabel>,
}

fn truth(p: &Pipeline, prepared: &Prepared, on: EvalSet) -> Result<Truth, Failure> {
    let set = match on {
        EvalSet::Test => LabeledSet::from_mapping(
            &prepared.videos_test,
            &p.video_mapping,
            xma_core::export::LabelSource::VideoGroundTruth,
        )?,
        EvalSet::Memes => match p.load_final()? {
            Some(re) => LabeledSet::from_final(&re),
            None => LabeledSet::from_mapping(
                &prepared.memes,
                &p.meme_mapping,
                xma_core::export::LabelSource::OriginalRemapped,
            )?,
        },
    };
    Ok(Truth {
        dataset_id: set.dataset.dataset_id.clone(),
        ids: set.dataset.items.iter().map(|i| i.item_id.clone()).collect(),
        labels: set.labels,
    })
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Prediction file to score, as NAME=PATH (repeatable).
    #[arg(long, required = true)]
    pred: Vec<String>,
    #[arg(long, value_enum, default_value = "test")]
    on: EvalSet,
    #[arg(long, default_value = "text")]
    format: ReportFormat,
}

pub fn eval(a: EvalArgs) -> Result<(), Failure> {
    let (p, prepared) = open_prepared(&a.run)?;
    let t = truth(&p, &prepared, a.on)?;
    let path = p.path("reports/eval.json");
    let mut results: Vec<StrategyResult> = if path.exists() { read_json(&path)? } else { Vec::new() };
    let mut fresh = Vec::new();
    for spec in &a.pred {
        let (name, file) = spec
            .split_once('=')
            .ok_or_else(|| Failure::invalid(format!("--pred expects NAME=PATH, got {spec:?}")))?;
        let preds = align_predictions(&t.ids, &read_predictions(Path::new(file))?);
        let r = StrategyResult {
            strategy: name.to_string(),
            dataset: t.dataset_id.clone(),
            metrics: compute_metrics(&t.labels, &preds)?,
            scored: preds.len(),
            failed: preds.iter().filter(|p| p.label().is_none()).count(),
        };
        results.retain(|x| !(x.strategy == r.strategy && x.dataset == r.dataset));
        results.push(r.clone());
        fresh.push(r);
    }
    write_json(&path, &results)?;
    let report = EvalReport {
        title: String::new(),
        sections: vec![ReportSection::Strategies(fresh)],
    };
    print!("{}", render_report(&report, a.format));
    Ok(())
}

#[derive(Args, Debug)]
pub struct DiffArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Baseline predictions.
    #[arg(long)]
    a: PathBuf,
    /// Predictions to compare against the baseline.
    #[arg(long)]
    b: PathBuf,
    /// Report name (default a_vs_b from the file stems).
    #[arg(long)]
    name: Option<String>,
    #[arg(long, value_enum, default_value = "test")]
    on: EvalSet,
}

fn stem(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

pub fn diff(a: DiffArgs) -> Result<(), Failure> {
    let (p, prepared) = open_prepared(&a.run)?;
    let t = truth(&p, &prepared, a.on)?;
    let pa = align_predictions(&t.ids, &read_predictions(&a.a)?);
    let pb = align_predictions(&t.ids, &read_predictions(&a.b)?);
    let report = diff_predictions(&t.ids, &t.labels, &pa, &pb)?;
    let name = a.name.unwrap_or_else(|| format!("{}_vs_{}", stem(&a.a), stem(&a.b)));
    if !name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')) {
        return Err(Failure::invalid(format!("report name {name:?} may only use letters, digits, _ - .")));
    }
    write_json(&p.path(&format!("reports/diff_{name}.json")), &report)?;
    let out = EvalReport {
        title: String::new(),
        sections: vec![ReportSection::Diff { name, report }],
    };
    print!("{}", render_report(&out, ReportFormat::Text));
    Ok(())
}

#[derive(Args, Debug)]
pub struct DistArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    json: bool,
}

pub fn dist(a: DistArgs) -> Result<(), Failure> {
    let (p, prepared) = open_prepared(&a.run)?;
    let re = p.load_final()?.ok_or_else(|| {
        Failure::invalid(format!("{} does not exist; run finalize first", p.final_manifest().display()))
    })?;
    let report = label_distribution(&prepared.memes, &p.meme_mapping, &re)?;
    write_json(&p.path("reports/distribution.json"), &report)?;
    if a.json {
        print_json(&report);
    } else {
        let out = EvalReport {
            title: String::new(),
            sections: vec![ReportSection::Distribution(report)],
        };
        print!("{}", render_report(&out, ReportFormat::Text));
    }
    Ok(())
}

// ---------------------------------------------------------------- cost

#[derive(Args, Debug)]
pub struct CostArgs {
    #[arg(long)]
    kind: MediaKind,
    /// Number of items.
    #[arg(long)]
    n: usize,
    /// Fraction of memes sent to a human.
    #[arg(long)]
    rate: Option<f64>,
    /// Average video length in minutes.
    #[arg(long)]
    video_minutes: Option<f64>,
    #[arg(long)]
    json: bool,
}

pub fn cost(a: CostArgs) -> Result<(), Failure> {
    let mut params = CostParams::default();
    if let Some(r) = a.rate {
        params.disagreement_rate = r;
    }
    if let Some(m) = a.video_minutes {
        params.video_duration_min = m;
    }
    params.validate()?;
    let hours = estimate_annotation_hours(a.kind, a.n, &params);
    if a.json {
        print_json(&serde_json::json!({ "kind": a.kind, "n": a.n, "hours": hours, "params": params }));
    } else {
        println!("{hours:.1} h");
    }
    Ok(())
}

// ---------------------------------------------------------------- report

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[command(flatten)]
    run: RunArgs,
    /// text, jsonl or html.
    #[arg(long, default_value = "text")]
    format: ReportFormat,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "xma run report")]
    title: String,
}

pub fn report(a: ReportArgs) -> Result<(), Failure> {
    let p = open(&a.run)?;
    p.write_lock()?;
    let dir = p.path("reports");
    let mut sections = Vec::new();
    let sweep = dir.join("sweep.json");
    if sweep.exists() {
        sections.push(ReportSection::Sweep(read_json::<SweepReport>(&sweep)?));
    }
    let eval = dir.join("eval.json");
    if eval.exists() {
        sections.push(ReportSection::Strategies(read_json::<Vec<StrategyResult>>(&eval)?));
    }
    let dist = dir.join("distribution.json");
    if dist.exists() {
        sections.push(ReportSection::Distribution(read_json::<DistributionReport>(&dist)?));
    }
    if dir.is_dir() {
        let mut diffs: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| fail::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let n = p.file_name().unwrap_or_default().to_string_lossy();
                n.starts_with("diff_") && n.ends_with(".json")
            })
            .collect();
        diffs.sort();
        for d in diffs {
            let name = stem(&d).trim_start_matches("diff_").to_string();
            sections.push(ReportSection::Diff {
                name,
                report: read_json::<DiffReport>(&d)?,
            });
        }
    }
    let text = render_report(&EvalReport { title: a.title, sections }, a.format);
    match &a.out {
        Some(out) => {
            fs::write(out, text).map_err(|e| fail::io(out, e))?;
            println!("wrote {}", out.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------- synth / run

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Directory to write the corpus into.
    #[arg(long)]
    out: PathBuf,
}

pub fn synth(a: SynthArgs) -> Result<(), Failure> {
    let c = write_corpus(&a.out).map_err(|e| fail::io(&a.out, e))?;
    write_command_lock(&a.out, "synth", &[("out", a.out.display().to_string())])?;
    println!("memes    {}", c.memes.display());
    println!("videos   {}", c.videos.display());
    println!("answers  {}", c.answers.display());
    println!("config   {}", c.config.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct RunAllArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "xma-run")]
    run: PathBuf,
    /// Scripted human answers. Without them the run stops at the queue.
    #[arg(long)]
    answers: Option<PathBuf>,
}

pub fn run_all(a: RunAllArgs) -> Result<(), Failure> {
    let p = Pipeline::from_file(&a.config, &a.run)?;
    let backend = p.cfg.model.backend()?;
    let Some(answers) = &a.answers else {
        let prepared = p.prepare()?;
        if p.cfg.shots == Shots::Auto {
            print_sweep(&p.sweep(&prepared, backend.as_ref())?);
        }
        p.predict(&prepared, backend.as_ref())?;
        let stats = p.enqueue(&prepared, &p.open_store()?)?;
        println!(
            "agreed {}, queued {}, failed {}; annotate with `xma serve --run {}`, then finalize and export",
            stats.agreed,
            stats.queued,
            stats.failed,
            a.run.display()
        );
        return Ok(());
    };
    let summary = run_pipeline(&p, backend.as_ref(), &read_answers(answers)?)?;
    if let Some(s) = &summary.sweep {
        print_sweep(s);
    }
    println!(
        "N={}: agreed {}, queued {}, failed {}; {} answer(s) applied, {} label(s) changed",
        summary.predict.n_shots,
        summary.queue.agreed,
        summary.queue.queued,
        summary.queue.failed,
        summary.annotated,
        summary.changed.len()
    );
    for s in &summary.exports {
        println!("{}: {} example(s)", s.strategy.as_str(), s.examples);
    }
    Ok(())
}
