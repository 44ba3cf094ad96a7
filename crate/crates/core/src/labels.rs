//! Label schemas, binary task definitions and the remapping rules between them.
//!
//! Every source dataset label is reduced to a [`BinaryLabel`] before it takes
//! part in voting, training or scoring. Mappings are plain data so that a new
//! meme/video pair only needs a new config document.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Placeholder that receives the answer word in a question template.
pub const ANSWER_SLOT: &str = "{answer}";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("schema violation: label {label:?} is not in schema {schema:?}")]
    SchemaViolation { schema: String, label: String },
    #[error("mapping incomplete: {source_schema} -> {target_task} has no entry for {label:?}")]
    MappingIncomplete {
        source_schema: String,
        target_task: String,
        label: String,
    },
    #[error("invalid schema {schema:?}: {reason}")]
    InvalidSchema { schema: String, reason: String },
    #[error("invalid task {task:?}: {reason}")]
    InvalidTask { task: String, reason: String },
    #[error("invalid mapping {source_schema} -> {target_task}:\n{report}")]
    InvalidMapping {
        source_schema: String,
        target_task: String,
        report: ValidationReport,
    },
    #[error("unknown {what} {id:?}")]
    Unknown { what: &'static str, id: String },
    #[error("config error: {0}")]
    Config(String),
}

/// Trim and lowercase a label string the way every ingest path stores it.
pub fn canonical_label(raw: &str) -> String {
    raw.trim().to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Positive,
    Negative,
}

impl BinaryLabel {
    pub const ALL: [BinaryLabel; 2] = [BinaryLabel::Positive, BinaryLabel::Negative];

    pub fn flip(self) -> Self {
        match self {
            BinaryLabel::Positive => BinaryLabel::Negative,
            BinaryLabel::Negative => BinaryLabel::Positive,
        }
    }

    pub fn is_positive(self) -> bool {
        self == BinaryLabel::Positive
    }

    /// `y = 1` for the positive class.
    pub fn as_int(self) -> u8 {
        match self {
            BinaryLabel::Positive => 1,
            BinaryLabel::Negative => 0,
        }
    }

    pub fn from_int(y: u8) -> Option<Self> {
        match y {
            1 => Some(BinaryLabel::Positive),
            0 => Some(BinaryLabel::Negative),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::Positive => "positive",
            BinaryLabel::Negative => "negative",
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BinaryLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match canonical_label(s).as_str() {
            "positive" | "pos" | "1" => Ok(BinaryLabel::Positive),
            "negative" | "neg" | "0" => Ok(BinaryLabel::Negative),
            other => Err(LabelError::Unknown {
                what: "binary label",
                id: other.to_string(),
            }),
        }
    }
}

/// A binary target task: its vocabulary, prompt question and the definition
/// annotators judge against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDef {
    pub task_id: String,
    pub positive_word: String,
    pub negative_word: String,
    pub question_template: String,
    pub definition_text: String,
}

impl TaskDef {
    pub const DEFAULT_QUESTION: &'static str =
        "Is this {content_kind} {positive_word}? Answer yes or no.\nAnswer: {answer}";

    pub fn new(
        task_id: &str,
        positive_word: &str,
        negative_word: &str,
        question_template: &str,
        definition_text: &str,
    ) -> Result<Self, LabelError> {
        let task = TaskDef {
            task_id: canonical_label(task_id),
            positive_word: canonical_label(positive_word),
            negative_word: canonical_label(negative_word),
            question_template: question_template.to_string(),
            definition_text: definition_text.trim().to_string(),
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<(), LabelError> {
        let bad = |reason: &str| LabelError::InvalidTask {
            task: self.task_id.clone(),
            reason: reason.to_string(),
        };
        if self.task_id.is_empty() {
            return Err(bad("empty task id"));
        }
        if self.positive_word.is_empty() || self.negative_word.is_empty() {
            return Err(bad("empty label word"));
        }
        if self.positive_word == self.negative_word {
            return Err(bad("positive and negative words coincide"));
        }
        if self.question_template.matches(ANSWER_SLOT).count() != 1 {
            return Err(bad("question template needs exactly one {answer} slot"));
        }
        Ok(())
    }

    /// MultiHateClip-style task: hateful and offensive merged into `offensive`.
    pub fn mhc() -> Self {
        TaskDef {
            task_id: "mhc".into(),
            positive_word: "offensive".into(),
            negative_word: "non-offensive".into(),
            question_template: Self::DEFAULT_QUESTION.into(),
            definition_text: "Offensive: content likely to upset, disturb or distress a viewer. \
                              This includes hateful content as well as content that is insulting \
                              or demeaning without targeting a protected group."
                .into(),
        }
    }

    /// HateMM-style task.
    pub fn hatemm() -> Self {
        TaskDef {
            task_id: "hatemm".into(),
            positive_word: "hateful".into(),
            negative_word: "non-hateful".into(),
            question_template: Self::DEFAULT_QUESTION.into(),
            definition_text: "Hateful: content that attacks or demeans a group or an individual \
                              on the basis of a protected attribute such as religion, ethnicity, \
                              national origin, sexual orientation, gender, physical appearance, \
                              disability or illness."
                .into(),
        }
    }

    pub fn builtin(task_id: &str) -> Result<Self, LabelError> {
        match canonical_label(task_id).as_str() {
            "mhc" => Ok(Self::mhc()),
            "hatemm" => Ok(Self::hatemm()),
            other => Err(LabelError::Unknown {
                what: "task",
                id: other.to_string(),
            }),
        }
    }

    pub fn render(&self, label: BinaryLabel) -> &str {
        match label {
            BinaryLabel::Positive => &self.positive_word,
            BinaryLabel::Negative => &self.negative_word,
        }
    }

    /// Inverse of [`TaskDef::render`], case-insensitive.
    pub fn parse_word(&self, word: &str) -> Option<BinaryLabel> {
        let word = canonical_label(word);
        if word == self.positive_word {
            Some(BinaryLabel::Positive)
        } else if word == self.negative_word {
            Some(BinaryLabel::Negative)
        } else {
            None
        }
    }

    /// Schema whose labels are this task's two words, for manifests already
    /// labelled in the task vocabulary.
    pub fn label_schema(&self) -> LabelSchema {
        LabelSchema::new(&self.task_id, &[&self.positive_word, &self.negative_word])
            .expect("validated task words")
    }

    /// The question with `answer` in the answer slot. An empty answer yields
    /// the open query form with trailing whitespace removed.
    pub fn question(&self, content_kind: &str, answer: &str) -> String {
        let filled = self
            .question_template
            .replace("{content_kind}", content_kind)
            .replace("{positive_word}", &self.positive_word)
            .replace("{negative_word}", &self.negative_word)
            .replace(ANSWER_SLOT, answer);
        if answer.is_empty() {
            filled.trim_end().to_string()
        } else {
            filled
        }
    }
}

/// An ordered, case-normalized set of source labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub schema_id: String,
    labels: Vec<String>,
}

impl LabelSchema {
    pub fn new<S: AsRef<str>>(schema_id: &str, labels: &[S]) -> Result<Self, LabelError> {
        let schema_id = canonical_label(schema_id);
        if labels.is_empty() {
            return Err(LabelError::InvalidSchema {
                schema: schema_id,
                reason: "no labels".into(),
            });
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(labels.len());
        for raw in labels {
            let label = canonical_label(raw.as_ref());
            if label.is_empty() || !seen.insert(label.clone()) {
                return Err(LabelError::InvalidSchema {
                    schema: schema_id,
                    reason: format!("empty or duplicate label {:?}", raw.as_ref()),
                });
            }
            out.push(label);
        }
        Ok(LabelSchema {
            schema_id,
            labels: out,
        })
    }

    pub fn builtin(schema_id: &str) -> Result<Self, LabelError> {
        let labels: &[&str] = match canonical_label(schema_id).as_str() {
            "fhm" => &["hateful", "non-hateful"],
            "mami" => &["misogynous", "non-misogynous"],
            "mhc" => &["hateful", "offensive", "normal"],
            "hatemm" => &["hateful", "non-hateful"],
            other => {
                return Err(LabelError::Unknown {
                    what: "schema",
                    id: other.to_string(),
                })
            }
        };
        Self::new(schema_id, labels)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn contains(&self, label: &str) -> bool {
        let label = canonical_label(label);
        self.labels.iter().any(|l| *l == label)
    }

    /// Canonical form of `label` if it belongs to the schema.
    pub fn normalize(&self, label: &str) -> Result<String, LabelError> {
        let canon = canonical_label(label);
        if self.labels.contains(&canon) {
            Ok(canon)
        } else {
            Err(LabelError::SchemaViolation {
                schema: self.schema_id.clone(),
                label: label.to_string(),
            })
        }
    }
}

/// Reduce a raw MultiHateClip label to the binary offensive task.
pub fn harmonize_mhc(raw_label: &str) -> Result<BinaryLabel, LabelError> {
    match canonical_label(raw_label).as_str() {
        "hateful" | "offensive" => Ok(BinaryLabel::Positive),
        "normal" => Ok(BinaryLabel::Negative),
        _ => Err(LabelError::SchemaViolation {
            schema: "mhc".into(),
            label: raw_label.to_string(),
        }),
    }
}

/// A mapping document as written in a config file: source labels to target
/// task words. Unvalidated; see [`validate_mapping`] and [`LabelMapping::resolve`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingDoc {
    pub source_schema: String,
    pub target_task: String,
    pub map: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MappingFile {
    Many { mapping: Vec<MappingDoc> },
    One(MappingDoc),
}

impl MappingDoc {
    /// Parse a TOML mapping config: either a single top-level document or a
    /// `[[mapping]]` array of documents.
    pub fn parse_all(text: &str) -> Result<Vec<MappingDoc>, LabelError> {
        let file: MappingFile =
            toml::from_str(text).map_err(|e| LabelError::Config(e.to_string()))?;
        Ok(match file {
            MappingFile::Many { mapping } => mapping,
            MappingFile::One(doc) => vec![doc],
        })
    }

    pub fn load_all(path: &Path) -> Result<Vec<MappingDoc>, LabelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabelError::Config(format!("{}: {e}", path.display())))?;
        Self::parse_all(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("mapping doc serializes")
    }

    /// Built-in mappings, keyed `<schema>-<task>`.
    pub fn builtin(id: &str) -> Result<MappingDoc, LabelError> {
        let pairs: &[(&str, &str)] = match canonical_label(id).as_str() {
            "fhm-mhc" => &[("hateful", "offensive"), ("non-hateful", "non-offensive")],
            "fhm-hatemm" => &[("hateful", "hateful"), ("non-hateful", "non-hateful")],
            "mami-mhc" => &[("misogynous", "offensive"), ("non-misogynous", "non-offensive")],
            "mami-hatemm" => &[("misogynous", "hateful"), ("non-misogynous", "non-hateful")],
            "mhc-mhc" => &[
                ("hateful", "offensive"),
                ("offensive", "offensive"),
                ("normal", "non-offensive"),
            ],
            "hatemm-hatemm" => &[("hateful", "hateful"), ("non-hateful", "non-hateful")],
            other => {
                return Err(LabelError::Unknown {
                    what: "mapping",
                    id: other.to_string(),
                })
            }
        };
        let (source, target) = id.split_once('-').expect("builtin ids contain a dash");
        Ok(MappingDoc {
            source_schema: source.to_string(),
            target_task: target.to_string(),
            map: pairs
                .iter()
                .map(|(s, t)| (s.to_string(), t.to_string()))
                .collect(),
        })
    }
}

/// Findings from [`validate_mapping`]. Empty iff the mapping is total and
/// well-typed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Schema labels with no entry in the map.
    pub uncovered: Vec<String>,
    /// `(source label, target word)` pairs whose target is not a task word.
    pub unknown_targets: Vec<(String, String)>,
    /// Map keys that are not labels of the schema.
    pub unknown_sources: Vec<String>,
    /// Schema or task id disagreements between the doc and the supplied objects.
    pub id_mismatches: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.uncovered.is_empty()
            && self.unknown_targets.is_empty()
            && self.unknown_sources.is_empty()
            && self.id_mismatches.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return writeln!(f, "ok");
        }
        for label in &self.uncovered {
            writeln!(f, "uncovered source label: {label}")?;
        }
        for (source, target) in &self.unknown_targets {
            writeln!(f, "unknown target {target:?} for source label {source}")?;
        }
        for label in &self.unknown_sources {
            writeln!(f, "map key not in schema: {label}")?;
        }
        for msg in &self.id_mismatches {
            writeln!(f, "{msg}")?;
        }
        Ok(())
    }
}

pub fn validate_mapping(doc: &MappingDoc, schema: &LabelSchema, task: &TaskDef) -> ValidationReport {
    let mut report = ValidationReport::default();
    if canonical_label(&doc.source_schema) != schema.schema_id {
        report.id_mismatches.push(format!(
            "mapping source schema {:?} differs from schema {:?}",
            doc.source_schema, schema.schema_id
        ));
    }
    if canonical_label(&doc.target_task) != task.task_id {
        report.id_mismatches.push(format!(
            "mapping target task {:?} differs from task {:?}",
            doc.target_task, task.task_id
        ));
    }
    let entries: BTreeMap<String, String> = doc
        .map
        .iter()
        .map(|(k, v)| (canonical_label(k), canonical_label(v)))
        .collect();
    for label in schema.labels() {
        if !entries.contains_key(label) {
            report.uncovered.push(label.clone());
        }
    }
    for (source, target) in &entries {
        if !schema.contains(source) {
            report.unknown_sources.push(source.clone());
        }
        if task.parse_word(target).is_none() {
            report.unknown_targets.push((source.clone(), target.clone()));
        }
    }
    report
}

/// A validated, total mapping from a source schema onto a binary task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    pub source_schema: String,
    pub target_task: String,
    pub table: BTreeMap<String, BinaryLabel>,
}

impl LabelMapping {
    pub fn resolve(
        doc: &MappingDoc,
        schema: &LabelSchema,
        task: &TaskDef,
    ) -> Result<Self, LabelError> {
        let report = validate_mapping(doc, schema, task);
        if !report.is_empty() {
            return Err(LabelError::InvalidMapping {
                source_schema: doc.source_schema.clone(),
                target_task: doc.target_task.clone(),
                report,
            });
        }
        let table = doc
            .map
            .iter()
            .map(|(k, v)| {
                let label = task.parse_word(v).expect("validated target");
                (canonical_label(k), label)
            })
            .collect();
        Ok(LabelMapping {
            source_schema: schema.schema_id.clone(),
            target_task: task.task_id.clone(),
            table,
        })
    }

    /// The schema labels mapped onto themselves as a binary task, for
    /// datasets that already speak the target vocabulary.
    pub fn identity(schema: &LabelSchema, task: &TaskDef) -> Result<Self, LabelError> {
        let doc = MappingDoc {
            source_schema: schema.schema_id.clone(),
            target_task: task.task_id.clone(),
            map: schema
                .labels()
                .iter()
                .map(|l| (l.clone(), l.clone()))
                .collect(),
        };
        Self::resolve(&doc, schema, task)
    }
}

pub fn remap_label(label: &str, mapping: &LabelMapping) -> Result<BinaryLabel, LabelError> {
    mapping
        .table
        .get(&canonical_label(label))
        .copied()
        .ok_or_else(|| LabelError::MappingIncomplete {
            source_schema: mapping.source_schema.clone(),
            target_task: mapping.target_task.clone(),
            label: label.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mapping(id: &str) -> LabelMapping {
        let doc = MappingDoc::builtin(id).unwrap();
        let schema = LabelSchema::builtin(&doc.source_schema).unwrap();
        let task = TaskDef::builtin(&doc.target_task).unwrap();
        LabelMapping::resolve(&doc, &schema, &task).unwrap()
    }

    #[test]
    fn harmonize_merges_hateful_and_offensive() {
        let task = TaskDef::mhc();
        assert_eq!(harmonize_mhc("hateful").unwrap(), BinaryLabel::Positive);
        assert_eq!(task.render(harmonize_mhc("hateful").unwrap()), "offensive");
        assert_eq!(harmonize_mhc("offensive").unwrap(), BinaryLabel::Positive);
        assert_eq!(harmonize_mhc("normal").unwrap(), BinaryLabel::Negative);
        assert_eq!(task.render(harmonize_mhc(" Normal ").unwrap()), "non-offensive");
    }

    #[test]
    fn harmonize_rejects_unknown_label_by_name() {
        let err = harmonize_mhc("spicy").unwrap_err();
        assert!(err.to_string().contains("spicy"), "{err}");
    }

    #[test]
    fn harmonize_published_mhc_distribution() {
        let raw = std::iter::repeat("hateful")
            .take(82)
            .chain(std::iter::repeat("offensive").take(256))
            .chain(std::iter::repeat("normal").take(662));
        let (mut pos, mut neg) = (0, 0);
        for label in raw {
            match harmonize_mhc(label).unwrap() {
                BinaryLabel::Positive => pos += 1,
                BinaryLabel::Negative => neg += 1,
            }
        }
        assert_eq!((pos, neg), (338, 662));
    }

    #[test]
    fn builtin_mhc_mapping_agrees_with_harmonize() {
        let m = mapping("mhc-mhc");
        for label in ["hateful", "offensive", "normal"] {
            assert_eq!(remap_label(label, &m).unwrap(), harmonize_mhc(label).unwrap());
        }
    }

    #[test]
    fn remap_examples() {
        let m = mapping("mami-hatemm");
        assert_eq!(remap_label("misogynous", &m).unwrap(), BinaryLabel::Positive);
        assert_eq!(TaskDef::hatemm().render(BinaryLabel::Positive), "hateful");
        let m = mapping("fhm-hatemm");
        assert_eq!(remap_label("non-hateful", &m).unwrap(), BinaryLabel::Negative);
        let m = mapping("mami-mhc");
        assert_eq!(remap_label("MISOGYNOUS", &m).unwrap(), BinaryLabel::Positive);
    }

    #[test]
    fn identity_mapping_preserves_class() {
        let schema = LabelSchema::builtin("hatemm").unwrap();
        let m = LabelMapping::identity(&schema, &TaskDef::hatemm()).unwrap();
        assert_eq!(remap_label("hateful", &m).unwrap(), BinaryLabel::Positive);
        assert_eq!(remap_label("non-hateful", &m).unwrap(), BinaryLabel::Negative);
    }

    #[test]
    fn remap_missing_entry_is_mapping_incomplete() {
        let m = mapping("fhm-mhc");
        assert!(matches!(
            remap_label("misogynous", &m),
            Err(LabelError::MappingIncomplete { .. })
        ));
    }

    #[test]
    fn validate_complete_mapping_is_empty() {
        let doc = MappingDoc::builtin("fhm-mhc").unwrap();
        let report = validate_mapping(
            &doc,
            &LabelSchema::builtin("fhm").unwrap(),
            &TaskDef::mhc(),
        );
        assert!(report.is_empty(), "{report}");
    }

    #[test]
    fn validate_reports_gap_and_bad_target() {
        let mut doc = MappingDoc::builtin("mhc-mhc").unwrap();
        doc.map.remove("normal");
        doc.map.insert("hateful".into(), "rude".into());
        let report = validate_mapping(
            &doc,
            &LabelSchema::builtin("mhc").unwrap(),
            &TaskDef::mhc(),
        );
        assert_eq!(report.uncovered, vec!["normal".to_string()]);
        assert_eq!(
            report.unknown_targets,
            vec![("hateful".to_string(), "rude".to_string())]
        );
        assert!(report.to_string().contains("normal"));
        assert!(report.to_string().contains("rude"));
    }

    #[test]
    fn mapping_config_parses_single_and_many() {
        let one = r#"
source_schema = "fhm"
target_task = "mhc"
[map]
hateful = "offensive"
"Non-Hateful" = "non-offensive"
"#;
        let docs = MappingDoc::parse_all(one).unwrap();
        assert_eq!(docs.len(), 1);
        let m = LabelMapping::resolve(
            &docs[0],
            &LabelSchema::builtin("fhm").unwrap(),
            &TaskDef::mhc(),
        )
        .unwrap();
        assert_eq!(m.table.len(), 2);

        let many = format!(
            "[[mapping]]\n{}\n[[mapping]]\n{}",
            "source_schema = \"fhm\"\ntarget_task = \"hatemm\"\nmap = { hateful = \"hateful\", non-hateful = \"non-hateful\" }",
            "source_schema = \"mami\"\ntarget_task = \"hatemm\"\nmap = { misogynous = \"hateful\", non-misogynous = \"non-hateful\" }",
        );
        assert_eq!(MappingDoc::parse_all(&many).unwrap().len(), 2);
    }

    #[test]
    fn schema_rejects_duplicates_after_normalization() {
        assert!(LabelSchema::new("x", &["Hateful", " hateful"]).is_err());
        assert!(LabelSchema::new("x", &[] as &[&str]).is_err());
    }

    #[test]
    fn task_question_template_needs_one_slot() {
        assert!(TaskDef::new("t", "a", "b", "Is it a?", "").is_err());
        assert!(TaskDef::new("t", "a", "a", "{answer}", "").is_err());
        let t = TaskDef::mhc();
        assert_eq!(
            t.question("video", ""),
            "Is this video offensive? Answer yes or no.\nAnswer:"
        );
        assert!(t.question("meme", "yes").ends_with("Answer: yes"));
    }

    proptest! {
        #[test]
        fn accepted_mappings_make_remap_total(
            labels in proptest::collection::btree_set("[a-z]{1,8}", 1..6),
            targets in proptest::collection::vec(any::<bool>(), 6),
            picks in proptest::collection::vec(any::<proptest::sample::Index>(), 1..20),
        ) {
            let labels: Vec<String> = labels.into_iter().collect();
            let schema = LabelSchema::new("s", &labels).unwrap();
            let task = TaskDef::mhc();
            let doc = MappingDoc {
                source_schema: "s".into(),
                target_task: "mhc".into(),
                map: labels.iter().zip(&targets)
                    .map(|(l, &p)| (l.to_uppercase(), task.render(if p { BinaryLabel::Positive } else { BinaryLabel::Negative }).to_string()))
                    .collect(),
            };
            prop_assert!(validate_mapping(&doc, &schema, &task).is_empty());
            let m = LabelMapping::resolve(&doc, &schema, &task).unwrap();
            for idx in picks {
                let label = idx.get(&labels);
                let a = remap_label(label, &m).unwrap();
                prop_assert_eq!(a, remap_label(label, &m).unwrap());
            }
        }

        #[test]
        fn render_round_trips(pos in any::<bool>()) {
            let task = TaskDef::hatemm();
            let label = if pos { BinaryLabel::Positive } else { BinaryLabel::Negative };
            prop_assert_eq!(task.parse_word(task.render(label)), Some(label));
        }
    }
}
