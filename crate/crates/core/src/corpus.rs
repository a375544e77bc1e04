//! Paraphrase-pair corpora and their conversion into directed span-detection
//! examples.
//!
//! A pair `(a, b)` taken from two documents yields two examples: `a` queried
//! against the document of `b`, and `b` queried against the document of `a`.
//! Positive pairs carry a gold span; negative pairs (similar but not mutual
//! paraphrases) become irretrievable examples in [`Setup::Two`].

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::jsonl;

/// Half-open character range `[start, end)` counted in Unicode scalar values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub const fn new(start: usize, end: usize) -> Self {
        CharSpan { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, other: &CharSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn intersection_len(&self, other: &CharSpan) -> usize {
        self.end
            .min(other.end)
            .saturating_sub(self.start.max(other.start))
    }

    /// Checks `0 <= start < end <= text_len`.
    pub fn validate(&self, text_len: usize) -> Result<()> {
        if self.start < self.end && self.end <= text_len {
            Ok(())
        } else {
            Err(Error::SpanOutOfRange {
                start: self.start,
                end: self.end,
                len: text_len,
            })
        }
    }

    /// The substring of `text` covered by this span, or `None` when the span
    /// does not fit.
    pub fn slice<'a>(&self, text: &'a str) -> Option<&'a str> {
        let (a, b) = char_to_byte_range(text, self.start, self.end)?;
        Some(&text[a..b])
    }
}

impl fmt::Display for CharSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// Byte range for the character range `[start, end)`; `None` when out of
/// bounds or reversed.
pub fn char_to_byte_range(text: &str, start: usize, end: usize) -> Option<(usize, usize)> {
    if start > end {
        return None;
    }
    let mut a = None;
    let mut count = 0;
    for (byte, _) in text.char_indices() {
        if count == start {
            a = Some(byte);
        }
        if count == end {
            return Some((a?, byte));
        }
        count += 1;
    }
    if count == start {
        a = Some(text.len());
    }
    if count == end {
        return Some((a?, text.len()));
    }
    None
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub genre: String,
    pub text: String,
}

impl Document {
    pub fn char_len(&self) -> usize {
        char_len(&self.text)
    }

    pub fn slice(&self, span: &CharSpan) -> Option<&str> {
        span.slice(&self.text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[serde(alias = "dev", alias = "validation")]
    Devel,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Devel, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Devel => "devel",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "devel" | "dev" | "validation" => Ok(Split::Devel),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelBase {
    ContextDependent,
    ContextIndependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelFlag {
    MinorDifference,
    Style,
    Subsumption,
}

impl LabelFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            LabelFlag::MinorDifference => "minor_difference",
            LabelFlag::Style => "style",
            LabelFlag::Subsumption => "subsumption",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsumptionDirection {
    LeftSubsumesRight,
    RightSubsumesLeft,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParaphraseLabel {
    pub base: LabelBase,
    #[serde(default)]
    pub flags: BTreeSet<LabelFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsumption_direction: Option<SubsumptionDirection>,
}

impl ParaphraseLabel {
    pub fn context_dependent() -> Self {
        ParaphraseLabel {
            base: LabelBase::ContextDependent,
            flags: BTreeSet::new(),
            subsumption_direction: None,
        }
    }

    pub fn context_independent(flags: impl IntoIterator<Item = LabelFlag>) -> Self {
        ParaphraseLabel {
            base: LabelBase::ContextIndependent,
            flags: flags.into_iter().collect(),
            subsumption_direction: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base == LabelBase::ContextDependent && !self.flags.is_empty() {
            return Err(Error::invalid(
                "flags are only allowed on context independent labels",
            ));
        }
        if self.subsumption_direction.is_some() && !self.flags.contains(&LabelFlag::Subsumption) {
            return Err(Error::invalid(
                "subsumption direction given without the subsumption flag",
            ));
        }
        Ok(())
    }

    /// Stable group key: the base, followed by `+flag` for each flag.
    pub fn key(&self) -> String {
        let mut key = match self.base {
            LabelBase::ContextDependent => "context_dependent".to_string(),
            LabelBase::ContextIndependent => "context_independent".to_string(),
        };
        for flag in &self.flags {
            key.push('+');
            key.push_str(flag.as_str());
        }
        key
    }

    /// Parses a release label code such as `4`, `4>`, `4is` or `3`.
    /// `4` is context independent with optional flags (`i` minor difference,
    /// `s` style, `<`/`>` subsumption), `3` is context dependent.
    pub fn from_release_code(code: &str) -> Option<Self> {
        let code = code.trim();
        let mut chars = code.chars();
        match chars.next()? {
            '3' if chars.as_str().is_empty() => Some(Self::context_dependent()),
            '4' => {
                let mut label = Self::context_independent([]);
                for c in chars {
                    match c {
                        'i' => {
                            label.flags.insert(LabelFlag::MinorDifference);
                        }
                        's' => {
                            label.flags.insert(LabelFlag::Style);
                        }
                        '<' => {
                            label.flags.insert(LabelFlag::Subsumption);
                            label.subsumption_direction =
                                Some(SubsumptionDirection::RightSubsumesLeft);
                        }
                        '>' => {
                            label.flags.insert(LabelFlag::Subsumption);
                            label.subsumption_direction =
                                Some(SubsumptionDirection::LeftSubsumesRight);
                        }
                        _ => return None,
                    }
                }
                Some(label)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSide {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl PairSide {
    pub fn span(&self) -> CharSpan {
        CharSpan::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphrasePair {
    pub pair_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ParaphraseLabel>,
    #[serde(default)]
    pub is_negative: bool,
    pub split: Split,
    pub side1: PairSide,
    pub side2: PairSide,
}

impl ParaphrasePair {
    fn validate(&self, docs: &HashMap<&str, &Document>) -> Result<()> {
        match (&self.label, self.is_negative) {
            (Some(label), false) => label.validate()?,
            (None, true) => {}
            (Some(_), true) => return Err(Error::invalid("negative pair carries a label")),
            (None, false) => return Err(Error::invalid("positive pair has no label")),
        }
        for (name, side) in [("side1", &self.side1), ("side2", &self.side2)] {
            let doc = docs
                .get(side.doc_id.as_str())
                .ok_or_else(|| Error::UnknownDocument(side.doc_id.clone()))?;
            let span = side.span();
            span.validate(doc.char_len())?;
            let actual = doc.slice(&span).unwrap_or_default();
            if actual != side.text {
                return Err(Error::invalid(format!(
                    "{name}: document `{}` at {span} reads {actual:?}, record says {:?}",
                    side.doc_id, side.text
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub pairs: Vec<ParaphrasePair>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus from already validated parts.
    pub fn new(documents: Vec<Document>, pairs: Vec<ParaphrasePair>) -> Result<Self> {
        let index = doc_index(&documents)?;
        Ok(Corpus {
            documents,
            pairs,
            index,
        })
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.index.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| !p.is_negative).count()
    }

    pub fn negatives(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_negative).count()
    }
}

fn doc_index(documents: &[Document]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(documents.len());
    for (i, doc) in documents.iter().enumerate() {
        if doc.text.is_empty() {
            return Err(Error::EmptyDocument(doc.doc_id.clone()));
        }
        if index.insert(doc.doc_id.clone(), i).is_some() {
            return Err(Error::DuplicateId(doc.doc_id.clone()));
        }
    }
    Ok(index)
}

/// Where a corpus comes from.
#[derive(Debug, Clone)]
pub enum CorpusSource {
    /// Native format: a pairs JSONL plus a documents JSONL.
    Jsonl { pairs: PathBuf, documents: PathBuf },
    /// Published release files (one per split, JSON array or JSONL) whose
    /// records carry `text1`/`text2`, `context1`/`context2` and a label code.
    Release { files: Vec<PathBuf> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub id: Option<String>,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "line {} ({id}): {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

#[derive(Debug, Default)]
pub struct LoadOutcome {
    pub corpus: Corpus,
    pub errors: Vec<RecordError>,
    /// Release import only: skipped records by reason.
    pub skipped: BTreeMap<String, usize>,
}

pub fn load_corpus(source: &CorpusSource) -> Result<LoadOutcome> {
    match source {
        CorpusSource::Jsonl { pairs, documents } => load_jsonl(pairs, documents),
        CorpusSource::Release { files } => load_release(files),
    }
}

fn load_jsonl(pairs_path: &Path, docs_path: &Path) -> Result<LoadOutcome> {
    let documents: Vec<Document> = jsonl::read(docs_path)?;
    let index = doc_index(&documents)?;
    let by_id: HashMap<&str, &Document> =
        documents.iter().map(|d| (d.doc_id.as_str(), d)).collect();

    let mut errors = Vec::new();
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (line, record) in jsonl::read_lenient::<ParaphrasePair>(pairs_path)? {
        let pair = match record {
            Ok(p) => p,
            Err(Error::Malformed { line, message, .. }) => {
                errors.push(RecordError {
                    line,
                    id: None,
                    message,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        if !seen.insert(pair.pair_id.clone()) {
            errors.push(RecordError {
                line,
                id: Some(pair.pair_id.clone()),
                message: Error::DuplicateId(pair.pair_id.clone()).to_string(),
            });
            continue;
        }
        if let Err(e) = pair.validate(&by_id) {
            errors.push(RecordError {
                line,
                id: Some(pair.pair_id.clone()),
                message: e.to_string(),
            });
            continue;
        }
        pairs.push(pair);
    }
    Ok(LoadOutcome {
        corpus: Corpus {
            documents,
            pairs,
            index,
        },
        errors,
        skipped: BTreeMap::new(),
    })
}

#[derive(Debug, Deserialize)]
struct ReleaseRecord {
    #[serde(default)]
    id: Option<serde_json::Value>,
    #[serde(default)]
    gem_id: Option<String>,
    #[serde(default)]
    goeswith: Option<String>,
    text1: String,
    text2: String,
    label: String,
    #[serde(default)]
    is_rewrite: bool,
    #[serde(default)]
    context1: Option<String>,
    #[serde(default)]
    context2: Option<String>,
    #[serde(default)]
    split: Option<String>,
}

fn split_from_file_name(path: &Path) -> Option<Split> {
    let name = path.file_name()?.to_string_lossy().to_lowercase();
    if name.contains("train") {
        Some(Split::Train)
    } else if name.contains("dev") || name.contains("validation") {
        Some(Split::Devel)
    } else if name.contains("test") {
        Some(Split::Test)
    } else {
        None
    }
}

/// Subtitle documents are grouped under `episode-…`/`movie-…` keys; anything
/// else takes the key prefix as its genre.
fn genre_from_group(group: &str) -> String {
    let prefix = group
        .split(['-', '_', '/'])
        .next()
        .unwrap_or("")
        .to_lowercase();
    match prefix.as_str() {
        "episode" | "movie" | "subtitle" | "subtitles" => "subtitle".to_string(),
        "" => "other".to_string(),
        other => other.to_string(),
    }
}

fn short_hash(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..6])
}

fn read_release_file(path: &Path) -> Result<Vec<(usize, Result<ReleaseRecord>)>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if raw.trim_start().starts_with('[') {
        let values: Vec<serde_json::Value> =
            serde_json::from_str(&raw).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?;
        Ok(values
            .into_iter()
            .enumerate()
            .map(|(i, v)| (i + 1, serde_json::from_value(v).map_err(Error::from)))
            .collect())
    } else {
        Ok(raw
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, serde_json::from_str(l).map_err(Error::from)))
            .collect())
    }
}

fn load_release(files: &[PathBuf]) -> Result<LoadOutcome> {
    let mut documents = Vec::new();
    let mut doc_ids: HashMap<String, String> = HashMap::new();
    let mut pairs = Vec::new();
    let mut errors = Vec::new();
    let mut skipped: BTreeMap<String, usize> = BTreeMap::new();
    let mut seen = HashSet::new();

    let mut skip = |reason: &str| *skipped.entry(reason.to_string()).or_default() += 1;

    for path in files {
        let file_split = split_from_file_name(path);
        for (line, record) in read_release_file(path)? {
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    errors.push(RecordError {
                        line,
                        id: None,
                        message: format!("{}: {e}", path.display()),
                    });
                    continue;
                }
            };
            let split = match record
                .split
                .as_deref()
                .map(str::parse)
                .or(file_split.map(Ok))
            {
                Some(Ok(s)) => s,
                Some(Err(e)) => {
                    errors.push(RecordError {
                        line,
                        id: None,
                        message: e.to_string(),
                    });
                    continue;
                }
                None => {
                    errors.push(RecordError {
                        line,
                        id: None,
                        message: format!("no split for records in {}", path.display()),
                    });
                    continue;
                }
            };
            if record.is_rewrite {
                skip("rewritten");
                continue;
            }
            let (Some(ctx1), Some(ctx2)) = (
                record.context1.as_deref().filter(|c| !c.trim().is_empty()),
                record.context2.as_deref().filter(|c| !c.trim().is_empty()),
            ) else {
                skip("no_context");
                continue;
            };
            let code = record.label.trim();
            let (label, is_negative) = if code.starts_with('2') {
                (None, true)
            } else if let Some(label) = ParaphraseLabel::from_release_code(code) {
                (Some(label), false)
            } else {
                skip("label_out_of_scope");
                continue;
            };

            let group = record.goeswith.clone().unwrap_or_default();
            let genre = genre_from_group(&group);
            let locate = |text: &str, context: &str| -> Option<(usize, usize)> {
                let byte = context.find(text).filter(|_| !text.is_empty())?;
                let start = char_len(&context[..byte]);
                Some((start, start + char_len(text)))
            };
            let (Some(loc1), Some(loc2)) =
                (locate(&record.text1, ctx1), locate(&record.text2, ctx2))
            else {
                skip("text_not_in_context");
                continue;
            };
            let mut side = |text: &str, context: &str, (start, end): (usize, usize)| -> PairSide {
                let doc_id = doc_ids
                    .entry(context.to_string())
                    .or_insert_with(|| {
                        let id = format!(
                            "{}:{}",
                            if group.is_empty() { "doc" } else { &group },
                            short_hash(context)
                        );
                        documents.push(Document {
                            doc_id: id.clone(),
                            genre: genre.clone(),
                            text: context.to_string(),
                        });
                        id
                    })
                    .clone();
                PairSide {
                    doc_id,
                    start,
                    end,
                    text: text.to_string(),
                }
            };
            let side1 = side(&record.text1, ctx1, loc1);
            let side2 = side(&record.text2, ctx2, loc2);
            let pair_id = record
                .gem_id
                .clone()
                .or_else(|| {
                    record.id.as_ref().map(|v| match v {
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                })
                .unwrap_or_else(|| format!("{}:{line}", path.display()));
            if !seen.insert(pair_id.clone()) {
                errors.push(RecordError {
                    line,
                    id: Some(pair_id.clone()),
                    message: Error::DuplicateId(pair_id).to_string(),
                });
                continue;
            }
            pairs.push(ParaphrasePair {
                pair_id,
                label,
                is_negative,
                split,
                side1,
                side2,
            });
        }
    }
    let corpus = Corpus::new(documents, pairs)?;
    Ok(LoadOutcome {
        corpus,
        errors,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setup {
    /// Retrievable examples only.
    #[serde(rename = "1")]
    One,
    /// Retrievable plus irretrievable examples.
    #[serde(rename = "2")]
    Two,
}

impl FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Setup::One),
            "2" => Ok(Setup::Two),
            other => Err(Error::invalid(format!(
                "setup must be 1 or 2, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setup::One => "1",
            Setup::Two => "2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "1-2")]
    OneToTwo,
    #[serde(rename = "2-1")]
    TwoToOne,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::OneToTwo => "1-2",
            Direction::TwoToOne => "2-1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ParaphraseLabel>,
    pub genre: String,
    pub split: Split,
}

/// One directed retrieval instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanExample {
    pub example_id: String,
    pub query: String,
    pub context_doc_id: String,
    /// Absent for irretrievable examples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_span: Option<CharSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_text: Option<String>,
    /// For examples built from negative pairs: the span the negative
    /// counterpart occupies in the context document.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterpart_span: Option<CharSpan>,
    pub direction: Direction,
    pub meta: ExampleMeta,
}

impl SpanExample {
    pub fn is_retrievable(&self) -> bool {
        self.gold_span.is_some()
    }
}

/// Turns validated pairs into directed examples. Output order follows the
/// pair order, `1-2` before `2-1`.
pub fn convert_to_examples(corpus: &Corpus, setup: Setup) -> Vec<SpanExample> {
    let mut out = Vec::with_capacity(corpus.pairs.len() * 2);
    for pair in &corpus.pairs {
        if pair.is_negative && setup == Setup::One {
            continue;
        }
        for (direction, query, target) in [
            (Direction::OneToTwo, &pair.side1, &pair.side2),
            (Direction::TwoToOne, &pair.side2, &pair.side1),
        ] {
            let genre = corpus
                .document(&target.doc_id)
                .map(|d| d.genre.clone())
                .unwrap_or_default();
            let (gold_span, gold_text, counterpart_span) = if pair.is_negative {
                (None, None, Some(target.span()))
            } else {
                (Some(target.span()), Some(target.text.clone()), None)
            };
            out.push(SpanExample {
                example_id: format!("{}#{}", pair.pair_id, direction.as_str()),
                query: query.text.clone(),
                context_doc_id: target.doc_id.clone(),
                gold_span,
                gold_text,
                counterpart_span,
                direction,
                meta: ExampleMeta {
                    label: pair.label.clone(),
                    genre,
                    split: pair.split,
                },
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub devel: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.devel + self.test
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Devel => self.devel,
            Split::Test => self.test,
        }
    }
}

pub fn split_counts<'a>(examples: impl IntoIterator<Item = &'a SpanExample>) -> SplitCounts {
    let mut counts = SplitCounts::default();
    for ex in examples {
        match ex.meta.split {
            Split::Train => counts.train += 1,
            Split::Devel => counts.devel += 1,
            Split::Test => counts.test += 1,
        }
    }
    counts
}

/// Index of documents by id for consumers that only hold a document list.
pub fn index_documents(documents: &[Document]) -> Result<HashMap<&str, &Document>> {
    let mut map = HashMap::with_capacity(documents.len());
    for d in documents {
        if map.insert(d.doc_id.as_str(), d).is_some() {
            return Err(Error::DuplicateId(d.doc_id.clone()));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn doc(id: &str, text: &str) -> Document {
        Document {
            doc_id: id.into(),
            genre: "subtitle".into(),
            text: text.into(),
        }
    }

    fn side(doc: &str, text: &str, needle: &str) -> PairSide {
        let byte = text.find(needle).unwrap();
        let start = text[..byte].chars().count();
        PairSide {
            doc_id: doc.into(),
            start,
            end: start + needle.chars().count(),
            text: needle.into(),
        }
    }

    #[test]
    fn char_slicing_is_scalar_based() {
        let text = "Hyvää yötä, äiti.";
        let span = CharSpan::new(6, 10);
        assert_eq!(span.slice(text), Some("yötä"));
        assert_eq!(CharSpan::new(12, 17).slice(text), Some("äiti."));
        assert_eq!(CharSpan::new(12, 18).slice(text), None);
        assert_eq!(CharSpan::new(17, 17).slice(text), Some(""));
    }

    #[test]
    fn release_label_codes() {
        assert_eq!(
            ParaphraseLabel::from_release_code("4").unwrap().key(),
            "context_independent"
        );
        let l = ParaphraseLabel::from_release_code("4>is").unwrap();
        assert_eq!(
            l.key(),
            "context_independent+minor_difference+style+subsumption"
        );
        assert_eq!(
            l.subsumption_direction,
            Some(SubsumptionDirection::LeftSubsumesRight)
        );
        assert_eq!(
            ParaphraseLabel::from_release_code("3").unwrap().base,
            LabelBase::ContextDependent
        );
        assert!(ParaphraseLabel::from_release_code("3s").is_none());
        assert!(ParaphraseLabel::from_release_code("1").is_none());
    }

    #[test]
    fn flags_rejected_on_context_dependent() {
        let mut l = ParaphraseLabel::context_dependent();
        l.flags.insert(LabelFlag::Style);
        assert!(l.validate().is_err());
    }

    fn write_fixture(dir: &Path, pairs: &[ParaphrasePair], docs: &[Document]) -> CorpusSource {
        let p = dir.join("pairs.jsonl");
        let d = dir.join("documents.jsonl");
        jsonl::write(&p, pairs).unwrap();
        jsonl::write(&d, docs).unwrap();
        CorpusSource::Jsonl {
            pairs: p,
            documents: d,
        }
    }

    fn three_pair_fixture() -> (Vec<ParaphrasePair>, Vec<Document>) {
        let texts = [
            ("a1", "Kissa istui matolla. Sitten se nukahti."),
            ("a2", "Kissa makasi matolla. Se nukkui pian."),
            ("b1", "Hei. Mitä kuuluu?"),
            ("b2", "Moi. Miten menee?"),
            ("c1", "Lähdetään kotiin."),
            ("c2", "Mennään nyt kotiin."),
        ];
        let docs: Vec<Document> = texts.iter().map(|(i, t)| doc(i, t)).collect();
        let pairs = vec![
            ParaphrasePair {
                pair_id: "p1".into(),
                label: Some(ParaphraseLabel::context_independent([])),
                is_negative: false,
                split: Split::Train,
                side1: side("a1", texts[0].1, "Sitten se nukahti."),
                side2: side("a2", texts[1].1, "Se nukkui pian."),
            },
            ParaphrasePair {
                pair_id: "p2".into(),
                label: Some(ParaphraseLabel::context_dependent()),
                is_negative: false,
                split: Split::Devel,
                side1: side("b1", texts[2].1, "Mitä kuuluu?"),
                side2: side("b2", texts[3].1, "Miten menee?"),
            },
            ParaphrasePair {
                pair_id: "p3".into(),
                label: None,
                is_negative: true,
                split: Split::Test,
                side1: side("c1", texts[4].1, "Lähdetään kotiin."),
                side2: side("c2", texts[5].1, "Mennään nyt kotiin."),
            },
        ];
        (pairs, docs)
    }

    #[test]
    fn loads_three_pair_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (pairs, docs) = three_pair_fixture();
        let out = load_corpus(&write_fixture(dir.path(), &pairs, &docs)).unwrap();
        assert!(out.errors.is_empty(), "{:?}", out.errors);
        assert_eq!(out.corpus.pairs.len(), 3);
        assert_eq!(out.corpus.documents.len(), 6);
        assert_eq!(out.corpus.positives(), 2);
        assert_eq!(out.corpus.negatives(), 1);
    }

    #[test]
    fn span_text_mismatch_is_a_record_error() {
        let dir = tempfile::tempdir().unwrap();
        let (mut pairs, docs) = three_pair_fixture();
        pairs[1].side2.text = "Miten menee!".into();
        let out = load_corpus(&write_fixture(dir.path(), &pairs, &docs)).unwrap();
        assert_eq!(out.corpus.pairs.len(), 2);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].id.as_deref(), Some("p2"));
        assert_eq!(out.errors[0].line, 2);
    }

    #[test]
    fn malformed_line_and_duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        let (pairs, docs) = three_pair_fixture();
        let src = write_fixture(dir.path(), &pairs, &docs);
        let CorpusSource::Jsonl { pairs: p, .. } = &src else {
            unreachable!()
        };
        let mut body = fs::read_to_string(p).unwrap();
        body.push_str("{\"pair_id\": broken\n");
        body.push_str(&serde_json::to_string(&pairs[0]).unwrap());
        body.push('\n');
        fs::write(p, body).unwrap();
        let out = load_corpus(&src).unwrap();
        assert_eq!(out.corpus.pairs.len(), 3);
        assert_eq!(out.errors.len(), 2);
        assert_eq!(out.errors[0].line, 4);
        assert!(out.errors[1].message.contains("duplicate"));

        let mut dup_docs = docs.clone();
        dup_docs.push(docs[0].clone());
        let src = write_fixture(dir.path(), &pairs, &dup_docs);
        assert!(matches!(load_corpus(&src), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn conversion_per_setup() {
        let (pairs, docs) = three_pair_fixture();
        let corpus = Corpus::new(docs, pairs).unwrap();
        let one = convert_to_examples(&corpus, Setup::One);
        let two = convert_to_examples(&corpus, Setup::Two);
        assert_eq!(one.len(), 4);
        assert_eq!(two.len(), 6);

        let (a, b) = (&one[0], &one[1]);
        assert_eq!(a.example_id, "p1#1-2");
        assert_eq!(a.query, "Sitten se nukahti.");
        assert_eq!(a.context_doc_id, "a2");
        assert_eq!(b.query, "Se nukkui pian.");
        assert_eq!(b.context_doc_id, "a1");
        assert_eq!(b.gold_text.as_deref(), Some("Sitten se nukahti."));

        let irr = &two[4];
        assert!(irr.gold_span.is_none());
        assert_eq!(irr.counterpart_span, Some(CharSpan::new(0, 19)));
        assert_eq!(irr.meta.split, Split::Test);

        assert_eq!(
            split_counts(&two),
            SplitCounts {
                train: 2,
                devel: 2,
                test: 2
            }
        );
        assert_eq!(split_counts(&[]).total(), 0);
    }

    #[test]
    fn unknown_split_tag_rejected() {
        assert!("holdout".parse::<Split>().is_err());
        assert!(serde_json::from_str::<Split>("\"holdout\"").is_err());
        assert_eq!(
            serde_json::from_str::<Split>("\"dev\"").unwrap(),
            Split::Devel
        );
    }

    #[test]
    fn release_import_skips_and_locates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.json");
        let records = serde_json::json!([
            {"gem_id": "r1", "goeswith": "episode-1", "text1": "yötä", "text2": "iltaa",
             "label": "4", "context1": "Hyvää yötä!", "context2": "Hyvää iltaa!"},
            {"gem_id": "r2", "goeswith": "episode-1", "text1": "Hyvää", "text2": "Hyvää",
             "label": "2", "context1": "Hyvää yötä!", "context2": "Hyvää iltaa!"},
            {"gem_id": "r3", "goeswith": "news-7", "text1": "a", "text2": "b",
             "label": "4", "context1": "", "context2": "b"},
            {"gem_id": "r4", "goeswith": "news-7", "text1": "a", "text2": "b",
             "label": "4", "is_rewrite": true, "context1": "a", "context2": "b"},
            {"gem_id": "r5", "goeswith": "news-7", "text1": "zzz", "text2": "b",
             "label": "3", "context1": "a", "context2": "b"}
        ]);
        fs::write(&path, records.to_string()).unwrap();
        let out = load_corpus(&CorpusSource::Release { files: vec![path] }).unwrap();
        assert_eq!(out.corpus.pairs.len(), 2);
        assert_eq!(out.corpus.documents.len(), 2);
        assert_eq!(out.skipped.get("no_context"), Some(&1));
        assert_eq!(out.skipped.get("rewritten"), Some(&1));
        assert_eq!(out.skipped.get("text_not_in_context"), Some(&1));
        let p = &out.corpus.pairs[0];
        assert_eq!(p.side1.span(), CharSpan::new(6, 10));
        assert_eq!(p.split, Split::Train);
        assert!(out.corpus.pairs[1].is_negative);
        assert_eq!(out.corpus.documents[0].genre, "subtitle");
    }
}
