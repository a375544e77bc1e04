//! Error analysis over finished evaluations.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CharSpan, Document, LabelFlag, ParaphrasePair, SpanExample};
use crate::decoder::SpanPrediction;
use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport, Normalization, ScoredExample};

/// Why a prediction missed, checked in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    /// Null answer although a target exists.
    NullPrediction,
    /// The predicted span is the counterpart of a negative pair.
    PredictedNegativeSpan,
    /// Overlapping, and the prediction is inside the gold segment.
    PartialPredSubstrGold,
    /// Overlapping, and the gold segment is inside the prediction.
    PartialGoldSubstrPred,
    PartialOtherOverlap,
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 6] = [
        ErrorCategory::NullPrediction,
        ErrorCategory::PredictedNegativeSpan,
        ErrorCategory::PartialPredSubstrGold,
        ErrorCategory::PartialGoldSubstrPred,
        ErrorCategory::PartialOtherOverlap,
        ErrorCategory::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCategory::NullPrediction => "null_prediction",
            ErrorCategory::PredictedNegativeSpan => "predicted_negative_span",
            ErrorCategory::PartialPredSubstrGold => "partial_pred_substr_gold",
            ErrorCategory::PartialGoldSubstrPred => "partial_gold_substr_pred",
            ErrorCategory::PartialOtherOverlap => "partial_other_overlap",
            ErrorCategory::Other => "other",
        }
    }

    pub fn is_partial(&self) -> bool {
        matches!(
            self,
            ErrorCategory::PartialPredSubstrGold
                | ErrorCategory::PartialGoldSubstrPred
                | ErrorCategory::PartialOtherOverlap
        )
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Spans of negative-pair members, per document.
#[derive(Debug, Clone, Default)]
pub struct NegativeRegistry {
    spans: HashMap<String, Vec<CharSpan>>,
}

impl NegativeRegistry {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a ParaphrasePair>) -> Self {
        let mut reg = NegativeRegistry::default();
        for p in pairs.into_iter().filter(|p| p.is_negative) {
            reg.add(&p.side1.doc_id, p.side1.span());
            reg.add(&p.side2.doc_id, p.side2.span());
        }
        reg
    }

    /// Uses the counterpart spans recorded on irretrievable examples.
    pub fn from_examples<'a>(examples: impl IntoIterator<Item = &'a SpanExample>) -> Self {
        let mut reg = NegativeRegistry::default();
        for ex in examples {
            if let Some(span) = ex.counterpart_span {
                reg.add(&ex.context_doc_id, span);
            }
        }
        reg
    }

    pub fn add(&mut self, doc_id: &str, span: CharSpan) {
        let v = self.spans.entry(doc_id.to_string()).or_default();
        if !v.contains(&span) {
            v.push(span);
        }
    }

    pub fn spans(&self, doc_id: &str) -> &[CharSpan] {
        self.spans.get(doc_id).map(Vec::as_slice).unwrap_or(&[])
    }
}

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    needle.is_empty() || hay.windows(needle.len()).any(|w| w == needle)
}

pub fn gold_text<'a>(example: &'a SpanExample, doc: &'a Document) -> Option<&'a str> {
    match (&example.gold_text, &example.gold_span) {
        (Some(t), _) => Some(t.as_str()),
        (None, Some(span)) => doc.slice(span),
        (None, None) => None,
    }
}

pub fn categorize_error(
    prediction: &SpanPrediction,
    example: &SpanExample,
    doc: &Document,
    negatives: &NegativeRegistry,
    mode: Normalization,
) -> Result<ErrorCategory> {
    let gold = gold_text(example, doc);
    let pred_text = prediction.text.as_deref();
    if metrics::exact_match(pred_text, gold, mode) == 1 {
        return Err(Error::invalid(format!(
            "`{}` is predicted correctly; only mispredictions are categorized",
            example.example_id
        )));
    }
    let (Some(pred_span), Some(pred_text)) = (prediction.span, pred_text) else {
        return Ok(ErrorCategory::NullPrediction);
    };
    let pred_tokens = mode.tokens(pred_text);
    let is_negative = negatives
        .spans(&example.context_doc_id)
        .iter()
        .any(|s| *s == pred_span || doc.slice(s).is_some_and(|t| mode.tokens(t) == pred_tokens));
    if is_negative {
        return Ok(ErrorCategory::PredictedNegativeSpan);
    }
    let (Some(gold_span), Some(gold)) = (example.gold_span, gold) else {
        return Ok(ErrorCategory::Other);
    };
    if !pred_span.overlaps(&gold_span) {
        return Ok(ErrorCategory::Other);
    }
    let gold_tokens = mode.tokens(gold);
    let category = if contains_run(&gold_tokens, &pred_tokens) && gold_span.contains(&pred_span) {
        ErrorCategory::PartialPredSubstrGold
    } else if contains_run(&pred_tokens, &gold_tokens) && pred_span.contains(&gold_span) {
        ErrorCategory::PartialGoldSubstrPred
    } else if gold_span.contains(&pred_span) {
        ErrorCategory::PartialPredSubstrGold
    } else if pred_span.contains(&gold_span) {
        ErrorCategory::PartialGoldSubstrPred
    } else {
        ErrorCategory::PartialOtherOverlap
    };
    Ok(category)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub errors: usize,
    pub counts: BTreeMap<ErrorCategory, usize>,
    /// Share of all errors, in percent.
    pub percent: BTreeMap<ErrorCategory, f64>,
}

impl ErrorDistribution {
    pub fn from_categories(categories: impl IntoIterator<Item = ErrorCategory>) -> Self {
        let mut counts: BTreeMap<ErrorCategory, usize> = BTreeMap::new();
        for c in categories {
            *counts.entry(c).or_default() += 1;
        }
        let errors: usize = counts.values().sum();
        let percent = counts
            .iter()
            .map(|(c, n)| (*c, 100.0 * *n as f64 / errors as f64))
            .collect();
        ErrorDistribution {
            errors,
            counts,
            percent,
        }
    }

    /// Combined share of the three partial-overlap classes.
    pub fn partial_percent(&self) -> f64 {
        self.percent
            .iter()
            .filter(|(c, _)| c.is_partial())
            .map(|(_, p)| p)
            .sum()
    }
}

/// One evaluated example with everything the analyses need.
#[derive(Debug, Clone, Copy)]
pub struct Evaluated<'a> {
    pub example: &'a SpanExample,
    pub prediction: &'a SpanPrediction,
    pub doc: &'a Document,
    pub scored: &'a ScoredExample,
}

pub fn error_distribution(
    items: &[Evaluated<'_>],
    negatives: &NegativeRegistry,
    mode: Normalization,
) -> Result<ErrorDistribution> {
    let categories = items
        .iter()
        .filter(|e| e.scored.em == 0)
        .map(|e| categorize_error(e.prediction, e.example, e.doc, negatives, mode))
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorDistribution::from_categories(categories))
}

/// Group key for an example's label: `irretrievable` when there is no gold
/// span, `unlabeled` for retrievable examples without a label.
pub fn label_key(example: &SpanExample) -> String {
    match (&example.meta.label, example.is_retrievable()) {
        (_, false) => "irretrievable".to_string(),
        (Some(l), true) => l.key(),
        (None, true) => "unlabeled".to_string(),
    }
}

fn group_reports<'a, K: Ord>(
    items: impl IntoIterator<Item = (K, &'a ScoredExample)>,
) -> Result<BTreeMap<K, EvalReport>> {
    let mut groups: BTreeMap<K, Vec<&ScoredExample>> = BTreeMap::new();
    for (k, s) in items {
        groups.entry(k).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|(k, v)| Ok((k, metrics::aggregate(v)?)))
        .collect()
}

/// Partition by exact label (base plus flags). Supports sum to `n`.
pub fn breakdown_by_label(items: &[Evaluated<'_>]) -> Result<BTreeMap<String, EvalReport>> {
    group_reports(items.iter().map(|e| (label_key(e.example), e.scored)))
}

/// Overlapping rows: plain context independent, each flag, context
/// dependent. An example with several flags counts once per flag.
pub fn breakdown_by_flag(items: &[Evaluated<'_>]) -> Result<BTreeMap<String, EvalReport>> {
    let mut rows = Vec::new();
    for e in items {
        let Some(label) = &e.example.meta.label else {
            continue;
        };
        if label.flags.is_empty() {
            rows.push((label.key(), e.scored));
        }
        for flag in &label.flags {
            let row = match flag {
                LabelFlag::MinorDifference => "context_independent_with_minor_difference",
                LabelFlag::Style => "context_independent_with_style",
                LabelFlag::Subsumption => "context_independent_with_subsumption",
            };
            rows.push((row.to_string(), e.scored));
        }
    }
    group_reports(rows)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenrePartition {
    /// `subtitle` against everything else.
    #[default]
    SubtitleVsOther,
    /// One group per genre tag.
    PerGenre,
}

pub fn domain_split_eval(
    items: &[Evaluated<'_>],
    partition: GenrePartition,
) -> Result<BTreeMap<String, EvalReport>> {
    group_reports(items.iter().map(|e| {
        let genre = e.example.meta.genre.as_str();
        let key = match partition {
            GenrePartition::PerGenre => genre.to_string(),
            GenrePartition::SubtitleVsOther if genre == "subtitle" => "subtitle".to_string(),
            GenrePartition::SubtitleVsOther => "non_subtitle".to_string(),
        };
        (key, e.scored)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrivialCategory {
    SameLemmas,
    SameContentWordLemmas,
    SynonymReplacement,
    ContentLemmasWithSynonyms,
    NonTrivial,
}

impl TrivialCategory {
    pub fn is_trivial(&self) -> bool {
        !matches!(self, TrivialCategory::NonTrivial)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TrivialCategory::SameLemmas => "same_lemmas",
            TrivialCategory::SameContentWordLemmas => "same_content_word_lemmas",
            TrivialCategory::SynonymReplacement => "synonym_replacement",
            TrivialCategory::ContentLemmasWithSynonyms => "content_lemmas_with_synonyms",
            TrivialCategory::NonTrivial => "non_trivial",
        }
    }
}

/// Lemma table, synonym classes and function-word lemmas.
#[derive(Debug, Clone, Default)]
pub struct TrivialResources {
    lemmas: HashMap<String, String>,
    /// lemma -> smallest member of its synonym class
    synonym_class: HashMap<String, String>,
    stop_lemmas: HashSet<String>,
}

pub const LEMMA_FILE: &str = "lemmas.tsv";
pub const SYNONYM_FILE: &str = "synonyms.tsv";
pub const STOP_LEMMA_FILE: &str = "stop_lemmas.txt";

fn read_resource(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::MissingResource(path.display().to_string()));
    }
    std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
}

fn tsv_pairs(raw: &str, name: &str) -> Result<Vec<(String, String)>> {
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let mut cols = l.split('\t');
            match (cols.next(), cols.next()) {
                (Some(a), Some(b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
                    Ok((a.trim().to_lowercase(), b.trim().to_lowercase()))
                }
                _ => Err(Error::invalid(format!(
                    "{name}:{}: expected two tab-separated columns",
                    i + 1
                ))),
            }
        })
        .collect()
}

impl TrivialResources {
    /// Reads `lemmas.tsv`, `synonyms.tsv` and `stop_lemmas.txt` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let lemmas = tsv_pairs(&read_resource(dir, LEMMA_FILE)?, LEMMA_FILE)?;
        let synonyms = tsv_pairs(&read_resource(dir, SYNONYM_FILE)?, SYNONYM_FILE)?;
        let stops = read_resource(dir, STOP_LEMMA_FILE)?
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect::<Vec<_>>();
        Ok(Self::new(lemmas, synonyms, stops))
    }

    /// Builds the resources; the synonym relation is closed symmetrically
    /// and transitively.
    pub fn new(
        lemmas: impl IntoIterator<Item = (String, String)>,
        synonyms: impl IntoIterator<Item = (String, String)>,
        stop_lemmas: impl IntoIterator<Item = String>,
    ) -> Self {
        let mut parent: HashMap<String, String> = HashMap::new();
        fn find(parent: &mut HashMap<String, String>, x: &str) -> String {
            let p = parent.get(x).cloned().unwrap_or_else(|| x.to_string());
            if p == x {
                return p;
            }
            let root = find(parent, &p);
            parent.insert(x.to_string(), root.clone());
            root
        }
        for (a, b) in synonyms {
            parent.entry(a.clone()).or_insert_with(|| a.clone());
            parent.entry(b.clone()).or_insert_with(|| b.clone());
            let (ra, rb) = (find(&mut parent, &a), find(&mut parent, &b));
            if ra != rb {
                // the smaller root wins so classes are named by their least member
                let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent.insert(drop, keep);
            }
        }
        let keys: Vec<String> = parent.keys().cloned().collect();
        let synonym_class = keys
            .into_iter()
            .map(|k| {
                let root = find(&mut parent, &k);
                (k, root)
            })
            .collect();
        TrivialResources {
            lemmas: lemmas.into_iter().collect(),
            synonym_class,
            stop_lemmas: stop_lemmas.into_iter().collect(),
        }
    }

    pub fn lemmatize(&self, text: &str) -> Vec<String> {
        crate::textproc::normalized(text, true)
            .into_iter()
            .map(|t| self.lemmas.get(&t).cloned().unwrap_or(t))
            .collect()
    }

    fn content(&self, lemmas: &[String]) -> Vec<String> {
        lemmas
            .iter()
            .filter(|l| !self.stop_lemmas.contains(*l))
            .cloned()
            .collect()
    }

    fn synonymize(&self, lemmas: &[String]) -> Vec<String> {
        lemmas
            .iter()
            .map(|l| {
                self.synonym_class
                    .get(l)
                    .cloned()
                    .unwrap_or_else(|| l.clone())
            })
            .collect()
    }
}

fn same_multiset(a: &[String], b: &[String]) -> bool {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort();
    b.sort();
    a == b
}

pub fn classify_trivial(query: &str, gold: &str, resources: &TrivialResources) -> TrivialCategory {
    let a = resources.lemmatize(query);
    let b = resources.lemmatize(gold);
    if same_multiset(&a, &b) {
        return TrivialCategory::SameLemmas;
    }
    let (ca, cb) = (resources.content(&a), resources.content(&b));
    if same_multiset(&ca, &cb) {
        return TrivialCategory::SameContentWordLemmas;
    }
    if same_multiset(&resources.synonymize(&a), &resources.synonymize(&b)) {
        return TrivialCategory::SynonymReplacement;
    }
    if same_multiset(&resources.synonymize(&ca), &resources.synonymize(&cb)) {
        return TrivialCategory::ContentLemmasWithSynonyms;
    }
    TrivialCategory::NonTrivial
}

/// Accuracy per trivial category plus a `trivial` total. Irretrievable
/// examples form their own `irretrievable` group.
pub fn breakdown_by_trivial(
    items: &[Evaluated<'_>],
    resources: &TrivialResources,
) -> Result<BTreeMap<String, EvalReport>> {
    let mut rows = Vec::new();
    for e in items {
        match gold_text(e.example, e.doc) {
            Some(gold) => {
                let cat = classify_trivial(&e.example.query, gold, resources);
                if cat.is_trivial() {
                    rows.push(("trivial".to_string(), e.scored));
                }
                rows.push((cat.as_str().to_string(), e.scored));
            }
            None => rows.push(("irretrievable".to_string(), e.scored)),
        }
    }
    group_reports(rows)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub example_id: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
    pub context_excerpt: String,
}

/// Text around the prediction and gold spans, `radius` characters each side.
pub fn context_excerpt(doc: &Document, spans: &[CharSpan], radius: usize) -> String {
    let len = doc.char_len();
    let (lo, hi) = spans.iter().fold((usize::MAX, 0), |(lo, hi), s| {
        (lo.min(s.start), hi.max(s.end))
    });
    if lo > hi {
        return doc.text.chars().take(2 * radius).collect();
    }
    let span = CharSpan::new(lo.saturating_sub(radius), (hi + radius).min(len));
    doc.slice(&span).unwrap_or_default().to_string()
}

pub fn review_item(e: &Evaluated<'_>, radius: usize) -> ReviewItem {
    let spans: Vec<CharSpan> = e
        .prediction
        .span
        .into_iter()
        .chain(e.example.gold_span)
        .collect();
    ReviewItem {
        example_id: e.example.example_id.clone(),
        query: e.example.query.clone(),
        prediction: e.prediction.text.clone(),
        gold: gold_text(e.example, e.doc).map(str::to_string),
        context_excerpt: context_excerpt(e.doc, &spans, radius),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewSample {
    pub items: Vec<ReviewItem>,
    /// The population was smaller than requested and was returned whole.
    pub exhausted: bool,
}

/// Seeded sample of `k` items. The population is ordered by example id
/// first, so the result does not depend on input order.
pub fn sample_for_review(mut population: Vec<ReviewItem>, k: usize, seed: u64) -> ReviewSample {
    population.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    if k >= population.len() {
        let exhausted = k > population.len();
        return ReviewSample {
            items: population,
            exhausted,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, population.len(), k).into_vec();
    picked.sort_unstable();
    let mut slots: Vec<Option<ReviewItem>> = population.into_iter().map(Some).collect();
    ReviewSample {
        items: picked.into_iter().filter_map(|i| slots[i].take()).collect(),
        exhausted: false,
    }
}
