//! Training-set augmentation: artificial irretrievables and back-translation
//! examples.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::TfIdfModel;
use crate::corpus::{CharSpan, Direction, Document, ExampleMeta, SpanExample, Split};
use crate::error::{Error, Result};
use crate::metrics::Normalization;
use crate::textproc;

pub const IRRETRIEVABLE_SUFFIX: &str = "#irr";
pub const MAX_TARGET_WORDS: usize = 100;
pub const MAX_BT_SUBWORDS: usize = 380;
pub const SUBWORDS_PER_WORD: f64 = 1.5;

/// Copies `example` into a document with the gold span cut out.
pub fn make_artificial_irretrievable(
    example: &SpanExample,
    doc: &Document,
) -> Result<(SpanExample, Document)> {
    let gold = example.gold_span.ok_or_else(|| {
        Error::invalid(format!(
            "`{}` has no gold span to excise",
            example.example_id
        ))
    })?;
    gold.validate(doc.char_len())?;
    let chars: Vec<char> = doc.text.chars().collect();
    let left: String = chars[..gold.start].iter().collect();
    let right: String = chars[gold.end..].iter().collect();
    let left_trim = left.trim_end();
    let right_trim = right.trim_start();
    let removed_ws = format!(
        "{}{}",
        &left[left_trim.len()..],
        &right[..right.len() - right_trim.len()]
    );
    let text = if left_trim.is_empty() || right_trim.is_empty() {
        format!("{left_trim}{right_trim}")
    } else {
        let sep = if removed_ws.contains('\n') { "\n" } else { " " };
        format!("{left_trim}{sep}{right_trim}")
    };
    let new_doc_id = format!("{}~irr~{}", doc.doc_id, example.example_id);
    if text.trim().is_empty() {
        return Err(Error::EmptyDocument(new_doc_id));
    }
    let new_doc = Document {
        doc_id: new_doc_id,
        genre: doc.genre.clone(),
        text,
    };
    let mut meta = example.meta.clone();
    meta.label = None;
    let new_example = SpanExample {
        example_id: format!("{}{IRRETRIEVABLE_SUFFIX}", example.example_id),
        query: example.query.clone(),
        context_doc_id: new_doc.doc_id.clone(),
        gold_span: None,
        gold_text: None,
        counterpart_span: None,
        direction: example.direction,
        meta,
    };
    Ok((new_example, new_doc))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Doubled {
    pub examples: Vec<SpanExample>,
    /// Only the newly created documents.
    pub documents: Vec<Document>,
}

/// Every retrievable example followed by its irretrievable copy. Examples
/// that are already irretrievable are passed through unchanged.
pub fn double_with_irretrievables(
    examples: &[SpanExample],
    docs: &HashMap<&str, &Document>,
) -> Result<Doubled> {
    let made = examples
        .par_iter()
        .map(|ex| {
            if !ex.is_retrievable() {
                return Ok(None);
            }
            let doc = docs
                .get(ex.context_doc_id.as_str())
                .ok_or_else(|| Error::UnknownDocument(ex.context_doc_id.clone()))?;
            make_artificial_irretrievable(ex, doc).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Doubled::default();
    for (ex, made) in examples.iter().zip(made) {
        out.examples.push(ex.clone());
        if let Some((irr, doc)) = made {
            out.examples.push(irr);
            out.documents.push(doc);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSentence {
    pub source_doc_id: String,
    #[serde(flatten)]
    pub span: CharSpan,
    pub text: String,
    pub word_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSample {
    pub targets: Vec<TargetSentence>,
    /// Documents whose drawn sentence exceeded the word limit.
    pub dropped_long: Vec<String>,
}

/// Draws one sentence per document. Documents are visited in id order so
/// the draw does not depend on input order.
pub fn sample_targets(documents: &[Document], seed: u64) -> Result<TargetSample> {
    let mut docs: Vec<&Document> = documents.iter().collect();
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = TargetSample::default();
    for doc in docs {
        let sentences = textproc::split_sentences(&doc.text);
        let span = *sentences
            .sentences
            .choose(&mut rng)
            .ok_or_else(|| Error::EmptyDocument(doc.doc_id.clone()))?;
        let text = doc.slice(&span).unwrap_or_default().to_string();
        let word_count = textproc::word_count(&text);
        if word_count > MAX_TARGET_WORDS {
            out.dropped_long.push(doc.doc_id.clone());
            continue;
        }
        out.targets.push(TargetSentence {
            source_doc_id: doc.doc_id.clone(),
            span,
            text,
            word_count,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginalSentence {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl OriginalSentence {
    pub fn span(&self) -> CharSpan {
        CharSpan::new(self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackTranslationRecord {
    pub source_doc_id: String,
    pub original: OriginalSentence,
    pub back_translation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subword_count: Option<usize>,
    /// Word tokens in the back-translation.
    pub word_count: usize,
}

impl BackTranslationRecord {
    /// Reported subword count, or the word-count estimate when absent.
    pub fn subwords(&self) -> usize {
        self.subword_count
            .unwrap_or_else(|| (self.word_count as f64 * SUBWORDS_PER_WORD).ceil() as usize)
    }

    fn key(&self) -> (&str, usize, usize, &str) {
        (
            &self.source_doc_id,
            self.original.start,
            self.original.end,
            &self.back_translation,
        )
    }
}

impl From<&TargetSentence> for BackTranslationRecord {
    /// A record with the back-translation still to be filled in.
    fn from(t: &TargetSentence) -> Self {
        BackTranslationRecord {
            source_doc_id: t.source_doc_id.clone(),
            original: OriginalSentence {
                start: t.span.start,
                end: t.span.end,
                text: t.text.clone(),
            },
            back_translation: String::new(),
            subword_count: None,
            word_count: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BtDrop {
    Empty,
    Identical,
    TooLong,
}

pub fn bt_drop_reason(record: &BackTranslationRecord, mode: Normalization) -> Option<BtDrop> {
    if record.back_translation.trim().is_empty() {
        return Some(BtDrop::Empty);
    }
    let identical = match mode {
        Normalization::Normalized => {
            mode.tokens(&record.back_translation) == mode.tokens(&record.original.text)
        }
        Normalization::Strict => record.back_translation.trim() == record.original.text.trim(),
    };
    if identical {
        return Some(BtDrop::Identical);
    }
    if record.subwords() > MAX_BT_SUBWORDS {
        return Some(BtDrop::TooLong);
    }
    None
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BtFilterOutcome {
    pub kept: Vec<BackTranslationRecord>,
    pub dropped: BTreeMap<BtDrop, usize>,
}

pub fn filter_bt(records: Vec<BackTranslationRecord>, mode: Normalization) -> BtFilterOutcome {
    let reasons: Vec<Option<BtDrop>> = records
        .par_iter()
        .map(|r| bt_drop_reason(r, mode))
        .collect();
    let mut out = BtFilterOutcome::default();
    for (r, reason) in records.into_iter().zip(reasons) {
        match reason {
            Some(why) => *out.dropped.entry(why).or_default() += 1,
            None => out.kept.push(r),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    /// Similarities inside the closed interval `[low, high]`.
    TfidfBand {
        low: f64,
        high: f64,
    },
    TfidfMostDissimilar,
}

impl Strategy {
    pub const DEFAULT_BAND: Strategy = Strategy::TfidfBand {
        low: 0.35,
        high: 0.66,
    };

    fn needs_model(&self) -> bool {
        !matches!(self, Strategy::Random)
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "tfidf_band" | "band" => Ok(Strategy::DEFAULT_BAND),
            "tfidf_most_dissimilar" | "most_dissimilar" => Ok(Strategy::TfidfMostDissimilar),
            other => Err(Error::invalid(format!(
                "unknown strategy `{other}` (random, tfidf_band, tfidf_most_dissimilar)"
            ))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Random => f.write_str("random"),
            Strategy::TfidfBand { low, high } => write!(f, "tfidf_band({low},{high})"),
            Strategy::TfidfMostDissimilar => f.write_str("tfidf_most_dissimilar"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySample {
    pub examples: Vec<SpanExample>,
    /// Fewer records qualified than requested.
    pub short: bool,
    pub qualified: usize,
}

/// Picks `n` back-translation records and turns them into training
/// examples whose query is the back-translation.
pub fn sample_strategy(
    records: &[BackTranslationRecord],
    strategy: Strategy,
    n: usize,
    model: Option<&TfIdfModel>,
    docs: &HashMap<&str, &Document>,
    seed: u64,
) -> Result<StrategySample> {
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    if strategy.needs_model() && model.is_none() {
        return Err(Error::invalid(format!(
            "strategy {strategy} needs a tf-idf model"
        )));
    }
    for r in records {
        let doc = docs
            .get(r.source_doc_id.as_str())
            .ok_or_else(|| Error::UnknownDocument(r.source_doc_id.clone()))?;
        let span = r.original.span();
        span.validate(doc.char_len())?;
        if doc.slice(&span) != Some(r.original.text.as_str()) {
            return Err(Error::invalid(format!(
                "original sentence {span} does not match document `{}`",
                r.source_doc_id
            )));
        }
    }
    let mut ordered: Vec<&BackTranslationRecord> = records.iter().collect();
    ordered.sort_by(|a, b| a.key().cmp(&b.key()));
    let similarity = |r: &BackTranslationRecord| {
        model.map_or(0.0, |m| m.similarity(&r.back_translation, &r.original.text))
    };
    let pool: Vec<&BackTranslationRecord> = match strategy {
        Strategy::Random => ordered,
        Strategy::TfidfBand { low, high } => ordered
            .into_par_iter()
            .filter(|r| (low..=high).contains(&similarity(r)))
            .collect(),
        Strategy::TfidfMostDissimilar => {
            let mut scored: Vec<(f64, &BackTranslationRecord)> = ordered
                .into_par_iter()
                .map(|r| (similarity(r), r))
                .collect();
            scored.sort_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| a.1.key().cmp(&b.1.key()))
            });
            scored.into_iter().map(|(_, r)| r).collect()
        }
    };
    let qualified = pool.len();
    let picked: Vec<&BackTranslationRecord> = if qualified <= n {
        pool
    } else if matches!(strategy, Strategy::TfidfMostDissimilar) {
        pool.into_iter().take(n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = index::sample(&mut rng, qualified, n).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| pool[i]).collect()
    };
    let mut seen: HashMap<String, usize> = HashMap::new();
    let examples = picked
        .into_iter()
        .map(|r| {
            let base = format!(
                "bt:{}@{}-{}",
                r.source_doc_id, r.original.start, r.original.end
            );
            let k = seen.entry(base.clone()).or_default();
            *k += 1;
            let example_id = if *k == 1 { base } else { format!("{base}~{k}") };
            SpanExample {
                example_id,
                query: r.back_translation.clone(),
                context_doc_id: r.source_doc_id.clone(),
                gold_span: Some(r.original.span()),
                gold_text: Some(r.original.text.clone()),
                counterpart_span: None,
                direction: Direction::OneToTwo,
                meta: ExampleMeta {
                    label: None,
                    genre: docs[r.source_doc_id.as_str()].genre.clone(),
                    split: Split::Train,
                },
            }
        })
        .collect();
    Ok(StrategySample {
        examples,
        short: qualified < n,
        qualified,
    })
}
