//! Span selection from start/end logits.
//!
//! Each slice of a document is scored independently: a candidate span
//! `(s, e)` over context units scores `start[s] + end[e]` and is valid when
//! `e >= s`. The null answer scores `start[null] + end[null]` at the
//! classifier position. Across slices the best span is the highest-scoring
//! candidate of any slice, while the null score is the *minimum* over slices,
//! since slices that do not contain the target confidently predict null and
//! would otherwise always win.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CharSpan, Document, Setup, SpanExample};
use crate::error::{Error, Result};
use crate::textproc;
use crate::windowing::{SlicePlan, SliceSet, UnitMap};

/// Scorer output for one slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitSheet {
    pub example_id: String,
    pub slice_index: usize,
    pub null_index: usize,
    pub start_logits: Vec<f64>,
    pub end_logits: Vec<f64>,
    #[serde(with = "crate::jsonl::span_pairs")]
    pub unit_char_spans: Vec<CharSpan>,
}

impl LogitSheet {
    fn bad(&self, message: impl Into<String>) -> Error {
        Error::BadSheet {
            example_id: self.example_id.clone(),
            slice_index: self.slice_index,
            message: message.into(),
        }
    }

    pub fn context_units(&self) -> usize {
        self.unit_char_spans.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.unit_char_spans.len();
        if n == 0 {
            return Err(self.bad("empty context region"));
        }
        if self.start_logits.len() != n + 1 || self.end_logits.len() != n + 1 {
            return Err(self.bad(format!(
                "expected {} logits per side (context units + null), got {} start / {} end",
                n + 1,
                self.start_logits.len(),
                self.end_logits.len()
            )));
        }
        if self.null_index > n {
            return Err(self.bad(format!("null index {} out of range", self.null_index)));
        }
        if self
            .start_logits
            .iter()
            .chain(&self.end_logits)
            .any(|x| !x.is_finite())
        {
            return Err(self.bad("non-finite logit"));
        }
        for (i, w) in self.unit_char_spans.windows(2).enumerate() {
            if w[1].start < w[0].end {
                return Err(self.bad(format!("unit {} overlaps or precedes unit {i}", i + 1)));
            }
        }
        if let Some((i, s)) = self
            .unit_char_spans
            .iter()
            .enumerate()
            .find(|(_, s)| s.start >= s.end)
        {
            return Err(self.bad(format!("unit {i} has empty span {s}")));
        }
        Ok(())
    }

    /// Logit position of context unit `k`; the null position is skipped.
    fn position(&self, k: usize) -> usize {
        if k < self.null_index {
            k
        } else {
            k + 1
        }
    }

    pub fn start_logit(&self, k: usize) -> f64 {
        self.start_logits[self.position(k)]
    }

    pub fn end_logit(&self, k: usize) -> f64 {
        self.end_logits[self.position(k)]
    }

    pub fn null_score(&self) -> f64 {
        self.start_logits[self.null_index] + self.end_logits[self.null_index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub slice_index: usize,
    /// First context unit, slice-local.
    pub first: usize,
    /// Last context unit (inclusive), slice-local.
    pub last: usize,
    pub char_span: CharSpan,
    pub score: f64,
}

/// Higher score first; ties go to the earlier start, then the shorter span,
/// then the lower slice index.
pub fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.char_span.start.cmp(&b.char_span.start))
        .then(a.char_span.end.cmp(&b.char_span.end))
        .then(a.slice_index.cmp(&b.slice_index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDecode {
    pub slice_index: usize,
    /// Ranked best first.
    pub candidates: Vec<Candidate>,
    pub null_score: f64,
}

/// Ranks spans of one slice. `max_span_units` caps `e - s + 1` (`None`
/// means uncapped); `top_k` truncates the ranking (`None` keeps every
/// candidate).
pub fn decode_slice(
    sheet: &LogitSheet,
    max_span_units: Option<usize>,
    top_k: Option<usize>,
) -> Result<SliceDecode> {
    sheet.validate()?;
    let n = sheet.context_units();
    let cap = max_span_units.unwrap_or(n).max(1);
    let make = |s: usize, e: usize| Candidate {
        slice_index: sheet.slice_index,
        first: s,
        last: e,
        char_span: CharSpan::new(sheet.unit_char_spans[s].start, sheet.unit_char_spans[e].end),
        score: sheet.start_logit(s) + sheet.end_logit(e),
    };

    let candidates = if top_k == Some(1) {
        let mut best: Option<Candidate> = None;
        for s in 0..n {
            for e in s..n.min(s + cap) {
                let c = make(s, e);
                if best.is_none_or(|b| candidate_order(&c, &b) == Ordering::Less) {
                    best = Some(c);
                }
            }
        }
        best.into_iter().collect()
    } else {
        let mut all: Vec<Candidate> = (0..n)
            .flat_map(|s| (s..n.min(s + cap)).map(move |e| (s, e)))
            .map(|(s, e)| make(s, e))
            .collect();
        all.sort_by(candidate_order);
        if let Some(k) = top_k {
            all.truncate(k);
        }
        all
    };
    Ok(SliceDecode {
        slice_index: sheet.slice_index,
        candidates,
        null_score: sheet.null_score(),
    })
}

/// Decoded answer for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanPrediction {
    pub example_id: String,
    /// `None` is the null prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<CharSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Best span score (or retrieval similarity for sentence baselines).
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_slice: Option<usize>,
}

impl SpanPrediction {
    pub fn is_null(&self) -> bool {
        self.span.is_none()
    }
}

/// Combines per-slice decodes. Setup 1 always answers with the best span;
/// Setup 2 answers null only when the minimum null score strictly exceeds
/// the best span score.
pub fn merge_slices(
    example_id: &str,
    decodes: &[SliceDecode],
    setup: Setup,
) -> Result<SpanPrediction> {
    let best = decodes
        .iter()
        .filter_map(|d| d.candidates.first())
        .min_by(|a, b| candidate_order(a, b))
        .copied()
        .ok_or_else(|| Error::invalid(format!("no slice candidates for `{example_id}`")))?;
    let null = decodes
        .iter()
        .min_by(|a, b| {
            a.null_score
                .partial_cmp(&b.null_score)
                .unwrap_or(Ordering::Equal)
                .then(a.slice_index.cmp(&b.slice_index))
        })
        .expect("decodes is non-empty");
    if setup == Setup::Two && null.null_score > best.score {
        return Ok(SpanPrediction {
            example_id: example_id.to_string(),
            span: None,
            text: None,
            score: best.score,
            null_score: Some(null.null_score),
            best_slice: Some(null.slice_index),
        });
    }
    Ok(SpanPrediction {
        example_id: example_id.to_string(),
        span: Some(best.char_span),
        text: None,
        score: best.score,
        null_score: Some(null.null_score),
        best_slice: Some(best.slice_index),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub setup: Setup,
    pub max_span_units: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub example_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct DecodeOutcome {
    /// Sorted by example id.
    pub predictions: Vec<SpanPrediction>,
    pub skipped: Vec<Skipped>,
    /// Sheets whose example id matched no example.
    pub orphan_sheets: usize,
}

pub fn decode_example(
    example: &SpanExample,
    doc: &Document,
    sheets: &[LogitSheet],
    config: &DecodeConfig,
) -> Result<SpanPrediction> {
    if sheets.is_empty() {
        return Err(Error::invalid("no logit sheets"));
    }
    let mut seen = std::collections::HashSet::new();
    let mut decodes = Vec::with_capacity(sheets.len());
    for sheet in sheets {
        if !seen.insert(sheet.slice_index) {
            return Err(sheet.bad("duplicate slice index"));
        }
        decodes.push(decode_slice(sheet, config.max_span_units, Some(1))?);
    }
    let mut pred = merge_slices(&example.example_id, &decodes, config.setup)?;
    if let Some(span) = pred.span {
        let text = doc.slice(&span).ok_or(Error::SpanOutOfRange {
            start: span.start,
            end: span.end,
            len: doc.char_len(),
        })?;
        pred.text = Some(text.to_string());
    }
    Ok(pred)
}

/// Decodes every example that has sheets. Examples without sheets, or whose
/// sheets fail validation, are skipped and reported.
pub fn decode_all(
    examples: &[SpanExample],
    sheets: Vec<LogitSheet>,
    documents: &HashMap<&str, &Document>,
    config: &DecodeConfig,
) -> DecodeOutcome {
    let mut by_example: BTreeMap<String, Vec<LogitSheet>> = BTreeMap::new();
    for sheet in sheets {
        by_example
            .entry(sheet.example_id.clone())
            .or_default()
            .push(sheet);
    }
    for v in by_example.values_mut() {
        v.sort_by_key(|s| s.slice_index);
    }

    let results: Vec<std::result::Result<SpanPrediction, Skipped>> = examples
        .par_iter()
        .map(|ex| {
            let skip = |reason: String| Skipped {
                example_id: ex.example_id.clone(),
                reason,
            };
            let sheets = by_example
                .get(&ex.example_id)
                .ok_or_else(|| skip("missing logit sheet".into()))?;
            let doc = documents.get(ex.context_doc_id.as_str()).ok_or_else(|| {
                skip(Error::UnknownDocument(ex.context_doc_id.clone()).to_string())
            })?;
            decode_example(ex, doc, sheets, config).map_err(|e| skip(e.to_string()))
        })
        .collect();

    let known: std::collections::HashSet<&str> =
        examples.iter().map(|e| e.example_id.as_str()).collect();
    let orphan_sheets = by_example
        .iter()
        .filter(|(id, _)| !known.contains(id.as_str()))
        .map(|(_, v)| v.len())
        .sum();

    let mut outcome = DecodeOutcome {
        orphan_sheets,
        ..Default::default()
    };
    for r in results {
        match r {
            Ok(p) => outcome.predictions.push(p),
            Err(s) => outcome.skipped.push(s),
        }
    }
    outcome
        .predictions
        .sort_by(|a, b| a.example_id.cmp(&b.example_id));
    outcome
        .skipped
        .sort_by(|a, b| a.example_id.cmp(&b.example_id));
    outcome
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MockScorerConfig {
    /// Added to both null logits.
    pub null_bias: f64,
    /// Multiplier on the overlap fractions.
    pub scale: f64,
}

impl Default for MockScorerConfig {
    fn default() -> Self {
        MockScorerConfig {
            null_bias: 0.5,
            scale: 10.0,
        }
    }
}

/// Deterministic stand-in for a neural scorer.
///
/// With `L` normalized query words, the start logit of a word unit is the
/// bag overlap between the query and the `L` word units beginning there;
/// the end logit uses the `L` word units ending there. Both are fractions of
/// `L` times `scale`. Punctuation units get zero. A verbatim occurrence of
/// the query therefore maximizes both ends at once.
pub fn mock_lexical_scorer(
    example: &SpanExample,
    doc: &Document,
    units: &UnitMap,
    slices: &SliceSet,
    config: &MockScorerConfig,
) -> Result<Vec<LogitSheet>> {
    let query = textproc::normalized(&example.query, true);
    let mut query_bag: HashMap<&str, usize> = HashMap::new();
    for q in &query {
        *query_bag.entry(q.as_str()).or_default() += 1;
    }
    let qlen = query.len();

    slices
        .slices
        .iter()
        .map(|slice| {
            let spans = &units.spans()[slice.unit_start..slice.unit_end];
            // normalized surface of each unit; None for punctuation-only units
            let words: Vec<Option<String>> = spans
                .iter()
                .map(|s| {
                    let surface = s.slice(&doc.text).unwrap_or_default();
                    let norm = textproc::normalized(surface, true);
                    (!norm.is_empty()).then(|| norm.concat())
                })
                .collect();
            let word_positions: Vec<usize> =
                (0..words.len()).filter(|&i| words[i].is_some()).collect();

            let overlap = |window: &[usize]| -> f64 {
                if qlen == 0 {
                    return 0.0;
                }
                let mut counts: HashMap<&str, usize> = HashMap::new();
                for &i in window {
                    *counts.entry(words[i].as_deref().unwrap()).or_default() += 1;
                }
                let shared: usize = counts
                    .iter()
                    .map(|(t, c)| (*c).min(query_bag.get(t).copied().unwrap_or(0)))
                    .sum();
                shared as f64 / qlen as f64
            };

            let mut start = vec![0.0; words.len()];
            let mut end = vec![0.0; words.len()];
            for (rank, &pos) in word_positions.iter().enumerate() {
                let fwd_end = (rank + qlen).min(word_positions.len());
                start[pos] = config.scale * overlap(&word_positions[rank..fwd_end]);
                let back_start = (rank + 1).saturating_sub(qlen);
                end[pos] = config.scale * overlap(&word_positions[back_start..=rank]);
            }

            let mut start_logits = Vec::with_capacity(words.len() + 1);
            let mut end_logits = Vec::with_capacity(words.len() + 1);
            start_logits.push(config.null_bias);
            end_logits.push(config.null_bias);
            start_logits.extend(start);
            end_logits.extend(end);
            Ok(LogitSheet {
                example_id: example.example_id.clone(),
                slice_index: slice.slice_index,
                null_index: 0,
                start_logits,
                end_logits,
                unit_char_spans: spans.to_vec(),
            })
        })
        .collect()
}

/// Mock sheets for every plan, ordered by example id then slice index.
pub fn mock_sheets(
    examples: &[SpanExample],
    docs: &HashMap<&str, &Document>,
    plans: &[SlicePlan],
    config: &MockScorerConfig,
) -> Result<Vec<LogitSheet>> {
    let mut sheets: Vec<LogitSheet> = plans
        .par_iter()
        .map(|plan| {
            let ex = &examples[plan.example_index];
            let doc = docs
                .get(ex.context_doc_id.as_str())
                .ok_or_else(|| Error::UnknownDocument(ex.context_doc_id.clone()))?;
            mock_lexical_scorer(ex, doc, &plan.units, &plan.slices, config)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    sheets.sort_by(|a, b| {
        a.example_id
            .cmp(&b.example_id)
            .then(a.slice_index.cmp(&b.slice_index))
    });
    Ok(sheets)
}
