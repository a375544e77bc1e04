//! Overlapping document windows.
//!
//! A document is measured in slicing units: the scorer's subwords when a
//! scorer supplied its offsets, word tokens otherwise. The query is never
//! cut, so the units left for the document are
//! `max_sequence_units - query_units - reserved_special_units`. Consecutive
//! windows share `overlap` units and the last window ends on the final unit.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CharSpan, Document, SpanExample};
use crate::error::{Error, Result};
use crate::textproc;

pub const DEFAULT_MAX_SEQUENCE_UNITS: usize = 512;
pub const DEFAULT_RESERVED_SPECIAL_UNITS: usize = 3;
pub const DEFAULT_OVERLAP: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    ScorerSubword,
    FallbackWord,
}

/// Inclusive unit range `[first, last]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitSpan {
    pub first: usize,
    pub last: usize,
}

impl UnitSpan {
    pub fn len(&self) -> usize {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Character spans of a document's slicing units, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitMap {
    spans: Vec<CharSpan>,
    kind: UnitKind,
}

impl UnitMap {
    /// Validates offsets reported by a scorer's tokenizer: non-empty, each
    /// unit non-empty, strictly increasing without overlap and inside a
    /// document of `doc_len` characters.
    pub fn from_scorer(offsets: Vec<CharSpan>, doc_len: usize) -> Result<Self> {
        Self::build(offsets, doc_len, UnitKind::ScorerSubword)
    }

    /// Word tokens of `doc` as fallback units.
    pub fn from_words(doc: &Document) -> Result<Self> {
        let tokens = textproc::tokenize(&doc.text);
        if tokens.is_empty() {
            return Err(Error::EmptyDocument(doc.doc_id.clone()));
        }
        Self::build(tokens.spans(), doc.char_len(), UnitKind::FallbackWord)
    }

    fn build(spans: Vec<CharSpan>, doc_len: usize, kind: UnitKind) -> Result<Self> {
        if spans.is_empty() {
            return Err(Error::invalid("unit offset list is empty"));
        }
        let mut prev_end = 0;
        for (i, s) in spans.iter().enumerate() {
            if s.start >= s.end {
                return Err(Error::invalid(format!("unit {i} has empty span {s}")));
            }
            if s.end > doc_len {
                return Err(Error::SpanOutOfRange {
                    start: s.start,
                    end: s.end,
                    len: doc_len,
                });
            }
            if i > 0 && s.start < prev_end {
                return Err(Error::invalid(format!(
                    "unit {i} at {s} overlaps or precedes the previous unit"
                )));
            }
            prev_end = s.end;
        }
        Ok(UnitMap { spans, kind })
    }

    pub fn kind(&self) -> UnitKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn spans(&self) -> &[CharSpan] {
        &self.spans
    }

    pub fn unit_span(&self, unit: usize) -> Option<CharSpan> {
        self.spans.get(unit).copied()
    }

    /// The unit whose span covers character `c`, if any (gaps between units
    /// belong to no unit).
    pub fn unit_at_char(&self, c: usize) -> Option<usize> {
        let i = self.spans.partition_point(|s| s.end <= c);
        self.spans.get(i).filter(|s| s.start <= c).map(|_| i)
    }

    /// Units touched by a character span.
    pub fn units_for_span(&self, span: &CharSpan) -> Option<UnitSpan> {
        let first = self.spans.partition_point(|s| s.end <= span.start);
        let last = self.spans.partition_point(|s| s.start < span.end);
        (first < last).then(|| UnitSpan {
            first,
            last: last - 1,
        })
    }

    /// Character span from the start of `first` to the end of `last`.
    pub fn char_span(&self, units: UnitSpan) -> CharSpan {
        CharSpan::new(self.spans[units.first].start, self.spans[units.last].end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlicingBudget {
    pub max_sequence_units: usize,
    pub query_units: usize,
    pub reserved_special_units: usize,
}

impl SlicingBudget {
    pub fn new(max_sequence_units: usize, query_units: usize) -> Self {
        SlicingBudget {
            max_sequence_units,
            query_units,
            reserved_special_units: DEFAULT_RESERVED_SPECIAL_UNITS,
        }
    }

    /// Budget whose window comes out at exactly `window` units.
    pub fn with_window(window: usize) -> Self {
        SlicingBudget {
            max_sequence_units: window + DEFAULT_RESERVED_SPECIAL_UNITS,
            query_units: 0,
            reserved_special_units: DEFAULT_RESERVED_SPECIAL_UNITS,
        }
    }

    /// Units left for the document. Negative when the query alone does not fit.
    pub fn window(&self) -> isize {
        self.max_sequence_units as isize
            - self.query_units as isize
            - self.reserved_special_units as isize
    }

    fn checked_window(&self, overlap: usize) -> Result<usize> {
        let window = self.window();
        if window <= overlap as isize {
            return Err(Error::QueryExceedsBudget {
                query_units: self.query_units,
                window,
                overlap,
            });
        }
        Ok(window as usize)
    }
}

/// Half-open unit ranges of the windows over `n_units` units. Requires
/// `window > overlap`; an empty document has no windows.
pub fn slice_ranges(n_units: usize, window: usize, overlap: usize) -> Vec<(usize, usize)> {
    assert!(window > overlap, "window must exceed overlap");
    let stride = window - overlap;
    let mut out = Vec::new();
    let mut start = 0;
    while start < n_units {
        let end = (start + window).min(n_units);
        out.push((start, end));
        if end == n_units {
            break;
        }
        start += stride;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub slice_index: usize,
    pub unit_start: usize,
    pub unit_end: usize,
    pub char_span: CharSpan,
    /// Gold span in slice-local units, present only when the whole gold span
    /// lies inside this slice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_in_slice: Option<UnitSpan>,
}

impl Slice {
    pub fn units(&self) -> usize {
        self.unit_end - self.unit_start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSet {
    pub example_id: String,
    pub slices: Vec<Slice>,
    pub unit_kind: UnitKind,
    pub window: usize,
    pub overlap: usize,
}

pub fn slice_document(
    example: &SpanExample,
    units: &UnitMap,
    budget: &SlicingBudget,
    overlap: usize,
) -> Result<SliceSet> {
    if example.query.trim().is_empty() {
        return Err(Error::invalid(format!(
            "example `{}` has an empty query",
            example.example_id
        )));
    }
    let window = budget.checked_window(overlap)?;
    if units.is_empty() {
        return Err(Error::EmptyDocument(example.context_doc_id.clone()));
    }
    let gold = example
        .gold_span
        .as_ref()
        .and_then(|g| units.units_for_span(g));
    let slices = slice_ranges(units.len(), window, overlap)
        .into_iter()
        .enumerate()
        .map(|(slice_index, (a, b))| Slice {
            slice_index,
            unit_start: a,
            unit_end: b,
            char_span: units.char_span(UnitSpan {
                first: a,
                last: b - 1,
            }),
            gold_in_slice: gold
                .filter(|g| g.first >= a && g.last < b)
                .map(|g| UnitSpan {
                    first: g.first - a,
                    last: g.last - a,
                }),
        })
        .collect();
    Ok(SliceSet {
        example_id: example.example_id.clone(),
        slices,
        unit_kind: units.kind(),
        window,
        overlap,
    })
}

/// One line of the slice export consumed by the external scorer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub example_id: String,
    pub slice_index: usize,
    pub query: String,
    pub context_text: String,
    pub context_char_span: CharSpan,
    /// Gold span in characters relative to `context_text`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_local_span: Option<CharSpan>,
}

pub fn export_slices(
    example: &SpanExample,
    doc: &Document,
    units: &UnitMap,
    slices: &SliceSet,
) -> Result<Vec<SliceRecord>> {
    slices
        .slices
        .iter()
        .map(|s| {
            let context_text = doc
                .slice(&s.char_span)
                .ok_or(Error::SpanOutOfRange {
                    start: s.char_span.start,
                    end: s.char_span.end,
                    len: doc.char_len(),
                })?
                .to_string();
            let gold_local_span = s.gold_in_slice.map(|g| {
                let abs = units.char_span(UnitSpan {
                    first: g.first + s.unit_start,
                    last: g.last + s.unit_start,
                });
                let gold = example.gold_span.unwrap_or(abs);
                CharSpan::new(gold.start - s.char_span.start, gold.end - s.char_span.start)
            });
            Ok(SliceRecord {
                example_id: example.example_id.clone(),
                slice_index: s.slice_index,
                query: example.query.clone(),
                context_text,
                context_char_span: s.char_span,
                gold_local_span,
            })
        })
        .collect()
}

/// Scorer-provided unit offsets for one example, used instead of word units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitsRecord {
    pub example_id: String,
    pub query_units: usize,
    #[serde(with = "crate::jsonl::span_pairs")]
    pub offsets: Vec<CharSpan>,
}

/// Slicing result for one example.
#[derive(Debug, Clone)]
pub struct SlicePlan {
    pub example_index: usize,
    pub units: UnitMap,
    pub slices: SliceSet,
}

#[derive(Debug, Clone, Default)]
pub struct SlicingOutcome {
    /// In example order.
    pub plans: Vec<SlicePlan>,
    /// `(example_id, reason)` for examples that could not be sliced.
    pub failed: Vec<(String, String)>,
}

/// Slices every example. Examples with a scorer units record use its
/// offsets and query length; the rest fall back to word tokens.
pub fn plan_slices(
    examples: &[SpanExample],
    docs: &HashMap<&str, &Document>,
    max_sequence_units: usize,
    overlap: usize,
    scorer_units: &HashMap<&str, &UnitsRecord>,
) -> SlicingOutcome {
    let results: Vec<Result<SlicePlan>> = examples
        .par_iter()
        .enumerate()
        .map(|(example_index, ex)| {
            let doc = docs
                .get(ex.context_doc_id.as_str())
                .ok_or_else(|| Error::UnknownDocument(ex.context_doc_id.clone()))?;
            let (units, query_units) = match scorer_units.get(ex.example_id.as_str()) {
                Some(r) => (
                    UnitMap::from_scorer(r.offsets.clone(), doc.char_len())?,
                    r.query_units,
                ),
                None => (
                    UnitMap::from_words(doc)?,
                    textproc::tokenize(&ex.query).len(),
                ),
            };
            let budget = SlicingBudget::new(max_sequence_units, query_units);
            let slices = slice_document(ex, &units, &budget, overlap)?;
            Ok(SlicePlan {
                example_index,
                units,
                slices,
            })
        })
        .collect();
    let mut out = SlicingOutcome::default();
    for (ex, r) in examples.iter().zip(results) {
        match r {
            Ok(plan) => out.plans.push(plan),
            Err(e) => out.failed.push((ex.example_id.clone(), e.to_string())),
        }
    }
    out
}
