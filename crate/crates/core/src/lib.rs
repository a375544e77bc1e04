//! Paraphrase span detection framed as in-document retrieval.
//!
//! Given a query phrase and a context document, the task is to return the
//! document span that paraphrases the query, or nothing when no paraphrase
//! exists. This crate holds everything that does not need a neural runtime:
//!
//! * [`corpus`]: paraphrase-pair ingestion and conversion into directed
//!   span-detection examples.
//! * [`textproc`]: tokenization, normalization and sentence segmentation
//!   with exact character offsets.
//! * [`windowing`]: overlapping document slices under a sequence budget.
//! * [`decoder`]: span selection from per-slice start/end logits and
//!   cross-slice merging, plus a deterministic lexical test scorer.
//! * [`baselines`]: tf-idf and embedding sentence retrieval and the
//!   sentence oracle.
//! * [`metrics`]: exact match and bag-of-tokens F-score.
//! * [`analysis`]: error categories, label and domain breakdowns, trivial
//!   paraphrase classes and review sampling.
//! * [`augment`]: artificial irretrievables and back-translation sampling.
//! * [`report`]: run configuration hashing and the evaluation report.
//!
//! All character offsets are counted in Unicode scalar values.

pub mod analysis;
pub mod augment;
pub mod baselines;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod jsonl;
pub mod metrics;
pub mod report;
pub mod textproc;
pub mod windowing;

pub use corpus::{CharSpan, Document, ParaphrasePair, Setup, SpanExample, Split};
pub use error::{Error, Result};
