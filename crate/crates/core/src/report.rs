//! Scoring predictions against examples and rendering reports.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{self, Evaluated, GenrePartition, NegativeRegistry, TrivialResources};
use crate::corpus::{Document, Setup, SpanExample};
use crate::decoder::SpanPrediction;
use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport, Normalization, ScoredExample};

/// Settings that determine a run's output. Hashed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: String,
    pub setup: Setup,
    pub normalization: Normalization,
    pub max_sequence_units: usize,
    pub overlap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_span_units: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn config_hash(&self) -> String {
        // serde_json::Value keeps object keys sorted, which makes this canonical
        let value = serde_json::to_value(self).expect("config serializes");
        let bytes = serde_json::to_vec(&value).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scoring {
    /// Sorted by example id.
    pub scored: Vec<ScoredExample>,
    /// Examples with no prediction.
    pub missing: Vec<String>,
    /// Predictions naming no known example.
    pub unknown: Vec<String>,
}

impl Scoring {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty() && self.unknown.is_empty()
    }
}

fn by_id(predictions: &[SpanPrediction]) -> Result<HashMap<&str, &SpanPrediction>> {
    let mut map = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if map.insert(p.example_id.as_str(), p).is_some() {
            return Err(Error::DuplicateId(p.example_id.clone()));
        }
    }
    Ok(map)
}

/// Scores each example that has a prediction.
pub fn score_predictions(
    examples: &[SpanExample],
    predictions: &[SpanPrediction],
    docs: &HashMap<&str, &Document>,
    mode: Normalization,
) -> Result<Scoring> {
    let preds = by_id(predictions)?;
    let known: HashSet<&str> = examples.iter().map(|e| e.example_id.as_str()).collect();
    let mut out = Scoring::default();
    for ex in examples {
        let doc = docs
            .get(ex.context_doc_id.as_str())
            .ok_or_else(|| Error::UnknownDocument(ex.context_doc_id.clone()))?;
        match preds.get(ex.example_id.as_str()) {
            Some(p) => out.scored.push(metrics::score_example(
                &ex.example_id,
                p.text.as_deref(),
                analysis::gold_text(ex, doc),
                mode,
            )),
            None => out.missing.push(ex.example_id.clone()),
        }
    }
    out.unknown = predictions
        .iter()
        .filter(|p| !known.contains(p.example_id.as_str()))
        .map(|p| p.example_id.clone())
        .collect();
    out.scored.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    out.missing.sort();
    out.unknown.sort();
    Ok(out)
}

/// Digest of a file's bytes, for recording inputs in a [`RunConfig`].
pub fn file_sha256(path: &std::path::Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Mean token F of a sentence baseline against the sentence oracle, over
/// the retrievable examples that have a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dominance {
    pub method_f1: f64,
    pub oracle_f1: f64,
    pub n: usize,
}

impl Dominance {
    pub fn holds(&self) -> bool {
        self.oracle_f1 >= self.method_f1
    }
}

pub fn oracle_dominance(
    examples: &[SpanExample],
    predictions: &[SpanPrediction],
    docs: &HashMap<&str, &Document>,
    mode: Normalization,
) -> Result<Dominance> {
    let preds = by_id(predictions)?;
    let covered: Vec<SpanExample> = examples
        .iter()
        .filter(|e| e.is_retrievable() && preds.contains_key(e.example_id.as_str()))
        .cloned()
        .collect();
    if covered.is_empty() {
        return Err(Error::invalid("no retrievable example has a prediction"));
    }
    let oracle = crate::baselines::retrieve_all(
        &covered,
        docs,
        crate::baselines::SentenceRetriever::Oracle,
    )?;
    let mean_f1 = |ps: &[SpanPrediction]| -> Result<f64> {
        let s = score_predictions(&covered, ps, docs, mode)?;
        Ok(s.scored.iter().map(|x| x.f1).sum::<f64>() / s.scored.len() as f64)
    };
    let own: Vec<SpanPrediction> = covered
        .iter()
        .map(|e| preds[e.example_id.as_str()].clone())
        .collect();
    Ok(Dominance {
        method_f1: 100.0 * mean_f1(&own)?,
        oracle_f1: 100.0 * mean_f1(&oracle)?,
        n: covered.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub config: RunConfig,
    pub overall: EvalReport,
    pub by_label: BTreeMap<String, EvalReport>,
    pub by_flag: BTreeMap<String, EvalReport>,
    pub by_genre: BTreeMap<String, EvalReport>,
    pub by_domain: BTreeMap<String, EvalReport>,
    pub error_categories: analysis::ErrorDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trivial: Option<BTreeMap<String, EvalReport>>,
    pub missing_predictions: Vec<String>,
    pub unknown_predictions: Vec<String>,
}

/// Run metadata that is allowed to vary between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config_hash: String,
    pub tool_version: String,
    pub created_unix_secs: u64,
}

impl ReportMeta {
    pub fn now(config_hash: &str) -> Self {
        ReportMeta {
            config_hash: config_hash.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_secs: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

pub struct ReportInputs<'a> {
    pub examples: &'a [SpanExample],
    pub predictions: &'a [SpanPrediction],
    pub docs: &'a HashMap<&'a str, &'a Document>,
    pub negatives: &'a NegativeRegistry,
    pub trivial: Option<&'a TrivialResources>,
}

/// Joins scored entries back to their example, prediction and document.
pub fn evaluated_items<'a>(
    examples: &'a [SpanExample],
    predictions: &'a [SpanPrediction],
    docs: &HashMap<&str, &'a Document>,
    scored: &'a [ScoredExample],
) -> Result<Vec<Evaluated<'a>>> {
    let preds = by_id(predictions)?;
    let examples: HashMap<&str, &SpanExample> = examples
        .iter()
        .map(|e| (e.example_id.as_str(), e))
        .collect();
    scored
        .iter()
        .map(|s| {
            let id = s.example_id.as_str();
            let (Some(example), Some(prediction)) = (examples.get(id), preds.get(id)) else {
                return Err(Error::invalid(format!("scored example `{id}` is unknown")));
            };
            let doc = docs
                .get(example.context_doc_id.as_str())
                .ok_or_else(|| Error::UnknownDocument(example.context_doc_id.clone()))?;
            Ok(Evaluated {
                example,
                prediction,
                doc,
                scored: s,
            })
        })
        .collect()
}

pub fn build_report(config: RunConfig, inputs: &ReportInputs<'_>) -> Result<Report> {
    let mode = config.normalization;
    let scoring = score_predictions(inputs.examples, inputs.predictions, inputs.docs, mode)?;
    let items = evaluated_items(
        inputs.examples,
        inputs.predictions,
        inputs.docs,
        &scoring.scored,
    )?;
    let trivial = inputs
        .trivial
        .map(|r| analysis::breakdown_by_trivial(&items, r))
        .transpose()?;
    Ok(Report {
        config_hash: config.config_hash(),
        overall: metrics::aggregate(&scoring.scored)?,
        by_label: analysis::breakdown_by_label(&items)?,
        by_flag: analysis::breakdown_by_flag(&items)?,
        by_genre: analysis::domain_split_eval(&items, GenrePartition::PerGenre)?,
        by_domain: analysis::domain_split_eval(&items, GenrePartition::SubtitleVsOther)?,
        error_categories: analysis::error_distribution(&items, inputs.negatives, mode)?,
        trivial,
        missing_predictions: scoring.missing,
        unknown_predictions: scoring.unknown,
        config,
    })
}

fn section(out: &mut String, title: &str, rows: &BTreeMap<String, EvalReport>) {
    if rows.is_empty() {
        return;
    }
    let width = rows
        .keys()
        .map(|k| k.len())
        .max()
        .unwrap_or(0)
        .max(title.len());
    let _ = writeln!(
        out,
        "\n{title:<width$}  {:>7}  {:>7}  {:>7}",
        "EM", "F", "n"
    );
    for (k, r) in rows {
        let _ = writeln!(out, "{k:<width$}  {:>7.2}  {:>7.2}  {:>7}", r.em, r.f1, r.n);
    }
}

/// Plain-text rendering of a report.
pub fn render_table(report: &Report) -> String {
    let mut out = String::new();
    let c = &report.config;
    let _ = writeln!(
        out,
        "method {}  setup {}  normalization {}  config {}",
        c.method,
        c.setup,
        c.normalization,
        &report.config_hash[..12]
    );
    let _ = writeln!(out, "overall  {}", report.overall);
    section(&mut out, "label", &report.by_label);
    section(&mut out, "label row", &report.by_flag);
    section(&mut out, "genre", &report.by_genre);
    section(&mut out, "domain", &report.by_domain);
    if let Some(t) = &report.trivial {
        section(&mut out, "lexical class", t);
    }
    let dist = &report.error_categories;
    if dist.errors > 0 {
        let _ = writeln!(out, "\nerrors ({})", dist.errors);
        for (cat, pct) in &dist.percent {
            let _ = writeln!(
                out,
                "  {:<26} {:>6.2}%  {:>6}",
                cat.as_str(),
                pct,
                dist.counts[cat]
            );
        }
        let _ = writeln!(
            out,
            "  {:<26} {:>6.2}%",
            "partially correct",
            dist.partial_percent()
        );
    }
    if !report.missing_predictions.is_empty() {
        let _ = writeln!(
            out,
            "\nmissing predictions: {}",
            report.missing_predictions.len()
        );
    }
    out
}

/// Side-by-side rows of several runs.
pub fn render_comparison(rows: &[(String, EvalReport)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0).max(6);
    let mut out = format!(
        "{:<width$}  {:>7}  {:>7}  {:>7}\n",
        "method", "EM", "F", "n"
    );
    for (k, r) in rows {
        let _ = writeln!(out, "{k:<width$}  {:>7.2}  {:>7.2}  {:>7}", r.em, r.f1, r.n);
    }
    out
}
