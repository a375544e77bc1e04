//! Sentence-level retrieval baselines and the sentence oracle.
//!
//! Both baselines pick the single document sentence most similar to the
//! query by cosine similarity: over tf-idf weighted character n-grams, or
//! over externally computed dense sentence embeddings. The oracle returns the
//! sentence that overlaps the gold span most, bounding what any
//! sentence-level method can reach.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CharSpan, Document, SpanExample};
use crate::decoder::SpanPrediction;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::textproc::{self, SentenceIndex, TokenStream};

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfIdfConfig {
    pub ngram_lengths: BTreeSet<usize>,
    pub max_features: usize,
    /// N-grams never cross whitespace and carry no boundary markers.
    pub within_word: bool,
    pub lowercase: bool,
}

impl Default for TfIdfConfig {
    fn default() -> Self {
        TfIdfConfig {
            ngram_lengths: [2, 3, 4].into_iter().collect(),
            max_features: 300_000,
            within_word: true,
            lowercase: true,
        }
    }
}

impl TfIdfConfig {
    /// Character n-grams of `text`, with repetition.
    pub fn ngrams(&self, text: &str) -> Vec<String> {
        let text = if self.lowercase {
            text.to_lowercase()
        } else {
            text.to_string()
        };
        let mut out = Vec::new();
        let mut push_all = |chars: &[char]| {
            for &n in &self.ngram_lengths {
                if n == 0 || n > chars.len() {
                    continue;
                }
                out.extend(chars.windows(n).map(|w| w.iter().collect::<String>()));
            }
        };
        if self.within_word {
            for word in text.split_whitespace() {
                push_all(&word.chars().collect::<Vec<_>>());
            }
        } else {
            let joined = text.split_whitespace().collect::<Vec<_>>().join(" ");
            push_all(&joined.chars().collect::<Vec<_>>());
        }
        out
    }
}

/// Sparse L2-normalized vector, entries sorted by feature index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SentenceVector {
    pub entries: Vec<(u32, f64)>,
}

impl SentenceVector {
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    /// Dot product; equal to the cosine for normalized vectors.
    pub fn dot(&self, other: &SentenceVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, wa) = self.entries[i];
            let (b, wb) = other.entries[j];
            match a.cmp(&b) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += wa * wb;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    pub format_version: u32,
    pub config: TfIdfConfig,
    pub n_documents: usize,
    /// Retained features in index order (lexicographic).
    pub features: Vec<String>,
    pub idf: Vec<f64>,
    #[serde(skip)]
    vocabulary: HashMap<String, u32>,
}

/// Fits document frequencies over `sentences`. Raw term counts are used as
/// tf; idf is `ln((1 + N) / (1 + df)) + 1`. When more than `max_features`
/// n-grams occur, the ones with the highest df survive (ties broken by
/// lexicographic order).
pub fn fit_tfidf<'a>(
    sentences: impl IntoIterator<Item = &'a str>,
    config: TfIdfConfig,
) -> Result<TfIdfModel> {
    let mut df: HashMap<String, usize> = HashMap::new();
    let mut n = 0usize;
    for sentence in sentences {
        n += 1;
        let unique: HashSet<String> = config.ngrams(sentence).into_iter().collect();
        for g in unique {
            *df.entry(g).or_default() += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid(
            "tf-idf needs at least one training sentence",
        ));
    }
    let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(config.max_features);
    ranked.sort_by(|a, b| a.0.cmp(&b.0));

    let idf = ranked
        .iter()
        .map(|(_, d)| ((1.0 + n as f64) / (1.0 + *d as f64)).ln() + 1.0)
        .collect();
    let features = ranked.into_iter().map(|(g, _)| g).collect();
    Ok(TfIdfModel::from_parts(config, n, features, idf))
}

impl TfIdfModel {
    fn from_parts(
        config: TfIdfConfig,
        n_documents: usize,
        features: Vec<String>,
        idf: Vec<f64>,
    ) -> Self {
        let vocabulary = features
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i as u32))
            .collect();
        TfIdfModel {
            format_version: MODEL_FORMAT_VERSION,
            config,
            n_documents,
            features,
            idf,
            vocabulary,
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_index(&self, ngram: &str) -> Option<u32> {
        self.vocabulary.get(ngram).copied()
    }

    pub fn df_idf(&self, ngram: &str) -> Option<f64> {
        self.feature_index(ngram).map(|i| self.idf[i as usize])
    }

    /// tf-idf vector of `text`; n-grams outside the vocabulary are ignored.
    pub fn vectorize(&self, text: &str) -> SentenceVector {
        let mut counts: HashMap<u32, f64> = HashMap::new();
        for g in self.config.ngrams(text) {
            if let Some(i) = self.feature_index(&g) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(i, c)| (i, c * self.idf[i as usize]))
            .collect();
        entries.sort_by_key(|(i, _)| *i);
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut entries {
                *w /= norm;
            }
        }
        SentenceVector { entries }
    }

    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        cosine_sparse(&self.vectorize(a), &self.vectorize(b))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write_text(path, &serde_json::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: TfIdfModel = serde_json::from_str(&raw)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "tf-idf model format {} is not supported (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        if m.features.len() != m.idf.len() {
            return Err(Error::invalid(
                "tf-idf model has mismatched feature and idf lengths",
            ));
        }
        Ok(TfIdfModel::from_parts(
            m.config,
            m.n_documents,
            m.features,
            m.idf,
        ))
    }
}

/// Cosine of two normalized sparse vectors, clamped to `[0, 1]` against
/// rounding. Zero vectors have similarity 0.
pub fn cosine_sparse(a: &SentenceVector, b: &SentenceVector) -> f64 {
    if a.is_zero() || b.is_zero() {
        return 0.0;
    }
    a.dot(b).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub sentence_index: usize,
    pub span: CharSpan,
    pub similarity: f64,
}

/// Arg-max over sentence scores; the earliest sentence wins ties.
fn argmax(sentences: &SentenceIndex, scores: impl Iterator<Item = f64>) -> Result<Retrieval> {
    let mut best: Option<Retrieval> = None;
    for (i, (span, score)) in sentences.sentences.iter().zip(scores).enumerate() {
        if best.is_none_or(|b| score > b.similarity) {
            best = Some(Retrieval {
                sentence_index: i,
                span: *span,
                similarity: score,
            });
        }
    }
    best.ok_or_else(|| Error::invalid("document has no sentences"))
}

pub fn retrieve_tfidf(
    model: &TfIdfModel,
    query: &str,
    document: &str,
    sentences: &SentenceIndex,
) -> Result<Retrieval> {
    let vectors = sentence_vectors(model, document, sentences);
    retrieve_tfidf_cached(model, query, sentences, &vectors)
}

/// Vectors of every sentence in a document, for reuse across queries.
pub fn sentence_vectors(
    model: &TfIdfModel,
    document: &str,
    sentences: &SentenceIndex,
) -> Vec<SentenceVector> {
    sentences
        .sentences
        .iter()
        .map(|s| model.vectorize(s.slice(document).unwrap_or_default()))
        .collect()
}

pub fn retrieve_tfidf_cached(
    model: &TfIdfModel,
    query: &str,
    sentences: &SentenceIndex,
    vectors: &[SentenceVector],
) -> Result<Retrieval> {
    let q = model.vectorize(query);
    argmax(sentences, vectors.iter().map(|v| cosine_sparse(&q, v)))
}

/// Source of dense vectors keyed by query or sentence identifier.
pub trait EmbeddingSource {
    fn embedding(&self, key: &str) -> Option<&[f64]>;
}

impl EmbeddingSource for HashMap<String, Vec<f64>> {
    fn embedding(&self, key: &str) -> Option<&[f64]> {
        self.get(key).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub key: String,
    pub vector: Vec<f64>,
}

/// Embedding JSONL loaded into memory.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingFile {
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingFile {
    pub fn load(path: &Path) -> Result<Self> {
        let mut vectors = HashMap::new();
        for r in jsonl::read::<EmbeddingRecord>(path)? {
            if vectors.insert(r.key.clone(), r.vector).is_some() {
                return Err(Error::DuplicateId(r.key));
            }
        }
        Ok(EmbeddingFile { vectors })
    }

    pub fn from_records(records: impl IntoIterator<Item = EmbeddingRecord>) -> Self {
        EmbeddingFile {
            vectors: records.into_iter().map(|r| (r.key, r.vector)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingSource for EmbeddingFile {
    fn embedding(&self, key: &str) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }
}

/// Key of a document sentence in embedding files.
pub fn sentence_key(doc_id: &str, span: &CharSpan) -> String {
    format!("{doc_id}@{}-{}", span.start, span.end)
}

/// Key of an example's query in embedding files.
pub fn query_key(example_id: &str) -> String {
    format!("q:{example_id}")
}

pub fn cosine_dense(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "embedding dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn retrieve_embedding(
    source: &(impl EmbeddingSource + ?Sized),
    query_key: &str,
    doc_id: &str,
    sentences: &SentenceIndex,
) -> Result<Retrieval> {
    let q = source
        .embedding(query_key)
        .ok_or_else(|| Error::MissingEmbedding(query_key.to_string()))?;
    let scores = sentences
        .sentences
        .iter()
        .map(|s| {
            let key = sentence_key(doc_id, s);
            let v = source.embedding(&key).ok_or(Error::MissingEmbedding(key))?;
            cosine_dense(q, v)
        })
        .collect::<Result<Vec<_>>>()?;
    argmax(sentences, scores.into_iter())
}

/// The sentence sharing the most word tokens with the gold span, counted by
/// position. Character overlap breaks ties between equal token counts (it
/// only matters when the gold span holds no word tokens), then the earliest
/// sentence wins.
pub fn oracle_sentence(
    tokens: &TokenStream,
    sentences: &SentenceIndex,
    gold: &CharSpan,
) -> Result<Retrieval> {
    let gold_words: Vec<CharSpan> = tokens
        .words()
        .map(|t| t.char_span)
        .filter(|s| gold.contains(s))
        .collect();
    let mut best: Option<(usize, usize, usize)> = None;
    for (i, s) in sentences.sentences.iter().enumerate() {
        let shared = gold_words.iter().filter(|w| s.contains(w)).count();
        let chars = s.intersection_len(gold);
        if best.is_none_or(|(bs, bc, _)| (shared, chars) > (bs, bc)) {
            best = Some((shared, chars, i));
        }
    }
    let (shared, _, i) = best.ok_or_else(|| Error::invalid("document has no sentences"))?;
    Ok(Retrieval {
        sentence_index: i,
        span: sentences.sentences[i],
        similarity: if gold_words.is_empty() {
            0.0
        } else {
            shared as f64 / gold_words.len() as f64
        },
    })
}

/// Convenience wrapper tokenizing and segmenting the document itself.
pub fn oracle_for_document(doc: &Document, gold: &CharSpan) -> Result<Retrieval> {
    oracle_sentence(
        &textproc::tokenize(&doc.text),
        &textproc::split_sentences(&doc.text),
        gold,
    )
}

/// Which sentence-level method [`retrieve_all`] runs.
#[derive(Clone, Copy)]
pub enum SentenceRetriever<'a> {
    TfIdf(&'a TfIdfModel),
    Embedding(&'a (dyn EmbeddingSource + Sync)),
    /// Irretrievable examples get a null answer.
    Oracle,
}

impl SentenceRetriever<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            SentenceRetriever::TfIdf(_) => "tfidf",
            SentenceRetriever::Embedding(_) => "embedding",
            SentenceRetriever::Oracle => "oracle",
        }
    }
}

struct DocCache {
    tokens: TokenStream,
    sentences: SentenceIndex,
    vectors: Vec<SentenceVector>,
}

/// Sentence predictions for every example, sorted by example id.
pub fn retrieve_all(
    examples: &[SpanExample],
    docs: &HashMap<&str, &Document>,
    retriever: SentenceRetriever<'_>,
) -> Result<Vec<SpanPrediction>> {
    let mut needed: Vec<&str> = examples.iter().map(|e| e.context_doc_id.as_str()).collect();
    needed.sort_unstable();
    needed.dedup();
    let caches: HashMap<&str, DocCache> = needed
        .par_iter()
        .map(|id| {
            let doc = docs
                .get(id)
                .ok_or_else(|| Error::UnknownDocument(id.to_string()))?;
            let sentences = textproc::split_sentences(&doc.text);
            let vectors = match retriever {
                SentenceRetriever::TfIdf(model) => sentence_vectors(model, &doc.text, &sentences),
                _ => Vec::new(),
            };
            let tokens = match retriever {
                SentenceRetriever::Oracle => textproc::tokenize(&doc.text),
                _ => TokenStream::default(),
            };
            Ok((
                *id,
                DocCache {
                    tokens,
                    sentences,
                    vectors,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let mut out = examples
        .par_iter()
        .map(|ex| {
            let doc = docs[ex.context_doc_id.as_str()];
            let cache = &caches[ex.context_doc_id.as_str()];
            let hit = match retriever {
                SentenceRetriever::TfIdf(model) => Some(retrieve_tfidf_cached(
                    model,
                    &ex.query,
                    &cache.sentences,
                    &cache.vectors,
                )?),
                SentenceRetriever::Embedding(source) => Some(retrieve_embedding(
                    source,
                    &query_key(&ex.example_id),
                    &ex.context_doc_id,
                    &cache.sentences,
                )?),
                SentenceRetriever::Oracle => ex
                    .gold_span
                    .map(|g| oracle_sentence(&cache.tokens, &cache.sentences, &g))
                    .transpose()?,
            };
            Ok(SpanPrediction {
                example_id: ex.example_id.clone(),
                span: hit.map(|r| r.span),
                text: hit.and_then(|r| doc.slice(&r.span)).map(str::to_string),
                score: hit.map_or(0.0, |r| r.similarity),
                null_score: None,
                best_slice: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    Ok(out)
}

/// A sentence or query to embed, as exported for an external encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub key: String,
    pub text: String,
}

/// Every query and every context sentence the embedding baseline will look up.
pub fn embedding_requests(
    examples: &[SpanExample],
    docs: &HashMap<&str, &Document>,
) -> Result<Vec<EmbeddingRequest>> {
    let mut out = Vec::new();
    let mut seen_docs = HashSet::new();
    for ex in examples {
        out.push(EmbeddingRequest {
            key: query_key(&ex.example_id),
            text: ex.query.clone(),
        });
        if !seen_docs.insert(ex.context_doc_id.as_str()) {
            continue;
        }
        let doc = docs
            .get(ex.context_doc_id.as_str())
            .ok_or_else(|| Error::UnknownDocument(ex.context_doc_id.clone()))?;
        for span in textproc::split_sentences(&doc.text).sentences {
            out.push(EmbeddingRequest {
                key: sentence_key(&doc.doc_id, &span),
                text: doc.slice(&span).unwrap_or_default().to_string(),
            });
        }
    }
    Ok(out)
}
