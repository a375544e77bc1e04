//! Exact match and token-level F-score.
//!
//! Both metrics compare normalized token sequences: punctuation tokens are
//! dropped and, in the default mode, surfaces are lower-cased. F-score treats
//! the sequences as multisets. A null prediction (or null gold) only agrees
//! with another null.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textproc;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Punctuation removed, case folded.
    #[default]
    Normalized,
    /// EM compares raw strings; F keeps case but still ignores punctuation.
    Strict,
}

impl Normalization {
    pub fn lowercase(&self) -> bool {
        matches!(self, Normalization::Normalized)
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        textproc::normalized(text, self.lowercase())
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(Normalization::Normalized),
            "strict" => Ok(Normalization::Strict),
            other => Err(Error::invalid(format!(
                "metric normalization must be `normalized` or `strict`, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Normalized => "normalized",
            Normalization::Strict => "strict",
        })
    }
}

pub fn exact_match(prediction: Option<&str>, gold: Option<&str>, mode: Normalization) -> u8 {
    match (prediction, gold) {
        (None, None) => 1,
        (Some(p), Some(g)) => {
            let same = match mode {
                Normalization::Normalized => mode.tokens(p) == mode.tokens(g),
                Normalization::Strict => p == g,
            };
            u8::from(same)
        }
        _ => 0,
    }
}

/// Size of the multiset intersection of two token lists.
pub fn shared_tokens(a: &[String], b: &[String]) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in a {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut shared = 0;
    for t in b {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                shared += 1;
            }
        }
    }
    shared
}

/// F-score over already normalized token lists.
pub fn f1_from_tokens(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let shared = shared_tokens(pred, gold);
    if shared == 0 {
        return 0.0;
    }
    let p = shared as f64 / pred.len() as f64;
    let r = shared as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

pub fn token_f1(prediction: Option<&str>, gold: Option<&str>, mode: Normalization) -> f64 {
    match (prediction, gold) {
        (None, None) => 1.0,
        (Some(p), Some(g)) => f1_from_tokens(&mode.tokens(p), &mode.tokens(g)),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub example_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
    pub em: u8,
    pub f1: f64,
}

pub fn score_example(
    example_id: &str,
    prediction: Option<&str>,
    gold: Option<&str>,
    mode: Normalization,
) -> ScoredExample {
    ScoredExample {
        example_id: example_id.to_string(),
        prediction: prediction.map(str::to_string),
        gold: gold.map(str::to_string),
        em: exact_match(prediction, gold, mode),
        f1: token_f1(prediction, gold, mode),
    }
}

/// Mean EM and F as percentages rounded to two decimals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub em: f64,
    pub f1: f64,
    pub n: usize,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EM {:.2}  F {:.2}  (n={})", self.em, self.f1, self.n)
    }
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn aggregate<'a>(scored: impl IntoIterator<Item = &'a ScoredExample>) -> Result<EvalReport> {
    let (mut em, mut f1, mut n) = (0u64, 0.0f64, 0usize);
    for s in scored {
        em += u64::from(s.em);
        f1 += s.f1;
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("cannot aggregate an empty evaluation"));
    }
    Ok(EvalReport {
        em: round2(100.0 * em as f64 / n as f64),
        f1: round2(100.0 * f1 / n as f64),
        n,
    })
}
