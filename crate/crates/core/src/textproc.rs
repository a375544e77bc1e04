//! Word tokenization, metric normalization and rule-based sentence
//! segmentation. Every token and sentence keeps its exact character span so
//! surfaces can always be recovered as `text[span]`.

use serde::{Deserialize, Serialize};

use crate::corpus::CharSpan;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub char_span: CharSpan,
    pub is_punct: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<Token>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_doc_id: Option<String>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn spans(&self) -> Vec<CharSpan> {
        self.tokens.iter().map(|t| t.char_span).collect()
    }

    /// Tokens that are not punctuation.
    pub fn words(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| !t.is_punct)
    }
}

/// Anything that is neither alphanumeric nor whitespace counts as
/// punctuation, which covers Unicode dashes, quotes and ellipses as well as
/// currency and other symbols.
pub fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Splits on Unicode whitespace, then peels leading and trailing punctuation
/// off each chunk, one token per punctuation character. Punctuation inside a
/// word (`VW-Transporter`, `3.5`) stays in the word.
pub fn tokenize(text: &str) -> TokenStream {
    let mut tokens = Vec::new();
    let mut chunk: Vec<(usize, char)> = Vec::new();
    for (idx, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            flush_chunk(&mut chunk, &mut tokens);
        } else {
            chunk.push((idx, c));
        }
    }
    flush_chunk(&mut chunk, &mut tokens);
    TokenStream {
        tokens,
        source_doc_id: None,
    }
}

fn flush_chunk(chunk: &mut Vec<(usize, char)>, out: &mut Vec<Token>) {
    if chunk.is_empty() {
        return;
    }
    let lead = chunk.iter().take_while(|(_, c)| is_punct(*c)).count();
    if lead == chunk.len() {
        out.extend(chunk.iter().map(|&(i, c)| punct_token(i, c)));
        chunk.clear();
        return;
    }
    let trail = chunk.iter().rev().take_while(|(_, c)| is_punct(*c)).count();
    out.extend(chunk[..lead].iter().map(|&(i, c)| punct_token(i, c)));
    let core = &chunk[lead..chunk.len() - trail];
    out.push(Token {
        surface: core.iter().map(|(_, c)| c).collect(),
        char_span: CharSpan::new(core[0].0, core[core.len() - 1].0 + 1),
        is_punct: false,
    });
    out.extend(
        chunk[chunk.len() - trail..]
            .iter()
            .map(|&(i, c)| punct_token(i, c)),
    );
    chunk.clear();
}

fn punct_token(idx: usize, c: char) -> Token {
    Token {
        surface: c.to_string(),
        char_span: CharSpan::new(idx, idx + 1),
        is_punct: true,
    }
}

/// Drops punctuation tokens and, when `lowercase` is set, lower-cases the
/// remaining surfaces. Order and multiplicity are kept.
pub fn normalize_tokens(stream: &TokenStream, lowercase: bool) -> Vec<String> {
    stream
        .words()
        .map(|t| {
            if lowercase {
                t.surface.to_lowercase()
            } else {
                t.surface.clone()
            }
        })
        .collect()
}

/// Shorthand for `normalize_tokens(&tokenize(text), lowercase)`.
pub fn normalized(text: &str, lowercase: bool) -> Vec<String> {
    normalize_tokens(&tokenize(text), lowercase)
}

/// Number of non-punctuation tokens.
pub fn word_count(text: &str) -> usize {
    tokenize(text).words().count()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceIndex {
    pub sentences: Vec<CharSpan>,
}

impl SentenceIndex {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

const TERMINALS: [char; 4] = ['.', '!', '?', '…'];
const CLOSERS: [char; 8] = ['"', '\'', '”', '’', '»', ')', ']', '}'];
const OPENERS: [char; 10] = ['"', '\'', '“', '”', '«', '»', '(', '[', '-', '–'];

/// Rule-based segmentation.
///
/// A sentence ends at a hard newline, or after a run of `. ! ? …` (plus any
/// closing quotes or brackets) that is followed by whitespace and then an
/// uppercase letter, optionally behind opening quotes or a dialogue dash.
/// Sentences are trimmed, so everything between them is whitespace.
pub fn split_sentences(text: &str) -> SentenceIndex {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            push_trimmed(&chars, start, i, &mut sentences);
            start = i + 1;
            i += 1;
            continue;
        }
        if TERMINALS.contains(&c) {
            let mut j = i + 1;
            while j < chars.len() && (TERMINALS.contains(&chars[j]) || CLOSERS.contains(&chars[j]))
            {
                j += 1;
            }
            let mut k = j;
            while k < chars.len() && chars[k].is_whitespace() && chars[k] != '\n' {
                k += 1;
            }
            let mut m = k;
            while m < chars.len() && OPENERS.contains(&chars[m]) {
                m += 1;
            }
            if k > j && m < chars.len() && chars[m].is_uppercase() {
                push_trimmed(&chars, start, j, &mut sentences);
                start = j;
                i = k;
                continue;
            }
            i = j;
            continue;
        }
        i += 1;
    }
    push_trimmed(&chars, start, chars.len(), &mut sentences);
    SentenceIndex { sentences }
}

fn push_trimmed(chars: &[char], mut start: usize, mut end: usize, out: &mut Vec<CharSpan>) {
    while start < end && chars[start].is_whitespace() {
        start += 1;
    }
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    if start < end {
        out.push(CharSpan::new(start, end));
    }
}
