//! Tokenization, normalization and the common-word registry.
//!
//! Words are NFC-normalized, uppercased, and stripped of leading and trailing
//! punctuation. Internal characters (apostrophes, hyphens) are kept, so
//! `it's` becomes `IT'S` and `state-of-the-art.` becomes `STATE-OF-THE-ART`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus_io::FrequencyTable;
use crate::error::{Error, Result};

/// A normalized word: uppercase, no whitespace, no outer punctuation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    /// Normalizes a single word. Returns `None` when nothing survives.
    pub fn new(raw: &str) -> Option<Token> {
        normalize_word(raw).map(Token)
    }

    pub(crate) fn from_normalized(word: String) -> Token {
        debug_assert!(!word.is_empty() && !word.contains(char::is_whitespace));
        Token(word)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl PartialEq<str> for Token {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for Token {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

fn normalize_word(raw: &str) -> Option<String> {
    let upper: String = raw.nfc().collect::<String>().to_uppercase().nfc().collect();
    let trimmed = upper.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_owned())
    }
}

/// Splits on whitespace and normalizes each word, dropping empties.
///
/// ```
/// use biasforge::text_norm::normalize_tokenize;
/// let toks = normalize_tokenize("more than the Speaker");
/// assert_eq!(toks, ["MORE", "THAN", "THE", "SPEAKER"]);
/// ```
pub fn normalize_tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace().filter_map(Token::new).collect()
}

/// Normalizes a word-list entry, which may be a multi-word phrase. Words are
/// re-joined with a single space.
pub fn normalize_phrase(text: &str) -> Option<String> {
    let tokens = normalize_tokenize(text);
    if tokens.is_empty() {
        return None;
    }
    Some(join_tokens(&tokens, " "))
}

pub fn join_tokens<T: AsRef<str>>(tokens: &[T], sep: &str) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        out.push_str(t.as_ref());
    }
    out
}

/// The `k` most frequent words, used to prune hypotheses before matching.
#[derive(Debug, Clone, Default)]
pub struct CommonWordSet {
    ranked: Vec<String>,
    members: HashSet<String>,
    k: usize,
}

pub const DEFAULT_COMMON_K: usize = 5000;

impl CommonWordSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Takes the first `k` distinct words of an already ranked list (most
    /// frequent first).
    pub fn from_ranked<I, S>(ranked: I, k: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if k == 0 {
            return Err(Error::validation("common-word count k must be positive"));
        }
        let mut set = CommonWordSet {
            k,
            ..Default::default()
        };
        for word in ranked {
            if set.ranked.len() == k {
                break;
            }
            if let Some(w) = normalize_word(word.as_ref()) {
                if set.members.insert(w.clone()) {
                    set.ranked.push(w);
                }
            }
        }
        Ok(set)
    }

    /// Ranks by descending count; equal counts are ordered lexicographically.
    pub fn from_frequencies(table: &FrequencyTable, k: usize) -> Result<Self> {
        let mut by_count: Vec<(&str, u64)> = table.iter().collect();
        by_count.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_ranked(by_count.into_iter().map(|(w, _)| w), k)
    }

    pub fn is_common(&self, word: &str) -> bool {
        self.members.contains(word)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ranked(&self) -> &[String] {
        &self.ranked
    }
}
