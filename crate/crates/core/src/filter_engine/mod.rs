//! Two-stage rare-word filtering of a large biasing list against a
//! first-pass hypothesis.
//!
//! 1. Common words are removed from the hypothesis, leaving maximal runs of
//!    consecutive rare tokens.
//! 2. Every contiguous span of each run (up to `max_span` tokens) is joined
//!    without separators and matched against the list; the `top_n` closest
//!    entries per span are kept.
//!
//! The union of all kept entries, each with the smallest distance it reached,
//! is the filtered list.

pub mod distance;
pub mod index;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sot::parse_sot;
use crate::text_norm::{CommonWordSet, Token, DEFAULT_COMMON_K};

pub use distance::{edit_distance, edit_distance_within, BitPattern, Matcher};
pub use index::{match_key, Match, MatchIndex, MatchStrategy};

/// A maximal stretch of hypothesis tokens with no common word inside.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RareRun {
    pub tokens: Vec<Token>,
    /// Position of the first token in the marker-free hypothesis.
    pub start_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentCandidate {
    pub run: usize,
    pub offset: usize,
    pub length: usize,
    pub joined: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    pub top_n: usize,
    pub max_span: usize,
    pub common_k: usize,
    #[serde(default)]
    pub distance_cap: Option<usize>,
    #[serde(default)]
    pub output_cap: Option<usize>,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            top_n: 10,
            max_span: 3,
            common_k: DEFAULT_COMMON_K,
            distance_cap: None,
            output_cap: None,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.top_n == 0 {
            return Err(Error::validation("top_n must be at least 1"));
        }
        if self.max_span == 0 {
            return Err(Error::validation("max_span must be at least 1"));
        }
        if self.common_k == 0 {
            return Err(Error::validation("common_k must be at least 1"));
        }
        Ok(())
    }
}

/// Which span produced an entry's best distance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Provenance {
    pub run: usize,
    pub offset: usize,
    pub length: usize,
    pub start_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredEntry {
    pub word: String,
    pub distance: usize,
    pub segment: String,
    #[serde(skip)]
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutput {
    pub entries: Vec<FilteredEntry>,
    pub segments_considered: usize,
}

impl FilterOutput {
    pub fn words(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.word.clone()).collect()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.iter().any(|e| e.word == word)
    }
}

pub fn remove_common(tokens: &[Token], common: &CommonWordSet) -> Vec<RareRun> {
    let mut runs = Vec::new();
    let mut current: Option<RareRun> = None;
    for (i, tok) in tokens.iter().enumerate() {
        if common.is_common(tok.as_str()) {
            runs.extend(current.take());
        } else {
            current
                .get_or_insert_with(|| RareRun {
                    tokens: Vec::new(),
                    start_index: i,
                })
                .tokens
                .push(tok.clone());
        }
    }
    runs.extend(current);
    runs
}

/// All contiguous spans of length `1..=min(len, max_span)`, shortest first.
pub fn enumerate_segments(
    run: &RareRun,
    run_index: usize,
    max_span: usize,
) -> Vec<SegmentCandidate> {
    let len = run.tokens.len();
    let longest = len.min(max_span);
    let mut out = Vec::new();
    for length in 1..=longest {
        for offset in 0..=len - length {
            let joined: String = run.tokens[offset..offset + length]
                .iter()
                .map(Token::as_str)
                .collect();
            out.push(SegmentCandidate {
                run: run_index,
                offset,
                length,
                joined,
            });
        }
    }
    out
}

/// Rare runs of an SOT hypothesis. Speaker changes end a run, and
/// `start_index` counts positions in the hypothesis with markers dropped.
pub fn hypothesis_runs(hypothesis: &str, common: &CommonWordSet) -> Vec<RareRun> {
    let transcript = parse_sot(hypothesis);
    let mut runs = Vec::new();
    let mut base = 0;
    for seg in &transcript.segments {
        for mut run in remove_common(&seg.tokens, common) {
            run.start_index += base;
            runs.push(run);
        }
        base += seg.tokens.len();
    }
    runs
}

pub fn filter(
    hypothesis: &str,
    index: &MatchIndex,
    common: &CommonWordSet,
    params: &FilterParams,
) -> FilterOutput {
    filter_with(hypothesis, index, common, params, MatchStrategy::Indexed)
}

pub fn filter_with(
    hypothesis: &str,
    index: &MatchIndex,
    common: &CommonWordSet,
    params: &FilterParams,
    strategy: MatchStrategy,
) -> FilterOutput {
    let runs = hypothesis_runs(hypothesis, common);
    let mut best: HashMap<u32, FilteredEntry> = HashMap::new();
    let mut cache: HashMap<String, Vec<Match>> = HashMap::new();
    let mut considered = 0;
    for (r, run) in runs.iter().enumerate() {
        for seg in enumerate_segments(run, r, params.max_span) {
            considered += 1;
            let matches = cache
                .entry(seg.joined.clone())
                .or_insert_with(|| index.top_n(&seg.joined, params.top_n, strategy));
            for m in matches.iter() {
                let improves = best.get(&m.entry).is_none_or(|e| m.distance < e.distance);
                if improves {
                    best.insert(
                        m.entry,
                        FilteredEntry {
                            word: index.word(m.entry).to_owned(),
                            distance: m.distance,
                            segment: seg.joined.clone(),
                            provenance: Provenance {
                                run: r,
                                offset: seg.offset,
                                length: seg.length,
                                start_index: run.start_index + seg.offset,
                            },
                        },
                    );
                }
            }
        }
    }
    let mut entries: Vec<FilteredEntry> = best.into_values().collect();
    entries.sort_by(|a, b| {
        a.distance
            .cmp(&b.distance)
            .then_with(|| a.word.cmp(&b.word))
    });
    if let Some(cap) = params.distance_cap {
        entries.retain(|e| e.distance <= cap);
    }
    if let Some(cap) = params.output_cap {
        entries.truncate(cap);
    }
    FilterOutput {
        entries,
        segments_considered: considered,
    }
}
