//! Contextual correction of first-pass hypotheses.
//!
//! [`correct_remote`] sends the prompt and hypothesis to a chat-completions
//! endpoint. [`correct_mock`] is a deterministic offline stand-in that snaps
//! near-miss spans of the hypothesis onto filtered biasing entries.

mod remote;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::filter_engine::{MatchIndex, MatchStrategy};
use crate::prompt_builder::PromptText;
use crate::sot::MARKER;
use crate::text_norm::{join_tokens, normalize_tokenize, CommonWordSet, Token};

pub use remote::{
    correct_batch, correct_remote, EndpointConfig, GatewayError, API_KEY_ENV, USER_INSTRUCTION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    #[serde(default)]
    pub max_output_tokens: Option<u32>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            temperature: 0.0,
            max_output_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRequest {
    pub system: PromptText,
    pub user_text: String,
    pub model_id: String,
    #[serde(default)]
    pub decode: DecodeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResponse {
    pub corrected_text: String,
    pub latency_ms: u64,
    pub raw_status: String,
}

pub const DEFAULT_D_MAX: usize = 2;

/// Offline corrector. Settings mirror the filter that produced the list.
#[derive(Debug, Clone)]
pub struct MockCorrector<'a> {
    pub common: &'a CommonWordSet,
    pub max_span: usize,
    pub d_max: usize,
}

struct Replacement {
    start: usize,
    len: usize,
    distance: usize,
    entry: u32,
}

impl MockCorrector<'_> {
    /// Rewrites spans of rare tokens that lie within `d_max` of a filtered
    /// entry. Longer spans win, then smaller distances, then earlier spans;
    /// chosen spans never overlap. Tokens already forming an exact entry are
    /// left alone, which also makes a second pass a no-op.
    pub fn correct<S: AsRef<str>>(&self, hypothesis: &str, filtered: &[S]) -> CorrectionResponse {
        let started = std::time::Instant::now();
        let corrected = if filtered.is_empty() {
            hypothesis.to_owned()
        } else {
            let index = MatchIndex::build(filtered);
            self.rewrite(hypothesis, &index)
        };
        CorrectionResponse {
            corrected_text: corrected,
            latency_ms: started.elapsed().as_millis() as u64,
            raw_status: "mock".into(),
        }
    }

    fn rewrite(&self, hypothesis: &str, index: &MatchIndex) -> String {
        let sides: Vec<&str> = hypothesis.split(MARKER).collect();
        let mut changed = false;
        let last = sides.len() - 1;
        let rewritten: Vec<String> = sides
            .iter()
            .enumerate()
            .map(|(i, side)| {
                let tokens = normalize_tokenize(side);
                match self.rewrite_tokens(&tokens, index) {
                    Some(new) => {
                        changed = true;
                        let body = join_tokens(&new, " ");
                        let lead = if i > 0 { " " } else { "" };
                        let trail = if i < last { " " } else { "" };
                        format!("{lead}{body}{trail}")
                    }
                    None => (*side).to_owned(),
                }
            })
            .collect();
        if changed {
            rewritten.join(MARKER)
        } else {
            hypothesis.to_owned()
        }
    }

    fn rewrite_tokens(&self, tokens: &[Token], index: &MatchIndex) -> Option<Vec<String>> {
        let frozen = exact_occurrences(tokens, index);
        let open = |i: usize| !frozen[i] && !self.common.is_common(tokens[i].as_str());

        let mut candidates = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            if !open(i) {
                i += 1;
                continue;
            }
            let start = i;
            while i < tokens.len() && open(i) {
                i += 1;
            }
            for s in start..i {
                for len in 1..=self.max_span.min(i - s) {
                    let joined: String = tokens[s..s + len].iter().map(Token::as_str).collect();
                    if let Some(best) = index.top_n(&joined, 1, MatchStrategy::Indexed).first() {
                        if best.distance <= self.d_max {
                            candidates.push(Replacement {
                                start: s,
                                len,
                                distance: best.distance,
                                entry: best.entry,
                            });
                        }
                    }
                }
            }
        }
        if candidates.is_empty() {
            return None;
        }
        candidates.sort_by(|a, b| {
            b.len
                .cmp(&a.len)
                .then(a.distance.cmp(&b.distance))
                .then(a.start.cmp(&b.start))
        });
        let mut taken = vec![false; tokens.len()];
        let mut chosen: Vec<&Replacement> = Vec::new();
        for c in &candidates {
            if taken[c.start..c.start + c.len].iter().any(|&t| t) {
                continue;
            }
            taken[c.start..c.start + c.len]
                .iter_mut()
                .for_each(|t| *t = true);
            chosen.push(c);
        }
        chosen.sort_by_key(|c| c.start);

        let mut out = Vec::with_capacity(tokens.len());
        let mut pos = 0;
        for c in chosen {
            out.extend(tokens[pos..c.start].iter().map(|t| t.as_str().to_owned()));
            out.extend(index.word(c.entry).split(' ').map(str::to_owned));
            pos = c.start + c.len;
        }
        out.extend(tokens[pos..].iter().map(|t| t.as_str().to_owned()));
        let unchanged =
            out.len() == tokens.len() && out.iter().zip(tokens).all(|(a, b)| b == a.as_str());
        (!unchanged).then_some(out)
    }
}

/// Marks tokens covered by a verbatim occurrence of some entry.
fn exact_occurrences(tokens: &[Token], index: &MatchIndex) -> Vec<bool> {
    let entries: HashSet<&str> = index.words().iter().map(String::as_str).collect();
    let longest = index
        .words()
        .iter()
        .map(|w| w.split(' ').count())
        .max()
        .unwrap_or(1);
    let mut frozen = vec![false; tokens.len()];
    for s in 0..tokens.len() {
        for len in 1..=longest.min(tokens.len() - s) {
            if entries.contains(join_tokens(&tokens[s..s + len], " ").as_str()) {
                frozen[s..s + len].iter_mut().for_each(|f| *f = true);
            }
        }
    }
    frozen
}

/// Convenience wrapper around [`MockCorrector`].
pub fn correct_mock<S: AsRef<str>>(
    hypothesis: &str,
    filtered: &[S],
    common: &CommonWordSet,
    max_span: usize,
    d_max: usize,
) -> CorrectionResponse {
    MockCorrector {
        common,
        max_span,
        d_max,
    }
    .correct(hypothesis, filtered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn common() -> CommonWordSet {
        CommonWordSet::from_ranked(["THE", "MORE", "THAN", "SPEAKER", "AS", "M"], 5000).unwrap()
    }

    const HYP: &str = "… MORE THAN THE SPEAKER CHARACE THSATION AS STEE …";

    #[test]
    fn worked_example_is_repaired() {
        let out = correct_mock(HYP, &["CHARACTERISATION", "STEVE"], &common(), 3, 3);
        assert_eq!(
            out.corrected_text,
            "MORE THAN THE SPEAKER CHARACTERISATION AS STEVE"
        );
    }

    #[test]
    fn empty_list_is_identity() {
        let out = correct_mock::<&str>(HYP, &[], &common(), 3, 2);
        assert_eq!(out.corrected_text, HYP);
    }

    #[test]
    fn threshold_boundary() {
        // STEE -> STEVE is 1 edit
        let c = common();
        assert_eq!(
            correct_mock("AS STEE", &["STEVE"], &c, 3, 1).corrected_text,
            "AS STEVE"
        );
        assert_eq!(
            correct_mock("AS STEE", &["STEVE"], &c, 3, 0).corrected_text,
            "AS STEE"
        );
    }

    #[test]
    fn speaker_markers_survive() {
        let out = correct_mock("THE STEE <sc> AS STEE", &["STEVE"], &common(), 3, 2);
        assert_eq!(out.corrected_text, "THE STEVE <sc> AS STEVE");
    }

    #[test]
    fn common_words_are_never_touched() {
        let out = correct_mock("THE", &["THEE"], &common(), 3, 2);
        assert_eq!(out.corrected_text, "THE");
    }

    #[test]
    fn exact_entries_are_protected() {
        let out = correct_mock(
            "STEVE STEVENSN",
            &["STEVE", "STEVENSON"],
            &CommonWordSet::empty(),
            3,
            2,
        );
        assert_eq!(out.corrected_text, "STEVE STEVENSON");
    }

    proptest! {
        #[test]
        fn idempotent_and_closed_over_inputs(
            words in prop::collection::vec("[A-D]{1,4}", 0..10),
            list in prop::collection::vec("[A-D]{1,6}( [A-D]{1,3})?", 0..8),
            d_max in 0usize..3,
            max_span in 1usize..4,
        ) {
            let common = CommonWordSet::from_ranked(["A", "B"], 10).unwrap();
            let hyp = words.join(" ");
            let once = correct_mock(&hyp, &list, &common, max_span, d_max).corrected_text;
            let twice = correct_mock(&once, &list, &common, max_span, d_max).corrected_text;
            prop_assert_eq!(&once, &twice);

            let mut allowed: HashSet<String> = normalize_tokenize(&hyp).into_iter().map(Token::into_string).collect();
            for e in &list {
                allowed.extend(e.split(' ').map(str::to_owned));
            }
            for t in normalize_tokenize(&once) {
                prop_assert!(allowed.contains(t.as_str()), "introduced {}", t);
            }
        }
    }
}
