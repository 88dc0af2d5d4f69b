//! Seeded corruption of reference transcripts into synthetic first-pass
//! hypotheses.
//!
//! Each word is corrupted independently with a probability that depends on
//! whether it is common. A corrupted word receives between one and
//! `max_char_edits` character edits (a transposition uses two of that
//! budget, since it costs two Levenshtein edits). Words with two or more
//! edits may also be split in two, which mimics a decoder breaking one rare
//! word into fragments.

use std::collections::BTreeSet;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_io::UtteranceRecord;
use crate::error::{Error, Result};
use crate::seed;
use crate::sot::MARKER;
use crate::text_norm::{normalize_tokenize, CommonWordSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharOpWeights {
    pub substitute: f64,
    pub delete: f64,
    pub insert: f64,
    pub transpose: f64,
}

impl Default for CharOpWeights {
    fn default() -> Self {
        CharOpWeights {
            substitute: 0.4,
            delete: 0.2,
            insert: 0.2,
            transpose: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub p_rare_corrupt: f64,
    pub p_common_corrupt: f64,
    pub char_ops: CharOpWeights,
    pub max_char_edits: usize,
    pub p_word_delete: f64,
    pub p_word_insert: f64,
    pub split_prob: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            p_rare_corrupt: 0.6,
            p_common_corrupt: 0.0,
            char_ops: CharOpWeights::default(),
            max_char_edits: 2,
            p_word_delete: 0.0,
            p_word_insert: 0.0,
            split_prob: 0.5,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    /// Every probability zero: hypotheses equal references.
    pub fn clean(seed: u64) -> Self {
        NoiseSpec {
            p_rare_corrupt: 0.0,
            p_common_corrupt: 0.0,
            p_word_delete: 0.0,
            p_word_insert: 0.0,
            split_prob: 0.0,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_rare_corrupt", self.p_rare_corrupt),
            ("p_common_corrupt", self.p_common_corrupt),
            ("p_word_delete", self.p_word_delete),
            ("p_word_insert", self.p_word_insert),
            ("split_prob", self.split_prob),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        if self.max_char_edits == 0 {
            return Err(Error::validation("max_char_edits must be at least 1"));
        }
        let w = self.char_ops;
        let weights = [w.substitute, w.delete, w.insert, w.transpose];
        if weights.iter().any(|x| !(*x >= 0.0)) || w.substitute + w.insert <= 0.0 {
            return Err(Error::validation(
                "character-op weights must be non-negative with substitute or insert positive",
            ));
        }
        Ok(())
    }

    /// Expected word errors per reference word, before alignment effects.
    ///
    /// A deleted word costs one error. A surviving word costs one
    /// substitution when corrupted plus one insertion when split. Each word
    /// may also be followed by one inserted word.
    pub fn expected_error_rate<'a, I>(&self, reference_words: I, common: &CommonWordSet) -> f64
    where
        I: IntoIterator<Item = &'a str>,
    {
        let multi_edit = if self.max_char_edits >= 2 {
            (self.max_char_edits - 1) as f64 / self.max_char_edits as f64
        } else {
            0.0
        };
        let mut total = 0.0;
        let mut n = 0usize;
        for w in reference_words {
            n += 1;
            let p = if common.is_common(w) {
                self.p_common_corrupt
            } else {
                self.p_rare_corrupt
            };
            let split = if w.chars().count() >= 2 {
                multi_edit * self.split_prob
            } else {
                0.0
            };
            total += self.p_word_delete
                + (1.0 - self.p_word_delete) * p * (1.0 + split)
                + self.p_word_insert;
        }
        if n == 0 {
            0.0
        } else {
            total / n as f64
        }
    }
}

/// How one reference word came out in the hypothesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordTrace {
    pub original: String,
    pub common: bool,
    pub deleted: bool,
    /// Hypothesis tokens produced for this word (two when split).
    pub output: Vec<String>,
    pub edits: usize,
    /// Word inserted after this one, if any.
    pub inserted_after: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Corruptor<'a> {
    spec: &'a NoiseSpec,
    common: &'a CommonWordSet,
    alphabet: Vec<char>,
}

pub fn default_alphabet() -> Vec<char> {
    ('A'..='Z').collect()
}

/// Alphabetic characters used anywhere in the references, sorted.
pub fn corpus_alphabet(records: &[UtteranceRecord]) -> Vec<char> {
    let set: BTreeSet<char> = records
        .iter()
        .flat_map(|r| normalize_tokenize(&r.reference.replace(MARKER, " ")))
        .flat_map(|t| t.into_string().chars().collect::<Vec<_>>())
        .filter(|c| c.is_alphabetic())
        .collect();
    if set.is_empty() {
        default_alphabet()
    } else {
        set.into_iter().collect()
    }
}

#[derive(Clone, Copy)]
enum CharOp {
    Substitute,
    Delete,
    Insert,
    Transpose,
}

impl<'a> Corruptor<'a> {
    pub fn new(
        spec: &'a NoiseSpec,
        common: &'a CommonWordSet,
        alphabet: Vec<char>,
    ) -> Result<Self> {
        spec.validate()?;
        if alphabet.is_empty() {
            return Err(Error::validation("corruption alphabet is empty"));
        }
        Ok(Corruptor {
            spec,
            common,
            alphabet,
        })
    }

    /// Corrupts an SOT reference. The random stream is keyed by
    /// `(spec.seed, utterance_id)`.
    pub fn corrupt_utterance(&self, utterance_id: &str, reference: &str) -> String {
        self.corrupt_traced(utterance_id, reference).0
    }

    pub fn corrupt_traced(
        &self,
        utterance_id: &str,
        reference: &str,
    ) -> (String, Vec<Vec<WordTrace>>) {
        let mut rng = seed::rng_for(self.spec.seed, "simulate", utterance_id);
        let mut sides = Vec::new();
        let mut traces = Vec::new();
        for side in reference.split(MARKER) {
            let words = normalize_tokenize(side);
            let mut out: Vec<String> = Vec::with_capacity(words.len());
            let mut side_trace = Vec::with_capacity(words.len());
            for (i, word) in words.iter().enumerate() {
                let word = word.as_str();
                let is_common = self.common.is_common(word);
                let mut trace = WordTrace {
                    original: word.to_owned(),
                    common: is_common,
                    deleted: false,
                    output: Vec::new(),
                    edits: 0,
                    inserted_after: None,
                };
                let last_chance = out.is_empty() && i + 1 == words.len();
                if rng.random_bool(self.spec.p_word_delete) && !last_chance {
                    trace.deleted = true;
                } else {
                    let p = if is_common {
                        self.spec.p_common_corrupt
                    } else {
                        self.spec.p_rare_corrupt
                    };
                    if rng.random_bool(p) {
                        let (pieces, edits) = self.corrupt_word(word, &mut rng);
                        trace.output = pieces;
                        trace.edits = edits;
                    } else {
                        trace.output = vec![word.to_owned()];
                    }
                    out.extend(trace.output.iter().cloned());
                }
                if rng.random_bool(self.spec.p_word_insert) {
                    let extra = self.random_word(&mut rng);
                    out.push(extra.clone());
                    trace.inserted_after = Some(extra);
                }
                side_trace.push(trace);
            }
            sides.push(out.join(" "));
            traces.push(side_trace);
        }
        (sides.join(&format!(" {MARKER} ")), traces)
    }

    fn random_word(&self, rng: &mut seed::Rng) -> String {
        let ranked = self.common.ranked();
        if ranked.is_empty() {
            let len = rng.random_range(2..=6);
            (0..len)
                .map(|_| self.alphabet[rng.random_range(0..self.alphabet.len())])
                .collect()
        } else {
            ranked[rng.random_range(0..ranked.len())].clone()
        }
    }

    fn random_char(&self, rng: &mut seed::Rng, avoid: Option<char>) -> Option<char> {
        let choices: Vec<char> = self
            .alphabet
            .iter()
            .copied()
            .filter(|c| Some(*c) != avoid)
            .collect();
        if choices.is_empty() {
            None
        } else {
            Some(choices[rng.random_range(0..choices.len())])
        }
    }

    /// Applies 1..=max_char_edits edits; returns the pieces and edit budget
    /// used. The result always differs from the input.
    fn corrupt_word(&self, word: &str, rng: &mut seed::Rng) -> (Vec<String>, usize) {
        let original: Vec<char> = word.chars().collect();
        let mut chars = original.clone();
        let k = rng.random_range(1..=self.spec.max_char_edits);
        let mut budget = k;
        let w = self.spec.char_ops;
        while budget > 0 {
            let transposable: Vec<usize> = (0..chars.len().saturating_sub(1))
                .filter(|&i| chars[i] != chars[i + 1])
                .collect();
            let options = [
                (CharOp::Substitute, w.substitute),
                (
                    CharOp::Delete,
                    if chars.len() >= 2 { w.delete } else { 0.0 },
                ),
                (CharOp::Insert, w.insert),
                (
                    CharOp::Transpose,
                    if budget >= 2 && !transposable.is_empty() {
                        w.transpose
                    } else {
                        0.0
                    },
                ),
            ];
            let total: f64 = options.iter().map(|o| o.1).sum();
            let mut pick = rng.random_range(0.0..total);
            let mut op = CharOp::Substitute;
            for (candidate, weight) in options {
                if weight <= 0.0 {
                    continue;
                }
                op = candidate;
                if pick < weight {
                    break;
                }
                pick -= weight;
            }
            match op {
                CharOp::Substitute => {
                    let pos = rng.random_range(0..chars.len());
                    if let Some(c) = self.random_char(rng, Some(chars[pos])) {
                        chars[pos] = c;
                    }
                    budget -= 1;
                }
                CharOp::Delete => {
                    let pos = rng.random_range(0..chars.len());
                    chars.remove(pos);
                    budget -= 1;
                }
                CharOp::Insert => {
                    let pos = rng.random_range(0..=chars.len());
                    if let Some(c) = self.random_char(rng, None) {
                        chars.insert(pos, c);
                    }
                    budget -= 1;
                }
                CharOp::Transpose => {
                    let i = transposable[rng.random_range(0..transposable.len())];
                    chars.swap(i, i + 1);
                    budget -= 2;
                }
            }
        }
        if chars == original {
            // edits cancelled out; one substitution stays within budget
            let pos = rng.random_range(0..chars.len());
            if let Some(c) = self.random_char(rng, Some(chars[pos])) {
                chars[pos] = c;
            }
        }
        let split_roll = rng.random_bool(self.spec.split_prob);
        if k >= 2 && chars.len() >= 2 && split_roll {
            let at = rng.random_range(1..chars.len());
            let tail = chars.split_off(at);
            return (
                vec![chars.into_iter().collect(), tail.into_iter().collect()],
                k,
            );
        }
        (vec![chars.into_iter().collect()], k)
    }
}

/// Fills every record's hypothesis. Existing hypotheses are an error unless
/// `force` is set.
pub fn corrupt_corpus(
    records: &[UtteranceRecord],
    common: &CommonWordSet,
    spec: &NoiseSpec,
    force: bool,
) -> Result<Vec<UtteranceRecord>> {
    if !force {
        if let Some(r) = records.iter().find(|r| r.hypothesis.is_some()) {
            return Err(Error::validation(format!(
                "record {:?} already has a hypothesis (use force to overwrite)",
                r.id
            )));
        }
    }
    let corruptor = Corruptor::new(spec, common, corpus_alphabet(records))?;
    Ok(records
        .par_iter()
        .map(|r| {
            let mut out = r.clone();
            out.hypothesis = Some(corruptor.corrupt_utterance(&r.id, &r.reference));
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter_engine::edit_distance;
    use crate::sot::marker_count;

    fn common() -> CommonWordSet {
        CommonWordSet::from_ranked(["THE", "OF", "AND", "TO", "A"], 5000).unwrap()
    }

    const REF: &str = "THE CHARACTERISATION OF STEVE <sc> AND TO A LONGITUDINAL ANALYSIS";

    #[test]
    fn zero_probabilities_are_identity() {
        let spec = NoiseSpec::clean(3);
        let c = common();
        let cor = Corruptor::new(&spec, &c, default_alphabet()).unwrap();
        assert_eq!(cor.corrupt_utterance("u", REF), REF);
    }

    #[test]
    fn single_edit_bound_without_splits() {
        let spec = NoiseSpec {
            p_rare_corrupt: 1.0,
            max_char_edits: 1,
            seed: 11,
            ..Default::default()
        };
        let c = common();
        let cor = Corruptor::new(&spec, &c, default_alphabet()).unwrap();
        for i in 0..200 {
            let (_, traces) = cor.corrupt_traced(&format!("u{i}"), REF);
            for t in traces.iter().flatten() {
                assert_eq!(t.output.len(), 1);
                if !t.common {
                    assert_eq!(edit_distance(&t.output[0], &t.original), 1);
                } else {
                    assert_eq!(t.output[0], t.original);
                }
            }
        }
    }

    #[test]
    fn unsplit_words_stay_within_budget() {
        let spec = NoiseSpec {
            p_rare_corrupt: 1.0,
            p_common_corrupt: 0.5,
            max_char_edits: 3,
            seed: 5,
            ..Default::default()
        };
        let c = common();
        let cor = Corruptor::new(&spec, &c, default_alphabet()).unwrap();
        let mut splits = 0;
        for i in 0..300 {
            let (_, traces) = cor.corrupt_traced(&format!("u{i}"), REF);
            for t in traces.iter().flatten() {
                let joined: String = t.output.concat();
                assert!(edit_distance(&joined, &t.original) <= spec.max_char_edits);
                if t.output.len() == 1 && t.edits > 0 {
                    assert!(edit_distance(&t.output[0], &t.original) >= 1);
                }
                if t.output.len() == 2 {
                    splits += 1;
                    assert!(t.edits >= 2);
                }
            }
        }
        assert!(splits > 0);
    }

    #[test]
    fn markers_and_common_words_preserved() {
        let spec = NoiseSpec {
            p_rare_corrupt: 1.0,
            p_word_insert: 0.3,
            p_word_delete: 0.3,
            seed: 2,
            ..Default::default()
        };
        let c = common();
        let cor = Corruptor::new(&spec, &c, default_alphabet()).unwrap();
        for i in 0..100 {
            let (hyp, traces) = cor.corrupt_traced(&format!("u{i}"), REF);
            assert_eq!(marker_count(&hyp), marker_count(REF));
            for t in traces.iter().flatten() {
                if t.common && !t.deleted {
                    assert_eq!(t.output, std::slice::from_ref(&t.original));
                }
            }
            for side in hyp.split(MARKER) {
                assert!(!normalize_tokenize(side).is_empty());
            }
        }
    }

    #[test]
    fn deterministic_per_id_and_seed() {
        let spec = NoiseSpec {
            seed: 9,
            ..Default::default()
        };
        let c = common();
        let cor = Corruptor::new(&spec, &c, default_alphabet()).unwrap();
        assert_eq!(
            cor.corrupt_utterance("u1", REF),
            cor.corrupt_utterance("u1", REF)
        );
        let differs = (0..20).any(|i| {
            cor.corrupt_utterance(&format!("x{i}"), REF) != cor.corrupt_utterance("u1", REF)
        });
        assert!(differs);
    }

    #[test]
    fn corpus_requires_force_to_overwrite() {
        let recs = vec![UtteranceRecord::new("u1", REF).with_hypothesis("X")];
        let spec = NoiseSpec::default();
        assert!(corrupt_corpus(&recs, &common(), &spec, false).is_err());
        let out = corrupt_corpus(&recs, &common(), &spec, true).unwrap();
        assert_ne!(out[0].hypothesis.as_deref(), Some("X"));
        assert!(corrupt_corpus(&[], &common(), &spec, false)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(NoiseSpec {
            p_rare_corrupt: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(NoiseSpec {
            max_char_edits: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn alphabet_comes_from_references() {
        let recs = vec![UtteranceRecord::new("u", "zebra <sc> abc")];
        assert_eq!(corpus_alphabet(&recs), ['A', 'B', 'C', 'E', 'R', 'Z']);
    }
}
