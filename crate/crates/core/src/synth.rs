//! Synthetic corpora: pronounceable pseudo-words, a ranked common list, a
//! large disjoint rare list and SOT references mixing the two.
//!
//! Common words are short (one or two syllables) and drawn with a Zipf
//! law over their rank; rare words are three or four syllables and drawn
//! uniformly, at a fixed per-word rate.

use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{ListSource, UtteranceRecord, WordList};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};
use crate::sot::{serialize_sot, SpeakerSegment};

const ONSETS: &[&str] = &[
    "B", "C", "D", "F", "G", "H", "J", "K", "L", "M", "N", "P", "R", "S", "T", "V", "W", "Z", "BR",
    "CH", "DR", "GR", "PL", "SH", "ST", "TH", "TR",
];
const NUCLEI: &[&str] = &["A", "E", "I", "O", "U", "AI", "EA", "OU"];
const CODAS: &[&str] = &["", "", "", "N", "R", "S", "T", "L", "M", "K"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub utterances: usize,
    pub rare_list_size: usize,
    pub common_size: usize,
    /// Probability that a reference word is drawn from the rare list.
    pub rare_rate: f64,
    pub min_speakers: usize,
    pub max_speakers: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            utterances: 500,
            rare_list_size: 209_200,
            common_size: 5000,
            rare_rate: 0.12,
            min_speakers: 2,
            max_speakers: 3,
            min_words: 4,
            max_words: 12,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rare_rate) {
            return Err(Error::validation("rare_rate must lie in [0, 1]"));
        }
        if self.common_size == 0 || self.rare_list_size == 0 {
            return Err(Error::validation("word lists must be non-empty"));
        }
        if self.min_speakers == 0 || self.min_speakers > self.max_speakers {
            return Err(Error::validation("speaker range is empty"));
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err(Error::validation("words-per-segment range is empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub rare: WordList,
    /// Most frequent first.
    pub common: Vec<String>,
    pub records: Vec<UtteranceRecord>,
}

fn syllable(rng: &mut Rng) -> String {
    let mut s = String::new();
    s.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
    s.push_str(NUCLEI[rng.random_range(0..NUCLEI.len())]);
    s.push_str(CODAS[rng.random_range(0..CODAS.len())]);
    s
}

fn pseudo_word(rng: &mut Rng, syllables: std::ops::RangeInclusive<usize>) -> String {
    let n = rng.random_range(syllables);
    (0..n).map(|_| syllable(rng)).collect()
}

fn unique_words(
    rng: &mut Rng,
    n: usize,
    syllables: std::ops::RangeInclusive<usize>,
    taken: &mut HashSet<String>,
) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = pseudo_word(rng, syllables.clone());
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Cumulative Zipf weights over ranks 1..=n.
fn zipf_cdf(n: usize) -> Vec<f64> {
    let mut acc = 0.0;
    (1..=n)
        .map(|r| {
            acc += 1.0 / r as f64;
            acc
        })
        .collect()
}

fn zipf_draw(rng: &mut Rng, cdf: &[f64]) -> usize {
    let x = rng.random_range(0.0..cdf[cdf.len() - 1]);
    cdf.partition_point(|c| *c <= x).min(cdf.len() - 1)
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = seed::rng_for(config.seed, "synth", "lexicon");
    let mut taken = HashSet::new();
    let common = unique_words(&mut rng, config.common_size, 1..=2, &mut taken);
    let mut rare = unique_words(&mut rng, config.rare_list_size, 3..=4, &mut taken);
    rare.sort();
    let cdf = zipf_cdf(common.len());

    let width = config.utterances.max(1).to_string().len();
    let mut records = Vec::with_capacity(config.utterances);
    for u in 0..config.utterances {
        let id = format!("utt{u:0width$}");
        let mut rng = seed::rng_for(config.seed, "synth", &id);
        let speakers = rng.random_range(config.min_speakers..=config.max_speakers);
        let mut segments = Vec::with_capacity(speakers);
        let mut start = 0.0;
        for s in 0..speakers {
            start += rng.random_range(0.5..3.0);
            let n_words = rng.random_range(config.min_words..=config.max_words);
            let words: Vec<&str> = (0..n_words)
                .map(|_| {
                    if rng.random_bool(config.rare_rate) {
                        rare[rng.random_range(0..rare.len())].as_str()
                    } else {
                        common[zipf_draw(&mut rng, &cdf)].as_str()
                    }
                })
                .collect();
            let start_time = (start * 100.0_f64).round() / 100.0;
            segments.push(SpeakerSegment::new(
                format!("spk{s}"),
                start_time,
                &words.join(" "),
            ));
        }
        let mut record = UtteranceRecord::new(id, serialize_sot(&segments)?);
        record.tags.insert("dataset".into(), "synthetic".into());
        records.push(record);
    }
    Ok(SynthCorpus {
        rare: WordList::from_entries(rare, ListSource::FullRare),
        common,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sot::{marker_count, parse_sot};

    fn small() -> SynthConfig {
        SynthConfig {
            utterances: 40,
            rare_list_size: 3000,
            common_size: 500,
            seed: 4,
            ..Default::default()
        }
    }

    #[test]
    fn lists_are_disjoint_and_sized() {
        let c = generate(&small()).unwrap();
        assert_eq!(c.common.len(), 500);
        assert_eq!(c.rare.len(), 3000);
        let common: HashSet<&String> = c.common.iter().collect();
        assert!(c.rare.entries.iter().all(|w| !common.contains(w)));
    }

    #[test]
    fn references_are_sot_with_rare_words() {
        let c = generate(&small()).unwrap();
        let rare: HashSet<&str> = c.rare.entries.iter().map(String::as_str).collect();
        let mut n_rare = 0;
        let mut n = 0;
        for r in &c.records {
            let t = parse_sot(&r.reference);
            assert!(!t.malformed);
            assert!((1..=2).contains(&marker_count(&r.reference)));
            for tok in t.segments.iter().flat_map(|s| &s.tokens) {
                n += 1;
                n_rare += usize::from(rare.contains(tok.as_str()));
            }
        }
        let rate = n_rare as f64 / n as f64;
        assert!((0.07..0.17).contains(&rate), "rare rate {rate}");
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.rare, b.rare);
    }
}
