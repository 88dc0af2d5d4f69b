//! Biasing-list construction: target extraction, distractor sampling,
//! rarity classification, merging and coverage.

use std::collections::{HashMap, HashSet};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{FrequencyTable, ListSource, WordList};
use crate::error::{Error, Result};
use crate::seed;
use crate::sot::parse_sot;
use crate::text_norm::{join_tokens, Token};

/// The full rare-word list with constant-time membership.
#[derive(Debug, Clone)]
pub struct RareLexicon {
    entries: Vec<String>,
    members: HashSet<String>,
    longest_phrase: usize,
}

impl RareLexicon {
    pub fn new(list: &WordList) -> Result<Self> {
        if list.is_empty() {
            return Err(Error::validation("full rare-word list is empty"));
        }
        Ok(Self::from_normalized(list.entries.clone()))
    }

    fn from_normalized(entries: Vec<String>) -> Self {
        let longest_phrase = entries
            .iter()
            .map(|e| e.split(' ').count())
            .max()
            .unwrap_or(1);
        let members = entries.iter().cloned().collect();
        RareLexicon {
            entries,
            members,
            longest_phrase,
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.members.contains(word)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Target,
    Distractor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasEntry {
    pub word: String,
    pub kind: EntryKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasingList {
    pub entries: Vec<BiasEntry>,
    pub seed: u64,
}

impl BiasingList {
    /// Targets first, then distractors. A cap drops distractors before
    /// targets; `shuffle` reorders the result with `seed`.
    pub fn assemble(
        targets: Vec<String>,
        distractors: Vec<String>,
        cap: Option<usize>,
        shuffle: bool,
        seed: u64,
    ) -> Self {
        let mut targets = targets;
        let mut distractors = distractors;
        if let Some(cap) = cap {
            distractors.truncate(cap.saturating_sub(targets.len()));
            targets.truncate(cap);
        }
        let mut entries: Vec<BiasEntry> = targets
            .into_iter()
            .map(|word| BiasEntry {
                word,
                kind: EntryKind::Target,
            })
            .chain(distractors.into_iter().map(|word| BiasEntry {
                word,
                kind: EntryKind::Distractor,
            }))
            .collect();
        if shuffle {
            use rand::seq::SliceRandom;
            entries.shuffle(&mut seed::rng(seed));
        }
        BiasingList { entries, seed }
    }

    pub fn words(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.word.clone()).collect()
    }

    pub fn of_kind(&self, kind: EntryKind) -> Vec<String> {
        self.entries
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.word.clone())
            .collect()
    }

    pub fn targets(&self) -> Vec<String> {
        self.of_kind(EntryKind::Target)
    }

    pub fn distractors(&self) -> Vec<String> {
        self.of_kind(EntryKind::Distractor)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Reference words (or phrases) found in the full list, each once, in order
/// of first occurrence.
pub fn extract_targets(reference: &[Token], lexicon: &RareLexicon) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for start in 0..reference.len() {
        let longest = lexicon.longest_phrase.min(reference.len() - start);
        for len in 1..=longest {
            let candidate = join_tokens(&reference[start..start + len], " ");
            if lexicon.contains(&candidate) && seen.insert(candidate.clone()) {
                out.push(candidate);
            }
        }
    }
    out
}

/// Targets of an SOT reference. Phrases do not span speaker changes.
pub fn extract_targets_sot(reference: &str, lexicon: &RareLexicon) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for seg in parse_sot(reference).segments {
        for t in extract_targets(&seg.tokens, lexicon) {
            if seen.insert(t.clone()) {
                out.push(t);
            }
        }
    }
    out
}

/// Targets under the AMI rarity rule: full-list entries plus any word seen
/// fewer than `threshold` times in `freq`.
pub fn extract_targets_ami(
    reference: &str,
    lexicon: &RareLexicon,
    freq: &FrequencyTable,
    threshold: u64,
) -> Vec<String> {
    let mut out = extract_targets_sot(reference, lexicon);
    let mut seen: HashSet<String> = out.iter().cloned().collect();
    for seg in parse_sot(reference).segments {
        for tok in seg.tokens {
            if classify_rare(tok.as_str(), lexicon, freq, threshold)
                && seen.insert(tok.as_str().to_owned())
            {
                out.push(tok.into_string());
            }
        }
    }
    out
}

/// Draws `n` distinct non-target entries uniformly without replacement.
///
/// Sampling walks a lazily materialized Fisher-Yates shuffle of the list, so
/// for a fixed seed the draw for `n` is a prefix of the draw for any larger
/// `n`. Nested distractor sets make list-size sweeps comparable.
pub fn sample_distractors(
    lexicon: &RareLexicon,
    targets: &[String],
    n: usize,
    seed: u64,
) -> Result<Vec<String>> {
    let excluded: HashSet<&str> = targets
        .iter()
        .map(String::as_str)
        .filter(|t| lexicon.contains(t))
        .collect();
    let available = lexicon.len() - excluded.len();
    if available < n {
        return Err(Error::validation(format!(
            "need {n} distractors but only {available} non-target entries exist (short by {})",
            n - available
        )));
    }
    let mut rng = seed::rng(seed);
    let mut swapped: HashMap<usize, usize> = HashMap::new();
    let len = lexicon.len();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while out.len() < n {
        let j = rng.random_range(i..len);
        let at_j = swapped.get(&j).copied().unwrap_or(j);
        let at_i = swapped.get(&i).copied().unwrap_or(i);
        swapped.insert(j, at_i);
        let word = &lexicon.entries[at_j];
        if !excluded.contains(word.as_str()) {
            out.push(word.clone());
        }
        i += 1;
    }
    Ok(out)
}

pub const DEFAULT_FREQ_THRESHOLD: u64 = 100;

/// A word is rare if it is in the full list or occurs fewer than
/// `threshold` times.
pub fn classify_rare(
    word: &str,
    lexicon: &RareLexicon,
    freq: &FrequencyTable,
    threshold: u64,
) -> bool {
    lexicon.contains(word) || freq.count(word) < threshold
}

/// Union in first-occurrence order.
pub fn merge_lists(lists: &[WordList], source: ListSource) -> WordList {
    WordList::from_entries(lists.iter().flat_map(|l| l.entries.iter()), source)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageStat {
    pub n_targets: usize,
    pub n_targets_present: usize,
    pub coverage: Option<f64>,
}

impl CoverageStat {
    pub fn from_counts(n_targets: usize, n_targets_present: usize) -> Self {
        CoverageStat {
            n_targets,
            n_targets_present,
            coverage: (n_targets > 0).then(|| n_targets_present as f64 / n_targets as f64),
        }
    }

    /// Sums counts across utterances.
    pub fn pooled<'a, I: IntoIterator<Item = &'a CoverageStat>>(stats: I) -> Self {
        let (t, p) = stats.into_iter().fold((0, 0), |(t, p), s| {
            (t + s.n_targets, p + s.n_targets_present)
        });
        Self::from_counts(t, p)
    }
}

pub fn coverage<S: AsRef<str>, C: AsRef<str>>(targets: &[S], candidates: &[C]) -> CoverageStat {
    let pool: HashSet<&str> = candidates.iter().map(AsRef::as_ref).collect();
    let unique: HashSet<&str> = targets.iter().map(AsRef::as_ref).collect();
    let present = unique.iter().filter(|t| pool.contains(*t)).count();
    CoverageStat::from_counts(unique.len(), present)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text_norm::normalize_tokenize;

    fn lexicon(words: &[&str]) -> RareLexicon {
        RareLexicon::new(&WordList::from_entries(words, ListSource::FullRare)).unwrap()
    }

    fn big_lexicon(n: usize) -> RareLexicon {
        let words: Vec<String> = (0..n).map(|i| format!("RARE{i:06}")).collect();
        RareLexicon::from_normalized(words)
    }

    #[test]
    fn targets_in_reference_order() {
        let lex = lexicon(&["STEVE", "CHARACTERISATION", "ZEBRA"]);
        let refs = normalize_tokenize("THE CHARACTERISATION OF STEVE");
        assert_eq!(extract_targets(&refs, &lex), ["CHARACTERISATION", "STEVE"]);
        assert!(extract_targets(&normalize_tokenize("THE OF A"), &lex).is_empty());
        let refs = normalize_tokenize("STEVE AND STEVE");
        assert_eq!(extract_targets(&refs, &lex), ["STEVE"]);
    }

    #[test]
    fn phrase_entries_match_as_units() {
        let lex = lexicon(&["NEW YORK", "YORK"]);
        let refs = normalize_tokenize("IN NEW YORK TODAY");
        assert_eq!(extract_targets(&refs, &lex), ["NEW YORK", "YORK"]);
        assert!(extract_targets_sot("NEW <sc> YORK", &lexicon(&["NEW YORK"])).is_empty());
    }

    #[test]
    fn zero_distractors() {
        let lex = big_lexicon(10);
        assert!(sample_distractors(&lex, &[], 0, 1).unwrap().is_empty());
    }

    #[test]
    fn sampling_is_deterministic_distinct_and_excludes_targets() {
        let lex = big_lexicon(5000);
        let targets = vec!["RARE000001".to_string(), "RARE000002".to_string()];
        let a = sample_distractors(&lex, &targets, 1000, 42).unwrap();
        let b = sample_distractors(&lex, &targets, 1000, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 1000);
        assert!(a.iter().all(|w| !targets.contains(w) && lex.contains(w)));
        assert_ne!(a, sample_distractors(&lex, &targets, 1000, 43).unwrap());
    }

    #[test]
    fn larger_draws_extend_smaller_ones() {
        let lex = big_lexicon(20_000);
        let small = sample_distractors(&lex, &[], 1000, 9).unwrap();
        let large = sample_distractors(&lex, &[], 5000, 9).unwrap();
        assert_eq!(small[..], large[..1000]);
    }

    #[test]
    fn five_thousand_from_full_scale_list() {
        let lex = big_lexicon(209_200);
        let targets = vec!["RARE000010".to_string()];
        let d = sample_distractors(&lex, &targets, 5000, 3).unwrap();
        assert_eq!(d.iter().collect::<HashSet<_>>().len(), 5000);
        assert!(!d.contains(&targets[0]));
    }

    #[test]
    fn exhausting_the_pool_exactly_is_allowed() {
        let lex = lexicon(&["A", "B", "C"]);
        let mut d = sample_distractors(&lex, &["B".into()], 2, 5).unwrap();
        d.sort();
        assert_eq!(d, ["A", "C"]);
        let err = sample_distractors(&lex, &["B".into()], 3, 5).unwrap_err();
        assert!(err.to_string().contains("short by 1"), "{err}");
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        let lex = big_lexicon(20);
        let mut hits = vec![0usize; 20];
        for s in 0..4000u64 {
            for w in sample_distractors(&lex, &[], 5, s).unwrap() {
                let i: usize = w[4..].parse().unwrap();
                hits[i] += 1;
            }
        }
        // expected 1000 each; binomial sd ~ 27
        assert!(hits.iter().all(|&h| (850..1150).contains(&h)), "{hits:?}");
    }

    #[test]
    fn ami_rarity_rule() {
        let lex = lexicon(&["STEVE"]);
        let mut freq = FrequencyTable::default();
        freq.add("STEVE", 1_000_000);
        freq.add("MEETING", 99);
        freq.add("PROJECT", 100);
        assert!(classify_rare("STEVE", &lex, &freq, 100));
        assert!(classify_rare("MEETING", &lex, &freq, 100));
        assert!(!classify_rare("PROJECT", &lex, &freq, 100));
        assert!(classify_rare("UNSEEN", &lex, &freq, 100));
    }

    #[test]
    fn merging_lists() {
        let a = WordList::from_entries(["A", "B"], ListSource::Lecture);
        let b = WordList::from_entries(["B", "C"], ListSource::Lecture);
        let empty = WordList::from_entries(Vec::<String>::new(), ListSource::Lecture);
        let x = WordList::from_entries(["X"], ListSource::Lecture);
        assert_eq!(
            merge_lists(&[a.clone(), b], ListSource::Lecture).entries,
            ["A", "B", "C"]
        );
        assert_eq!(merge_lists(std::slice::from_ref(&a), ListSource::Lecture), a);
        assert_eq!(merge_lists(&[empty, x], ListSource::Lecture).entries, ["X"]);
    }

    #[test]
    fn coverage_ratio() {
        let c = coverage(&["X", "Y"], &["X", "Z"]);
        assert_eq!(
            (c.n_targets, c.n_targets_present, c.coverage),
            (2, 1, Some(0.5))
        );
        assert_eq!(coverage::<&str, &str>(&[], &["X"]).coverage, None);
        assert_eq!(coverage(&["A", "B"], &["A", "B"]).coverage, Some(1.0));
    }

    #[test]
    fn assembling_orders_and_caps() {
        let t = vec!["T1".to_string(), "T2".to_string()];
        let d = vec!["D1".to_string(), "D2".to_string(), "D3".to_string()];
        let list = BiasingList::assemble(t.clone(), d.clone(), None, false, 0);
        assert_eq!(list.words(), ["T1", "T2", "D1", "D2", "D3"]);
        let capped = BiasingList::assemble(t.clone(), d.clone(), Some(3), false, 0);
        assert_eq!(capped.words(), ["T1", "T2", "D1"]);
        let tiny = BiasingList::assemble(t.clone(), d.clone(), Some(1), false, 0);
        assert_eq!(tiny.words(), ["T1"]);
        let shuffled = BiasingList::assemble(t, d, None, true, 11);
        let mut w = shuffled.words();
        w.sort();
        assert_eq!(w, ["D1", "D2", "D3", "T1", "T2"]);
        let mut t_sorted = shuffled.targets();
        t_sorted.sort();
        assert_eq!(t_sorted, ["T1", "T2"]);
        assert_eq!(
            shuffled.targets().len() + shuffled.distractors().len(),
            shuffled.len()
        );
    }

    #[test]
    fn ami_targets_add_infrequent_words() {
        let lex = RareLexicon::new(&WordList::from_entries(
            ["KUBERNETES"],
            ListSource::FullRare,
        ))
        .unwrap();
        let mut freq = FrequencyTable::default();
        freq.add("THE", 500);
        freq.add("MEETING", 120);
        freq.add("GRAPHENE", 3);
        let t = extract_targets_ami(
            "THE MEETING ON GRAPHENE <sc> KUBERNETES THE",
            &lex,
            &freq,
            100,
        );
        assert_eq!(t, ["KUBERNETES", "ON", "GRAPHENE"]);
    }
}
