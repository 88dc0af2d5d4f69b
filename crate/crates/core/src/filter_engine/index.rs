//! Top-N nearest-entry lookup over a biasing list.
//!
//! Entries are bucketed by key length (the entry with whitespace removed).
//! A query visits buckets in order of increasing length difference, which
//! is a lower bound on edit distance, and stops once that difference exceeds
//! the current N-th best distance. Within a bucket, a character-count lower
//! bound skips entries that cannot beat that distance, and each remaining
//! comparison is bounded by it so hopeless candidates are abandoned early.

use std::cmp::Ordering;
use std::collections::HashSet;

use super::distance::Matcher;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub entry: u32,
    pub distance: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MatchStrategy {
    #[default]
    Indexed,
    LinearScan,
}

#[derive(Debug, Clone)]
pub struct MatchIndex {
    words: Vec<String>,
    keys: Vec<char>,
    spans: Vec<(u32, u32)>,
    hists: Vec<Histogram>,
    by_len: Vec<Vec<u32>>,
}

/// Character counts folded into 32 bins. Folding and saturation only ever
/// shrink count differences, so the bound below stays a lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Histogram([u8; 32]);

impl Histogram {
    fn of(key: &[char]) -> Self {
        let mut h = [0u8; 32];
        for &c in key {
            let bin = &mut h[c as usize % 32];
            *bin = bin.saturating_add(1);
        }
        Histogram(h)
    }

    /// Every edit changes at most one count up and one count down.
    fn lower_bound(&self, other: &Histogram) -> usize {
        let (mut surplus, mut deficit) = (0u32, 0u32);
        for (a, b) in self.0.iter().zip(&other.0) {
            surplus += u32::from(a.saturating_sub(*b));
            deficit += u32::from(b.saturating_sub(*a));
        }
        surplus.max(deficit) as usize
    }
}

/// Strips separators so multi-word segments compare against single words.
pub fn match_key(text: &str) -> Vec<char> {
    text.chars().filter(|c| !c.is_whitespace()).collect()
}

impl MatchIndex {
    /// Builds over normalized entries. Repeated entries are kept once.
    pub fn build<S: AsRef<str>>(entries: &[S]) -> Self {
        let mut index = MatchIndex {
            words: Vec::with_capacity(entries.len()),
            keys: Vec::new(),
            spans: Vec::with_capacity(entries.len()),
            hists: Vec::with_capacity(entries.len()),
            by_len: Vec::new(),
        };
        let mut seen = HashSet::with_capacity(entries.len());
        for e in entries {
            let word = e.as_ref();
            if !seen.insert(word) {
                continue;
            }
            let id = index.words.len() as u32;
            let start = index.keys.len() as u32;
            index
                .keys
                .extend(word.chars().filter(|c| !c.is_whitespace()));
            let len = index.keys.len() as u32 - start;
            index.spans.push((start, len));
            index
                .hists
                .push(Histogram::of(&index.keys[start as usize..]));
            index.words.push(word.to_owned());
            let len = len as usize;
            if index.by_len.len() <= len {
                index.by_len.resize_with(len + 1, Vec::new);
            }
            index.by_len[len].push(id);
        }
        index
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    fn key(&self, id: u32) -> &[char] {
        let (start, len) = self.spans[id as usize];
        &self.keys[start as usize..(start + len) as usize]
    }

    /// The `n` entries closest to `query`, ordered by distance then entry.
    pub fn top_n(&self, query: &str, n: usize, strategy: MatchStrategy) -> Vec<Match> {
        if n == 0 || self.is_empty() {
            return Vec::new();
        }
        let key = match_key(query);
        let matcher = Matcher::new(&key);
        match strategy {
            MatchStrategy::Indexed => self.top_n_indexed(&matcher, &Histogram::of(&key), n),
            MatchStrategy::LinearScan => self.top_n_scan(&matcher, n),
        }
    }

    fn rank(&self, a: &Match, b: &Match) -> Ordering {
        a.distance
            .cmp(&b.distance)
            .then_with(|| self.word(a.entry).cmp(self.word(b.entry)))
    }

    fn top_n_scan(&self, matcher: &Matcher, n: usize) -> Vec<Match> {
        // Every entry is scored in full; only the running best n are kept.
        let mut best: Vec<Match> = Vec::with_capacity(n + 1);
        for id in 0..self.words.len() as u32 {
            let cand = Match {
                entry: id,
                distance: matcher.distance(self.key(id)),
            };
            if best.len() == n && self.rank(&cand, &best[n - 1]) != Ordering::Less {
                continue;
            }
            let pos = best
                .binary_search_by(|probe| self.rank(probe, &cand))
                .unwrap_or_else(|p| p);
            best.insert(pos, cand);
            best.truncate(n);
        }
        best
    }

    fn top_n_indexed(&self, matcher: &Matcher, hist: &Histogram, n: usize) -> Vec<Match> {
        let qlen = matcher.len();
        let max_len = self.by_len.len().saturating_sub(1);
        let mut best: Vec<Match> = Vec::with_capacity(n + 1);
        let mut delta = 0usize;
        loop {
            if best.len() == n && delta > best[n - 1].distance {
                break;
            }
            if delta > qlen && qlen + delta > max_len {
                break;
            }
            if delta <= qlen {
                self.scan_bucket(qlen - delta, matcher, hist, n, &mut best);
            }
            if delta > 0 {
                self.scan_bucket(qlen + delta, matcher, hist, n, &mut best);
            }
            delta += 1;
        }
        best
    }

    fn scan_bucket(
        &self,
        len: usize,
        matcher: &Matcher,
        hist: &Histogram,
        n: usize,
        best: &mut Vec<Match>,
    ) {
        let Some(bucket) = self.by_len.get(len) else {
            return;
        };
        for &id in bucket {
            let bound = if best.len() == n {
                best[n - 1].distance
            } else {
                usize::MAX
            };
            if bound != usize::MAX && hist.lower_bound(&self.hists[id as usize]) > bound {
                continue;
            }
            let Some(distance) = matcher.distance_within(self.key(id), bound) else {
                continue;
            };
            let cand = Match {
                entry: id,
                distance,
            };
            if best.len() == n && self.rank(&cand, &best[n - 1]) != Ordering::Less {
                continue;
            }
            let pos = best
                .binary_search_by(|probe| self.rank(probe, &cand))
                .unwrap_or_else(|p| p);
            best.insert(pos, cand);
            best.truncate(n);
        }
    }
}
