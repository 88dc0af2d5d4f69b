//! Character-level Levenshtein distance.
//!
//! Patterns of up to 64 characters use Myers' bit-vector algorithm (in
//! Hyyrö's formulation for global distance), which processes one text
//! character per step regardless of pattern length. Longer patterns fall back
//! to a two-row dynamic program. Both routes support a distance bound and
//! give up early once the bound can no longer be met.

const WORD: usize = 64;

/// Unit-cost Levenshtein distance between two strings, counted in chars.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (pattern, text) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    Matcher::new(&pattern)
        .distance_within(&text, usize::MAX)
        .expect("unbounded distance always resolves")
}

/// Returns the distance if it is at most `bound`.
pub fn edit_distance_within(a: &str, b: &str, bound: usize) -> Option<usize> {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (pattern, text) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    Matcher::new(&pattern).distance_within(&text, bound)
}

/// A query string preprocessed for repeated comparisons.
#[derive(Debug, Clone)]
pub enum Matcher {
    BitVector(BitPattern),
    Table(Vec<char>),
}

impl Matcher {
    pub fn new(pattern: &[char]) -> Self {
        if pattern.len() <= WORD {
            Matcher::BitVector(BitPattern::new(pattern))
        } else {
            Matcher::Table(pattern.to_vec())
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Matcher::BitVector(p) => p.len,
            Matcher::Table(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn distance(&self, text: &[char]) -> usize {
        self.distance_within(text, usize::MAX)
            .expect("unbounded distance always resolves")
    }

    pub fn distance_within(&self, text: &[char], bound: usize) -> Option<usize> {
        if self.len().abs_diff(text.len()) > bound {
            return None;
        }
        match self {
            Matcher::BitVector(p) => p.distance_within(text, bound),
            Matcher::Table(p) => table_distance_within(p, text, bound),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BitPattern {
    ascii: [u64; 128],
    other: Vec<(char, u64)>,
    len: usize,
}

impl BitPattern {
    fn new(pattern: &[char]) -> Self {
        assert!(pattern.len() <= WORD);
        let mut ascii = [0u64; 128];
        let mut other: Vec<(char, u64)> = Vec::new();
        for (i, &c) in pattern.iter().enumerate() {
            let bit = 1u64 << i;
            if (c as u32) < 128 {
                ascii[c as usize] |= bit;
            } else {
                match other.binary_search_by_key(&c, |e| e.0) {
                    Ok(pos) => other[pos].1 |= bit,
                    Err(pos) => other.insert(pos, (c, bit)),
                }
            }
        }
        BitPattern {
            ascii,
            other,
            len: pattern.len(),
        }
    }

    #[inline]
    fn peq(&self, c: char) -> u64 {
        if (c as u32) < 128 {
            self.ascii[c as usize]
        } else {
            self.other
                .binary_search_by_key(&c, |e| e.0)
                .map(|pos| self.other[pos].1)
                .unwrap_or(0)
        }
    }

    fn distance_within(&self, text: &[char], bound: usize) -> Option<usize> {
        let m = self.len;
        let n = text.len();
        if m == 0 {
            return (n <= bound).then_some(n);
        }
        // Bits above the pattern never carry into lower bits, so no masking.
        let high = 1u64 << (m - 1);
        let mut pv = !0u64;
        let mut mv = 0u64;
        let mut score = m;
        if bound >= m + n {
            // The bound can never bite, so skip the per-step check.
            for &c in text {
                let eq = self.peq(c);
                let xv = eq | mv;
                let xh = ((eq & pv).wrapping_add(pv) ^ pv) | eq;
                let ph = mv | !(xh | pv);
                let mh = pv & xh;
                score += usize::from(ph & high != 0);
                score -= usize::from(mh & high != 0);
                let ph = (ph << 1) | 1;
                pv = (mh << 1) | !(xv | ph);
                mv = ph & xv;
            }
            return Some(score);
        }
        for (j, &c) in text.iter().enumerate() {
            let eq = self.peq(c);
            let xv = eq | mv;
            let xh = ((eq & pv).wrapping_add(pv) ^ pv) | eq;
            let mut ph = mv | !(xh | pv);
            let mut mh = pv & xh;
            score += usize::from(ph & high != 0);
            score -= usize::from(mh & high != 0);
            // Row zero grows by one per text character.
            ph = (ph << 1) | 1;
            mh <<= 1;
            pv = mh | !(xv | ph);
            mv = ph & xv;
            // Each remaining column lowers the final score by at most one.
            let remaining = n - j - 1;
            if score > bound.saturating_add(remaining) {
                return None;
            }
        }
        (score <= bound).then_some(score)
    }
}

fn table_distance_within(a: &[char], b: &[char], bound: usize) -> Option<usize> {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        let mut row_min = cur[0];
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
            row_min = row_min.min(cur[j]);
        }
        if row_min > bound {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[b.len()];
    (d <= bound).then_some(d)
}
