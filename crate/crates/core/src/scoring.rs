//! Word alignment and WER / B-WER / U-WER.
//!
//! Substitutions and deletions belong to the biased class when the reference
//! word is in the biasing set; insertions when the inserted hypothesis word
//! is. Corpus figures pool counts across utterances before dividing.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias_catalog::CoverageStat;
use crate::sot::{flatten_for_scoring, parse_sot, MarkerPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Match {
        reference: String,
        hypothesis: String,
    },
    Substitute {
        reference: String,
        hypothesis: String,
    },
    Delete {
        reference: String,
    },
    Insert {
        hypothesis: String,
    },
}

impl EditOp {
    pub fn cost(&self) -> usize {
        usize::from(!matches!(self, EditOp::Match { .. }))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub ops: Vec<EditOp>,
}

impl Alignment {
    pub fn cost(&self) -> usize {
        self.ops.iter().map(EditOp::cost).sum()
    }

    pub fn reference_side(&self) -> Vec<&str> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                EditOp::Match { reference, .. }
                | EditOp::Substitute { reference, .. }
                | EditOp::Delete { reference } => Some(reference.as_str()),
                EditOp::Insert { .. } => None,
            })
            .collect()
    }

    pub fn hypothesis_side(&self) -> Vec<&str> {
        self.ops
            .iter()
            .filter_map(|op| match op {
                EditOp::Match { hypothesis, .. }
                | EditOp::Substitute { hypothesis, .. }
                | EditOp::Insert { hypothesis } => Some(hypothesis.as_str()),
                EditOp::Delete { .. } => None,
            })
            .collect()
    }
}

/// Minimum-edit word alignment. Among optimal alignments the traceback
/// (from the end) prefers match, then substitution, deletion, insertion.
pub fn align<R: AsRef<str>, H: AsRef<str>>(reference: &[R], hypothesis: &[H]) -> Alignment {
    let n = reference.len();
    let m = hypothesis.len();
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let same = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            let diag = d[(i - 1) * w + j - 1] + usize::from(!same);
            d[i * w + j] = diag.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let r = reference[i - 1].as_ref();
            let h = hypothesis[j - 1].as_ref();
            let diag = d[(i - 1) * w + j - 1];
            if r == h && diag == here {
                ops.push(EditOp::Match {
                    reference: r.to_owned(),
                    hypothesis: h.to_owned(),
                });
                i -= 1;
                j -= 1;
                continue;
            }
            if r != h && diag + 1 == here {
                ops.push(EditOp::Substitute {
                    reference: r.to_owned(),
                    hypothesis: h.to_owned(),
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            ops.push(EditOp::Delete {
                reference: reference[i - 1].as_ref().to_owned(),
            });
            i -= 1;
            continue;
        }
        ops.push(EditOp::Insert {
            hypothesis: hypothesis[j - 1].as_ref().to_owned(),
        });
        j -= 1;
    }
    ops.reverse();
    Alignment { ops }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl ErrorCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    fn add(&mut self, other: &ErrorCounts) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub n_ref: usize,
    pub n_ref_biased: usize,
    pub errors_total: ErrorCounts,
    pub errors_biased: ErrorCounts,
    pub errors_unbiased: ErrorCounts,
    pub wer: Option<f64>,
    pub bwer: Option<f64>,
    pub uwer: Option<f64>,
    /// True when there were no reference words, so `wer` is undefined.
    pub empty_reference: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageStat>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl AlignmentReport {
    fn finish(mut self) -> Self {
        let n_unbiased = self.n_ref - self.n_ref_biased;
        self.wer = ratio(self.errors_total.total(), self.n_ref);
        self.bwer = ratio(self.errors_biased.total(), self.n_ref_biased);
        self.uwer = ratio(self.errors_unbiased.total(), n_unbiased);
        self.empty_reference = self.n_ref == 0;
        self
    }

    fn absorb(&mut self, other: &AlignmentReport) {
        self.n_ref += other.n_ref;
        self.n_ref_biased += other.n_ref_biased;
        self.errors_total.add(&other.errors_total);
        self.errors_biased.add(&other.errors_biased);
        self.errors_unbiased.add(&other.errors_unbiased);
    }

    /// Pools counts; ratios are recomputed from the sums.
    pub fn pooled<'a, I: IntoIterator<Item = &'a AlignmentReport>>(reports: I) -> Self {
        let mut acc = AlignmentReport::default();
        for r in reports {
            acc.absorb(r);
        }
        acc.finish()
    }
}

pub fn score<S>(alignment: &Alignment, biasing: &HashSet<S>) -> AlignmentReport
where
    S: AsRef<str> + std::borrow::Borrow<str> + Eq + std::hash::Hash,
{
    let mut report = AlignmentReport::default();
    let biased = |w: &str| biasing.contains(w);
    for op in &alignment.ops {
        match op {
            EditOp::Match { reference, .. } => {
                report.n_ref += 1;
                report.n_ref_biased += usize::from(biased(reference));
            }
            EditOp::Substitute { reference, .. } => {
                report.n_ref += 1;
                report.errors_total.substitutions += 1;
                if biased(reference) {
                    report.n_ref_biased += 1;
                    report.errors_biased.substitutions += 1;
                } else {
                    report.errors_unbiased.substitutions += 1;
                }
            }
            EditOp::Delete { reference } => {
                report.n_ref += 1;
                report.errors_total.deletions += 1;
                if biased(reference) {
                    report.n_ref_biased += 1;
                    report.errors_biased.deletions += 1;
                } else {
                    report.errors_unbiased.deletions += 1;
                }
            }
            EditOp::Insert { hypothesis } => {
                report.errors_total.insertions += 1;
                if biased(hypothesis) {
                    report.errors_biased.insertions += 1;
                } else {
                    report.errors_unbiased.insertions += 1;
                }
            }
        }
    }
    report.finish()
}

/// One utterance to score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringInput {
    pub id: String,
    pub reference: String,
    pub hypothesis: Option<String>,
    pub biasing: Vec<String>,
    pub coverage: Option<CoverageStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub id: String,
    pub wer: Option<f64>,
    pub bwer: Option<f64>,
    pub uwer: Option<f64>,
    pub report: AlignmentReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ops: Option<Vec<EditOp>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub corpus: AlignmentReport,
    pub utterances: Vec<UtteranceScore>,
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_ids: Vec<String>,
    /// Run metadata (condition, parameters, stage statistics).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, serde_json::Value>,
}

pub fn score_utterance(
    input: &ScoringInput,
    hypothesis: &str,
    policy: MarkerPolicy,
) -> (AlignmentReport, Alignment) {
    let reference = flatten_for_scoring(&parse_sot(&input.reference), policy);
    let hyp = flatten_for_scoring(&parse_sot(hypothesis), policy);
    let alignment = align(&reference, &hyp);
    let biasing: HashSet<&str> = input.biasing.iter().map(String::as_str).collect();
    let mut report = score(&alignment, &biasing);
    report.coverage = input.coverage;
    (report, alignment)
}

/// Scores every utterance with a hypothesis and pools the counts. Inputs
/// without a hypothesis are skipped and counted.
pub fn score_corpus(inputs: &[ScoringInput], policy: MarkerPolicy, emit_ops: bool) -> CorpusReport {
    let scored: Vec<Option<UtteranceScore>> = inputs
        .par_iter()
        .map(|input| {
            let hyp = input.hypothesis.as_deref()?;
            let (report, alignment) = score_utterance(input, hyp, policy);
            Some(UtteranceScore {
                id: input.id.clone(),
                wer: report.wer,
                bwer: report.bwer,
                uwer: report.uwer,
                report,
                ops: emit_ops.then_some(alignment.ops),
            })
        })
        .collect();

    let mut out = CorpusReport::default();
    for (input, s) in inputs.iter().zip(scored) {
        match s {
            Some(s) => out.utterances.push(s),
            None => {
                out.skipped += 1;
                out.skipped_ids.push(input.id.clone());
            }
        }
    }
    out.corpus = AlignmentReport::pooled(out.utterances.iter().map(|u| &u.report));
    let coverages: Vec<CoverageStat> = out
        .utterances
        .iter()
        .filter_map(|u| u.report.coverage)
        .collect();
    if !coverages.is_empty() {
        out.corpus.coverage = Some(CoverageStat::pooled(&coverages));
    }
    out
}
