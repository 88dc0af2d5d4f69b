//! Instruction prompts for the baseline, biasing and anti-context conditions.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const BASELINE_PROMPT: &str = "Transcribe speech to text.";
pub const BIASING_PREFIX: &str =
    "Use the rare words provided to improve the accuracy of ASR if they are relevant. The rare words are ";
pub const BIASING_SUFFIX: &str = ".";
pub const WORD_SEPARATOR: &str = ", ";
pub const DEFAULT_CAP: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    Biasing,
    #[serde(alias = "anti")]
    AntiContext,
}

impl Condition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::Biasing => "biasing",
            Condition::AntiContext => "anti_context",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Condition::Baseline),
            "biasing" => Ok(Condition::Biasing),
            "anti" | "anti_context" | "anti-context" => Ok(Condition::AntiContext),
            other => Err(Error::validation(format!(
                "unknown condition {other:?} (expected baseline, biasing or anti)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub condition: Condition,
    pub text: String,
    pub inserted_words: Vec<String>,
    /// The biasing slot was left empty.
    #[serde(default)]
    pub empty_slot: bool,
}

pub fn baseline_prompt() -> PromptText {
    PromptText {
        condition: Condition::Baseline,
        text: BASELINE_PROMPT.to_owned(),
        inserted_words: Vec::new(),
        empty_slot: false,
    }
}

/// Fills the slot with the first `cap` words, in order.
pub fn biasing_prompt<S: AsRef<str>>(words: &[S], cap: usize) -> PromptText {
    let inserted: Vec<String> = words
        .iter()
        .take(cap)
        .map(|w| w.as_ref().to_owned())
        .collect();
    render(Condition::Biasing, inserted)
}

fn render(condition: Condition, inserted: Vec<String>) -> PromptText {
    let text = format!(
        "{BIASING_PREFIX}{}{BIASING_SUFFIX}",
        inserted.join(WORD_SEPARATOR)
    );
    PromptText {
        condition,
        text,
        empty_slot: inserted.is_empty(),
        inserted_words: inserted,
    }
}

/// Replaces every target in `words` with a distractor drawn from `pool`.
///
/// Replacements are never targets and never words already in the list, so
/// the slot keeps its size.
pub fn anti_context_prompt<S: AsRef<str>>(
    words: &[S],
    targets: &HashSet<String>,
    pool: &[String],
    seed: u64,
    cap: usize,
) -> Result<PromptText> {
    let words: Vec<&str> = words.iter().take(cap).map(AsRef::as_ref).collect();
    let present: HashSet<&str> = words.iter().copied().collect();
    let needed = words.iter().filter(|w| targets.contains(**w)).count();
    let mut candidates: Vec<&String> = pool
        .iter()
        .filter(|w| !targets.contains(*w) && !present.contains(w.as_str()))
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    if candidates.len() < needed {
        return Err(Error::validation(format!(
            "anti-context needs {needed} replacement words but the pool offers {}",
            candidates.len()
        )));
    }
    candidates.sort();
    candidates.shuffle(&mut seed::rng(seed));
    let mut replacements = candidates.into_iter();
    let inserted = words
        .iter()
        .map(|w| {
            if targets.contains(*w) {
                replacements.next().expect("checked above").clone()
            } else {
                (*w).to_owned()
            }
        })
        .collect();
    Ok(render(Condition::AntiContext, inserted))
}
