//! Corpus-level stage drivers and the end-to-end run.
//!
//! Each stage reads and writes plain records so that it can be run alone
//! (as a CLI subcommand) or chained by [`run`]. Stages parallelize across
//! utterances; output order always follows the manifest.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::bias_catalog::{
    coverage, extract_targets_ami, extract_targets_sot, sample_distractors, BiasingList,
    RareLexicon,
};
use crate::corpus_io::{self, FrequencyTable, ListSource, UtteranceRecord};
use crate::corrector_gateway::{
    correct_batch, CorrectionRequest, DecodeParams, EndpointConfig, MockCorrector, DEFAULT_D_MAX,
};
use crate::error::{Error, Result};
use crate::filter_engine::{filter_with, FilterParams, FilteredEntry, MatchIndex, MatchStrategy};
use crate::noise_model::{corrupt_corpus, NoiseSpec};
use crate::prompt_builder::{
    anti_context_prompt, baseline_prompt, biasing_prompt, Condition, PromptText, DEFAULT_CAP,
};
use crate::scoring::{score_corpus, CorpusReport, ScoringInput};
use crate::seed;
use crate::sot::MarkerPolicy;
use crate::text_norm::CommonWordSet;

/// Per-utterance biasing list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListRecord {
    pub id: String,
    pub targets: Vec<String>,
    pub distractors: Vec<String>,
}

impl ListRecord {
    pub fn words(&self) -> Vec<String> {
        self.targets
            .iter()
            .chain(&self.distractors)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecord {
    pub id: String,
    pub filtered_entries: Vec<FilteredEntry>,
}

impl FilterRecord {
    pub fn words(&self) -> Vec<String> {
        self.filtered_entries
            .iter()
            .map(|e| e.word.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    #[serde(flatten)]
    pub prompt: PromptText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionStatus {
    Ok,
    /// The corrector failed; the hypothesis is kept as is.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub id: String,
    pub hypothesis: String,
    pub corrected: String,
    pub status: CorrectionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrectorConfig {
    Mock {
        #[serde(default = "default_d_max")]
        d_max: usize,
    },
    Remote(EndpointConfig),
}

fn default_d_max() -> usize {
    DEFAULT_D_MAX
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        CorrectorConfig::Mock {
            d_max: DEFAULT_D_MAX,
        }
    }
}

fn require_hypothesis(record: &UtteranceRecord) -> Result<&str> {
    record
        .hypothesis
        .as_deref()
        .ok_or_else(|| Error::validation(format!("record {:?} has no hypothesis", record.id)))
}

/// Targets from each reference plus `n_distractors` sampled non-targets.
/// Sampling is seeded per utterance id. With `rarity`, words rarer than the
/// threshold in the frequency table also count as targets.
pub fn build_lists(
    records: &[UtteranceRecord],
    lexicon: &RareLexicon,
    n_distractors: usize,
    seed: u64,
    cap: Option<usize>,
    rarity: Option<(&FrequencyTable, u64)>,
) -> Result<Vec<ListRecord>> {
    records
        .par_iter()
        .map(|r| {
            let targets = match rarity {
                Some((freq, threshold)) => {
                    extract_targets_ami(&r.reference, lexicon, freq, threshold)
                }
                None => extract_targets_sot(&r.reference, lexicon),
            };
            let distractors = sample_distractors(
                lexicon,
                &targets,
                n_distractors,
                seed::derive(seed, "lists", &r.id),
            )
            .map_err(|e| Error::validation(format!("{}: {e}", r.id)))?;
            let list = BiasingList::assemble(targets, distractors, cap, false, seed);
            Ok(ListRecord {
                id: r.id.clone(),
                targets: list.targets(),
                distractors: list.distractors(),
            })
        })
        .collect()
}

/// Where filter candidates come from.
#[derive(Debug, Clone, Copy)]
pub enum ListSet<'a> {
    /// One list for every utterance.
    Shared(&'a MatchIndex),
    PerUtterance(&'a [ListRecord]),
}

fn by_id<T, F: Fn(&T) -> &str>(items: &[T], key: F) -> HashMap<&str, &T> {
    items.iter().map(|t| (key(t), t)).collect()
}

pub fn filter_corpus(
    records: &[UtteranceRecord],
    lists: ListSet<'_>,
    common: &CommonWordSet,
    params: &FilterParams,
    strategy: MatchStrategy,
) -> Result<Vec<FilterRecord>> {
    params.validate()?;
    let per_utt = match lists {
        ListSet::PerUtterance(l) => Some(by_id(l, |r| r.id.as_str())),
        ListSet::Shared(_) => None,
    };
    records
        .par_iter()
        .map(|r| {
            let hyp = require_hypothesis(r)?;
            let out = match (&per_utt, lists) {
                (Some(map), _) => {
                    let list = map.get(r.id.as_str()).ok_or_else(|| {
                        Error::validation(format!("no biasing list for {:?}", r.id))
                    })?;
                    let index = MatchIndex::build(&list.words());
                    filter_with(hyp, &index, common, params, strategy)
                }
                (None, ListSet::Shared(index)) => filter_with(hyp, index, common, params, strategy),
                (None, ListSet::PerUtterance(_)) => unreachable!(),
            };
            Ok(FilterRecord {
                id: r.id.clone(),
                filtered_entries: out.entries,
            })
        })
        .collect()
}

/// Prompts for every record. Biasing and anti-context need the filtered
/// lists; anti-context also needs the biasing lists for targets and the
/// replacement pool.
pub fn build_prompts(
    records: &[UtteranceRecord],
    condition: Condition,
    filtered: Option<&[FilterRecord]>,
    lists: Option<&[ListRecord]>,
    seed: u64,
    cap: usize,
) -> Result<Vec<PromptRecord>> {
    let filtered = filtered.map(|f| by_id(f, |r| r.id.as_str()));
    let lists = lists.map(|l| by_id(l, |r| r.id.as_str()));
    records
        .par_iter()
        .map(|r| {
            let words = || -> Result<Vec<String>> {
                let f = filtered.as_ref().ok_or_else(|| {
                    Error::validation(format!("{condition} prompts need filtered lists"))
                })?;
                f.get(r.id.as_str())
                    .map(|f| f.words())
                    .ok_or_else(|| Error::validation(format!("no filtered list for {:?}", r.id)))
            };
            let prompt = match condition {
                Condition::Baseline => baseline_prompt(),
                Condition::Biasing => biasing_prompt(&words()?, cap),
                Condition::AntiContext => {
                    let list = lists
                        .as_ref()
                        .and_then(|l| l.get(r.id.as_str()))
                        .ok_or_else(|| {
                            Error::validation(format!(
                                "anti-context needs the biasing list for {:?}",
                                r.id
                            ))
                        })?;
                    let targets = list.targets.iter().cloned().collect();
                    anti_context_prompt(
                        &words()?,
                        &targets,
                        &list.distractors,
                        seed::derive(seed, "anti", &r.id),
                        cap,
                    )
                    .map_err(|e| Error::validation(format!("{}: {e}", r.id)))?
                }
            };
            Ok(PromptRecord {
                id: r.id.clone(),
                prompt,
            })
        })
        .collect()
}

/// Runs the corrector on every record with a prompt. Remote failures keep
/// the hypothesis and are marked [`CorrectionStatus::Failed`].
pub fn correct_corpus(
    records: &[UtteranceRecord],
    prompts: &[PromptRecord],
    corrector: &CorrectorConfig,
    common: &CommonWordSet,
    max_span: usize,
) -> Result<Vec<CorrectionRecord>> {
    let prompts = by_id(prompts, |p| p.id.as_str());
    let jobs: Vec<(&UtteranceRecord, &PromptText)> = records
        .iter()
        .map(|r| {
            let p = prompts
                .get(r.id.as_str())
                .ok_or_else(|| Error::validation(format!("no prompt for {:?}", r.id)))?;
            require_hypothesis(r)?;
            Ok((r, &p.prompt))
        })
        .collect::<Result<_>>()?;
    let ok = |r: &UtteranceRecord, corrected: String| CorrectionRecord {
        id: r.id.clone(),
        hypothesis: r.hypothesis.clone().unwrap_or_default(),
        corrected,
        status: CorrectionStatus::Ok,
        error: None,
    };
    match corrector {
        CorrectorConfig::Mock { d_max } => {
            let mock = MockCorrector {
                common,
                max_span,
                d_max: *d_max,
            };
            Ok(jobs
                .par_iter()
                .map(|(r, p)| {
                    let hyp = r.hypothesis.as_deref().unwrap_or_default();
                    ok(r, mock.correct(hyp, &p.inserted_words).corrected_text)
                })
                .collect())
        }
        CorrectorConfig::Remote(endpoint) => {
            let requests: Vec<CorrectionRequest> = jobs
                .iter()
                .map(|(r, p)| CorrectionRequest {
                    system: (*p).clone(),
                    user_text: r.hypothesis.clone().unwrap_or_default(),
                    model_id: endpoint.model_id.clone(),
                    decode: DecodeParams::default(),
                })
                .collect();
            let results = correct_batch(&requests, endpoint);
            Ok(jobs
                .iter()
                .zip(results)
                .map(|((r, _), res)| match res {
                    Ok(resp) => ok(r, resp.corrected_text),
                    Err(e) => {
                        log::warn!("{}: correction failed, scoring uncorrected: {e}", r.id);
                        CorrectionRecord {
                            error: Some(e.to_string()),
                            status: CorrectionStatus::Failed,
                            ..ok(r, r.hypothesis.clone().unwrap_or_default())
                        }
                    }
                })
                .collect())
        }
    }
}

/// Scores the corrected text when available, else the record's hypothesis.
/// The biasing set of an utterance is its full list; coverage is the share
/// of its targets kept by the filter.
pub fn score_stage(
    records: &[UtteranceRecord],
    corrections: Option<&[CorrectionRecord]>,
    lists: Option<&[ListRecord]>,
    filtered: Option<&[FilterRecord]>,
    policy: MarkerPolicy,
    emit_ops: bool,
) -> CorpusReport {
    let corrections = corrections.map(|c| by_id(c, |r| r.id.as_str()));
    let lists = lists.map(|l| by_id(l, |r| r.id.as_str()));
    let filtered = filtered.map(|f| by_id(f, |r| r.id.as_str()));
    let inputs: Vec<ScoringInput> = records
        .iter()
        .map(|r| {
            let list = lists.as_ref().and_then(|l| l.get(r.id.as_str()));
            let hypothesis = corrections
                .as_ref()
                .and_then(|c| c.get(r.id.as_str()))
                .map(|c| c.corrected.clone())
                .or_else(|| r.hypothesis.clone());
            let coverage = match (list, filtered.as_ref().and_then(|f| f.get(r.id.as_str()))) {
                (Some(list), Some(f)) => Some(coverage(&list.targets, &f.words())),
                _ => None,
            };
            ScoringInput {
                id: r.id.clone(),
                reference: r.reference.clone(),
                hypothesis,
                biasing: list.map(|l| l.words()).unwrap_or_default(),
                coverage,
            }
        })
        .collect();
    score_corpus(&inputs, policy, emit_ops)
}

/// Ranked common words from a list file, or the top-k of a frequency table.
pub fn load_common(
    common_list: Option<&Path>,
    freq_table: Option<&Path>,
    k: usize,
) -> Result<CommonWordSet> {
    match (common_list, freq_table) {
        (Some(path), _) => {
            let list = corpus_io::read_word_list_file(path, ListSource::Common)?;
            CommonWordSet::from_ranked(list.entries, k)
        }
        (None, Some(path)) => {
            let table = corpus_io::read_frequency_table(corpus_io::open(path)?)
                .map_err(|e| e.at_path(path))?;
            CommonWordSet::from_frequencies(&table, k)
        }
        (None, None) => Err(Error::validation(
            "either a common-word list or a frequency table is required",
        )),
    }
}

pub fn write_jsonl_file<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    corpus_io::write_jsonl(items, corpus_io::create(path)?).map_err(|e| e.at_path(path))
}

pub fn read_jsonl_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    corpus_io::read_jsonl(corpus_io::open(path)?).map_err(|e| e.at_path(path))
}

/// Everything needed for one end-to-end run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub full_list: PathBuf,
    pub common_list: Option<PathBuf>,
    pub freq_table: Option<PathBuf>,
    /// With a frequency table, words seen fewer times than this are also
    /// targets.
    pub freq_threshold: Option<u64>,
    pub out_dir: PathBuf,
    pub filter: FilterParams,
    /// When set, hypotheses are generated from the references.
    pub noise: Option<NoiseSpec>,
    /// Overwrite hypotheses already in the manifest.
    pub force: bool,
    pub condition: Condition,
    pub distractors: usize,
    /// Cap on each utterance's biasing list before filtering.
    pub list_cap: Option<usize>,
    /// Cap on words inserted into the prompt.
    pub cap: usize,
    pub seed: u64,
    pub corrector: CorrectorConfig,
    /// Worker threads; 0 uses the default.
    pub threads: usize,
    /// One report per top-n; empty means just `filter.top_n`.
    pub top_n_sweep: Vec<usize>,
    pub emit_ops: bool,
    pub keep_markers: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: PathBuf::new(),
            full_list: PathBuf::new(),
            common_list: None,
            freq_table: None,
            freq_threshold: None,
            out_dir: PathBuf::from("out"),
            filter: FilterParams::default(),
            noise: None,
            force: false,
            condition: Condition::Biasing,
            distractors: 1000,
            list_cap: None,
            cap: DEFAULT_CAP,
            seed: 0,
            corrector: CorrectorConfig::default(),
            threads: 0,
            top_n_sweep: Vec::new(),
            emit_ops: false,
            keep_markers: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let mut paths = vec![("manifest", &self.manifest), ("full_list", &self.full_list)];
        paths.extend(self.common_list.iter().map(|p| ("common_list", p)));
        paths.extend(self.freq_table.iter().map(|p| ("freq_table", p)));
        for (name, p) in paths {
            if !p.is_file() {
                return Err(Error::validation(format!(
                    "{name}: {} does not exist",
                    p.display()
                )));
            }
        }
        if self.common_list.is_none() && self.freq_table.is_none() {
            return Err(Error::validation("set common_list or freq_table"));
        }
        self.filter.validate()?;
        if self.top_n_sweep.contains(&0) {
            return Err(Error::validation("top-n sweep values must be at least 1"));
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        Ok(())
    }

    pub fn marker_policy(&self) -> MarkerPolicy {
        if self.keep_markers {
            MarkerPolicy::KeepAsToken
        } else {
            MarkerPolicy::Drop
        }
    }

    fn sweep(&self) -> Vec<usize> {
        if self.top_n_sweep.is_empty() {
            vec![self.filter.top_n]
        } else {
            self.top_n_sweep.clone()
        }
    }
}

/// Runs `f` on a pool of `threads` workers (0 = rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub top_n: usize,
    pub report_path: PathBuf,
    pub report: CorpusReport,
}

fn artifact(dir: &Path, stem: &str, suffix: &str, ext: &str) -> PathBuf {
    dir.join(format!("{stem}{suffix}.{ext}"))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// simulate? -> build-lists -> filter -> prompt -> correct -> score, writing
/// every intermediate artifact to `out_dir`. Errors carry the stage name.
pub fn run(config: &RunConfig) -> Result<Vec<RunOutput>> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    with_threads(config.threads, || run_stages(config))?
}

fn run_stages(config: &RunConfig) -> Result<Vec<RunOutput>> {
    let dir = &config.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::Stream(e).at_path(dir).in_stage("config"))?;
    let stage = |s: &'static str| move |e: Error| e.in_stage(s);

    let mut records = corpus_io::read_manifest_file(&config.manifest).map_err(stage("load"))?;
    let full = corpus_io::read_word_list_file(&config.full_list, ListSource::FullRare)
        .map_err(stage("load"))?;
    let lexicon = RareLexicon::new(&full).map_err(stage("load"))?;
    let common = load_common(
        config.common_list.as_deref(),
        config.freq_table.as_deref(),
        config.filter.common_k,
    )
    .map_err(stage("load"))?;

    if let Some(noise) = &config.noise {
        let spec = NoiseSpec {
            seed: config.seed,
            ..noise.clone()
        };
        records =
            corrupt_corpus(&records, &common, &spec, config.force).map_err(stage("simulate"))?;
        corpus_io::write_manifest_file(&dir.join("hypotheses.jsonl"), &records)
            .map_err(stage("simulate"))?;
    } else if let Some(r) = records.iter().find(|r| r.hypothesis.is_none()) {
        return Err(Error::validation(format!(
            "record {:?} has no hypothesis and no noise spec was given",
            r.id
        ))
        .in_stage("simulate"));
    }

    let freq = match (&config.freq_table, config.freq_threshold) {
        (Some(path), Some(threshold)) => Some((
            corpus_io::read_frequency_table(corpus_io::open(path)?)
                .map_err(|e| e.at_path(path).in_stage("load"))?,
            threshold,
        )),
        _ => None,
    };
    let rarity = freq.as_ref().map(|(f, t)| (f, *t));
    let lists = build_lists(
        &records,
        &lexicon,
        config.distractors,
        config.seed,
        config.list_cap,
        rarity,
    )
    .map_err(stage("build-lists"))?;
    write_jsonl_file(&dir.join("lists.jsonl"), &lists).map_err(stage("build-lists"))?;

    let policy = config.marker_policy();
    let uncorrected = score_stage(&records, None, Some(&lists), None, policy, false).corpus;

    let sweep = config.sweep();
    let mut outputs = Vec::with_capacity(sweep.len());
    for &top_n in &sweep {
        let suffix = if sweep.len() > 1 {
            format!("_top{top_n}")
        } else {
            String::new()
        };
        let params = FilterParams {
            top_n,
            ..config.filter.clone()
        };
        let filtered = if config.condition == Condition::Baseline {
            None
        } else {
            let f = filter_corpus(
                &records,
                ListSet::PerUtterance(&lists),
                &common,
                &params,
                MatchStrategy::Indexed,
            )
            .map_err(stage("filter"))?;
            write_jsonl_file(&artifact(dir, "filtered", &suffix, "jsonl"), &f)
                .map_err(stage("filter"))?;
            Some(f)
        };
        let prompts = build_prompts(
            &records,
            config.condition,
            filtered.as_deref(),
            Some(&lists),
            config.seed,
            config.cap,
        )
        .map_err(stage("prompt"))?;
        write_jsonl_file(&artifact(dir, "prompts", &suffix, "jsonl"), &prompts)
            .map_err(stage("prompt"))?;

        let corrections = correct_corpus(
            &records,
            &prompts,
            &config.corrector,
            &common,
            params.max_span,
        )
        .map_err(stage("correct"))?;
        write_jsonl_file(
            &artifact(dir, "corrections", &suffix, "jsonl"),
            &corrections,
        )
        .map_err(stage("correct"))?;
        let failures = corrections
            .iter()
            .filter(|c| c.status == CorrectionStatus::Failed)
            .count();
        if failures > 0 {
            log::warn!("{failures} utterance(s) scored uncorrected after correction failures");
        }

        let mut report = score_stage(
            &records,
            Some(&corrections),
            Some(&lists),
            filtered.as_deref(),
            policy,
            config.emit_ops,
        );
        let meta = &mut report.meta;
        meta.insert("condition".into(), json!(config.condition));
        meta.insert("seed".into(), json!(config.seed));
        meta.insert("top_n".into(), json!(top_n));
        meta.insert("max_span".into(), json!(params.max_span));
        meta.insert("common_k".into(), json!(params.common_k));
        meta.insert("distractors".into(), json!(config.distractors));
        meta.insert("cap".into(), json!(config.cap));
        meta.insert(
            "corrector".into(),
            match &config.corrector {
                CorrectorConfig::Mock { d_max } => json!({"kind": "mock", "d_max": d_max}),
                CorrectorConfig::Remote(e) => json!({"kind": "remote", "model_id": e.model_id}),
            },
        );
        meta.insert("utterances".into(), json!(records.len()));
        meta.insert("uncorrected_failures".into(), json!(failures));
        meta.insert(
            "uncorrected".into(),
            json!({"wer": uncorrected.wer, "bwer": uncorrected.bwer, "uwer": uncorrected.uwer}),
        );
        if let Some(f) = &filtered {
            let size = mean(f.iter().map(|r| r.filtered_entries.len() as f64));
            let cov = mean(
                report
                    .utterances
                    .iter()
                    .filter_map(|u| u.report.coverage?.coverage),
            );
            meta.insert("mean_filtered_size".into(), json!(size));
            meta.insert("mean_coverage".into(), json!(cov));
        }
        let report_path = artifact(dir, "report", &suffix, "json");
        corpus_io::write_report_file(&report_path, &report).map_err(stage("score"))?;
        outputs.push(RunOutput {
            top_n,
            report_path,
            report,
        });
    }
    Ok(outputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub total_ms: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles.
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let pct = |p: f64| {
            if s.is_empty() {
                0.0
            } else {
                let rank = ((p / 100.0) * s.len() as f64).ceil() as usize;
                s[rank.clamp(1, s.len()) - 1]
            }
        };
        let total: f64 = s.iter().sum();
        LatencyStats {
            mean_ms: if s.is_empty() {
                0.0
            } else {
                total / s.len() as f64
            },
            p50_ms: pct(50.0),
            p95_ms: pct(95.0),
            max_ms: s.last().copied().unwrap_or(0.0),
            total_ms: total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub utterances: usize,
    pub entries: usize,
    pub top_n: usize,
    pub max_span: usize,
    pub indexed: LatencyStats,
    pub scan: LatencyStats,
    /// Scan time over indexed time; below 1 is flagged as a regression.
    pub speedup: f64,
    pub regression: bool,
    pub outputs_identical: bool,
    /// SHA-256 of the indexed filter outputs; stable across thread counts.
    pub output_digest: String,
}

/// Times the filter per utterance with the index and with a linear scan over
/// the same list.
pub fn bench(
    records: &[UtteranceRecord],
    index: &MatchIndex,
    common: &CommonWordSet,
    params: &FilterParams,
    limit: Option<usize>,
) -> Result<BenchReport> {
    params.validate()?;
    let records = &records[..limit.unwrap_or(records.len()).min(records.len())];
    let timed = |hyp: &str, strategy| {
        let t = Instant::now();
        let out = filter_with(hyp, index, common, params, strategy);
        (out.entries, t.elapsed().as_secs_f64() * 1000.0)
    };
    let runs: Vec<(FilterRecord, f64, f64, bool)> = records
        .par_iter()
        .map(|r| {
            let hyp = require_hypothesis(r)?;
            let (indexed, t_index) = timed(hyp, MatchStrategy::Indexed);
            let (scanned, t_scan) = timed(hyp, MatchStrategy::LinearScan);
            let same = indexed == scanned;
            Ok((
                FilterRecord {
                    id: r.id.clone(),
                    filtered_entries: indexed,
                },
                t_index,
                t_scan,
                same,
            ))
        })
        .collect::<Result<_>>()?;
    let indexed = LatencyStats::from_samples(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
    let scan = LatencyStats::from_samples(&runs.iter().map(|r| r.2).collect::<Vec<_>>());
    let speedup = if indexed.total_ms > 0.0 {
        scan.total_ms / indexed.total_ms
    } else {
        1.0
    };
    let outputs: Vec<&FilterRecord> = runs.iter().map(|r| &r.0).collect();
    let digest = Sha256::digest(serde_json::to_vec(&outputs)?);
    Ok(BenchReport {
        utterances: records.len(),
        entries: index.len(),
        top_n: params.top_n,
        max_span: params.max_span,
        speedup,
        regression: speedup < 1.0,
        outputs_identical: runs.iter().all(|r| r.3),
        output_digest: digest.iter().map(|b| format!("{b:02x}")).collect(),
        indexed,
        scan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_io::WordList;

    fn fixture() -> (Vec<UtteranceRecord>, RareLexicon, CommonWordSet) {
        let records = vec![
            UtteranceRecord::new("a", "THE SPEAKER CHARACTERISATION AS STEVE <sc> OF COURSE")
                .with_hypothesis("THE SPEAKER CHARACE THSATION AS STEE <sc> OF COURSE"),
            UtteranceRecord::new("b", "AND THE ZEPHYR <sc> TO A")
                .with_hypothesis("AND THE ZEFYR <sc> TO A"),
        ];
        let full = WordList::from_entries(
            [
                "CHARACTERISATION",
                "STEVE",
                "ZEPHYR",
                "QUASAR",
                "NEBULA",
                "PULSAR",
                "COMET",
                "GALAXY",
            ],
            ListSource::FullRare,
        );
        let common = CommonWordSet::from_ranked(
            ["THE", "AS", "OF", "COURSE", "AND", "TO", "A", "SPEAKER"],
            5000,
        )
        .unwrap();
        (records, RareLexicon::new(&full).unwrap(), common)
    }

    #[test]
    fn stages_chain() {
        let (records, lexicon, common) = fixture();
        let lists = build_lists(&records, &lexicon, 3, 1, None, None).unwrap();
        assert_eq!(lists[0].targets, ["CHARACTERISATION", "STEVE"]);
        assert_eq!(lists[0].distractors.len(), 3);
        assert_eq!(
            lists,
            build_lists(&records, &lexicon, 3, 1, None, None).unwrap()
        );

        let params = FilterParams::default();
        let filtered = filter_corpus(
            &records,
            ListSet::PerUtterance(&lists),
            &common,
            &params,
            MatchStrategy::Indexed,
        )
        .unwrap();
        assert!(filtered[0].words().contains(&"STEVE".to_string()));

        let prompts =
            build_prompts(&records, Condition::Biasing, Some(&filtered), None, 1, 100).unwrap();
        let mock = CorrectorConfig::Mock { d_max: 3 };
        let corrections = correct_corpus(&records, &prompts, &mock, &common, 3).unwrap();
        assert_eq!(
            corrections[0].corrected,
            "THE SPEAKER CHARACTERISATION AS STEVE <sc> OF COURSE"
        );
        assert_eq!(corrections[1].corrected, "AND THE ZEPHYR <sc> TO A");

        let before = score_stage(
            &records,
            None,
            Some(&lists),
            None,
            MarkerPolicy::Drop,
            false,
        );
        let after = score_stage(
            &records,
            Some(&corrections),
            Some(&lists),
            Some(&filtered),
            MarkerPolicy::Drop,
            false,
        );
        assert!(before.corpus.bwer.unwrap() > 0.0);
        assert_eq!(after.corpus.bwer, Some(0.0));
        assert_eq!(after.corpus.coverage.unwrap().coverage, Some(1.0));
    }

    #[test]
    fn baseline_prompts_need_no_lists() {
        let (records, _, common) = fixture();
        let prompts = build_prompts(&records, Condition::Baseline, None, None, 0, 100).unwrap();
        assert!(prompts.iter().all(|p| p.prompt.inserted_words.is_empty()));
        let c =
            correct_corpus(&records, &prompts, &CorrectorConfig::default(), &common, 3).unwrap();
        assert!(c.iter().all(|c| Some(&c.corrected)
            == records
                .iter()
                .find(|r| r.id == c.id)
                .unwrap()
                .hypothesis
                .as_ref()));
        assert!(build_prompts(&records, Condition::Biasing, None, None, 0, 100).is_err());
    }

    #[test]
    fn anti_context_swaps_targets() {
        let (records, lexicon, common) = fixture();
        let lists = build_lists(&records, &lexicon, 5, 1, None, None).unwrap();
        let filtered = filter_corpus(
            &records,
            ListSet::PerUtterance(&lists),
            &common,
            &FilterParams {
                top_n: 1,
                ..Default::default()
            },
            MatchStrategy::Indexed,
        )
        .unwrap();
        let bias = build_prompts(
            &records,
            Condition::Biasing,
            Some(&filtered),
            Some(&lists),
            1,
            100,
        )
        .unwrap();
        let anti = build_prompts(
            &records,
            Condition::AntiContext,
            Some(&filtered),
            Some(&lists),
            1,
            100,
        )
        .unwrap();
        for ((b, a), l) in bias.iter().zip(&anti).zip(&lists) {
            assert_eq!(b.prompt.inserted_words.len(), a.prompt.inserted_words.len());
            assert!(a
                .prompt
                .inserted_words
                .iter()
                .all(|w| !l.targets.contains(w)));
        }
    }

    #[test]
    fn missing_hypothesis_is_reported() {
        let records = vec![UtteranceRecord::new("x", "HELLO")];
        let index = MatchIndex::build(&["HELLO"]);
        let err = filter_corpus(
            &records,
            ListSet::Shared(&index),
            &CommonWordSet::empty(),
            &FilterParams::default(),
            MatchStrategy::Indexed,
        )
        .unwrap_err();
        assert!(err.to_string().contains("no hypothesis"));
    }

    #[test]
    fn percentiles_use_nearest_rank() {
        let s: Vec<f64> = (1..=20).map(f64::from).collect();
        let st = LatencyStats::from_samples(&s);
        assert_eq!((st.p50_ms, st.p95_ms, st.max_ms), (10.0, 19.0, 20.0));
        assert_eq!(LatencyStats::from_samples(&[]).p95_ms, 0.0);
    }

    #[test]
    fn bench_agrees_with_scan() {
        let (records, lexicon, common) = fixture();
        let index = MatchIndex::build(lexicon.entries());
        let b = bench(&records, &index, &common, &FilterParams::default(), None).unwrap();
        assert!(b.outputs_identical);
        assert_eq!(b.output_digest.len(), 64);
        assert_eq!(b.utterances, 2);
    }
}
