use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biasforge::bias_catalog::RareLexicon;
use biasforge::corpus_io::{self, ListSource, UtteranceRecord};
use biasforge::corrector_gateway::EndpointConfig;
use biasforge::filter_engine::{FilterParams, MatchIndex, MatchStrategy};
use biasforge::noise_model::{corrupt_corpus, NoiseSpec};
use biasforge::pipeline::{
    self, CorrectionRecord, CorrectorConfig, FilterRecord, ListRecord, ListSet, PromptRecord,
    RunConfig,
};
use biasforge::prompt_builder::Condition;
use biasforge::sot::MarkerPolicy;
use biasforge::synth::{self, SynthConfig};
use biasforge::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "biasforge",
    version,
    about = "Filtered contextual biasing for multi-talker transcripts"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corrupt references into synthetic first-pass hypotheses.
    Simulate(SimulateArgs),
    /// Build per-utterance biasing lists (targets plus distractors).
    BuildLists(BuildListsArgs),
    /// Filter biasing lists against hypotheses.
    Filter(FilterArgs),
    /// Render prompts for a condition.
    Prompt(PromptArgs),
    /// Correct hypotheses with the mock or a remote corrector.
    Correct(CorrectArgs),
    /// Score hypotheses or corrections (WER, B-WER, U-WER).
    Score(ScoreArgs),
    /// Run every stage end to end.
    Run(RunArgs),
    /// Time indexed against linear-scan filtering.
    Bench(BenchArgs),
    /// Generate a synthetic corpus with word lists.
    Synth(SynthArgs),
}

#[derive(Args, Default)]
struct CommonArgs {
    /// Ranked common-word list, most frequent first.
    #[arg(long)]
    common: Option<PathBuf>,
    /// Word<TAB>count table; its top words form the common set.
    #[arg(long)]
    freq_table: Option<PathBuf>,
    #[arg(long)]
    common_k: Option<usize>,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long)]
    p_rare: Option<f64>,
    #[arg(long)]
    p_common: Option<f64>,
    #[arg(long)]
    max_edits: Option<usize>,
    #[arg(long)]
    split_prob: Option<f64>,
    #[arg(long)]
    p_word_delete: Option<f64>,
    #[arg(long)]
    p_word_insert: Option<f64>,
}

impl NoiseArgs {
    fn any(&self) -> bool {
        self.p_rare.is_some()
            || self.p_common.is_some()
            || self.max_edits.is_some()
            || self.split_prob.is_some()
            || self.p_word_delete.is_some()
            || self.p_word_insert.is_some()
    }

    fn apply(&self, mut spec: NoiseSpec) -> NoiseSpec {
        set(&mut spec.p_rare_corrupt, self.p_rare);
        set(&mut spec.p_common_corrupt, self.p_common);
        set(&mut spec.max_char_edits, self.max_edits);
        set(&mut spec.split_prob, self.split_prob);
        set(&mut spec.p_word_delete, self.p_word_delete);
        set(&mut spec.p_word_insert, self.p_word_insert);
        spec
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Overwrite hypotheses already present.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildListsArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    full_list: Option<PathBuf>,
    #[arg(long)]
    distractors: Option<usize>,
    /// Cap each list, dropping distractors first.
    #[arg(long)]
    cap: Option<usize>,
    /// Also treat words rarer than --freq-threshold in this table as targets.
    #[arg(long)]
    freq_table: Option<PathBuf>,
    #[arg(long, requires = "freq_table")]
    freq_threshold: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    /// Manifest with hypotheses.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// One word list shared by every utterance.
    #[arg(long, conflicts_with = "lists")]
    list: Option<PathBuf>,
    /// Per-utterance lists from build-lists.
    #[arg(long)]
    lists: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    max_span: Option<usize>,
    #[arg(long)]
    distance_cap: Option<usize>,
    #[arg(long)]
    output_cap: Option<usize>,
    /// Use the linear scan instead of the index.
    #[arg(long)]
    scan: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PromptArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// baseline, biasing or anti.
    #[arg(long)]
    condition: Option<Condition>,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    filtered: Option<PathBuf>,
    /// Biasing lists; required for anti.
    #[arg(long)]
    lists: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorrectorArgs {
    /// Chat-completions URL; without it the offline mock is used.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    timeout_s: Option<f64>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    max_concurrency: Option<usize>,
    /// Mock corrector distance threshold.
    #[arg(long)]
    d_max: Option<usize>,
}

impl CorrectorArgs {
    fn apply(&self, base: CorrectorConfig) -> CorrectorConfig {
        let mut config = match (&self.endpoint, base) {
            (Some(url), CorrectorConfig::Remote(e)) => CorrectorConfig::Remote(EndpointConfig {
                endpoint_url: url.clone(),
                ..e
            }),
            (Some(url), _) => CorrectorConfig::Remote(EndpointConfig {
                endpoint_url: url.clone(),
                ..Default::default()
            }),
            (None, base) => base,
        };
        match &mut config {
            CorrectorConfig::Mock { d_max } => set(d_max, self.d_max),
            CorrectorConfig::Remote(e) => {
                set(&mut e.model_id, self.model.clone());
                set(&mut e.timeout_s, self.timeout_s);
                set(&mut e.max_retries, self.max_retries);
                set(&mut e.max_concurrency, self.max_concurrency);
                e.api_key = EndpointConfig::default().with_env_key().api_key;
            }
        }
        config
    }
}

#[derive(Args)]
struct CorrectArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[command(flatten)]
    corrector: CorrectorArgs,
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    max_span: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Score these corrections instead of the manifest hypotheses.
    #[arg(long)]
    corrections: Option<PathBuf>,
    /// Biasing lists defining the B-WER word set.
    #[arg(long)]
    lists: Option<PathBuf>,
    /// Filtered lists, for coverage.
    #[arg(long)]
    filtered: Option<PathBuf>,
    #[arg(long)]
    emit_ops: bool,
    /// Score `<sc>` as an ordinary token.
    #[arg(long)]
    keep_markers: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    full_list: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    freq_threshold: Option<u64>,
    #[arg(long)]
    condition: Option<Condition>,
    #[arg(long)]
    distractors: Option<usize>,
    #[arg(long)]
    list_cap: Option<usize>,
    #[arg(long)]
    cap: Option<usize>,
    /// One value, or several (comma-separated) for a sweep.
    #[arg(long, value_delimiter = ',')]
    top_n: Vec<usize>,
    #[arg(long)]
    max_span: Option<usize>,
    /// Generate hypotheses with the default noise settings.
    #[arg(long)]
    simulate: bool,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    corrector: CorrectorArgs,
    #[arg(long)]
    emit_ops: bool,
    #[arg(long)]
    keep_markers: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Word list to filter against (defaults to the configured full list).
    #[arg(long)]
    list: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    max_span: Option<usize>,
    #[arg(long, default_value_t = 100)]
    limit: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    utterances: usize,
    #[arg(long, default_value_t = 209_200)]
    list_size: usize,
    #[arg(long, default_value_t = 5000)]
    common_size: usize,
    #[arg(long, default_value_t = 0.12)]
    rare_rate: f64,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn required(path: Option<PathBuf>, fallback: &Path, flag: &str) -> Result<PathBuf> {
    match path {
        Some(p) => Ok(p),
        None if !fallback.as_os_str().is_empty() => Ok(fallback.to_path_buf()),
        None => Err(Error::Validation(format!("--{flag} is required"))),
    }
}

struct Ctx {
    config: RunConfig,
}

impl Ctx {
    fn out(&self, path: Option<PathBuf>, default_name: &str) -> PathBuf {
        path.unwrap_or_else(|| self.config.out_dir.join(default_name))
    }

    fn manifest(&self, path: Option<PathBuf>) -> Result<Vec<UtteranceRecord>> {
        corpus_io::read_manifest_file(&required(path, &self.config.manifest, "manifest")?)
    }

    fn common(&self, args: &CommonArgs) -> Result<biasforge::text_norm::CommonWordSet> {
        let list = args
            .common
            .clone()
            .or_else(|| self.config.common_list.clone());
        let freq = args
            .freq_table
            .clone()
            .or_else(|| self.config.freq_table.clone());
        let k = args.common_k.unwrap_or(self.config.filter.common_k);
        pipeline::load_common(list.as_deref(), freq.as_deref(), k)
    }

    fn lexicon(&self, path: Option<PathBuf>) -> Result<RareLexicon> {
        let path = required(path, &self.config.full_list, "full-list")?;
        RareLexicon::new(&corpus_io::read_word_list_file(
            &path,
            ListSource::FullRare,
        )?)
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Stream(e).at_path(path))?;
            toml::from_str(&text)
                .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    set(&mut config.seed, cli.seed);
    set(&mut config.threads, cli.threads);
    set(&mut config.out_dir, cli.out_dir.clone());
    Ok(config)
}

fn simulate(ctx: &Ctx, a: SimulateArgs) -> Result<()> {
    let records = ctx.manifest(a.manifest)?;
    let common = ctx.common(&a.common)?;
    let spec = NoiseSpec {
        seed: ctx.config.seed,
        ..a.noise.apply(ctx.config.noise.clone().unwrap_or_default())
    };
    let out = corrupt_corpus(&records, &common, &spec, a.force || ctx.config.force)?;
    corpus_io::write_manifest_file(&ctx.out(a.out, "hypotheses.jsonl"), &out)
}

fn build_lists(ctx: &Ctx, a: BuildListsArgs) -> Result<()> {
    let records = ctx.manifest(a.manifest)?;
    let lexicon = ctx.lexicon(a.full_list)?;
    let freq = match &a.freq_table {
        Some(path) => Some(
            corpus_io::read_frequency_table(corpus_io::open(path)?).map_err(|e| e.at_path(path))?,
        ),
        None => None,
    };
    let threshold = a
        .freq_threshold
        .unwrap_or(biasforge::bias_catalog::DEFAULT_FREQ_THRESHOLD);
    let lists = pipeline::build_lists(
        &records,
        &lexicon,
        a.distractors.unwrap_or(ctx.config.distractors),
        ctx.config.seed,
        a.cap.or(ctx.config.list_cap),
        freq.as_ref().map(|f| (f, threshold)),
    )?;
    pipeline::write_jsonl_file(&ctx.out(a.out, "lists.jsonl"), &lists)
}

fn filter_params(
    ctx: &Ctx,
    top_n: Option<usize>,
    max_span: Option<usize>,
    common: &CommonArgs,
) -> FilterParams {
    let mut p = ctx.config.filter.clone();
    set(&mut p.top_n, top_n);
    set(&mut p.max_span, max_span);
    set(&mut p.common_k, common.common_k);
    p
}

fn filter(ctx: &Ctx, a: FilterArgs) -> Result<()> {
    let records = ctx.manifest(a.manifest)?;
    let common = ctx.common(&a.common)?;
    let mut params = filter_params(ctx, a.top_n, a.max_span, &a.common);
    params.distance_cap = a.distance_cap.or(params.distance_cap);
    params.output_cap = a.output_cap.or(params.output_cap);
    let strategy = if a.scan {
        MatchStrategy::LinearScan
    } else {
        MatchStrategy::Indexed
    };
    let out = match (a.list, a.lists) {
        (Some(path), _) => {
            let list = corpus_io::read_word_list_file(&path, ListSource::FullRare)?;
            let index = MatchIndex::build(&list.entries);
            pipeline::filter_corpus(
                &records,
                ListSet::Shared(&index),
                &common,
                &params,
                strategy,
            )?
        }
        (None, lists) => {
            let path = lists.unwrap_or_else(|| ctx.config.out_dir.join("lists.jsonl"));
            let lists: Vec<ListRecord> = pipeline::read_jsonl_file(&path)?;
            pipeline::filter_corpus(
                &records,
                ListSet::PerUtterance(&lists),
                &common,
                &params,
                strategy,
            )?
        }
    };
    pipeline::write_jsonl_file(&ctx.out(a.out, "filtered.jsonl"), &out)
}

fn read_optional<T: serde::de::DeserializeOwned>(path: Option<PathBuf>) -> Result<Option<Vec<T>>> {
    path.map(|p| pipeline::read_jsonl_file(&p)).transpose()
}

fn prompt(ctx: &Ctx, a: PromptArgs) -> Result<()> {
    let records = ctx.manifest(a.manifest)?;
    let condition = a.condition.unwrap_or(ctx.config.condition);
    let filtered: Option<Vec<FilterRecord>> = read_optional(a.filtered)?;
    let lists: Option<Vec<ListRecord>> = read_optional(a.lists)?;
    let prompts = pipeline::build_prompts(
        &records,
        condition,
        filtered.as_deref(),
        lists.as_deref(),
        ctx.config.seed,
        a.cap.unwrap_or(ctx.config.cap),
    )?;
    pipeline::write_jsonl_file(&ctx.out(a.out, "prompts.jsonl"), &prompts)
}

fn correct(ctx: &Ctx, a: CorrectArgs) -> Result<()> {
    let records = ctx.manifest(a.manifest)?;
    let prompts: Vec<PromptRecord> = pipeline::read_jsonl_file(
        &a.prompts
            .unwrap_or_else(|| ctx.config.out_dir.join("prompts.jsonl")),
    )?;
    let common = ctx.common(&a.common)?;
    let corrector = a.corrector.apply(ctx.config.corrector.clone());
    let max_span = a.max_span.unwrap_or(ctx.config.filter.max_span);
    let out = pipeline::correct_corpus(&records, &prompts, &corrector, &common, max_span)?;
    let failed = out
        .iter()
        .filter(|c| c.status == pipeline::CorrectionStatus::Failed)
        .count();
    if failed > 0 {
        eprintln!("warning: {failed} utterance(s) left uncorrected");
    }
    pipeline::write_jsonl_file(&ctx.out(a.out, "corrections.jsonl"), &out)
}

fn score(ctx: &Ctx, a: ScoreArgs) -> Result<()> {
    let records = ctx.manifest(a.manifest)?;
    let corrections: Option<Vec<CorrectionRecord>> = read_optional(a.corrections)?;
    let lists: Option<Vec<ListRecord>> = read_optional(a.lists)?;
    let filtered: Option<Vec<FilterRecord>> = read_optional(a.filtered)?;
    let policy = if a.keep_markers || ctx.config.keep_markers {
        MarkerPolicy::KeepAsToken
    } else {
        MarkerPolicy::Drop
    };
    let report = pipeline::score_stage(
        &records,
        corrections.as_deref(),
        lists.as_deref(),
        filtered.as_deref(),
        policy,
        a.emit_ops || ctx.config.emit_ops,
    );
    corpus_io::write_report_file(&ctx.out(a.out, "report.json"), &report)?;
    print_summary(&report.corpus);
    Ok(())
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".into(), |v| format!("{:.2}%", v * 100.0))
}

fn print_summary(r: &biasforge::scoring::AlignmentReport) {
    println!(
        "WER {}  B-WER {}  U-WER {}",
        fmt_rate(r.wer),
        fmt_rate(r.bwer),
        fmt_rate(r.uwer)
    );
}

fn run(ctx: Ctx, a: RunArgs) -> Result<()> {
    let mut c = ctx.config;
    set(&mut c.manifest, a.manifest);
    set(&mut c.full_list, a.full_list);
    c.common_list = a.common.common.or(c.common_list);
    c.freq_table = a.common.freq_table.or(c.freq_table);
    c.freq_threshold = a.freq_threshold.or(c.freq_threshold);
    set(&mut c.filter.common_k, a.common.common_k);
    set(&mut c.condition, a.condition);
    set(&mut c.distractors, a.distractors);
    c.list_cap = a.list_cap.or(c.list_cap);
    set(&mut c.cap, a.cap);
    match a.top_n.as_slice() {
        [] => {}
        [n] => {
            c.filter.top_n = *n;
            c.top_n_sweep.clear();
        }
        many => c.top_n_sweep = many.to_vec(),
    }
    set(&mut c.filter.max_span, a.max_span);
    if a.simulate || a.noise.any() {
        c.noise = Some(a.noise.apply(c.noise.unwrap_or_default()));
    }
    c.force |= a.force;
    c.corrector = a.corrector.apply(c.corrector);
    c.emit_ops |= a.emit_ops;
    c.keep_markers |= a.keep_markers;
    for out in pipeline::run(&c)? {
        print!("top_n={} -> {}: ", out.top_n, out.report_path.display());
        print_summary(&out.report.corpus);
    }
    Ok(())
}

fn bench(ctx: &Ctx, a: BenchArgs) -> Result<()> {
    let records = ctx.manifest(a.manifest)?;
    let path = required(a.list, &ctx.config.full_list, "list")?;
    let list = corpus_io::read_word_list_file(&path, ListSource::FullRare)?;
    let index = MatchIndex::build(&list.entries);
    let common = ctx.common(&a.common)?;
    let params = filter_params(ctx, a.top_n, a.max_span, &a.common);
    let report = pipeline::bench(&records, &index, &common, &params, Some(a.limit))?;
    corpus_io::write_report_file(&ctx.out(a.out, "bench.json"), &report)?;
    println!(
        "{} utterances x {} entries: indexed p50 {:.2} ms p95 {:.2} ms; scan p50 {:.2} ms p95 {:.2} ms; speedup {:.1}x",
        report.utterances,
        report.entries,
        report.indexed.p50_ms,
        report.indexed.p95_ms,
        report.scan.p50_ms,
        report.scan.p95_ms,
        report.speedup
    );
    if report.regression {
        eprintln!("warning: indexed filtering was slower than the linear scan");
    }
    if !report.outputs_identical {
        return Err(Error::Validation("indexed and scan outputs differ".into()));
    }
    Ok(())
}

fn synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let corpus = synth::generate(&SynthConfig {
        utterances: a.utterances,
        rare_list_size: a.list_size,
        common_size: a.common_size,
        rare_rate: a.rare_rate,
        seed: ctx.config.seed,
        ..Default::default()
    })?;
    let dir = &ctx.config.out_dir;
    corpus_io::write_manifest_file(&dir.join("manifest.jsonl"), &corpus.records)?;
    let full = dir.join("full_list.txt");
    corpus_io::write_word_list(&corpus.rare, corpus_io::create(&full)?)
        .map_err(|e| e.at_path(&full))?;
    let common = dir.join("common.txt");
    let ranked = corpus_io::WordList::from_entries(corpus.common, ListSource::Common);
    corpus_io::write_word_list(&ranked, corpus_io::create(&common)?)
        .map_err(|e| e.at_path(&common))?;
    println!(
        "wrote {} utterances to {}",
        corpus.records.len(),
        dir.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    let threads = config.threads;
    let ctx = Ctx { config };
    let stage = |s: &'static str| move |e: Error| e.in_stage(s);
    match cli.command {
        Command::Run(a) => run(ctx, a),
        command => pipeline::with_threads(threads, move || match command {
            Command::Simulate(a) => simulate(&ctx, a).map_err(stage("simulate")),
            Command::BuildLists(a) => build_lists(&ctx, a).map_err(stage("build-lists")),
            Command::Filter(a) => filter(&ctx, a).map_err(stage("filter")),
            Command::Prompt(a) => prompt(&ctx, a).map_err(stage("prompt")),
            Command::Correct(a) => correct(&ctx, a).map_err(stage("correct")),
            Command::Score(a) => score(&ctx, a).map_err(stage("score")),
            Command::Bench(a) => bench(&ctx, a).map_err(stage("bench")),
            Command::Synth(a) => synth(&ctx, a).map_err(stage("synth")),
            Command::Run(_) => unreachable!(),
        })?,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
