use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use tmprompt::align::{load_aligner, save_aligner, train_model1, Model1Table};
use tmprompt::decoder::{TranslationModel, DEFAULT_ALPHA};
use tmprompt::eval::{
    decode_one, render_records, render_report, resolve_tms, run_experiment, DecodePlan, EvalItem,
    ExperimentConfig, ResolvedTm, RetrievalMode, SystemKind, DEFAULT_BEAM_WIDTH, DEFAULT_MAX_LEN,
};
use tmprompt::fragment::{builtin_stop_words, load_stop_words};
use tmprompt::retrieval::{build_index, load_index, retrieve_best, save_index, DEFAULT_CANDIDATES};
use tmprompt::store::{ingest_corpus, ingest_corpus_tsv, load_store, save_store, Query, TmStore};
use tmprompt::synth::{generate, SynthConfig};
use tmprompt::template::ConjunctionTable;
use tmprompt::text::tokenize;
use tmprompt::toy_model::{
    load_model, save_model, train_toy_with, ToyTrainConfig, DEFAULT_ADD_K, DEFAULT_EM_ITERATIONS,
    DEFAULT_LAMBDA,
};

mod config;
use config::{EvalArgs, RunConfig};

#[derive(Parser)]
#[command(
    name = "tmprompt",
    version,
    about = "Translation with translation-memory prompts: ingest a parallel \
             corpus, retrieve fuzzy matches, and decode with the match forced \
             as a prefix."
)]
struct Cli {
    /// Seed for stages that draw randomness (gen-corpus). Same seed, same
    /// output.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a translation-memory store from a parallel corpus.
    Ingest(IngestArgs),
    /// Build the retrieval index for a store.
    Index(IndexArgs),
    /// Train the translation model on a store.
    Train(TrainArgs),
    /// Train the word-alignment table on a store.
    TrainAligner(TrainAlignerArgs),
    /// Print the best fuzzy match for each query line.
    Retrieve(RetrieveArgs),
    /// Translate input lines, prompting with retrieved matches.
    Translate(TranslateArgs),
    /// Score systems against references, with bucket breakdowns.
    Eval(EvalArgs),
    /// Generate a reproducible synthetic corpus for experiments.
    GenCorpus(GenCorpusArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Index(args) => cmd_index(args),
        Command::Train(args) => cmd_train(args),
        Command::TrainAligner(args) => cmd_train_aligner(args),
        Command::Retrieve(args) => cmd_retrieve(args),
        Command::Translate(args) => cmd_translate(args),
        Command::Eval(args) => cmd_eval(args),
        Command::GenCorpus(args) => cmd_gen_corpus(args, cli.seed),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn read_input_lines(path: Option<&Path>) -> Result<Vec<String>> {
    match path {
        Some(p) => {
            let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            BufReader::new(file)
                .lines()
                .collect::<io::Result<_>>()
                .with_context(|| format!("reading {}", p.display()))
        }
        None => io::stdin()
            .lock()
            .lines()
            .collect::<io::Result<_>>()
            .context("reading stdin"),
    }
}

fn load_store_at(path: &Path) -> Result<TmStore> {
    load_store(path).with_context(|| format!("loading store {}", path.display()))
}

fn conjunctions_from(path: Option<&Path>) -> Result<ConjunctionTable> {
    match path {
        Some(p) => ConjunctionTable::load(p)
            .with_context(|| format!("loading conjunctions {}", p.display())),
        None => Ok(ConjunctionTable::default()),
    }
}

fn stop_words_from(path: Option<&Path>, store: &TmStore) -> Result<HashSet<String>> {
    match path {
        Some(p) => load_stop_words(p).with_context(|| format!("loading stop words {}", p.display())),
        None => {
            let mut set = builtin_stop_words(&store.source_lang);
            set.extend(builtin_stop_words(&store.target_lang));
            Ok(set)
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Source-side text, one sentence per line.
    #[arg(long, requires = "target", conflicts_with = "tsv")]
    source: Option<PathBuf>,
    /// Target-side text, line-aligned with --source.
    #[arg(long, requires = "source", conflicts_with = "tsv")]
    target: Option<PathBuf>,
    /// Single source<TAB>target file instead of --source/--target.
    #[arg(long)]
    tsv: Option<PathBuf>,
    #[arg(long, default_value = "en")]
    source_lang: String,
    #[arg(long, default_value = "de")]
    target_lang: String,
    /// Where to write the store.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let outcome = match (&args.tsv, &args.source, &args.target) {
        (Some(tsv), None, None) => ingest_corpus_tsv(tsv, &args.source_lang, &args.target_lang)
            .with_context(|| format!("ingesting {}", tsv.display()))?,
        (None, Some(src), Some(tgt)) => {
            ingest_corpus(src, tgt, &args.source_lang, &args.target_lang).with_context(|| {
                format!("ingesting {} / {}", src.display(), tgt.display())
            })?
        }
        _ => bail!("pass either --tsv FILE or both --source FILE and --target FILE"),
    };
    save_store(&outcome.store, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "[ingest] entries={} skipped={} out={}",
        outcome.store.len(),
        outcome.skipped,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    store: PathBuf,
    /// Where to write the index.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_index(args: IndexArgs) -> Result<()> {
    let store = load_store_at(&args.store)?;
    let index = build_index(&store).context("building index")?;
    save_index(&index, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "[index] entries={} out={}",
        store.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    store: PathBuf,
    /// Where to write the model.
    #[arg(long)]
    out: PathBuf,
    /// EM sweeps for the lexical table.
    #[arg(long, default_value_t = DEFAULT_EM_ITERATIONS)]
    em_iters: usize,
    /// Add-k smoothing constant for the bigram model.
    #[arg(long, default_value_t = DEFAULT_ADD_K)]
    add_k: f64,
    /// Interpolation weight on the language model, in [0, 1].
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let store = load_store_at(&args.store)?;
    let started = Instant::now();
    let model = train_toy_with(
        &store,
        &ToyTrainConfig {
            em_iterations: args.em_iters,
            add_k: args.add_k,
            lambda: args.lambda,
        },
    )
    .context("training model")?;
    save_model(&model, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "[train] pairs={} vocab={} secs={:.2} out={}",
        store.len(),
        model.vocab().len(),
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct TrainAlignerArgs {
    #[arg(long)]
    store: PathBuf,
    /// Where to write the alignment table.
    #[arg(long)]
    out: PathBuf,
    /// EM iterations.
    #[arg(long, default_value_t = 8)]
    iters: usize,
}

fn cmd_train_aligner(args: TrainAlignerArgs) -> Result<()> {
    let store = load_store_at(&args.store)?;
    let started = Instant::now();
    let table = train_model1(&store, args.iters).context("training aligner")?;
    save_aligner(&table, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "[train-aligner] pairs={} iters={} secs={:.2} out={}",
        store.len(),
        args.iters,
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Candidate pool size scanned for the best match.
    #[arg(long, default_value_t = DEFAULT_CANDIDATES)]
    k: usize,
    /// Query file, one sentence per line; stdin when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Also write a JSON array of matched entry ids (null where nothing
    /// matched) for later replay by translate.
    #[arg(long)]
    cache_out: Option<PathBuf>,
}

fn cmd_retrieve(args: RetrieveArgs) -> Result<()> {
    let store = load_store_at(&args.store)?;
    let index =
        load_index(&args.index).with_context(|| format!("loading index {}", args.index.display()))?;
    if args.k == 0 {
        bail!("candidate pool size k must be at least 1");
    }
    let lines = read_input_lines(args.input.as_deref())?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut cache: Vec<Option<u32>> = Vec::with_capacity(lines.len());
    let mut hits = 0usize;
    for line in &lines {
        let query = Query::from_text(line, &store.source_lang);
        match retrieve_best(&index, &store, &query, args.k) {
            Some(found) => {
                let entry = &store.entries[found.entry_id as usize];
                writeln!(
                    out,
                    "{}\t{:.6}\t{}\t{}",
                    found.entry_id,
                    found.fms,
                    entry.source_tokens.join(" "),
                    entry.target_tokens.join(" ")
                )?;
                cache.push(Some(found.entry_id));
                hits += 1;
            }
            None => {
                writeln!(out, "-")?;
                cache.push(None);
            }
        }
    }
    if let Some(path) = &args.cache_out {
        let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
        serde_json::to_writer(file, &cache)?;
    }
    eprintln!("[retrieve] queries={} matched={} k={}", lines.len(), hits, args.k);
    Ok(())
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    store: PathBuf,
    /// Retrieval index; not needed with --no-tm or --retrieval-cache.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    /// Word-alignment table (needed by --template fragment).
    #[arg(long)]
    aligner: Option<PathBuf>,
    /// Prompt shape: directly, comma, semicolon, conjunction, parenthesis,
    /// or fragment.
    #[arg(long, default_value = "directly")]
    template: String,
    /// Plain decoding, no TM prompt.
    #[arg(long)]
    no_tm: bool,
    #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH)]
    beam: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    /// Length-penalty strength.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Skip the prompt for sentences whose match scores below this
    /// (0.8 works well).
    #[arg(long)]
    fms_threshold: Option<f64>,
    /// Retrieval candidate pool size.
    #[arg(long, default_value_t = DEFAULT_CANDIDATES)]
    k: usize,
    /// Replay matches saved by retrieve --cache-out instead of searching.
    #[arg(long)]
    retrieval_cache: Option<PathBuf>,
    /// Worker threads; output order is input order regardless.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Conjunction file (lang=word[ comma] lines) extending the built-ins.
    #[arg(long)]
    conjunctions: Option<PathBuf>,
    /// Stop-word list replacing the built-ins in fragment filtering.
    #[arg(long)]
    stop_words: Option<PathBuf>,
    /// Input file, one sentence per line; stdin when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Per-line prompt details on stderr.
    #[arg(long)]
    verbose: bool,
}

fn cmd_translate(args: TranslateArgs) -> Result<()> {
    if args.beam == 0 {
        bail!("beam width must be at least 1");
    }
    if args.max_len == 0 {
        bail!("max length must be at least 1");
    }
    if args.jobs == 0 {
        bail!("jobs must be at least 1");
    }
    if args.k == 0 {
        bail!("candidate pool size k must be at least 1");
    }
    if !args.alpha.is_finite() || args.alpha < 0.0 {
        bail!("alpha must be a finite non-negative number, got {}", args.alpha);
    }
    if let Some(t) = args.fms_threshold {
        if !(0.0..=1.0).contains(&t) {
            bail!("fms-threshold must lie in [0, 1], got {t}");
        }
    }
    let system = if args.no_tm {
        SystemKind::Baseline
    } else {
        args.template
            .parse::<SystemKind>()
            .map_err(|e| anyhow!(e))?
    };

    let store = load_store_at(&args.store)?;
    let model = load_model(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))?;
    let aligner: Option<Model1Table> = match (&system, &args.aligner) {
        (SystemKind::Fragment, None) => {
            bail!("--template fragment needs an alignment table: pass --aligner")
        }
        (_, Some(path)) => Some(
            load_aligner(path).with_context(|| format!("loading aligner {}", path.display()))?,
        ),
        (_, None) => None,
    };
    let conj = conjunctions_from(args.conjunctions.as_deref())?;
    let stop_words = stop_words_from(args.stop_words.as_deref(), &store)?;

    let lines = read_input_lines(args.input.as_deref())?;
    let items: Vec<EvalItem> = lines
        .iter()
        .map(|line| EvalItem {
            source: tokenize(line, &store.source_lang),
            reference: Vec::new(),
        })
        .collect();

    let resolved: Vec<Option<ResolvedTm>> = if system == SystemKind::Baseline {
        vec![None; items.len()]
    } else if let Some(cache_path) = &args.retrieval_cache {
        let file = File::open(cache_path)
            .with_context(|| format!("opening retrieval cache {}", cache_path.display()))?;
        let ids: Vec<Option<u32>> = serde_json::from_reader(BufReader::new(file))
            .with_context(|| format!("parsing retrieval cache {}", cache_path.display()))?;
        if ids.len() != items.len() {
            bail!(
                "retrieval cache holds {} entries but the input has {} lines",
                ids.len(),
                items.len()
            );
        }
        resolve_tms(&store, None, &items, &RetrievalMode::Assigned(ids))?
    } else {
        let path = args
            .index
            .as_ref()
            .ok_or_else(|| anyhow!("need --index unless --no-tm or --retrieval-cache is used"))?;
        let index =
            load_index(path).with_context(|| format!("loading index {}", path.display()))?;
        resolve_tms(&store, Some(&index), &items, &RetrievalMode::Index { k: args.k })?
    };
    let resolved: Vec<Option<ResolvedTm>> = match args.fms_threshold {
        Some(t) => resolved
            .into_iter()
            .map(|tm| tm.filter(|tm| tm.fms >= t))
            .collect(),
        None => resolved,
    };

    let plan = DecodePlan {
        width: args.beam,
        max_len: args.max_len,
        alpha: args.alpha,
        source_lang: &store.source_lang,
        target_lang: &store.target_lang,
        conj: &conj,
        stop_words: &stop_words,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| anyhow!("building worker pool: {e}"))?;
    let started = Instant::now();
    let outcomes: Vec<_> = pool.install(|| {
        items
            .par_iter()
            .zip(resolved.par_iter())
            .map(|(item, tm)| {
                if item.source.is_empty() {
                    return Ok(None);
                }
                decode_one(&model, aligner.as_ref(), system, tm.as_ref(), &item.source, &plan)
                    .map(Some)
            })
            .collect::<Vec<_>>()
    });

    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (i, outcome) in outcomes.iter().enumerate() {
        match outcome {
            Ok(Some(one)) => {
                writeln!(out, "{}", one.output.join(" "))?;
                if args.verbose {
                    match (&resolved[i], &one.prompt) {
                        (Some(tm), Some(p)) => eprintln!(
                            "[translate] line={} tm={} fms={:.6} template={} forced={}",
                            i + 1,
                            tm.entry_id.map_or_else(|| "-".into(), |id| id.to_string()),
                            tm.fms,
                            p.template.name(),
                            p.forced_prefix.join(" ")
                        ),
                        (Some(tm), None) => eprintln!(
                            "[translate] line={} tm={} fms={:.6} template=- (prompt unusable)",
                            i + 1,
                            tm.entry_id.map_or_else(|| "-".into(), |id| id.to_string()),
                            tm.fms
                        ),
                        _ => eprintln!("[translate] line={} tm=- (plain decode)", i + 1),
                    }
                }
            }
            Ok(None) => {
                writeln!(out)?;
                if args.verbose {
                    eprintln!("[translate] line={} empty input", i + 1);
                }
            }
            Err(e) => bail!("line {}: {e}", i + 1),
        }
    }
    eprintln!(
        "[translate] lines={} system={} jobs={} secs={:.2}",
        items.len(),
        system,
        args.jobs,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn read_test_items(path: &Path, store: &TmStore) -> Result<Vec<EvalItem>> {
    let mut items = Vec::new();
    for (i, line) in read_input_lines(Some(path))?.into_iter().enumerate() {
        let (src, reference) = line
            .split_once('\t')
            .ok_or_else(|| anyhow!("{}:{}: expected source<TAB>reference", path.display(), i + 1))?;
        let source = tokenize(src, &store.source_lang);
        let reference = tokenize(reference, &store.target_lang);
        if source.is_empty() {
            bail!("{}:{}: empty source", path.display(), i + 1);
        }
        if reference.is_empty() {
            bail!("{}:{}: empty reference", path.display(), i + 1);
        }
        items.push(EvalItem { source, reference });
    }
    Ok(items)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let run = RunConfig::assemble(&args)?;
    let store = load_store_at(&run.store)?;
    let mut model = load_model(&run.model)
        .with_context(|| format!("loading model {}", run.model.display()))?;
    if let Some(lambda) = run.lambda {
        model
            .set_lambda(lambda)
            .map_err(|e| anyhow!("overriding lambda: {e}"))?;
    }
    let aligner: Option<Model1Table> = match &run.aligner {
        Some(path) => Some(
            load_aligner(path).with_context(|| format!("loading aligner {}", path.display()))?,
        ),
        None => None,
    };
    let items = read_test_items(&run.test, &store)?;

    let (index, retrieval) = if run.self_tm {
        (None, RetrievalMode::SelfTm)
    } else if let Some(tms_path) = &run.tms {
        let file = File::open(tms_path)
            .with_context(|| format!("opening {}", tms_path.display()))?;
        let ids: Vec<Option<u32>> = serde_json::from_reader(BufReader::new(file))
            .with_context(|| format!("parsing {}", tms_path.display()))?;
        if ids.len() != items.len() {
            bail!(
                "{} holds {} entries but the test set has {} lines",
                tms_path.display(),
                ids.len(),
                items.len()
            );
        }
        (None, RetrievalMode::Assigned(ids))
    } else {
        let path = run.index.as_ref().expect("validated");
        let index =
            load_index(path).with_context(|| format!("loading index {}", path.display()))?;
        (Some(index), RetrievalMode::Index { k: run.k })
    };

    let config = ExperimentConfig {
        systems: run.systems.clone(),
        retrieval,
        width: run.beam,
        max_len: run.max_len,
        alpha: run.alpha,
        fms_threshold: run.fms_threshold,
        bucket_specs: run.buckets.clone(),
        jobs: run.jobs,
        conj: conjunctions_from(run.conjunctions.as_deref())?,
        stop_words: stop_words_from(run.stop_words.as_deref(), &store)?,
    };
    let started = Instant::now();
    let report = run_experiment(&store, index.as_ref(), &model, aligner.as_ref(), &items, &config)?;
    eprintln!(
        "[eval] items={} systems={} jobs={} secs={:.2}",
        items.len(),
        run.systems.len(),
        run.jobs,
        started.elapsed().as_secs_f64()
    );

    let text = render_report(&report);
    match &run.report {
        Some(path) => {
            fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    if let Some(path) = &run.records {
        fs::write(path, render_records(&report))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3000)]
    train_pairs: usize,
    /// Test items built by blurring a stored sentence (a close match
    /// exists).
    #[arg(long, default_value_t = 200)]
    high_items: usize,
    /// Test items nothing in the store comes close to.
    #[arg(long, default_value_t = 120)]
    low_items: usize,
    #[arg(long, default_value = "src")]
    source_lang: String,
    #[arg(long, default_value = "tgt")]
    target_lang: String,
}

fn write_tsv(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (left, right) in rows {
        text.push_str(left);
        text.push('\t');
        text.push_str(right);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen_corpus(args: GenCorpusArgs, seed: u64) -> Result<()> {
    let corpus = generate(&SynthConfig {
        train_pairs: args.train_pairs,
        high_items: args.high_items,
        low_items: args.low_items,
        seed,
        source_lang: args.source_lang.clone(),
        target_lang: args.target_lang.clone(),
    });
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let train: Vec<(String, String)> = corpus
        .store
        .entries
        .iter()
        .map(|e| (e.source_tokens.join(" "), e.target_tokens.join(" ")))
        .collect();
    write_tsv(&args.out.join("train.tsv"), &train)?;

    let as_rows = |items: &[tmprompt::synth::SynthTestItem]| -> Vec<(String, String)> {
        items
            .iter()
            .map(|i| (i.source.join(" "), i.reference.join(" ")))
            .collect()
    };
    write_tsv(&args.out.join("high.tsv"), &as_rows(&corpus.high_items))?;
    write_tsv(&args.out.join("low.tsv"), &as_rows(&corpus.low_items))?;

    let mut combined = as_rows(&corpus.high_items);
    combined.extend(as_rows(&corpus.low_items));
    write_tsv(&args.out.join("test.tsv"), &combined)?;
    let tms: Vec<Option<u32>> = corpus
        .high_items
        .iter()
        .chain(corpus.low_items.iter())
        .map(|i| Some(i.tm_id))
        .collect();
    let file = File::create(args.out.join("test-tms.json"))
        .with_context(|| format!("writing {}", args.out.join("test-tms.json").display()))?;
    serde_json::to_writer(file, &tms)?;

    // The corpus embeds "And"/"Und" as its conjunction words; this file
    // makes eval and translate aware of them for the generated languages.
    let conj = format!(
        "# conjunction word and the comma appended after it, per language\n{}=And ,\n{}=Und ,\n",
        args.source_lang, args.target_lang
    );
    fs::write(args.out.join("conjunctions.conf"), conj)
        .with_context(|| format!("writing {}", args.out.join("conjunctions.conf").display()))?;

    eprintln!(
        "[gen-corpus] train={} high={} low={} seed={} out={}",
        corpus.store.len(),
        corpus.high_items.len(),
        corpus.low_items.len(),
        seed,
        args.out.display()
    );
    Ok(())
}
