use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hardneg_core::corpus::{
    ingest, length_stats, read_jsonl, Corpus, IngestOptions, InputFormat, QrelPair, DEFAULT_BUCKET_WIDTH,
};
use hardneg_core::embed::EmbeddingCache;
use hardneg_core::eval::{
    bucketed_report, compare_runs, read_ranked_jsonl, read_report_file, write_comparison_csv, write_ranked_jsonl,
    write_report_csv, Qrels,
};
use hardneg_core::mine::{write_scatter_csv, write_triplets, EnsembleView, NegativeKind, Triplet, TripletRecord};
use hardneg_core::pipeline::{
    embed_all, embeddings_path, evaluation_pools, mine_pools, rank_pools, read_embeddings_dir, run_pipeline,
    summary_table, triplet_vectors, triplets_path, write_embeddings, write_scores, PipelineConfig, PoolRecord,
    SyntheticConfig,
};
use hardneg_core::rank::{train, BilinearRanker};

#[derive(Parser)]
#[command(name = "hardneg", version, about = "Hard-negative mining and re-ranker training")]
struct Cli {
    /// pipeline config (TOML); flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// global seed for mining, training and synthetic data
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// log more (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage from the config into its output directory
    Run {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the synthetic benchmark and run the whole pipeline on it
    Demo(DemoArgs),
    /// Read HTML, text or JSONL sources into corpus JSONL files
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: InputFormat,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        qrels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2048)]
        threshold: usize,
    },
    /// Embed a corpus with every provider in the config
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// embedding cache file (default: <out>/embeddings.cache.jsonl)
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Write per-model and ensemble scores for each query's candidate pool
    Score {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        k_retrieve: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pool candidates, cluster and emit hard/random/BM25 triplets
    Mine {
        #[command(flatten)]
        inputs: Inputs,
        /// candidates retrieved per model and query
        #[arg(long)]
        k_retrieve: Option<usize>,
        /// K-Means clusters per candidate pool
        #[arg(long)]
        clusters: Option<usize>,
        /// negatives per query
        #[arg(long)]
        hard_m: Option<usize>,
        /// negative kinds to emit (repeat or comma-separate)
        #[arg(long, value_delimiter = ',')]
        negative_kind: Option<Vec<NegativeKind>>,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a bilinear re-ranker on a triplet file
    Train {
        #[arg(long)]
        triplets: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        dropout: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-rank candidate pools with a trained model (or the ensemble)
    Rerank {
        /// omit to order pools by ensemble similarity
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        pools: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
        /// rank every pool, not just the test split
        #[arg(long)]
        all: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute bucketed MRR, precision and score averages for a ranked run
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        /// corpus directory for document lengths (default: the qrels file's directory)
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        #[arg(long)]
        threshold: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Diff two report CSVs (delta = b - a)
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Inputs {
    /// corpus directory written by `ingest`
    #[arg(long)]
    corpus: PathBuf,
    /// embeddings directory written by `embed`
    #[arg(long)]
    embeddings: PathBuf,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, default_value = "hardneg-demo")]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    queries: usize,
    #[arg(long, default_value_t = 5)]
    confounders: usize,
    #[arg(long, default_value_t = 12)]
    fillers: usize,
    #[arg(long)]
    epochs: Option<usize>,
}

const DEMO_SEED: u64 = 42;

fn base_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).with_context(|| format!("loading config {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    Ok(cfg)
}

fn require_seed(cfg: &PipelineConfig) -> Result<u64> {
    cfg.seed
        .context("a seed is required: pass --seed or set `seed` in the config")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_inputs(inputs: &Inputs) -> Result<(Corpus, Vec<hardneg_core::embed::CorpusEmbeddings>)> {
    let corpus = Corpus::load(&inputs.corpus)?;
    let embeddings = read_embeddings_dir(&inputs.embeddings, &corpus)?;
    Ok((corpus, embeddings))
}

fn view<'a>(
    cfg: &'a PipelineConfig,
    corpus: &'a Corpus,
    embeddings: &'a [hardneg_core::embed::CorpusEmbeddings],
) -> Result<EnsembleView<'a>> {
    Ok(EnsembleView::new(
        corpus,
        embeddings,
        cfg.ensemble.weights.as_ref(),
        cfg.ensemble.voting,
    )?)
}

fn print_outcome(outcome: &hardneg_core::pipeline::PipelineOutcome) {
    println!("run directory: {}", outcome.run_dir.display());
    if !outcome.skipped.is_empty() {
        println!("up to date: {}", outcome.skipped.join(", "));
    }
    for log in &outcome.train_logs {
        println!(
            "{:>6} ranker: {} triplets, mean loss {:.4} -> {:.4}",
            log.kind.as_str(),
            log.triplets,
            log.initial_loss,
            log.final_loss
        );
    }
    println!();
    print!("{}", summary_table(&outcome.reports));
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli)?;
    match cli.command {
        Command::Run { out } => {
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let outcome = run_pipeline(&cfg)?;
            print_outcome(&outcome);
        }
        Command::Demo(args) => {
            let seed = cfg.seed.unwrap_or(DEMO_SEED);
            let mut demo = PipelineConfig::demo(
                &args.out,
                seed,
                SyntheticConfig {
                    n_queries: args.queries,
                    confounders_per_query: args.confounders,
                    fillers: Some(args.fillers),
                    ..SyntheticConfig::default()
                },
            );
            if let Some(epochs) = args.epochs {
                demo.train.epochs = epochs;
            }
            let outcome = run_pipeline(&demo)?;
            print_outcome(&outcome);
        }
        Command::Ingest {
            input,
            format,
            queries,
            qrels,
            out,
            threshold,
        } => {
            let corpus = ingest(&input, format, &IngestOptions { queries, qrels }).context("stage `ingest` failed")?;
            corpus.write_jsonl(&out)?;
            let docs = length_stats(
                corpus.documents().iter().map(|d| d.word_count),
                threshold,
                DEFAULT_BUCKET_WIDTH,
            );
            let qs = length_stats(
                corpus.queries().iter().map(|q| q.word_count),
                threshold,
                DEFAULT_BUCKET_WIDTH,
            );
            println!(
                "{} documents ({} short, {} long at {} words), {} queries, {} qrels",
                docs.total(),
                docs.short_count,
                docs.long_count,
                threshold,
                qs.total(),
                corpus.qrels().len()
            );
            for (lower, count) in &docs.histogram {
                println!("  {:>6}-{:<6} {count}", lower, lower + docs.bucket_width - 1);
            }
        }
        Command::Embed { corpus, out, cache } => {
            if cfg.providers.is_empty() {
                bail!("no providers configured; pass --config with a [[providers]] table");
            }
            let corpus = Corpus::load(&corpus)?;
            let cache = EmbeddingCache::open(&cache.unwrap_or_else(|| out.join(hardneg_core::embed::CACHE_FILE)))?;
            let embs = embed_all(&corpus, &cfg.providers, Some(&cache)).context("stage `embed` failed")?;
            for e in &embs {
                write_embeddings(&embeddings_path(&out, &e.model_id), &corpus, e)?;
                println!(
                    "{}: {} documents, {} queries, dim {}",
                    e.model_id,
                    e.documents.len(),
                    e.queries.len(),
                    e.dim
                );
            }
        }
        Command::Score {
            inputs,
            k_retrieve,
            out,
        } => {
            let (corpus, embs) = load_inputs(&inputs)?;
            let k = k_retrieve.unwrap_or(cfg.mining.k_retrieve);
            let mut w = create(&out)?;
            write_scores(&view(&cfg, &corpus, &embs)?, k, &mut w).context("stage `score` failed")?;
            w.flush()?;
        }
        Command::Mine {
            inputs,
            k_retrieve,
            clusters,
            hard_m,
            negative_kind,
            test_fraction,
            out,
        } => {
            let seed = require_seed(&cfg)?;
            if let Some(k) = k_retrieve {
                cfg.mining.k_retrieve = k;
            }
            if let Some(k) = clusters {
                cfg.mining.clustering.k = k;
            }
            if let Some(m) = hard_m {
                cfg.mining.hard_m = m;
            }
            if let Some(kinds) = negative_kind {
                cfg.mining.kinds = kinds;
            }
            let test_fraction = test_fraction.unwrap_or(cfg.eval.test_fraction);
            let (corpus, embs) = load_inputs(&inputs)?;
            let mined = mine_pools(&view(&cfg, &corpus, &embs)?, &cfg.mining, seed, test_fraction)
                .context("stage `mine` failed")?;
            hardneg_core::corpus::write_jsonl(&out.join("pools.jsonl"), &mined.pools)?;
            write_scatter_csv(&mined.scatter, create(&out.join("scatter.csv"))?)?;
            for &kind in &cfg.mining.kinds {
                let of_kind: Vec<Triplet> = mined
                    .triplets
                    .iter()
                    .filter(|t| t.negative_kind == kind)
                    .cloned()
                    .collect();
                let path = triplets_path(&out, kind);
                let mut w = create(&path)?;
                write_triplets(&of_kind, &corpus, &mut w)?;
                w.flush()?;
                println!("{kind}: {} triplets -> {}", of_kind.len(), path.display());
            }
        }
        Command::Train {
            triplets,
            inputs,
            epochs,
            batch,
            margin,
            lr,
            dropout,
            out,
        } => {
            let seed = require_seed(&cfg)?;
            let t = &mut cfg.train;
            t.seed = seed;
            if let Some(v) = epochs {
                t.epochs = v;
            }
            if let Some(v) = batch {
                t.batch_size = v;
            }
            if let Some(v) = margin {
                t.margin = v;
            }
            if let Some(v) = lr {
                t.learning_rate = v;
            }
            if let Some(v) = dropout {
                t.dropout = v;
            }
            let (corpus, embs) = load_inputs(&inputs)?;
            let records: Vec<TripletRecord> = read_jsonl(&triplets)?;
            let ids: Vec<Triplet> = records
                .into_iter()
                .map(|r| Triplet {
                    query_id: r.query_id,
                    positive_doc_id: r.positive_doc_id,
                    negative_doc_id: r.negative_doc_id,
                    negative_kind: r.negative_kind,
                })
                .collect();
            let vectors = triplet_vectors(&view(&cfg, &corpus, &embs)?, &ids)?;
            let trained = train(&vectors, &cfg.train).context("stage `train` failed")?;
            trained.ranker.save(&out)?;
            for (epoch, loss) in trained.epoch_losses.iter().enumerate() {
                println!("epoch {:>3}  loss {loss:.6}", epoch + 1);
            }
            println!("mean loss {:.4} -> {:.4}", trained.initial_loss, trained.final_loss);
        }
        Command::Rerank {
            model,
            pools,
            inputs,
            all,
            out,
        } => {
            let (corpus, embs) = load_inputs(&inputs)?;
            let ranker = model.as_deref().map(BilinearRanker::load).transpose()?;
            let pools: Vec<PoolRecord> = read_jsonl(&pools)?;
            let selected: Vec<&PoolRecord> = if all {
                pools.iter().collect()
            } else {
                evaluation_pools(&pools)
            };
            let lists = rank_pools(&view(&cfg, &corpus, &embs)?, ranker.as_ref(), &selected)
                .context("stage `rerank` failed")?;
            write_ranked_jsonl(&out, &lists)?;
            println!("{} ranked lists -> {}", lists.len(), out.display());
        }
        Command::Eval {
            run,
            qrels,
            corpus,
            ks,
            threshold,
            out,
        } => {
            let corpus_dir = corpus.unwrap_or_else(|| qrels.parent().unwrap_or(Path::new(".")).to_path_buf());
            let corpus = Corpus::load(&corpus_dir)?;
            let pairs: Vec<QrelPair> = read_jsonl(&qrels)?;
            let lists = read_ranked_jsonl(&run)?;
            let ks = ks.unwrap_or_else(|| cfg.eval.ks.clone());
            let threshold = threshold.unwrap_or(cfg.eval.threshold);
            let reports = bucketed_report(&lists, &Qrels::from_pairs(&pairs), &corpus, &ks, threshold)
                .context("stage `eval` failed")?;
            match out {
                Some(path) => {
                    let mut w = create(&path)?;
                    write_report_csv(&reports, &mut w)?;
                    w.flush()?;
                }
                None => write_report_csv(&reports, io::stdout().lock())?,
            }
            for r in &reports {
                eprintln!(
                    "{}: {} queries{}",
                    r.bucket,
                    r.num_queries,
                    if r.is_empty() { " (empty)" } else { "" }
                );
            }
        }
        Command::Compare { a, b, out } => {
            let rows = compare_runs(&read_report_file(&a)?, &read_report_file(&b)?)?;
            match out {
                Some(path) => {
                    let mut w = create(&path)?;
                    write_comparison_csv(&rows, &mut w)?;
                    w.flush()?;
                }
                None => write_comparison_csv(&rows, io::stdout().lock())?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
