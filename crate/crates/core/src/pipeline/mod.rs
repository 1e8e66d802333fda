//! End-to-end orchestration: ingest, embed, score, mine, train, rerank and
//! eval, with every intermediate artifact written to a run directory.
//!
//! A stage is skipped when the manifest shows it ran with the same inputs
//! (config section plus the content hashes of upstream outputs) and its
//! outputs are still intact on disk.

mod artifacts;
mod stages;
mod synthetic;

pub use artifacts::{
    check_model_id, embeddings_path, model_path, ranked_path, read_embeddings, read_embeddings_dir, report_path,
    split_of, train_log_path, triplets_path, write_embeddings, PoolRecord, Split, TrainLog,
};
pub use stages::{
    embed_all, evaluation_pools, load_source, mine_pools, rank_pools, triplet_vectors, write_scores, CorpusSource,
    MineOutput,
};
pub use synthetic::{make_synthetic, make_synthetic_benchmark, SyntheticConfig};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{read_jsonl, write_jsonl, Corpus};
use crate::embed::{CorpusEmbeddings, EmbeddingCache, ProviderSpec, CACHE_FILE};
use crate::ensemble::VotingMode;
use crate::error::{Error, Result};
use crate::eval::{
    bucketed_report, compare_runs, read_ranked_jsonl, read_report_file, write_comparison_csv, write_ranked_jsonl,
    write_report_csv, ComparisonRow, Qrels, ReportRow, DEFAULT_KS, DEFAULT_THRESHOLD,
};
use crate::mine::{
    write_scatter_csv, write_triplets, EnsembleView, MiningConfig, NegativeKind, Triplet, TripletRecord,
};
use crate::rank::{train, BilinearRanker, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub voting: VotingMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub threshold: usize,
    /// share of queries held out from training and used for evaluation
    pub test_fraction: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: DEFAULT_KS.to_vec(),
            threshold: DEFAULT_THRESHOLD,
            test_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// required for mining and training
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub corpus: Option<CorpusSource>,
    pub providers: Vec<ProviderSpec>,
    pub ensemble: EnsembleConfig,
    pub mining: MiningConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: None,
            output_dir: PathBuf::from("run"),
            corpus: None,
            providers: Vec::new(),
            ensemble: EnsembleConfig::default(),
            mining: MiningConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.output_dir);
        if let Some(CorpusSource::Files {
            path, queries, qrels, ..
        }) = cfg.corpus.as_mut()
        {
            resolve(path);
            queries.iter_mut().for_each(resolve);
            qrels.iter_mut().for_each(resolve);
        }
        Ok(cfg)
    }

    /// The bundled synthetic benchmark with the demo's tuned settings.
    pub fn demo(output_dir: impl Into<PathBuf>, seed: u64, synthetic: SyntheticConfig) -> Self {
        PipelineConfig {
            seed: Some(seed),
            output_dir: output_dir.into(),
            corpus: Some(CorpusSource::Synthetic(synthetic)),
            providers: vec![
                ProviderSpec::hashing("hash-a", 128, 1),
                ProviderSpec::hashing("hash-b", 128, 2),
            ],
            mining: MiningConfig {
                kinds: vec![NegativeKind::Hard, NegativeKind::Random, NegativeKind::Bm25],
                ..MiningConfig::default()
            },
            train: TrainConfig {
                learning_rate: 1e-2,
                ..TrainConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(Error::Config("a global seed is required".into()));
        }
        if self.corpus.is_none() {
            return Err(Error::Config("no corpus source configured".into()));
        }
        if self.providers.is_empty() {
            return Err(Error::Config("at least one embedding provider is required".into()));
        }
        let mut ids = BTreeSet::new();
        for p in &self.providers {
            p.validate()?;
            check_model_id(&p.model_id)?;
            if !ids.insert(p.model_id.as_str()) {
                return Err(Error::Config(format!("duplicate provider `{}`", p.model_id)));
            }
        }
        if let Some(weights) = &self.ensemble.weights {
            let keys: BTreeSet<&str> = weights.keys().map(String::as_str).collect();
            if keys != ids {
                return Err(Error::Config(
                    "ensemble weights must name every provider exactly".into(),
                ));
            }
            crate::ensemble::soft_vote(&weights.keys().map(|k| (k.clone(), 0.0)).collect(), Some(weights))
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        self.mining.validate()?;
        if self.mining.kinds.is_empty() {
            return Err(Error::Config("no negative kinds selected".into()));
        }
        self.train.validate()?;
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(Error::Config("eval ks must be non-empty and at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.eval.test_fraction) {
            return Err(Error::Config("test_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Hash of everything that affects results; the output location is
    /// excluded.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Hash over every file below `path` (or `path` itself), by relative path
/// and content.
fn tree_hash(path: &Path) -> Result<String> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let p = entry.map_err(|e| Error::io(dir, e))?.path();
            if p.is_dir() {
                walk(&p, out)?;
            } else {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    if path.is_dir() {
        walk(path, &mut files)?;
    } else {
        files.push(path.to_path_buf());
    }
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(path).unwrap_or(&f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(&f).map_err(|e| Error::io(&f, e))?);
        h.update([0]);
    }
    Ok(hex::encode(h.finalize()))
}

const MANIFEST_FILE: &str = "manifest.json";
const LOCK_FILE: &str = ".lock";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_hash: String,
    /// output path relative to the run directory → sha256
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Exclusive ownership of a run directory for the life of the guard.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(run_dir: &Path) -> Result<Self> {
        fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let path = run_dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(run_dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Fixed layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }
    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus")
    }
    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings")
    }
    pub fn cache(&self) -> PathBuf {
        self.root.join("cache").join(CACHE_FILE)
    }
    pub fn scores(&self) -> PathBuf {
        self.root.join("scores.csv")
    }
    pub fn mine(&self) -> PathBuf {
        self.root.join("mine")
    }
    pub fn pools(&self) -> PathBuf {
        self.mine().join("pools.jsonl")
    }
    pub fn scatter(&self) -> PathBuf {
        self.mine().join("scatter.csv")
    }
    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }
    pub fn ranked(&self) -> PathBuf {
        self.root.join("ranked")
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }
}

/// Result of a pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub run_dir: PathBuf,
    pub executed: Vec<&'static str>,
    pub skipped: Vec<&'static str>,
    /// run name (`baseline` or a negative kind) → report rows
    pub reports: BTreeMap<String, Vec<ReportRow>>,
    /// random-negative ranker (a) against hard-negative ranker (b)
    pub comparison: Option<Vec<ComparisonRow>>,
    pub train_logs: Vec<TrainLog>,
}

pub const BASELINE_RUN: &str = "baseline";

struct State<'c> {
    cfg: &'c PipelineConfig,
    seed: u64,
    layout: RunLayout,
    corpus: Option<Corpus>,
    embeddings: Option<Vec<CorpusEmbeddings>>,
}

impl State<'_> {
    fn load_corpus(&mut self) -> Result<()> {
        if self.corpus.is_none() {
            self.corpus = Some(Corpus::load(&self.layout.corpus())?);
        }
        Ok(())
    }

    fn load_all(&mut self) -> Result<()> {
        self.load_corpus()?;
        if self.embeddings.is_none() {
            let corpus = self.corpus.as_ref().expect("loaded above");
            let dir = self.layout.embeddings();
            let embs = self
                .cfg
                .providers
                .iter()
                .map(|p| read_embeddings(&embeddings_path(&dir, &p.model_id), &p.model_id, corpus))
                .collect::<Result<Vec<_>>>()?;
            self.embeddings = Some(embs);
        }
        Ok(())
    }

    fn view(&self) -> Result<EnsembleView<'_>> {
        EnsembleView::new(
            self.corpus.as_ref().expect("load_all first"),
            self.embeddings.as_deref().expect("load_all first"),
            self.cfg.ensemble.weights.as_ref(),
            self.cfg.ensemble.voting,
        )
    }
}

struct Runner {
    root: PathBuf,
    manifest: Manifest,
    executed: Vec<&'static str>,
    skipped: Vec<&'static str>,
}

impl Runner {
    fn outputs_intact(&self, rec: &StageRecord) -> bool {
        rec.outputs.iter().all(|(rel, hash)| {
            let p = self.root.join(rel);
            p.is_file() && file_hash(&p).is_ok_and(|h| h == *hash)
        })
    }

    fn input_hash(&self, name: &str, params: &serde_json::Value, upstream: &[&str]) -> String {
        let up: BTreeMap<&str, Option<&BTreeMap<String, String>>> = upstream
            .iter()
            .map(|s| (*s, self.manifest.stages.get(*s).map(|r| &r.outputs)))
            .collect();
        let blob = serde_json::json!({ "stage": name, "params": params, "upstream": up });
        sha256_hex(blob.to_string().as_bytes())
    }

    fn stage<S, F>(
        &mut self,
        state: &mut S,
        name: &'static str,
        params: serde_json::Value,
        upstream: &[&str],
        body: F,
    ) -> Result<()>
    where
        F: FnOnce(&mut S) -> Result<Vec<PathBuf>>,
    {
        let input_hash = self.input_hash(name, &params, upstream);
        if let Some(rec) = self.manifest.stages.get(name) {
            if rec.input_hash == input_hash && self.outputs_intact(rec) {
                log::info!("stage {name}: up to date, skipped");
                self.skipped.push(name);
                return Ok(());
            }
        }
        log::info!("stage {name}: running");
        let wrap = |e: Error| Error::Stage {
            stage: name,
            source: Box::new(e),
        };
        let outputs = body(state).map_err(wrap)?;
        let mut record = StageRecord {
            input_hash,
            outputs: BTreeMap::new(),
        };
        for p in outputs {
            let rel = p
                .strip_prefix(&self.root)
                .unwrap_or(&p)
                .to_string_lossy()
                .replace('\\', "/");
            record.outputs.insert(rel, file_hash(&p).map_err(wrap)?);
        }
        self.manifest.stages.insert(name.to_string(), record);
        self.write_manifest().map_err(wrap)?;
        self.executed.push(name);
        Ok(())
    }

    fn write_manifest(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::invalid(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

fn json_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config values serialize")
}

fn read_triplet_ids(path: &Path) -> Result<Vec<Triplet>> {
    let records: Vec<TripletRecord> = read_jsonl(path)?;
    Ok(records
        .into_iter()
        .map(|r| Triplet {
            query_id: r.query_id,
            positive_doc_id: r.positive_doc_id,
            negative_doc_id: r.negative_doc_id,
            negative_kind: r.negative_kind,
        })
        .collect())
}

/// Runs every stage into `config.output_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    config.validate()?;
    if let Some(CorpusSource::Files {
        path, queries, qrels, ..
    }) = &config.corpus
    {
        stages::ensure_exists(path)?;
        for p in queries.iter().chain(qrels) {
            stages::ensure_exists(p)?;
        }
    }
    let seed = config.seed.expect("validated");
    let layout = RunLayout::new(&config.output_dir);
    let _lock = RunLock::acquire(&layout.root)?;

    let previous = layout.manifest();
    let stages_before = if previous.is_file() {
        match Manifest::load(&previous) {
            Ok(m) if m.format_version == MANIFEST_VERSION => m.stages,
            _ => BTreeMap::new(),
        }
    } else {
        BTreeMap::new()
    };
    let mut runner = Runner {
        root: layout.root.clone(),
        manifest: Manifest {
            format_version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.content_hash(),
            seed,
            stages: stages_before,
        },
        executed: Vec::new(),
        skipped: Vec::new(),
    };
    let mut state = State {
        cfg: config,
        seed,
        layout: layout.clone(),
        corpus: None,
        embeddings: None,
    };
    let kinds = config.mining.kinds.clone();

    let source = config.corpus.as_ref().expect("validated");
    let source_hash = match source {
        CorpusSource::Files {
            path, queries, qrels, ..
        } => {
            let mut parts = vec![tree_hash(path)?];
            for p in queries.iter().chain(qrels) {
                parts.push(file_hash(p)?);
            }
            parts.join(",")
        }
        CorpusSource::Synthetic(_) => String::new(),
    };
    runner.stage(
        &mut state,
        "ingest",
        serde_json::json!({ "source": json_value(source), "hash": source_hash, "seed": seed }),
        &[],
        |st| {
            let corpus = load_source(source, st.seed)?;
            let dir = st.layout.corpus();
            corpus.write_jsonl(&dir)?;
            st.corpus = Some(corpus);
            Ok(["documents.jsonl", "queries.jsonl", "qrels.jsonl"]
                .iter()
                .map(|f| dir.join(f))
                .collect())
        },
    )?;

    runner.stage(&mut state, "embed", json_value(&config.providers), &["ingest"], |st| {
        st.load_corpus()?;
        let corpus = st.corpus.as_ref().expect("loaded");
        let cache = EmbeddingCache::open(&st.layout.cache())?;
        let embs = embed_all(corpus, &st.cfg.providers, Some(&cache))?;
        let dir = st.layout.embeddings();
        let mut outputs = Vec::new();
        for e in &embs {
            let path = embeddings_path(&dir, &e.model_id);
            write_embeddings(&path, corpus, e)?;
            outputs.push(path);
        }
        st.embeddings = Some(embs);
        Ok(outputs)
    })?;

    runner.stage(
        &mut state,
        "score",
        serde_json::json!({ "ensemble": json_value(&config.ensemble), "k": config.mining.k_retrieve }),
        &["ingest", "embed"],
        |st| {
            st.load_all()?;
            let path = st.layout.scores();
            write_scores(&st.view()?, st.cfg.mining.k_retrieve, create_file(&path)?)?;
            Ok(vec![path])
        },
    )?;

    runner.stage(
        &mut state,
        "mine",
        serde_json::json!({
            "ensemble": json_value(&config.ensemble),
            "mining": json_value(&config.mining),
            "seed": seed,
            "test_fraction": config.eval.test_fraction,
        }),
        &["ingest", "embed"],
        |st| {
            st.load_all()?;
            let out = mine_pools(&st.view()?, &st.cfg.mining, st.seed, st.cfg.eval.test_fraction)?;
            let corpus = st.corpus.as_ref().expect("loaded");
            let mut outputs = vec![st.layout.pools(), st.layout.scatter()];
            write_jsonl(&st.layout.pools(), &out.pools)?;
            write_scatter_csv(&out.scatter, create_file(&st.layout.scatter())?)?;
            for &kind in &st.cfg.mining.kinds {
                let path = triplets_path(&st.layout.mine(), kind);
                let of_kind: Vec<Triplet> = out
                    .triplets
                    .iter()
                    .filter(|t| t.negative_kind == kind)
                    .cloned()
                    .collect();
                let mut w = create_file(&path)?;
                write_triplets(&of_kind, corpus, &mut w)?;
                std::io::Write::flush(&mut w).map_err(|e| Error::io(&path, e))?;
                outputs.push(path);
            }
            Ok(outputs)
        },
    )?;

    runner.stage(
        &mut state,
        "train",
        serde_json::json!({ "train": json_value(&config.train), "seed": seed, "ensemble": json_value(&config.ensemble) }),
        &["ingest", "embed", "mine"],
        |st| {
            st.load_all()?;
            let view = st.view()?;
            let mut outputs = Vec::new();
            for &kind in &st.cfg.mining.kinds {
                let triplets = read_triplet_ids(&triplets_path(&st.layout.mine(), kind))?;
                let vectors = triplet_vectors(&view, &triplets)?;
                let cfg = TrainConfig {
                    seed: st.seed,
                    ..st.cfg.train.clone()
                };
                let trained = train(&vectors, &cfg).map_err(|e| Error::invalid(format!("{kind} ranker: {e}")))?;
                let model = model_path(&st.layout.models(), kind);
                trained.ranker.save(&model)?;
                let log_path = train_log_path(&st.layout.models(), kind);
                let log = TrainLog {
                    kind,
                    triplets: vectors.len(),
                    initial_loss: trained.initial_loss,
                    final_loss: trained.final_loss,
                    epoch_losses: trained.epoch_losses,
                };
                let mut text = serde_json::to_string_pretty(&log).map_err(|e| Error::invalid(e.to_string()))?;
                text.push('\n');
                fs::write(&log_path, text).map_err(|e| Error::io(&log_path, e))?;
                outputs.push(model);
                outputs.push(log_path);
            }
            Ok(outputs)
        },
    )?;

    runner.stage(
        &mut state,
        "rerank",
        serde_json::json!({ "ensemble": json_value(&config.ensemble) }),
        &["ingest", "embed", "mine", "train"],
        |st| {
            st.load_all()?;
            let view = st.view()?;
            let pools: Vec<PoolRecord> = read_jsonl(&st.layout.pools())?;
            let eval_pools = evaluation_pools(&pools);
            let dir = st.layout.ranked();
            let baseline = ranked_path(&dir, BASELINE_RUN);
            write_ranked_jsonl(&baseline, &rank_pools(&view, None, &eval_pools)?)?;
            let mut outputs = vec![baseline];
            for &kind in &st.cfg.mining.kinds {
                let ranker = BilinearRanker::load(&model_path(&st.layout.models(), kind))?;
                let path = ranked_path(&dir, kind.as_str());
                write_ranked_jsonl(&path, &rank_pools(&view, Some(&ranker), &eval_pools)?)?;
                outputs.push(path);
            }
            Ok(outputs)
        },
    )?;

    runner.stage(
        &mut state,
        "eval",
        json_value(&config.eval),
        &["ingest", "rerank"],
        |st| {
            st.load_corpus()?;
            let corpus = st.corpus.as_ref().expect("loaded");
            let qrels = Qrels::from_pairs(corpus.qrels());
            let dir = st.layout.reports();
            let mut outputs = Vec::new();
            let runs = std::iter::once(BASELINE_RUN).chain(st.cfg.mining.kinds.iter().map(|k| k.as_str()));
            for run in runs {
                let lists = read_ranked_jsonl(&ranked_path(&st.layout.ranked(), run))?;
                let reports = bucketed_report(&lists, &qrels, corpus, &st.cfg.eval.ks, st.cfg.eval.threshold)?;
                let path = report_path(&dir, run);
                let mut w = create_file(&path)?;
                write_report_csv(&reports, &mut w)?;
                std::io::Write::flush(&mut w).map_err(|e| Error::io(&path, e))?;
                outputs.push(path);
            }
            for (a, b) in [(BASELINE_RUN, "hard"), ("random", "hard")] {
                let (pa, pb) = (report_path(&dir, a), report_path(&dir, b));
                if pa.is_file()
                    && pb.is_file()
                    && (a == BASELINE_RUN || kinds.contains(&NegativeKind::Random))
                    && kinds.contains(&NegativeKind::Hard)
                {
                    let rows = compare_runs(&read_report_file(&pa)?, &read_report_file(&pb)?)?;
                    let path = dir.join(format!("comparison.{a}_vs_{b}.csv"));
                    let mut w = create_file(&path)?;
                    write_comparison_csv(&rows, &mut w)?;
                    std::io::Write::flush(&mut w).map_err(|e| Error::io(&path, e))?;
                    outputs.push(path);
                }
            }
            Ok(outputs)
        },
    )?;

    let mut reports = BTreeMap::new();
    for run in std::iter::once(BASELINE_RUN).chain(kinds.iter().map(|k| k.as_str())) {
        reports.insert(run.to_string(), read_report_file(&report_path(&layout.reports(), run))?);
    }
    let comparison = match (reports.get("random"), reports.get("hard")) {
        (Some(a), Some(b)) => Some(compare_runs(a, b)?),
        _ => None,
    };
    let mut train_logs = Vec::new();
    for &kind in &kinds {
        let path = train_log_path(&layout.models(), kind);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        train_logs.push(serde_json::from_str(&text).map_err(|e| Error::invalid(e.to_string()))?);
    }
    Ok(PipelineOutcome {
        run_dir: layout.root,
        executed: runner.executed,
        skipped: runner.skipped,
        reports,
        comparison,
        train_logs,
    })
}

/// Renders report rows of several runs side by side, baseline first.
pub fn summary_table(reports: &BTreeMap<String, Vec<ReportRow>>) -> String {
    let mut runs: Vec<&str> = reports.keys().map(String::as_str).collect();
    runs.sort_by_key(|r| (*r != BASELINE_RUN, *r));
    let mut keys = Vec::new();
    let mut values: BTreeMap<(&str, String), f64> = BTreeMap::new();
    for (run, rows) in reports {
        for r in rows {
            let key = format!("{:<6} {:<10} {:>3}", r.bucket.as_str(), r.metric.as_str(), r.k);
            if !keys.contains(&(r.bucket, r.metric, r.k, key.clone())) {
                keys.push((r.bucket, r.metric, r.k, key.clone()));
            }
            values.insert((run.as_str(), key), r.value);
        }
    }
    keys.sort();
    let mut out = format!("{:<6} {:<10} {:>3}", "bucket", "metric", "k");
    for run in &runs {
        let _ = write!(out, " {run:>9}");
    }
    out.push('\n');
    for (_, _, _, key) in keys {
        out.push_str(&key);
        for run in &runs {
            match values.get(&(*run, key.clone())) {
                Some(v) => {
                    let _ = write!(out, " {v:>9.4}");
                }
                None => {
                    let _ = write!(out, " {:>9}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
