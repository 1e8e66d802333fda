//! On-disk formats for intermediate artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, write_jsonl, Corpus};
use crate::embed::{splitmix64, CorpusEmbeddings, CACHE_FILE};
use crate::error::{Error, Result};
use crate::mine::{query_seed, NegativeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ItemKind {
    Doc,
    Query,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingRecord {
    kind: ItemKind,
    id: String,
    values: Vec<f64>,
}

/// Model ids double as file names.
pub fn check_model_id(model_id: &str) -> Result<()> {
    let ok = !model_id.is_empty()
        && !model_id.starts_with('.')
        && model_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "model id `{model_id}` must use only ASCII letters, digits, '-', '_' or '.'"
        )))
    }
}

pub fn embeddings_path(dir: &Path, model_id: &str) -> PathBuf {
    dir.join(format!("{model_id}.jsonl"))
}

pub fn write_embeddings(path: &Path, corpus: &Corpus, emb: &CorpusEmbeddings) -> Result<()> {
    let docs = corpus
        .documents()
        .iter()
        .zip(&emb.documents)
        .map(|(d, v)| EmbeddingRecord {
            kind: ItemKind::Doc,
            id: d.id.clone(),
            values: v.clone(),
        });
    let queries = corpus.queries().iter().zip(&emb.queries).map(|(q, v)| EmbeddingRecord {
        kind: ItemKind::Query,
        id: q.id.clone(),
        values: v.clone(),
    });
    let records: Vec<EmbeddingRecord> = docs.chain(queries).collect();
    write_jsonl(path, &records)
}

/// Reads one model's embeddings and aligns them with corpus order.
pub fn read_embeddings(path: &Path, model_id: &str, corpus: &Corpus) -> Result<CorpusEmbeddings> {
    let records: Vec<EmbeddingRecord> = read_jsonl(path)?;
    let mut docs: Vec<Option<Vec<f64>>> = vec![None; corpus.documents().len()];
    let mut queries: Vec<Option<Vec<f64>>> = vec![None; corpus.queries().len()];
    let mut dim = None;
    for r in records {
        let expected = *dim.get_or_insert(r.values.len());
        if r.values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: r.values.len(),
            });
        }
        let slot = match r.kind {
            ItemKind::Doc => corpus
                .documents()
                .binary_search_by(|d| d.id.as_str().cmp(&r.id))
                .ok()
                .map(|i| &mut docs[i]),
            ItemKind::Query => corpus
                .queries()
                .binary_search_by(|q| q.id.as_str().cmp(&r.id))
                .ok()
                .map(|i| &mut queries[i]),
        };
        // embeddings for items outside the corpus are ignored
        if let Some(slot) = slot {
            *slot = Some(r.values);
        }
    }
    let missing = |id: &str| Error::MissingEmbedding {
        model_id: model_id.to_string(),
        id: id.to_string(),
    };
    let documents = docs
        .into_iter()
        .zip(corpus.documents())
        .map(|(v, d)| v.ok_or_else(|| missing(&d.id)))
        .collect::<Result<Vec<_>>>()?;
    let queries = queries
        .into_iter()
        .zip(corpus.queries())
        .map(|(v, q)| v.ok_or_else(|| missing(&q.id)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorpusEmbeddings {
        model_id: model_id.to_string(),
        dim: dim.unwrap_or(0),
        documents,
        queries,
    })
}

/// Loads every `<model_id>.jsonl` in `dir`, ordered by model id. An
/// embedding cache kept in the same directory is skipped.
pub fn read_embeddings_dir(dir: &Path, corpus: &Corpus) -> Result<Vec<CorpusEmbeddings>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .filter(|p| p.file_name().is_some_and(|n| n != CACHE_FILE))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(format!("no embedding files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let model_id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            read_embeddings(p, model_id, corpus)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

const SPLIT_STREAM: u64 = 0x0073_706c_6974;

/// Seeded, per-query train/test assignment; independent of corpus order.
pub fn split_of(seed: u64, query_id: &str, test_fraction: f64) -> Split {
    let u = (query_seed(splitmix64(seed ^ SPLIT_STREAM), query_id) >> 11) as f64 / (1u64 << 53) as f64;
    if u < test_fraction {
        Split::Test
    } else {
        Split::Train
    }
}

/// One query's candidate pool as written by the mining stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub query_id: String,
    pub split: Split,
    pub positive_doc_id: String,
    pub positive_retrieved: bool,
    pub doc_ids: Vec<String>,
}

/// Loss trace of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub kind: NegativeKind,
    pub triplets: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
}

pub fn triplets_path(dir: &Path, kind: NegativeKind) -> PathBuf {
    dir.join(format!("triplets.{kind}.jsonl"))
}

pub fn model_path(dir: &Path, kind: NegativeKind) -> PathBuf {
    dir.join(format!("model.{kind}.json"))
}

pub fn train_log_path(dir: &Path, kind: NegativeKind) -> PathBuf {
    dir.join(format!("train_log.{kind}.json"))
}

pub fn ranked_path(dir: &Path, run: &str) -> PathBuf {
    dir.join(format!("ranked.{run}.jsonl"))
}

pub fn report_path(dir: &Path, run: &str) -> PathBuf {
    dir.join(format!("report.{run}.csv"))
}
