//! Stage bodies, usable on their own or through the pipeline runner.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{ingest, Corpus, IngestOptions, InputFormat};
use crate::embed::{CorpusEmbeddings, EmbeddingCache, ProviderSpec};
use crate::ensemble::{write_score_csv, EnsembleScore, VotingMode};
use crate::error::{Error, Result};
use crate::eval::RankedList;
use crate::mine::{mine, scatter_rows, EnsembleView, MiningConfig, PointRole, Triplet};
use crate::par;
use crate::rank::{rerank, BilinearRanker, TripletVectors};

use super::artifacts::{split_of, PoolRecord, Split};
use super::synthetic::{make_synthetic, SyntheticConfig};

/// Where the corpus comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum CorpusSource {
    Files {
        path: PathBuf,
        format: InputFormat,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        queries: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        qrels: Option<PathBuf>,
    },
    Synthetic(SyntheticConfig),
}

/// Reads or generates the corpus. A synthetic corpus is generated from
/// `seed`.
pub fn load_source(source: &CorpusSource, seed: u64) -> Result<Corpus> {
    match source {
        CorpusSource::Files {
            path,
            format,
            queries,
            qrels,
        } => ingest(
            path,
            *format,
            &IngestOptions {
                queries: queries.clone(),
                qrels: qrels.clone(),
            },
        ),
        CorpusSource::Synthetic(cfg) => make_synthetic(&SyntheticConfig { seed, ..cfg.clone() }),
    }
}

pub fn embed_all(
    corpus: &Corpus,
    providers: &[ProviderSpec],
    cache: Option<&EmbeddingCache>,
) -> Result<Vec<CorpusEmbeddings>> {
    providers
        .iter()
        .map(|p| CorpusEmbeddings::compute(p, corpus, cache))
        .collect()
}

/// Per-model and combined scores for every minable query's top-`k` pool.
pub fn write_scores<W: Write>(view: &EnsembleView<'_>, k: usize, out: W) -> Result<()> {
    let queries: Vec<usize> = view
        .corpus()
        .minable_queries()
        .iter()
        .map(|q| view.query_index(&q.id))
        .collect::<Result<_>>()?;
    let matrices = view.query_matrices(&queries)?;
    let rows: Vec<usize> = (0..queries.len()).collect();
    let tables = par::try_map(&rows, |&row| {
        let pool = view.pool(&matrices, row, k);
        view.score_table(queries[row], &pool)
    })?;
    let rows: Vec<EnsembleScore> = tables.into_iter().flatten().collect();
    write_score_csv(&rows, out)
}

pub struct MineOutput {
    pub pools: Vec<PoolRecord>,
    /// triplets of training-split queries only
    pub triplets: Vec<Triplet>,
    pub scatter: Vec<(String, PointRole, f64, f64)>,
}

/// Mines every minable query, assigns the train/test split and projects
/// the first evaluation query's neighbourhood to 2-D.
pub fn mine_pools(view: &EnsembleView<'_>, config: &MiningConfig, seed: u64, test_fraction: f64) -> Result<MineOutput> {
    let result = mine(view, &[], config, seed)?;
    let split = |q: &str| split_of(seed, q, test_fraction);
    let pools: Vec<PoolRecord> = result
        .mined
        .iter()
        .map(|m| PoolRecord {
            query_id: m.query_id.clone(),
            split: split(&m.query_id),
            positive_doc_id: m.positive_id.clone(),
            positive_retrieved: m.pool.positive.is_some(),
            doc_ids: m.pool.doc_ids.clone(),
        })
        .collect();
    let triplets = result
        .triplets
        .into_iter()
        .filter(|t| split(&t.query_id) == Split::Train)
        .collect();
    let eval_ids = evaluation_pools(&pools);
    let scatter = match eval_ids.first() {
        Some(p) => {
            let mined = result
                .mined
                .iter()
                .find(|m| m.query_id == p.query_id)
                .expect("pool came from this mining run");
            scatter_rows(view, mined)?
        }
        None => Vec::new(),
    };
    Ok(MineOutput {
        pools,
        triplets,
        scatter,
    })
}

/// Test-split pools, or every pool when the test split is empty.
pub fn evaluation_pools(pools: &[PoolRecord]) -> Vec<&PoolRecord> {
    let test: Vec<&PoolRecord> = pools.iter().filter(|p| p.split == Split::Test).collect();
    if test.is_empty() {
        if !pools.is_empty() {
            log::warn!("test split is empty; evaluating on all queries");
        }
        pools.iter().collect()
    } else {
        test
    }
}

/// Ensemble features for each triplet member.
pub fn triplet_vectors(view: &EnsembleView<'_>, triplets: &[Triplet]) -> Result<Vec<TripletVectors>> {
    triplets
        .iter()
        .map(|t| {
            Ok(TripletVectors {
                query: view.query_feature(view.query_index(&t.query_id)?).to_vec(),
                positive: view.doc_feature(view.doc_index(&t.positive_doc_id)?).to_vec(),
                negative: view.doc_feature(view.doc_index(&t.negative_doc_id)?).to_vec(),
            })
        })
        .collect()
}

/// Re-ranks each pool with `ranker`, or orders it by the ensemble when no
/// ranker is given. Under hard voting the ensemble order carries
/// rank-derived scores `1 - i/n`.
pub fn rank_pools(
    view: &EnsembleView<'_>,
    ranker: Option<&BilinearRanker>,
    pools: &[&PoolRecord],
) -> Result<Vec<RankedList>> {
    par::try_map(pools, |p| {
        let q = view.query_index(&p.query_id)?;
        match ranker {
            Some(r) => rerank(r, &p.query_id, view.query_feature(q), &p.doc_ids, |id| {
                view.doc_index(id).ok().map(|d| view.doc_feature(d))
            }),
            None => {
                let mut order = view.ensemble_ranking(q, &p.doc_ids)?;
                if view.voting() == VotingMode::Hard {
                    let n = order.len() as f64;
                    for (i, entry) in order.iter_mut().enumerate() {
                        entry.1 = 1.0 - i as f64 / n;
                    }
                }
                RankedList::new(p.query_id.clone(), order)
            }
        }
    })
}

pub fn ensure_exists(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} does not exist", path.display())))
    }
}
