//! Hard-negative mining: pool each query's top-k candidates across models,
//! cluster them together with the query and its positive, and pick the
//! candidates closest to both. Random and BM25 samplers provide baselines.

mod baseline;
mod hard;
mod kmeans;
mod project;
mod retrieve;
mod triplet;

pub use baseline::{bm25_negatives, sample_random_negatives, Bm25Index, Bm25Params};
pub use hard::{
    select_hard_negatives, Eligibility, HardCandidate, HardSelection, HardnessRule, LengthBand, PositiveRef,
};
pub use kmeans::{inertia, kmeans, ClusterAssignment, ClusteringConfig};
pub use project::{project_2d, write_scatter_csv, PointRole};
pub use retrieve::{pool_candidates, top_k, top_k_retrieve, CandidatePool};
pub use triplet::{build_triplets, write_triplets, NegativeKind, NegativeList, Triplet, TripletRecord};

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::embed::{concat_normalized, seeded_hash, splitmix64, CorpusEmbeddings};
use crate::ensemble::{
    dot, ensemble_table, hard_vote, similarity_matrix, soft_vote, EnsembleScore, ModelVectors, SimilarityMatrix,
    VotingMode,
};
use crate::error::{Error, Result};
use crate::par;

/// RNG seed for one query, independent of scheduling and of other queries.
pub fn query_seed(global_seed: u64, query_id: &str) -> u64 {
    seeded_hash(global_seed, query_id.as_bytes())
}

const KMEANS_STREAM: u64 = 0x6b6d_6561_6e73;
const RANDOM_STREAM: u64 = 0x7261_6e64_6f6d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    pub k_retrieve: usize,
    pub clustering: ClusteringConfig,
    /// negatives per query, for every kind
    pub hard_m: usize,
    pub length_band: LengthBand,
    pub hardness: HardnessRule,
    pub bm25: Bm25Params,
    pub kinds: Vec<NegativeKind>,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            k_retrieve: 100,
            clustering: ClusteringConfig::default(),
            hard_m: 2,
            length_band: LengthBand::default(),
            hardness: HardnessRule::Mean,
            bm25: Bm25Params::default(),
            kinds: vec![NegativeKind::Hard, NegativeKind::Random],
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_retrieve == 0 || self.hard_m == 0 {
            return Err(Error::Config("k_retrieve and hard_m must be positive".into()));
        }
        if !(self.length_band.low <= self.length_band.high) || self.length_band.low < 0.0 {
            return Err(Error::Config("length band needs 0 <= low <= high".into()));
        }
        self.clustering.validate()?;
        self.bm25.validate()
    }
}

/// Corpus plus every model's embeddings, with the concatenated ensemble
/// feature per item (the clustering space and the ranker's input).
pub struct EnsembleView<'a> {
    corpus: &'a Corpus,
    models: Vec<&'a CorpusEmbeddings>,
    weights: Option<&'a BTreeMap<String, f64>>,
    voting: VotingMode,
    doc_features: Vec<Vec<f64>>,
    query_features: Vec<Vec<f64>>,
}

/// Something a document can be compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Query(usize),
    Doc(usize),
}

impl<'a> EnsembleView<'a> {
    pub fn new(
        corpus: &'a Corpus,
        models: &'a [CorpusEmbeddings],
        weights: Option<&'a BTreeMap<String, f64>>,
        voting: VotingMode,
    ) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Config("at least one embedding model is required".into()));
        }
        let mut models: Vec<&CorpusEmbeddings> = models.iter().collect();
        models.sort_by(|a, b| a.model_id.cmp(&b.model_id));
        if models.windows(2).any(|w| w[0].model_id == w[1].model_id) {
            return Err(Error::Config("duplicate model id".into()));
        }
        for m in &models {
            if m.documents.len() != corpus.documents().len() || m.queries.len() != corpus.queries().len() {
                return Err(Error::invalid(format!(
                    "embeddings for `{}` do not cover the corpus",
                    m.model_id
                )));
            }
        }
        let concat = |pick: &dyn Fn(&CorpusEmbeddings) -> &[f64]| -> Result<Vec<f64>> {
            let parts: Vec<&[f64]> = models.iter().map(|m| pick(m)).collect();
            concat_normalized(&parts)
        };
        let doc_features = (0..corpus.documents().len())
            .map(|i| concat(&|m: &CorpusEmbeddings| m.documents[i].as_slice()))
            .collect::<Result<Vec<_>>>()?;
        let query_features = (0..corpus.queries().len())
            .map(|i| concat(&|m: &CorpusEmbeddings| m.queries[i].as_slice()))
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleView {
            corpus,
            models,
            weights,
            voting,
            doc_features,
            query_features,
        })
    }

    pub fn corpus(&self) -> &Corpus {
        self.corpus
    }

    pub fn voting(&self) -> VotingMode {
        self.voting
    }

    pub fn model_ids(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.model_id.as_str()).collect()
    }

    pub fn doc_index(&self, id: &str) -> Result<usize> {
        self.corpus
            .documents()
            .binary_search_by(|d| d.id.as_str().cmp(id))
            .map_err(|_| Error::invalid(format!("unknown document `{id}`")))
    }

    pub fn query_index(&self, id: &str) -> Result<usize> {
        self.corpus
            .queries()
            .binary_search_by(|q| q.id.as_str().cmp(id))
            .map_err(|_| Error::invalid(format!("unknown query `{id}`")))
    }

    pub fn doc_feature(&self, i: usize) -> &[f64] {
        &self.doc_features[i]
    }

    pub fn query_feature(&self, i: usize) -> &[f64] {
        &self.query_features[i]
    }

    fn anchor_vec<'m>(&self, model: &'m CorpusEmbeddings, anchor: Anchor) -> &'m [f64] {
        match anchor {
            Anchor::Query(i) => &model.queries[i],
            Anchor::Doc(i) => &model.documents[i],
        }
    }

    /// Per-model cosines of `anchor` against document `doc`.
    pub fn per_model(&self, anchor: Anchor, doc: usize) -> BTreeMap<String, f64> {
        self.models
            .iter()
            .map(|m| {
                let c = dot(self.anchor_vec(m, anchor), &m.documents[doc]).clamp(-1.0, 1.0);
                (m.model_id.clone(), c)
            })
            .collect()
    }

    /// Soft-vote ensemble similarity of `anchor` and document `doc`.
    pub fn combined(&self, anchor: Anchor, doc: usize) -> Result<f64> {
        soft_vote(&self.per_model(anchor, doc), self.weights)
    }

    /// One similarity matrix per model for the given queries against every
    /// document.
    pub fn query_matrices(&self, queries: &[usize]) -> Result<Vec<SimilarityMatrix>> {
        let docs = self.corpus.documents();
        self.models
            .iter()
            .map(|m| {
                let anchors: Vec<(String, &[f64])> = queries
                    .iter()
                    .map(|&q| (self.corpus.queries()[q].id.clone(), m.queries[q].as_slice()))
                    .collect();
                let cols: Vec<(String, &[f64])> = docs
                    .iter()
                    .zip(&m.documents)
                    .map(|(d, v)| (d.id.clone(), v.as_slice()))
                    .collect();
                similarity_matrix(&m.model_id, &anchors, &cols)
            })
            .collect()
    }

    /// Candidate pool for the query at `row` of `matrices`.
    pub fn pool(&self, matrices: &[SimilarityMatrix], row: usize, k: usize) -> CandidatePool {
        let query_id = &matrices[0].row_ids[row];
        let lists: BTreeMap<String, Vec<String>> = matrices
            .iter()
            .map(|m| {
                let scored = m.col_ids.iter().cloned().zip(m.row(row).iter().copied()).collect();
                (m.model_id.clone(), top_k(scored, k).into_iter().map(|x| x.0).collect())
            })
            .collect();
        let positive = self.corpus.qrel(query_id).map(|q| q.positive_doc_id.as_str());
        pool_candidates(query_id, &lists, positive)
    }

    /// Orders documents by the configured voting mode; returns
    /// `(doc_id, combined score)` pairs.
    pub fn ensemble_ranking(&self, query: usize, doc_ids: &[String]) -> Result<Vec<(String, f64)>> {
        let idx: Vec<usize> = doc_ids.iter().map(|id| self.doc_index(id)).collect::<Result<_>>()?;
        let mut combined: Vec<(String, f64)> = Vec::with_capacity(idx.len());
        for (id, &d) in doc_ids.iter().zip(&idx) {
            combined.push((id.clone(), self.combined(Anchor::Query(query), d)?));
        }
        match self.voting {
            VotingMode::Soft => {
                combined.sort_by(retrieve::by_score_then_id);
                Ok(combined)
            }
            VotingMode::Hard => {
                if combined.is_empty() {
                    return Ok(combined);
                }
                let rankings: Vec<Vec<String>> = self
                    .models
                    .iter()
                    .map(|m| {
                        let mut scored: Vec<(String, f64)> = doc_ids
                            .iter()
                            .zip(&idx)
                            .map(|(id, &d)| (id.clone(), dot(&m.queries[query], &m.documents[d])))
                            .collect();
                        scored.sort_by(retrieve::by_score_then_id);
                        scored.into_iter().map(|x| x.0).collect()
                    })
                    .collect();
                let ties: HashMap<String, f64> = combined.iter().cloned().collect();
                let order = hard_vote(&rankings, &ties)?;
                Ok(order
                    .into_iter()
                    .map(|id| {
                        let s = ties[&id];
                        (id, s)
                    })
                    .collect())
            }
        }
    }

    /// Table-style rows (per-model and combined scores) for a query's pool.
    pub fn score_table(&self, query: usize, pool: &CandidatePool) -> Result<Vec<EnsembleScore>> {
        let anchor: ModelVectors = self
            .models
            .iter()
            .map(|m| (m.model_id.clone(), m.queries[query].as_slice()))
            .collect();
        let candidates: Vec<(String, ModelVectors)> = pool
            .doc_ids
            .iter()
            .map(|id| {
                let d = self.doc_index(id)?;
                Ok((
                    id.clone(),
                    self.models
                        .iter()
                        .map(|m| (m.model_id.clone(), m.documents[d].as_slice()))
                        .collect(),
                ))
            })
            .collect::<Result<_>>()?;
        ensemble_table(&pool.query_id, &anchor, &candidates, self.weights)
    }
}

/// Point identity inside one query's clustering problem.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum PointKey {
    Query,
    Doc(String),
}

/// Everything mined for one query.
#[derive(Debug, Clone)]
pub struct MinedQuery {
    pub query_id: String,
    pub positive_id: String,
    pub pool: CandidatePool,
    pub clusters: Option<ClusterAssignment<PointKey>>,
    pub hard: Option<HardSelection>,
    pub random: Option<Vec<String>>,
    pub bm25: Option<Vec<(String, f64)>>,
}

impl MinedQuery {
    pub fn negatives(&self, kind: NegativeKind) -> Option<Vec<String>> {
        match kind {
            NegativeKind::Hard => self.hard.as_ref().map(HardSelection::ids),
            NegativeKind::Random => self.random.clone(),
            NegativeKind::Bm25 => self.bm25.as_ref().map(|v| v.iter().map(|x| x.0.clone()).collect()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MiningResult {
    pub mined: Vec<MinedQuery>,
    pub triplets: Vec<Triplet>,
}

/// Mines negatives for `query_ids` (all minable queries when empty).
///
/// Each query runs independently with its own RNG stream derived from
/// `(seed, query_id)`, so output is identical for any worker count.
pub fn mine(view: &EnsembleView<'_>, query_ids: &[String], config: &MiningConfig, seed: u64) -> Result<MiningResult> {
    config.validate()?;
    let corpus = view.corpus();
    let ids: Vec<String> = if query_ids.is_empty() {
        corpus.minable_queries().iter().map(|q| q.id.clone()).collect()
    } else {
        query_ids.to_vec()
    };
    let mut rows = Vec::with_capacity(ids.len());
    for id in &ids {
        let q = view.query_index(id)?;
        if corpus.qrel(id).is_none() {
            return Err(Error::invalid(format!("query `{id}` has no qrel")));
        }
        rows.push(q);
    }
    let matrices = view.query_matrices(&rows)?;
    let bm25 = config
        .kinds
        .contains(&NegativeKind::Bm25)
        .then(|| Bm25Index::new(corpus.documents()));
    let all_doc_ids: Vec<String> = corpus.documents().iter().map(|d| d.id.clone()).collect();

    let positions: Vec<usize> = (0..rows.len()).collect();
    let mined = par::try_map(&positions, |&row| {
        mine_one(
            view,
            &matrices,
            row,
            rows[row],
            config,
            seed,
            bm25.as_ref(),
            &all_doc_ids,
        )
    })?;

    let qrels: BTreeMap<String, String> = corpus
        .qrels()
        .iter()
        .map(|q| (q.query_id.clone(), q.positive_doc_id.clone()))
        .collect();
    let mut lists = Vec::new();
    for m in &mined {
        for &kind in &config.kinds {
            let negatives = m.negatives(kind).unwrap_or_default();
            if negatives.is_empty() {
                log::warn!("query `{}`: no {kind} negatives", m.query_id);
                continue;
            }
            lists.push(NegativeList {
                query_id: m.query_id.clone(),
                kind,
                negatives,
            });
        }
    }
    let triplets = build_triplets(&qrels, &lists)?;
    Ok(MiningResult { mined, triplets })
}

#[allow(clippy::too_many_arguments)]
fn mine_one(
    view: &EnsembleView<'_>,
    matrices: &[SimilarityMatrix],
    row: usize,
    query: usize,
    config: &MiningConfig,
    seed: u64,
    bm25: Option<&Bm25Index>,
    all_doc_ids: &[String],
) -> Result<MinedQuery> {
    let corpus = view.corpus();
    let q = &corpus.queries()[query];
    let positive_id = corpus
        .qrel(&q.id)
        .map(|r| r.positive_doc_id.clone())
        .ok_or_else(|| Error::invalid(format!("query `{}` has no qrel", q.id)))?;
    let positive = view.doc_index(&positive_id)?;
    let qseed = query_seed(seed, &q.id);
    let pool = view.pool(matrices, row, config.k_retrieve);

    let mut clusters = None;
    let mut hard = None;
    if config.kinds.contains(&NegativeKind::Hard) {
        let mut points: Vec<(PointKey, Vec<f64>)> = vec![(PointKey::Query, view.query_feature(query).to_vec())];
        let mut seen_positive = false;
        for id in &pool.doc_ids {
            seen_positive |= *id == positive_id;
            points.push((
                PointKey::Doc(id.clone()),
                view.doc_feature(view.doc_index(id)?).to_vec(),
            ));
        }
        if !seen_positive {
            points.push((PointKey::Doc(positive_id.clone()), view.doc_feature(positive).to_vec()));
        }
        let k = config.clustering.k.min(points.len());
        let assignment = if k >= 2 {
            let cfg = ClusteringConfig {
                k,
                seed: splitmix64(qseed ^ KMEANS_STREAM),
                ..config.clustering.clone()
            };
            Some(kmeans(points, &cfg)?)
        } else {
            None
        };
        let cluster_of = |id: &str| {
            assignment
                .as_ref()
                .and_then(|a| a.label_of(&PointKey::Doc(id.to_string())))
                .unwrap_or(0)
        };
        let mut candidates = Vec::with_capacity(pool.len());
        for id in pool.doc_ids.iter().filter(|id| **id != positive_id) {
            let d = view.doc_index(id)?;
            candidates.push(HardCandidate {
                doc_id: id.clone(),
                sim_query: view.combined(Anchor::Query(query), d)?,
                sim_positive: view.combined(Anchor::Doc(positive), d)?,
                cluster: cluster_of(id),
                word_count: corpus.documents()[d].word_count,
            });
        }
        let pos_ref = PositiveRef {
            doc_id: &positive_id,
            cluster: cluster_of(&positive_id),
            word_count: corpus.documents()[positive].word_count,
        };
        hard = Some(select_hard_negatives(
            &candidates,
            &pos_ref,
            config.hard_m,
            config.length_band,
            config.hardness,
        ));
        clusters = assignment;
    }

    let random = if config.kinds.contains(&NegativeKind::Random) {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(qseed ^ RANDOM_STREAM));
        Some(sample_random_negatives(
            all_doc_ids,
            &positive_id,
            config.hard_m,
            &mut rng,
        )?)
    } else {
        None
    };

    let bm25 = bm25.map(|index| bm25_negatives(index, &q.text, &positive_id, config.hard_m, config.bm25));

    Ok(MinedQuery {
        query_id: q.id.clone(),
        positive_id,
        pool,
        clusters,
        hard,
        random,
        bm25,
    })
}

/// 2-D coordinates for the query, its positive and its pool, tagged by role.
pub fn scatter_rows(view: &EnsembleView<'_>, mined: &MinedQuery) -> Result<Vec<(String, PointRole, f64, f64)>> {
    let query = view.query_index(&mined.query_id)?;
    let hard: Vec<String> = mined.negatives(NegativeKind::Hard).unwrap_or_default();
    let mut points = vec![(mined.query_id.clone(), view.query_feature(query).to_vec())];
    let mut roles = vec![PointRole::Query];
    let mut docs: Vec<&String> = vec![&mined.positive_id];
    docs.extend(mined.pool.doc_ids.iter().filter(|id| **id != mined.positive_id));
    for id in docs {
        points.push((id.clone(), view.doc_feature(view.doc_index(id)?).to_vec()));
        roles.push(if *id == mined.positive_id {
            PointRole::Positive
        } else if hard.contains(id) {
            PointRole::HardNegative
        } else {
            PointRole::Candidate
        });
    }
    let coords = project_2d(&points)?;
    Ok(coords
        .into_iter()
        .zip(roles)
        .map(|((id, x, y), role)| (id, role, x, y))
        .collect())
}
