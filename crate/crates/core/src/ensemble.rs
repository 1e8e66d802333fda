//! Cosine similarity matrices per model, and soft/hard voting across models.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::embed::is_normalized;
use crate::error::{Error, Result};
use crate::par;

/// Total order on scores in which `-0.0` and `0.0` are equal, so equal
/// scores always fall through to the id tie-break.
pub(crate) fn score_cmp(a: f64, b: f64) -> Ordering {
    (a + 0.0).total_cmp(&(b + 0.0))
}

/// How per-model evidence is combined into one ranking.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VotingMode {
    /// weighted average of similarity scores
    #[default]
    Soft,
    /// Borda count over per-model rankings
    Hard,
}

/// Dot product of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(dot(a, b).clamp(-1.0, 1.0))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major anchors × documents cosine scores for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub model_id: String,
    pub row_ids: Vec<String>,
    pub col_ids: Vec<String>,
    entries: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.col_ids.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.col_ids.len();
        &self.entries[row * n..(row + 1) * n]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.row_ids.len(), self.col_ids.len())
    }
}

/// Scores every anchor against every document. Rows are computed in
/// parallel; the result does not depend on the partitioning.
pub fn similarity_matrix(
    model_id: &str,
    anchors: &[(String, &[f64])],
    docs: &[(String, &[f64])],
) -> Result<SimilarityMatrix> {
    let dim = anchors.first().or(docs.first()).map(|(_, v)| v.len()).unwrap_or(0);
    for (id, v) in anchors.iter().chain(docs) {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        if !is_normalized(v) {
            return Err(Error::invalid(format!(
                "vector `{id}` under model `{model_id}` is not L2-normalized"
            )));
        }
    }
    let rows = par::map(anchors, |(_, a)| {
        docs.iter().map(|(_, d)| dot(a, d).clamp(-1.0, 1.0)).collect::<Vec<_>>()
    });
    Ok(SimilarityMatrix {
        model_id: model_id.to_string(),
        row_ids: anchors.iter().map(|(id, _)| id.clone()).collect(),
        col_ids: docs.iter().map(|(id, _)| id.clone()).collect(),
        entries: rows.into_iter().flatten().collect(),
    })
}

/// Weighted average `Σ wᵢ·sᵢ / Σ wᵢ`; equal weights when `weights` is `None`.
///
/// Models are visited in sorted id order, so the result is independent of
/// how the maps were built.
pub fn soft_vote(per_model: &BTreeMap<String, f64>, weights: Option<&BTreeMap<String, f64>>) -> Result<f64> {
    if per_model.is_empty() {
        return Err(Error::invalid("soft vote over zero models"));
    }
    let Some(weights) = weights else {
        let sum: f64 = per_model.values().sum();
        return Ok(sum / per_model.len() as f64);
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for (model, score) in per_model {
        let w = *weights
            .get(model)
            .ok_or_else(|| Error::invalid(format!("no weight for model `{model}`")))?;
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::invalid(format!("weight for `{model}` must be >= 0, got {w}")));
        }
        num += w * score;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::invalid("all ensemble weights are zero"));
    }
    Ok(num / den)
}

/// Borda aggregation of per-model rankings.
///
/// A document at 0-based position `p` of an `n`-long list earns `n − 1 − p`
/// points. Ties on points break by descending `tie_scores` (documents
/// without a score sort last), then ascending id.
pub fn hard_vote(rankings: &[Vec<String>], tie_scores: &HashMap<String, f64>) -> Result<Vec<String>> {
    let Some(first) = rankings.first() else {
        return Err(Error::invalid("hard vote over zero rankings"));
    };
    let reference: BTreeSet<&str> = first.iter().map(String::as_str).collect();
    if reference.len() != first.len() {
        return Err(Error::invalid("ranking contains duplicate ids"));
    }
    let mut points: HashMap<&str, usize> = HashMap::new();
    for ranking in rankings {
        let ids: BTreeSet<&str> = ranking.iter().map(String::as_str).collect();
        if ids != reference || ranking.len() != first.len() {
            return Err(Error::invalid("rankings are not permutations of the same id set"));
        }
        let n = ranking.len();
        for (p, id) in ranking.iter().enumerate() {
            *points.entry(id.as_str()).or_default() += n - 1 - p;
        }
    }
    let mut out: Vec<&str> = reference.into_iter().collect();
    out.sort_by(|a, b| {
        let sa = tie_scores.get(*a).copied().unwrap_or(f64::NEG_INFINITY);
        let sb = tie_scores.get(*b).copied().unwrap_or(f64::NEG_INFINITY);
        points[b]
            .cmp(&points[a])
            .then_with(|| score_cmp(sb, sa))
            .then_with(|| a.cmp(b))
    });
    Ok(out.into_iter().map(str::to_string).collect())
}

/// One row of an ensemble table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleScore {
    pub anchor_id: String,
    pub doc_id: String,
    pub per_model: BTreeMap<String, f64>,
    pub combined: f64,
    /// normalized to sum to 1
    pub weights: BTreeMap<String, f64>,
}

impl EnsembleScore {
    pub fn new(
        anchor_id: &str,
        doc_id: &str,
        per_model: BTreeMap<String, f64>,
        weights: Option<&BTreeMap<String, f64>>,
    ) -> Result<Self> {
        let combined = soft_vote(&per_model, weights)?;
        let raw: BTreeMap<String, f64> = per_model
            .keys()
            .map(|m| (m.clone(), weights.and_then(|w| w.get(m).copied()).unwrap_or(1.0)))
            .collect();
        let total: f64 = raw.values().sum();
        let weights = raw.into_iter().map(|(m, w)| (m, w / total)).collect();
        Ok(EnsembleScore {
            anchor_id: anchor_id.to_string(),
            doc_id: doc_id.to_string(),
            per_model,
            combined,
            weights,
        })
    }
}

/// Per-model embeddings of one item, keyed by model id.
pub type ModelVectors<'a> = BTreeMap<String, &'a [f64]>;

/// Scores `anchor` against each candidate under every model the anchor has
/// an embedding for, then combines by soft vote.
pub fn ensemble_table(
    anchor_id: &str,
    anchor: &ModelVectors<'_>,
    candidates: &[(String, ModelVectors<'_>)],
    weights: Option<&BTreeMap<String, f64>>,
) -> Result<Vec<EnsembleScore>> {
    candidates
        .iter()
        .map(|(doc_id, vectors)| {
            let mut per_model = BTreeMap::new();
            for (model, a) in anchor {
                let d = vectors.get(model).ok_or_else(|| Error::MissingEmbedding {
                    model_id: model.clone(),
                    id: doc_id.clone(),
                })?;
                per_model.insert(model.clone(), cosine(a, d)?);
            }
            EnsembleScore::new(anchor_id, doc_id, per_model, weights)
        })
        .collect()
}

/// Writes `anchor_id,doc_id,<model ids sorted>,combined` CSV.
pub fn write_score_csv<W: Write>(rows: &[EnsembleScore], out: W) -> Result<()> {
    let models: BTreeSet<&str> = rows
        .iter()
        .flat_map(|r| r.per_model.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["anchor_id", "doc_id"];
    header.extend(models.iter().copied());
    header.push("combined");
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![r.anchor_id.clone(), r.doc_id.clone()];
        for m in &models {
            rec.push(r.per_model.get(*m).map(|s| s.to_string()).unwrap_or_default());
        }
        rec.push(r.combined.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}
