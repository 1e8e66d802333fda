//! Bilinear re-ranker trained with a margin triplet loss.
//!
//! A document is represented as `W·d` and compared with the query by
//! Euclidean distance during training; at inference the score is
//! `sigmoid(qᵀ·W·d)`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::RankedList;
use crate::par;

const MODEL_FORMAT_VERSION: u32 = 1;

fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Euclidean distance. For unit vectors this is `sqrt(2 - 2·cos)`.
pub fn distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// `max(d_qp - d_qn + margin, 0)`.
pub fn triplet_loss(d_qp: f64, d_qn: f64, margin: f64) -> Result<f64> {
    if !(margin >= 0.0) {
        return Err(Error::invalid(format!("margin must be non-negative, got {margin}")));
    }
    if !(d_qp >= 0.0 && d_qn >= 0.0) {
        return Err(Error::invalid("distances must be non-negative"));
    }
    Ok((d_qp - d_qn + margin).max(0.0))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Scores a query/document pair as `sigmoid(qᵀ·W·d)`; `W` is row-major
/// `query_dim × doc_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearRanker {
    query_dim: usize,
    doc_dim: usize,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    query_dim: usize,
    doc_dim: usize,
    weights: Vec<f64>,
}

impl BilinearRanker {
    pub fn from_weights(query_dim: usize, doc_dim: usize, weights: Vec<f64>) -> Result<Self> {
        if query_dim == 0 || doc_dim == 0 {
            return Err(Error::invalid("ranker dimensions must be positive"));
        }
        check_dims(query_dim * doc_dim, weights.len())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("ranker weights must be finite"));
        }
        Ok(BilinearRanker {
            query_dim,
            doc_dim,
            weights,
        })
    }

    pub fn zeros(query_dim: usize, doc_dim: usize) -> Result<Self> {
        Self::from_weights(query_dim, doc_dim, vec![0.0; query_dim * doc_dim])
    }

    /// Identity, truncated when the matrix is not square.
    pub fn identity(query_dim: usize, doc_dim: usize) -> Result<Self> {
        let mut r = Self::zeros(query_dim, doc_dim)?;
        for i in 0..query_dim.min(doc_dim) {
            r.weights[i * doc_dim + i] = 1.0;
        }
        Ok(r)
    }

    pub fn query_dim(&self) -> usize {
        self.query_dim
    }

    pub fn doc_dim(&self) -> usize {
        self.doc_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `W·d`, the learned document representation.
    pub fn project(&self, d: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.doc_dim)
            .map(|row| row.iter().zip(d).map(|(w, x)| w * x).sum())
            .collect()
    }

    pub fn bilinear(&self, q: &[f64], d: &[f64]) -> Result<f64> {
        check_dims(self.query_dim, q.len())?;
        check_dims(self.doc_dim, d.len())?;
        Ok(q.iter().zip(self.project(d)).map(|(a, b)| a * b).sum())
    }

    pub fn score(&self, q: &[f64], d: &[f64]) -> Result<f64> {
        self.bilinear(q, d).map(sigmoid)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            query_dim: self.query_dim,
            doc_dim: self.doc_dim,
            weights: self.weights.clone(),
        })
        .map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text).map_err(|e| Error::invalid(format!("model file: {e}")))?;
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                f.format_version
            )));
        }
        Self::from_weights(f.query_dim, f.doc_dim, f.weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Embeddings of one (query, positive, negative) triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletVectors {
    pub query: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

/// Loss of one triplet under `ranker`; when `grad` is given, the gradient
/// with respect to every weight is added into it, scaled by `scale`.
fn loss_and_grad(
    ranker: &BilinearRanker,
    q: &[f64],
    p: &[f64],
    n: &[f64],
    margin: f64,
    grad: Option<(&mut [f64], f64)>,
) -> f64 {
    let residual = |d: &[f64]| -> Vec<f64> { q.iter().zip(ranker.project(d)).map(|(a, b)| a - b).collect() };
    let r_p = residual(p);
    let r_n = residual(n);
    let d_qp = r_p.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d_qn = r_n.iter().map(|x| x * x).sum::<f64>().sqrt();
    let raw = d_qp - d_qn + margin;
    // NaN must survive so training can report divergence
    let loss = if raw > 0.0 || raw.is_nan() { raw } else { 0.0 };
    if let Some((g, scale)) = grad {
        if loss > 0.0 {
            // dL/dW = -r_p pᵀ / d_qp + r_n nᵀ / d_qn
            let cp = if d_qp > 0.0 { -scale / d_qp } else { 0.0 };
            let cn = if d_qn > 0.0 { scale / d_qn } else { 0.0 };
            for (i, row) in g.chunks_exact_mut(ranker.doc_dim).enumerate() {
                let (a, b) = (cp * r_p[i], cn * r_n[i]);
                for (j, gij) in row.iter_mut().enumerate() {
                    *gij += a * p[j] + b * n[j];
                }
            }
        }
    }
    loss
}

impl TripletVectors {
    fn check(&self, ranker: &BilinearRanker) -> Result<()> {
        check_dims(ranker.query_dim, self.query.len())?;
        check_dims(ranker.doc_dim, self.positive.len())?;
        check_dims(ranker.doc_dim, self.negative.len())
    }

    pub fn loss(&self, ranker: &BilinearRanker, margin: f64) -> Result<f64> {
        self.check(ranker)?;
        if margin < 0.0 {
            return Err(Error::invalid("margin must be non-negative"));
        }
        Ok(loss_and_grad(
            ranker,
            &self.query,
            &self.positive,
            &self.negative,
            margin,
            None,
        ))
    }

    /// Analytic gradient of the loss with respect to every weight.
    pub fn gradient(&self, ranker: &BilinearRanker, margin: f64) -> Result<Vec<f64>> {
        self.check(ranker)?;
        let mut g = vec![0.0; ranker.weights.len()];
        loss_and_grad(
            ranker,
            &self.query,
            &self.positive,
            &self.negative,
            margin,
            Some((&mut g, 1.0)),
        );
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    /// probability of zeroing an input coordinate during training
    pub dropout: f64,
    pub epochs: usize,
    pub margin: f64,
    pub warmup_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            optimizer: Optimizer::Adam,
            learning_rate: 3e-5,
            dropout: 0.2,
            epochs: 20,
            margin: 1.0,
            warmup_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be at least 1".into()));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Config("margin must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("warmup_fraction must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Learning-rate multiplier at optimizer step `step` of `total`: linear
    /// warmup, then linear decay reaching 0 after the last step.
    pub fn lr_multiplier(&self, step: usize, total: usize) -> f64 {
        let warmup = (self.warmup_fraction * total as f64).ceil() as usize;
        if step < warmup {
            (step + 1) as f64 / warmup as f64
        } else {
            (total - step) as f64 / (total - warmup) as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub ranker: BilinearRanker,
    /// mean training loss per epoch (with dropout applied)
    pub epoch_losses: Vec<f64>,
    /// mean loss over all triplets before and after training, without dropout
    pub initial_loss: f64,
    pub final_loss: f64,
}

fn mean_loss(ranker: &BilinearRanker, triplets: &[TripletVectors], margin: f64) -> f64 {
    let losses = par::map(triplets, |t| {
        loss_and_grad(ranker, &t.query, &t.positive, &t.negative, margin, None)
    });
    losses.iter().sum::<f64>() / triplets.len() as f64
}

fn dropout_copy(v: &[f64], p: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    v.iter()
        .map(|x| if rng.gen::<f64>() < p { 0.0 } else { x * keep })
        .collect()
}

/// Trains from the identity (or truncated identity) with Adam.
///
/// Runs single-threaded over mini-batches, so the loss history is a pure
/// function of the inputs and `config.seed`.
pub fn train(triplets: &[TripletVectors], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let first = triplets
        .first()
        .ok_or_else(|| Error::invalid("training needs at least one triplet"))?;
    let mut ranker = BilinearRanker::identity(first.query.len(), first.positive.len())?;
    for t in triplets {
        t.check(&ranker)?;
    }
    let margin = config.margin;
    let initial_loss = mean_loss(&ranker, triplets, margin);

    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let n_weights = ranker.weights.len();
    let mut m = vec![0.0; n_weights];
    let mut v = vec![0.0; n_weights];
    let mut grad = vec![0.0; n_weights];
    let steps_per_epoch = triplets.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let t = &triplets[i];
                let loss = if config.dropout > 0.0 {
                    let q = dropout_copy(&t.query, config.dropout, &mut rng);
                    let p = dropout_copy(&t.positive, config.dropout, &mut rng);
                    let n = dropout_copy(&t.negative, config.dropout, &mut rng);
                    loss_and_grad(&ranker, &q, &p, &n, margin, Some((&mut grad, scale)))
                } else {
                    loss_and_grad(
                        &ranker,
                        &t.query,
                        &t.positive,
                        &t.negative,
                        margin,
                        Some((&mut grad, scale)),
                    )
                };
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        step,
                        message: format!("non-finite loss on triplet {i}"),
                    });
                }
                epoch_sum += loss;
            }

            step += 1;
            let lr = config.learning_rate * config.lr_multiplier(step - 1, total_steps);
            let (bc1, bc2) = (1.0 - beta1.powi(step as i32), 1.0 - beta2.powi(step as i32));
            for ((w, g), (mi, vi)) in ranker.weights.iter_mut().zip(&grad).zip(m.iter_mut().zip(v.iter_mut())) {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                *w -= lr * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
            }
            if ranker.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    message: "non-finite weight after update".into(),
                });
            }
        }
        let mean = epoch_sum / triplets.len() as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        epoch_losses.push(mean);
    }

    let final_loss = mean_loss(&ranker, triplets, margin);
    Ok(TrainOutcome {
        ranker,
        epoch_losses,
        initial_loss,
        final_loss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// the hinge was inactive, so both gradients are identically zero
    pub vacuous: bool,
}

/// Compares the analytic gradient against central differences over every
/// weight. Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(ranker: &BilinearRanker, triplet: &TripletVectors, margin: f64, epsilon: f64) -> Result<GradCheck> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let vacuous = triplet.loss(ranker, margin)? == 0.0;
    let analytic = triplet.gradient(ranker, margin)?;
    let mut probe = ranker.clone();
    let mut worst: f64 = 0.0;
    for (idx, &a) in analytic.iter().enumerate() {
        let w = ranker.weights[idx];
        probe.weights[idx] = w + epsilon;
        let up = triplet.loss(&probe, margin)?;
        probe.weights[idx] = w - epsilon;
        let down = triplet.loss(&probe, margin)?;
        probe.weights[idx] = w;
        let numeric = (up - down) / (2.0 * epsilon);
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(GradCheck {
        max_relative_error: worst,
        vacuous,
    })
}

/// Orders `candidates` by descending ranker score, ties by ascending id.
pub fn rerank<'a, F>(
    ranker: &BilinearRanker,
    query_id: &str,
    query: &[f64],
    candidates: &[String],
    lookup: F,
) -> Result<RankedList>
where
    F: Fn(&str) -> Option<&'a [f64]> + Sync,
{
    let scored = par::try_map(candidates, |id| {
        let d = lookup(id).ok_or_else(|| Error::MissingEmbedding {
            model_id: "ensemble".into(),
            id: id.clone(),
        })?;
        Ok::<_, Error>((id.clone(), ranker.score(query, d)?))
    })?;
    RankedList::from_scores(query_id, scored)
}
