use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|‖v‖ − 1|` for a vector to count as normalized.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// A dense embedding produced by one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub model_id: String,
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl EmbeddingVector {
    /// L2-normalizes `values` and tags them with `model_id`.
    pub fn normalized(model_id: impl Into<String>, values: &[f64]) -> Result<Self> {
        Ok(EmbeddingVector {
            model_id: model_id.into(),
            values: l2_normalize(values)?,
            normalized: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Scales `values` to unit Euclidean norm.
pub fn l2_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("embedding contains non-finite values"));
    }
    let n = norm(values);
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(values.iter().map(|v| v / n).collect())
}

pub fn is_normalized(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite()) && (norm(values) - 1.0).abs() <= NORM_TOLERANCE
}

/// Concatenates per-model unit vectors and re-normalizes the result.
///
/// For unit inputs the dot product of two concatenations is the mean of the
/// per-model cosines.
pub fn concat_normalized(parts: &[&[f64]]) -> Result<Vec<f64>> {
    let joined: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    l2_normalize(&joined)
}
