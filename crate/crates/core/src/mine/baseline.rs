//! Baseline negative samplers: uniform random and Okapi BM25.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::retrieve::top_k;
use crate::corpus::{tokenize, Document};
use crate::error::{Error, Result};

/// Draws `m` distinct documents uniformly (without replacement) from
/// `doc_ids`, never returning `positive`.
pub fn sample_random_negatives<R: Rng + ?Sized>(
    doc_ids: &[String],
    positive: &str,
    m: usize,
    rng: &mut R,
) -> Result<Vec<String>> {
    let pool: Vec<&String> = doc_ids.iter().filter(|d| *d != positive).collect();
    if pool.len() < m {
        return Err(Error::invalid(format!(
            "need {m} random negatives but only {} non-positive documents exist",
            pool.len()
        )));
    }
    Ok(sample(rng, pool.len(), m)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0) || !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!(
                "bm25 needs k1 > 0 and b in [0, 1], got k1={} b={}",
                self.k1, self.b
            )));
        }
        Ok(())
    }
}

/// Corpus statistics for BM25: per-document term frequencies, document
/// frequencies and the average document length. Terms are case-folded.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    doc_ids: Vec<String>,
    term_freqs: Vec<HashMap<String, u32>>,
    doc_lens: Vec<usize>,
    doc_freq: HashMap<String, usize>,
    avgdl: f64,
}

pub(crate) fn bm25_terms(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(str::to_lowercase).collect()
}

impl Bm25Index {
    pub fn new(docs: &[Document]) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let mut term_freqs = Vec::with_capacity(docs.len());
        let mut doc_lens = Vec::with_capacity(docs.len());
        for d in docs {
            let terms = bm25_terms(&d.text);
            doc_lens.push(terms.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in terms {
                *tf.entry(t).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            term_freqs.push(tf);
        }
        let total: usize = doc_lens.iter().sum();
        let avgdl = if docs.is_empty() {
            0.0
        } else {
            total as f64 / docs.len() as f64
        };
        Bm25Index {
            doc_ids: docs.iter().map(|d| d.id.clone()).collect(),
            term_freqs,
            doc_lens,
            doc_freq,
            avgdl,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    /// `ln(1 + (N − n_t + 0.5) / (n_t + 0.5))`
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_ids.len() as f64;
        let nt = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - nt + 0.5) / (nt + 0.5)).ln()
    }

    /// Okapi BM25 of document `doc` (index into the corpus order).
    pub fn score(&self, query_terms: &[String], doc: usize, params: Bm25Params) -> f64 {
        let tf = &self.term_freqs[doc];
        let len_ratio = if self.avgdl > 0.0 {
            self.doc_lens[doc] as f64 / self.avgdl
        } else {
            1.0
        };
        let norm = params.k1 * (1.0 - params.b + params.b * len_ratio);
        query_terms
            .iter()
            .filter_map(|t| tf.get(t).map(|&f| (t, f as f64)))
            .map(|(t, f)| self.idf(t) * f * (params.k1 + 1.0) / (f + norm))
            .sum()
    }

    pub fn score_all(&self, query: &str, params: Bm25Params) -> Vec<(String, f64)> {
        let terms = bm25_terms(query);
        (0..self.len())
            .map(|i| (self.doc_ids[i].clone(), self.score(&terms, i, params)))
            .collect()
    }
}

/// Top-`m` non-positive documents by BM25 score (ties by ascending id).
pub fn bm25_negatives(
    index: &Bm25Index,
    query: &str,
    positive: &str,
    m: usize,
    params: Bm25Params,
) -> Vec<(String, f64)> {
    let scored: Vec<(String, f64)> = index
        .score_all(query, params)
        .into_iter()
        .filter(|(id, _)| id != positive)
        .collect();
    if scored.len() < m {
        log::warn!(
            "only {} BM25 negative candidates for positive `{positive}`, wanted {m}",
            scored.len()
        );
    }
    top_k(scored, m)
}
