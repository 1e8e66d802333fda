//! Hard-negative mining for re-ranker training.
//!
//! The pipeline ingests a query/document corpus, embeds it with one or more
//! models, pools each query's top candidates across models, clusters them
//! and selects hard negatives close to both the query and its labeled
//! positive. The resulting triplets train a bilinear re-ranker with a
//! margin-based triplet loss, and the [`eval`] module reports MRR,
//! precision and score averages bucketed by document length.
//!
//! With the default `parallel` feature, data-parallel loops (similarity
//! rows, per-query mining, K-Means assignment) run on rayon. Building with
//! `--no-default-features` selects the sequential fallback; outputs are
//! identical either way.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod embed;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod mine;
pub mod par;
pub mod pipeline;
pub mod rank;

pub use error::{Error, Result};
