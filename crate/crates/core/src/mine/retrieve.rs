use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::ensemble::{score_cmp, SimilarityMatrix};
use crate::error::{Error, Result};

/// Descending score, then ascending id.
pub(crate) fn by_score_then_id(a: &(String, f64), b: &(String, f64)) -> Ordering {
    score_cmp(b.1, a.1).then_with(|| a.0.cmp(&b.0))
}

/// The `k` best `(id, score)` pairs, descending by score with ties broken by
/// ascending id. Returns everything when fewer than `k` are given.
pub fn top_k(mut scored: Vec<(String, f64)>, k: usize) -> Vec<(String, f64)> {
    if k == 0 {
        return Vec::new();
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, by_score_then_id);
        scored.truncate(k);
    }
    scored.sort_by(by_score_then_id);
    scored
}

/// Top-`k` documents for one query row of a model's similarity matrix.
pub fn top_k_retrieve(matrix: &SimilarityMatrix, query_id: &str, k: usize) -> Result<Vec<(String, f64)>> {
    let row = matrix
        .row_ids
        .iter()
        .position(|id| id == query_id)
        .ok_or_else(|| Error::invalid(format!("query `{query_id}` has no row under `{}`", matrix.model_id)))?;
    let scored = matrix
        .col_ids
        .iter()
        .cloned()
        .zip(matrix.row(row).iter().copied())
        .collect();
    Ok(top_k(scored, k))
}

/// Union of every model's top-k list for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub query_id: String,
    /// first-seen order across models visited in sorted model id order
    pub doc_ids: Vec<String>,
    /// model id → doc id → 1-based rank in that model's list
    pub per_model_rank: BTreeMap<String, BTreeMap<String, usize>>,
    /// set when the labeled positive was retrieved
    pub positive: Option<String>,
}

impl CandidatePool {
    pub fn rank(&self, model_id: &str, doc_id: &str) -> Option<usize> {
        self.per_model_rank.get(model_id)?.get(doc_id).copied()
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }
}

/// Merges per-model ranked lists into one de-duplicated pool.
pub fn pool_candidates(
    query_id: &str,
    per_model_lists: &BTreeMap<String, Vec<String>>,
    positive_id: Option<&str>,
) -> CandidatePool {
    let mut seen = HashSet::new();
    let mut doc_ids = Vec::new();
    let mut per_model_rank = BTreeMap::new();
    for (model, list) in per_model_lists {
        let ranks: &mut BTreeMap<String, usize> = per_model_rank.entry(model.clone()).or_default();
        for (i, id) in list.iter().enumerate() {
            ranks.entry(id.clone()).or_insert(i + 1);
            if seen.insert(id.clone()) {
                doc_ids.push(id.clone());
            }
        }
    }
    let positive = positive_id.filter(|p| seen.contains(*p)).map(str::to_string);
    CandidatePool {
        query_id: query_id.to_string(),
        doc_ids,
        per_model_rank,
        positive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::l2_normalize;
    use crate::ensemble::similarity_matrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn small_corpus_returns_everything() {
        let scored = vec![("a".into(), 0.1), ("b".into(), 0.3), ("c".into(), 0.2)];
        assert_eq!(top_k(scored, 100).len(), 3);
    }

    #[test]
    fn picks_highest() {
        let scored = vec![("d1".into(), 0.9), ("d2".into(), 0.8), ("d3".into(), 0.1)];
        let ids: Vec<_> = top_k(scored, 2).into_iter().map(|x| x.0).collect();
        assert_eq!(ids, s(&["d1", "d2"]));
    }

    #[test]
    fn ties_break_by_id() {
        let scored = vec![("z".into(), 0.5), ("a".into(), 0.5), ("m".into(), 0.5)];
        let ids: Vec<_> = top_k(scored, 2).into_iter().map(|x| x.0).collect();
        assert_eq!(ids, s(&["a", "m"]));
    }

    #[test]
    fn retrieve_unknown_query_errors() {
        let v = [1.0, 0.0];
        let m = similarity_matrix("m", &[("q".into(), &v[..])], &[("d".into(), &v[..])]).unwrap();
        assert!(top_k_retrieve(&m, "nope", 3).is_err());
        assert_eq!(top_k_retrieve(&m, "q", 3).unwrap(), vec![("d".to_string(), 1.0)]);
    }

    #[test]
    fn random_instance_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mk = |rng: &mut ChaCha8Rng| {
            l2_normalize(&(0..8).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>()).unwrap()
        };
        let q = mk(&mut rng);
        let docs: Vec<Vec<f64>> = (0..50).map(|_| mk(&mut rng)).collect();
        let d: Vec<(String, &[f64])> = docs
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("d{i:02}"), &v[..]))
            .collect();
        let m = similarity_matrix("m", &[("q".into(), &q[..])], &d).unwrap();
        let got = top_k_retrieve(&m, "q", 10).unwrap();
        let mut all: Vec<(String, f64)> = m.col_ids.iter().cloned().zip(m.row(0).iter().copied()).collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(10);
        assert_eq!(got, all);
    }

    #[test]
    fn signed_zeros_tie_and_break_by_id() {
        let scored = vec![("b".to_string(), 0.0), ("a".to_string(), -0.0), ("c".to_string(), 0.5)];
        let ids: Vec<String> = top_k(scored, 3).into_iter().map(|(id, _)| id).collect();
        assert_eq!(ids, ["c", "a", "b"]);
    }

    #[test]
    fn pool_union_in_model_order() {
        let lists: BTreeMap<String, Vec<String>> =
            [("a".to_string(), s(&["d1", "d2"])), ("b".to_string(), s(&["d2", "d3"]))].into();
        let pool = pool_candidates("q", &lists, Some("d3"));
        assert_eq!(pool.doc_ids, s(&["d1", "d2", "d3"]));
        assert_eq!(pool.rank("b", "d2"), Some(1));
        assert_eq!(pool.rank("a", "d3"), None);
        assert_eq!(pool.positive.as_deref(), Some("d3"));
    }

    #[test]
    fn pool_of_identical_lists_is_that_list() {
        let l = s(&["x", "y", "z"]);
        let lists: BTreeMap<String, Vec<String>> = [("a".to_string(), l.clone()), ("b".to_string(), l.clone())].into();
        let pool = pool_candidates("q", &lists, Some("missing"));
        assert_eq!(pool.doc_ids, l);
        assert_eq!(pool.positive, None);
    }

    #[test]
    fn two_top_100_lists_with_40_shared() {
        let a: Vec<String> = (0..100).map(|i| format!("d{i:03}")).collect();
        let b: Vec<String> = (60..160).map(|i| format!("d{i:03}")).collect();
        let lists: BTreeMap<String, Vec<String>> = [("a".to_string(), a.clone()), ("b".to_string(), b.clone())].into();
        let pool = pool_candidates("q", &lists, None);
        let union: BTreeSet<&String> = a.iter().chain(&b).collect();
        assert_eq!(pool.len(), 160);
        assert_eq!(pool.doc_ids.iter().collect::<BTreeSet<_>>(), union);
    }

    proptest! {
        #[test]
        fn pool_contains_each_input_id_once(
            lists in proptest::collection::vec(proptest::collection::vec(0u8..30, 0..20), 1..4)
        ) {
            let lists: BTreeMap<String, Vec<String>> = lists.into_iter().enumerate()
                .map(|(i, l)| {
                    let mut seen = BTreeSet::new();
                    (format!("m{i}"), l.into_iter().filter(|x| seen.insert(*x)).map(|x| format!("d{x}")).collect())
                })
                .collect();
            let pool = pool_candidates("q", &lists, None);
            let union: BTreeSet<&String> = lists.values().flatten().collect();
            prop_assert_eq!(pool.doc_ids.len(), union.len());
            prop_assert_eq!(pool.doc_ids.iter().collect::<BTreeSet<_>>(), union);
        }
    }
}
