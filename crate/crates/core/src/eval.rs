//! Ranking metrics (MRR@k, precision@k, score average@k), reports bucketed
//! by the length of each query's positive document, and run comparison.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, QrelPair, DEFAULT_LENGTH_THRESHOLD};
use crate::ensemble::{csv_err, score_cmp};
use crate::error::{Error, Result};

/// Candidate documents for one query in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<(String, f64)>,
}

fn by_score_desc_then_id(a: &(String, f64), b: &(String, f64)) -> Ordering {
    score_cmp(b.1, a.1).then_with(|| a.0.cmp(&b.0))
}

impl RankedList {
    /// Validates an already ordered list: unique ids, finite non-increasing scores.
    pub fn new(query_id: impl Into<String>, entries: Vec<(String, f64)>) -> Result<Self> {
        let query_id = query_id.into();
        let mut seen = BTreeSet::new();
        for (id, s) in &entries {
            if !s.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite score for `{id}` in query `{query_id}`"
                )));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        if entries.windows(2).any(|w| w[1].1 > w[0].1) {
            return Err(Error::invalid(format!(
                "scores for query `{query_id}` are not non-increasing"
            )));
        }
        Ok(RankedList { query_id, entries })
    }

    /// Sorts by descending score, ties by ascending doc id.
    pub fn from_scores(query_id: impl Into<String>, mut scores: Vec<(String, f64)>) -> Result<Self> {
        if let Some((id, _)) = scores.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite score for `{id}`")));
        }
        scores.sort_by(by_score_desc_then_id);
        RankedList::new(query_id, scores)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    /// 1-based position of the first relevant document, if any.
    pub fn first_relevant(&self, relevant: &BTreeSet<String>) -> Option<usize> {
        self.entries
            .iter()
            .position(|(id, _)| relevant.contains(id))
            .map(|p| p + 1)
    }
}

/// Relevant documents per query. The pipeline produces one positive per
/// query, but metrics accept several.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    relevant: BTreeMap<String, BTreeSet<String>>,
}

impl Qrels {
    pub fn new() -> Self {
        Qrels::default()
    }

    pub fn from_pairs(pairs: &[QrelPair]) -> Self {
        let mut q = Qrels::new();
        for p in pairs {
            q.insert(&p.query_id, &p.positive_doc_id);
        }
        q
    }

    pub fn insert(&mut self, query_id: &str, doc_id: &str) {
        self.relevant
            .entry(query_id.to_string())
            .or_default()
            .insert(doc_id.to_string());
    }

    pub fn relevant(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.relevant.get(query_id)
    }

    pub fn len(&self) -> usize {
        self.relevant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevant.is_empty()
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    Ok(())
}

/// Applies `f` to every list, then averages in query-id order so the result
/// does not depend on the order lists were given in.
fn mean_by_query<F>(lists: &[RankedList], qrels: &Qrels, f: F) -> Result<f64>
where
    F: Fn(&RankedList, &BTreeSet<String>) -> f64,
{
    let mut values = BTreeMap::new();
    for list in lists {
        let relevant = qrels
            .relevant(&list.query_id)
            .ok_or_else(|| Error::invalid(format!("no qrel for query `{}`", list.query_id)))?;
        if values.insert(list.query_id.as_str(), f(list, relevant)).is_some() {
            return Err(Error::DuplicateId(list.query_id.clone()));
        }
    }
    Ok(mean(values.values().copied()))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean reciprocal rank with a top-`k` cutoff; a query whose first relevant
/// document lies beyond `k` contributes 0.
pub fn mrr_at_k(lists: &[RankedList], qrels: &Qrels, k: usize) -> Result<f64> {
    check_k(k)?;
    mean_by_query(lists, qrels, |list, rel| match list.first_relevant(rel) {
        Some(r) if r <= k => 1.0 / r as f64,
        _ => 0.0,
    })
}

/// Mean reciprocal rank without a cutoff.
pub fn mrr(lists: &[RankedList], qrels: &Qrels) -> Result<f64> {
    mean_by_query(lists, qrels, |list, rel| {
        list.first_relevant(rel).map_or(0.0, |r| 1.0 / r as f64)
    })
}

/// Fraction of the top `k` slots holding relevant documents, averaged over
/// queries. The denominator is always `k`.
pub fn precision_at_k(lists: &[RankedList], qrels: &Qrels, k: usize) -> Result<f64> {
    check_k(k)?;
    mean_by_query(lists, qrels, |list, rel| {
        let tp = list.doc_ids().take(k).filter(|id| rel.contains(*id)).count();
        tp as f64 / k as f64
    })
}

/// Mean over queries of the mean top-`min(k, len)` score. Empty lists are
/// skipped.
pub fn sim_score_average_at_k(lists: &[RankedList], k: usize) -> Result<f64> {
    check_k(k)?;
    let mut values = BTreeMap::new();
    for list in lists {
        if list.is_empty() {
            log::warn!("query `{}` has an empty ranked list; skipped", list.query_id);
            continue;
        }
        let top = mean(list.entries.iter().take(k).map(|(_, s)| *s));
        if values.insert(list.query_id.as_str(), top).is_some() {
            return Err(Error::DuplicateId(list.query_id.clone()));
        }
    }
    Ok(mean(values.values().copied()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Short,
    Long,
    All,
}

impl Bucket {
    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::Short => "short",
            Bucket::Long => "long",
            Bucket::All => "all",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Bucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short" => Ok(Bucket::Short),
            "long" => Ok(Bucket::Long),
            "all" => Ok(Bucket::All),
            other => Err(Error::invalid(format!("unknown bucket `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Mrr,
    Precision,
    SimAvg,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mrr => "mrr",
            Metric::Precision => "precision",
            Metric::SimAvg => "sim_avg",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mrr" => Ok(Metric::Mrr),
            "precision" => Ok(Metric::Precision),
            "sim_avg" => Ok(Metric::SimAvg),
            other => Err(Error::invalid(format!("unknown metric `{other}`"))),
        }
    }
}

/// Metrics for one length bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub bucket: Bucket,
    pub threshold_words: usize,
    pub num_queries: usize,
    pub query_ids: Vec<String>,
    pub mrr_at: BTreeMap<usize, f64>,
    pub precision_at: BTreeMap<usize, f64>,
    pub sim_avg_at: BTreeMap<usize, f64>,
    /// MRR without cutoff
    pub mrr: f64,
}

impl EvalReport {
    pub fn compute(
        bucket: Bucket,
        threshold_words: usize,
        lists: &[RankedList],
        qrels: &Qrels,
        ks: &[usize],
    ) -> Result<Self> {
        let mut report = EvalReport {
            bucket,
            threshold_words,
            num_queries: lists.len(),
            query_ids: {
                let mut ids: Vec<String> = lists.iter().map(|l| l.query_id.clone()).collect();
                ids.sort();
                ids
            },
            mrr_at: BTreeMap::new(),
            precision_at: BTreeMap::new(),
            sim_avg_at: BTreeMap::new(),
            mrr: mrr(lists, qrels)?,
        };
        for &k in ks {
            report.mrr_at.insert(k, mrr_at_k(lists, qrels, k)?);
            report.precision_at.insert(k, precision_at_k(lists, qrels, k)?);
            report.sim_avg_at.insert(k, sim_score_average_at_k(lists, k)?);
        }
        Ok(report)
    }

    pub fn is_empty(&self) -> bool {
        self.num_queries == 0
    }

    /// CSV rows for this report; an empty bucket has none.
    pub fn rows(&self) -> Vec<ReportRow> {
        if self.is_empty() {
            return Vec::new();
        }
        let mut rows = Vec::new();
        for (metric, values) in [
            (Metric::Mrr, &self.mrr_at),
            (Metric::Precision, &self.precision_at),
            (Metric::SimAvg, &self.sim_avg_at),
        ] {
            for (&k, &value) in values {
                rows.push(ReportRow {
                    bucket: self.bucket,
                    metric,
                    k,
                    value,
                });
            }
        }
        rows
    }
}

/// Splits queries by their positive document's word count (`<= threshold`
/// is short) and reports each bucket plus the whole set, in the order
/// short, long, all.
pub fn bucketed_report(
    lists: &[RankedList],
    qrels: &Qrels,
    corpus: &Corpus,
    ks: &[usize],
    threshold: usize,
) -> Result<Vec<EvalReport>> {
    let mut short = Vec::new();
    let mut long = Vec::new();
    for list in lists {
        let relevant = qrels
            .relevant(&list.query_id)
            .ok_or_else(|| Error::invalid(format!("no qrel for query `{}`", list.query_id)))?;
        // with several relevant documents the smallest id decides the bucket
        let positive = relevant
            .iter()
            .next()
            .ok_or_else(|| Error::invalid(format!("empty qrel for query `{}`", list.query_id)))?;
        let doc = corpus.document(positive).ok_or_else(|| Error::UnknownReference {
            query_id: list.query_id.clone(),
            kind: "document",
            id: positive.clone(),
        })?;
        if doc.word_count <= threshold {
            short.push(list.clone());
        } else {
            long.push(list.clone());
        }
    }
    Ok(vec![
        EvalReport::compute(Bucket::Short, threshold, &short, qrels, ks)?,
        EvalReport::compute(Bucket::Long, threshold, &long, qrels, ks)?,
        EvalReport::compute(Bucket::All, threshold, lists, qrels, ks)?,
    ])
}

/// Default report cutoffs.
pub const DEFAULT_KS: [usize; 2] = [3, 10];

/// Default bucket threshold in words.
pub const DEFAULT_THRESHOLD: usize = DEFAULT_LENGTH_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub bucket: Bucket,
    pub metric: Metric,
    pub k: usize,
    pub value: f64,
}

pub fn write_report_csv<W: Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bucket", "metric", "k", "value"]).map_err(csv_err)?;
    for row in reports.iter().flat_map(EvalReport::rows) {
        w.write_record([
            row.bucket.to_string(),
            row.metric.to_string(),
            row.k.to_string(),
            row.value.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv: {e}")))
}

pub fn read_report_csv<R: Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["bucket", "metric", "k", "value"] {
        return Err(Error::invalid("report csv must have columns bucket,metric,k,value"));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_err)?;
        let field = |i: usize| record.get(i).unwrap_or_default();
        rows.push(ReportRow {
            bucket: field(0).parse()?,
            metric: field(1).parse()?,
            k: field(2)
                .parse()
                .map_err(|_| Error::invalid(format!("bad k `{}`", field(2))))?,
            value: field(3)
                .parse()
                .map_err(|_| Error::invalid(format!("bad value `{}`", field(3))))?,
        });
    }
    Ok(rows)
}

pub fn read_report_file(path: &Path) -> Result<Vec<ReportRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_report_csv(file)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub bucket: Bucket,
    pub metric: Metric,
    pub k: usize,
    pub run_a: f64,
    pub run_b: f64,
    pub delta: f64,
}

/// Pairs two reports row by row; `delta = b - a`. Both must cover exactly
/// the same (bucket, metric, k) keys.
pub fn compare_runs(a: &[ReportRow], b: &[ReportRow]) -> Result<Vec<ComparisonRow>> {
    let index = |rows: &[ReportRow]| -> Result<BTreeMap<(Bucket, Metric, usize), f64>> {
        let mut map = BTreeMap::new();
        for r in rows {
            if map.insert((r.bucket, r.metric, r.k), r.value).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate row {} {} @{}",
                    r.bucket, r.metric, r.k
                )));
            }
        }
        Ok(map)
    };
    let (a, b) = (index(a)?, index(b)?);
    if !a.keys().eq(b.keys()) {
        let only_a: Vec<_> = a.keys().filter(|k| !b.contains_key(k)).collect();
        let only_b: Vec<_> = b.keys().filter(|k| !a.contains_key(k)).collect();
        return Err(Error::invalid(format!(
            "reports cover different keys (only in a: {only_a:?}; only in b: {only_b:?})"
        )));
    }
    Ok(a.into_iter()
        .zip(b.values())
        .map(|(((bucket, metric, k), run_a), &run_b)| ComparisonRow {
            bucket,
            metric,
            k,
            run_a,
            run_b,
            delta: run_b - run_a,
        })
        .collect())
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bucket", "metric", "k", "run_a", "run_b", "delta"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.bucket.to_string(),
            r.metric.to_string(),
            r.k.to_string(),
            r.run_a.to_string(),
            r.run_b.to_string(),
            r.delta.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("csv: {e}")))
}

pub fn read_ranked_jsonl(path: &Path) -> Result<Vec<RankedList>> {
    let raw: Vec<RankedList> = crate::corpus::read_jsonl(path)?;
    raw.into_iter()
        .map(|l| RankedList::new(l.query_id, l.entries))
        .collect()
}

pub fn write_ranked_jsonl(path: &Path, lists: &[RankedList]) -> Result<()> {
    crate::corpus::write_jsonl(path, lists)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Query};
    use proptest::prelude::*;

    fn list(q: &str, ids: &[&str]) -> RankedList {
        let n = ids.len();
        let entries = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.to_string(), (n - i) as f64))
            .collect();
        RankedList::new(q, entries).unwrap()
    }

    fn qrels(pairs: &[(&str, &str)]) -> Qrels {
        let mut q = Qrels::new();
        for (a, b) in pairs {
            q.insert(a, b);
        }
        q
    }

    #[test]
    fn mrr_example() {
        let lists = vec![
            list("q1", &["p1", "a", "b", "c"]),
            list("q2", &["a", "p2", "b", "c"]),
            list("q3", &["a", "b", "c", "p3"]),
        ];
        let q = qrels(&[("q1", "p1"), ("q2", "p2"), ("q3", "p3")]);
        assert!((mrr_at_k(&lists, &q, 10).unwrap() - 1.75 / 3.0).abs() < 1e-9);
        assert!((mrr_at_k(&lists, &q, 3).unwrap() - 1.5 / 3.0).abs() < 1e-9);
        assert!((mrr(&lists, &q).unwrap() - 1.75 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn perfect_ranking_scores_one() {
        let lists = vec![list("q1", &["p1", "x"]), list("q2", &["p2"])];
        let q = qrels(&[("q1", "p1"), ("q2", "p2")]);
        assert_eq!(mrr_at_k(&lists, &q, 1).unwrap(), 1.0);
    }

    #[test]
    fn k_zero_is_rejected() {
        let q = qrels(&[("q1", "p1")]);
        let lists = vec![list("q1", &["p1"])];
        assert!(mrr_at_k(&lists, &q, 0).is_err());
        assert!(precision_at_k(&lists, &q, 0).is_err());
        assert!(sim_score_average_at_k(&lists, 0).is_err());
    }

    #[test]
    fn missing_qrel_is_an_error() {
        let lists = vec![list("q9", &["a"])];
        assert!(mrr_at_k(&lists, &Qrels::new(), 3).is_err());
    }

    #[test]
    fn precision_examples() {
        let q = qrels(&[("q1", "p1")]);
        assert!((precision_at_k(&[list("q1", &["a", "p1", "b"])], &q, 3).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            precision_at_k(&[list("q1", &["a", "b", "c", "p1"])], &q, 3).unwrap(),
            0.0
        );
        let multi = qrels(&[("q1", "r1"), ("q1", "r2")]);
        let l = list("q1", &["r1", "x", "r2", "y", "z", "w"]);
        assert!((precision_at_k(&[l], &multi, 5).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn sim_average_examples() {
        let l = RankedList::new(
            "q",
            vec![
                ("a".into(), 0.9),
                ("b".into(), 0.8),
                ("c".into(), 0.7),
                ("d".into(), 0.1),
            ],
        )
        .unwrap();
        assert!((sim_score_average_at_k(std::slice::from_ref(&l), 3).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(sim_score_average_at_k(std::slice::from_ref(&l), 1).unwrap(), 0.9);
        let flat = RankedList::new("r", vec![("a".into(), 0.4), ("b".into(), 0.4)]).unwrap();
        assert_eq!(sim_score_average_at_k(&[flat], 10).unwrap(), 0.4);
        let empty = RankedList::new("e", vec![]).unwrap();
        assert!((sim_score_average_at_k(&[l, empty], 3).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn ranked_list_invariants() {
        assert!(RankedList::new("q", vec![("a".into(), 0.1), ("b".into(), 0.2)]).is_err());
        assert!(RankedList::new("q", vec![("a".into(), 0.2), ("a".into(), 0.1)]).is_err());
        let l = RankedList::from_scores("q", vec![("b".into(), 0.5), ("a".into(), 0.5), ("c".into(), 0.9)]).unwrap();
        assert_eq!(l.doc_ids().collect::<Vec<_>>(), ["c", "a", "b"]);
    }

    fn corpus_with_lengths(lengths: &[usize]) -> Corpus {
        let docs = lengths
            .iter()
            .enumerate()
            .map(|(i, &n)| Document::new(format!("d{i}"), &vec!["w"; n].join(" ")))
            .collect();
        let queries = (0..lengths.len())
            .map(|i| Query::new(format!("q{i}"), "query"))
            .collect();
        let pairs = (0..lengths.len())
            .map(|i| QrelPair {
                query_id: format!("q{i}"),
                positive_doc_id: format!("d{i}"),
            })
            .collect();
        Corpus::new(docs, queries, pairs).unwrap()
    }

    #[test]
    fn threshold_boundary_is_short() {
        let corpus = corpus_with_lengths(&[2048, 2049]);
        let q = Qrels::from_pairs(corpus.qrels());
        let lists = vec![list("q0", &["d0", "d1"]), list("q1", &["d0", "d1"])];
        let reports = bucketed_report(&lists, &q, &corpus, &DEFAULT_KS, 2048).unwrap();
        assert_eq!(reports[0].query_ids, ["q0"]);
        assert_eq!(reports[1].query_ids, ["q1"]);
        assert_eq!(reports[2].num_queries, 2);
        assert_eq!(reports[0].mrr_at[&3], 1.0);
        assert_eq!(reports[1].mrr_at[&3], 0.5);
    }

    #[test]
    fn empty_bucket_is_flagged_and_emits_no_rows() {
        let corpus = corpus_with_lengths(&[100, 200]);
        let q = Qrels::from_pairs(corpus.qrels());
        let lists = vec![list("q0", &["d0"]), list("q1", &["d1"])];
        let reports = bucketed_report(&lists, &q, &corpus, &DEFAULT_KS, 2048).unwrap();
        assert!(reports[1].is_empty());
        assert!(reports[1].rows().is_empty());
        assert_eq!(reports[0].num_queries, 2);
    }

    #[test]
    fn report_csv_round_trip() {
        let corpus = corpus_with_lengths(&[100, 5000]);
        let q = Qrels::from_pairs(corpus.qrels());
        let lists = vec![list("q0", &["d1", "d0"]), list("q1", &["d1", "d0"])];
        let reports = bucketed_report(&lists, &q, &corpus, &DEFAULT_KS, 2048).unwrap();
        let mut buf = Vec::new();
        write_report_csv(&reports, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("bucket,metric,k,value\nshort,mrr,3,0.5\n"));
        let rows = read_report_csv(buf.as_slice()).unwrap();
        let expected: Vec<ReportRow> = reports.iter().flat_map(EvalReport::rows).collect();
        assert_eq!(rows, expected);
    }

    fn rows(values: &[(Bucket, Metric, usize, f64)]) -> Vec<ReportRow> {
        values
            .iter()
            .map(|&(bucket, metric, k, value)| ReportRow {
                bucket,
                metric,
                k,
                value,
            })
            .collect()
    }

    #[test]
    fn compare_deltas() {
        let a = rows(&[
            (Bucket::Short, Metric::Mrr, 3, 0.53),
            (Bucket::Short, Metric::SimAvg, 10, 0.75),
        ]);
        let b = rows(&[
            (Bucket::Short, Metric::Mrr, 3, 0.64),
            (Bucket::Short, Metric::SimAvg, 10, 0.40),
        ]);
        let cmp = compare_runs(&a, &b).unwrap();
        assert!((cmp[0].delta - 0.11).abs() < 1e-9);
        assert!((cmp[1].delta + 0.35).abs() < 1e-9);
        assert!(compare_runs(&a, &a).unwrap().iter().all(|r| r.delta == 0.0));
        assert!(compare_runs(&a, &b[..1]).is_err());
        let mut buf = Vec::new();
        write_comparison_csv(&cmp, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("bucket,metric,k,run_a,run_b,delta\nshort,mrr,3,0.53,0.64,"));
    }

    #[test]
    fn ranked_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ranked.jsonl");
        let lists = vec![
            RankedList::new("q1", vec![("a".into(), 0.1 + 0.2), ("b".into(), 1e-300)]).unwrap(),
            RankedList::new("q2", vec![]).unwrap(),
        ];
        write_ranked_jsonl(&path, &lists).unwrap();
        assert_eq!(read_ranked_jsonl(&path).unwrap(), lists);
    }

    fn instance() -> impl Strategy<Value = (Vec<RankedList>, Qrels)> {
        (1usize..12, 1usize..15).prop_flat_map(|(nq, nd)| {
            proptest::collection::vec((Just(nd), proptest::collection::vec(0u32..5, nd), 0..nd), nq).prop_map(
                |per_query| {
                    let mut q = Qrels::new();
                    let lists = per_query
                        .into_iter()
                        .enumerate()
                        .map(|(i, (nd, scores, pos))| {
                            let qid = format!("q{i:02}");
                            q.insert(&qid, &format!("d{pos:02}"));
                            let scored = (0..nd).map(|d| (format!("d{d:02}"), scores[d] as f64 / 4.0)).collect();
                            RankedList::from_scores(qid, scored).unwrap()
                        })
                        .collect();
                    (lists, q)
                },
            )
        })
    }

    proptest! {
        #[test]
        fn mrr_bounded_and_monotone_in_k((lists, q) in instance(), k in 1usize..20) {
            let a = mrr_at_k(&lists, &q, k).unwrap();
            let b = mrr_at_k(&lists, &q, k + 1).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(a <= b);
        }

        #[test]
        fn metrics_ignore_query_order((lists, q) in instance(), k in 1usize..10, rot in 0usize..12) {
            let mut shuffled = lists.clone();
            let n = shuffled.len();
            shuffled.rotate_left(rot % n);
            shuffled.reverse();
            prop_assert_eq!(mrr_at_k(&lists, &q, k).unwrap().to_bits(), mrr_at_k(&shuffled, &q, k).unwrap().to_bits());
            prop_assert_eq!(precision_at_k(&lists, &q, k).unwrap().to_bits(), precision_at_k(&shuffled, &q, k).unwrap().to_bits());
            prop_assert_eq!(sim_score_average_at_k(&lists, k).unwrap().to_bits(), sim_score_average_at_k(&shuffled, k).unwrap().to_bits());
        }
    }
}
