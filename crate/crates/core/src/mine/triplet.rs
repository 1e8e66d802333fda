use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeKind {
    Hard,
    Random,
    Bm25,
}

impl NegativeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NegativeKind::Hard => "hard",
            NegativeKind::Random => "random",
            NegativeKind::Bm25 => "bm25",
        }
    }
}

impl std::fmt::Display for NegativeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NegativeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(NegativeKind::Hard),
            "random" => Ok(NegativeKind::Random),
            "bm25" => Ok(NegativeKind::Bm25),
            other => Err(Error::invalid(format!("unknown negative kind `{other}`"))),
        }
    }
}

/// A `(query, positive, negative)` training record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triplet {
    pub query_id: String,
    pub positive_doc_id: String,
    pub negative_doc_id: String,
    pub negative_kind: NegativeKind,
}

/// Negatives mined for one query under one sampler, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeList {
    pub query_id: String,
    pub kind: NegativeKind,
    pub negatives: Vec<String>,
}

/// Expands negative lists into triplets ordered by query id, then kind, then
/// the negative's rank within its list.
pub fn build_triplets(qrels: &BTreeMap<String, String>, lists: &[NegativeList]) -> Result<Vec<Triplet>> {
    let mut sorted: Vec<&NegativeList> = lists.iter().collect();
    sorted.sort_by(|a, b| a.query_id.cmp(&b.query_id).then(a.kind.cmp(&b.kind)));
    let mut out = Vec::new();
    for list in sorted {
        let positive = qrels
            .get(&list.query_id)
            .ok_or_else(|| Error::invalid(format!("query `{}` has no positive", list.query_id)))?;
        for neg in &list.negatives {
            if neg == positive {
                return Err(Error::invalid(format!(
                    "negative `{neg}` for query `{}` is its positive",
                    list.query_id
                )));
            }
            out.push(Triplet {
                query_id: list.query_id.clone(),
                positive_doc_id: positive.clone(),
                negative_doc_id: neg.clone(),
                negative_kind: list.kind,
            });
        }
    }
    Ok(out)
}

/// Triplet JSONL line: texts inline so external trainers can read it as-is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub query: String,
    pub pos: String,
    pub neg: String,
    pub query_id: String,
    pub positive_doc_id: String,
    pub negative_doc_id: String,
    pub negative_kind: NegativeKind,
}

impl TripletRecord {
    pub fn resolve(t: &Triplet, corpus: &Corpus) -> Result<Self> {
        let text = |id: &str| {
            corpus
                .document(id)
                .map(|d| d.text.clone())
                .ok_or_else(|| Error::invalid(format!("triplet references unknown document `{id}`")))
        };
        let query = corpus
            .query(&t.query_id)
            .ok_or_else(|| Error::invalid(format!("triplet references unknown query `{}`", t.query_id)))?;
        Ok(TripletRecord {
            query: query.text.clone(),
            pos: text(&t.positive_doc_id)?,
            neg: text(&t.negative_doc_id)?,
            query_id: t.query_id.clone(),
            positive_doc_id: t.positive_doc_id.clone(),
            negative_doc_id: t.negative_doc_id.clone(),
            negative_kind: t.negative_kind,
        })
    }
}

pub fn write_triplets<W: Write>(triplets: &[Triplet], corpus: &Corpus, mut out: W) -> Result<()> {
    for t in triplets {
        let rec = TripletRecord::resolve(t, corpus)?;
        serde_json::to_writer(&mut out, &rec).map_err(|e| Error::invalid(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io("<triplets>", e))?;
    }
    Ok(())
}
