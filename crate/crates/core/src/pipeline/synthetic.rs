//! Seeded synthetic benchmark with planted confounders.
//!
//! Every query pairs a handful of topic words with a query-side jargon term.
//! Its positive shares the topic words but spells the jargon with a
//! document-side synonym, so a plain bag-of-words match only sees the topic.
//! Confounders share the topic too, repeat the query's literal jargon term
//! and carry a different document-side term, which makes them look closer
//! than the positive to a lexical model. Jargon pairs are shared across
//! queries, so what a ranker learns on one query transfers to others.
//! Fillers draw on a separate vocabulary.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, QrelPair, Query};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_queries: usize,
    pub confounders_per_query: usize,
    /// unrelated documents; `None` means one per query
    pub fillers: Option<usize>,
    pub topic_words: usize,
    pub jargon_pairs: usize,
    /// generic words sprinkled into every document
    pub generic_words: usize,
    /// set from the global seed when run inside the pipeline
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_queries: 200,
            confounders_per_query: 5,
            fillers: None,
            topic_words: 4,
            jargon_pairs: 8,
            generic_words: 12,
            seed: 0,
        }
    }
}

/// Builds a corpus with default vocabulary sizes.
pub fn make_synthetic_benchmark(n_queries: usize, confounders_per_query: usize, seed: u64) -> Result<Corpus> {
    make_synthetic(&SyntheticConfig {
        n_queries,
        confounders_per_query,
        seed,
        ..SyntheticConfig::default()
    })
}

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cl", "dr", "gr", "pl", "st",
    "tr", "sh", "ch",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou", "ea"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "s", "x", "m"];

/// Draws `n` distinct pseudo-words not already in `taken`.
fn words(rng: &mut ChaCha8Rng, n: usize, syllables: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(VOWELS.choose(rng).unwrap());
        }
        w.push_str(CODAS.choose(rng).unwrap());
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn sentence(rng: &mut ChaCha8Rng, mut parts: Vec<String>) -> String {
    parts.shuffle(rng);
    parts.join(" ")
}

pub fn make_synthetic(config: &SyntheticConfig) -> Result<Corpus> {
    if config.n_queries == 0 {
        return Err(Error::invalid("synthetic benchmark needs at least one query"));
    }
    if config.jargon_pairs < 2 || config.topic_words == 0 {
        return Err(Error::invalid("need at least two jargon pairs and one topic word"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut taken = BTreeSet::new();
    let jargon_query = words(&mut rng, config.jargon_pairs, 2, &mut taken);
    let jargon_doc = words(&mut rng, config.jargon_pairs, 2, &mut taken);
    let generic = words(&mut rng, 150, 2, &mut taken);
    let n_fillers = config.fillers.unwrap_or(config.n_queries);

    let mut texts: Vec<(String, Option<usize>)> = Vec::new(); // (text, positive-of query)
    let mut queries = Vec::with_capacity(config.n_queries);
    let pick_generic =
        |rng: &mut ChaCha8Rng| -> Vec<String> { generic.choose_multiple(rng, config.generic_words).cloned().collect() };

    for qi in 0..config.n_queries {
        let topic = words(&mut rng, config.topic_words, 3, &mut taken);
        let j = rng.gen_range(0..config.jargon_pairs);
        let mut q = topic.clone();
        q.push(jargon_query[j].clone());
        queries.push(Query::new(format!("q{qi:04}"), &sentence(&mut rng, q)));

        let mut pos = topic.clone();
        pos.push(jargon_doc[j].clone());
        pos.extend(pick_generic(&mut rng));
        texts.push((sentence(&mut rng, pos), Some(qi)));

        for _ in 0..config.confounders_per_query {
            let other = (j + rng.gen_range(1..config.jargon_pairs)) % config.jargon_pairs;
            let mut c = topic.clone();
            c.push(jargon_query[j].clone());
            c.push(jargon_doc[other].clone());
            c.extend(pick_generic(&mut rng));
            texts.push((sentence(&mut rng, c), None));
        }
    }
    for _ in 0..n_fillers {
        let mut f = words(&mut rng, config.topic_words, 3, &mut taken);
        f.push(jargon_doc[rng.gen_range(0..config.jargon_pairs)].clone());
        f.extend(pick_generic(&mut rng));
        texts.push((sentence(&mut rng, f), None));
    }

    // ids carry no hint of a document's role
    texts.shuffle(&mut rng);
    let mut documents = Vec::with_capacity(texts.len());
    let mut qrels = Vec::with_capacity(config.n_queries);
    for (i, (text, positive_of)) in texts.into_iter().enumerate() {
        let id = format!("d{i:05}");
        if let Some(qi) = positive_of {
            qrels.push(QrelPair {
                query_id: format!("q{qi:04}"),
                positive_doc_id: id.clone(),
            });
        }
        documents.push(Document::new(id, &text));
    }
    Corpus::new(documents, queries, qrels)
}
