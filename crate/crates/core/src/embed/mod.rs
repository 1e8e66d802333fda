//! Per-model dense embeddings behind a pluggable provider interface.
//!
//! Every vector leaving this module is L2-normalized, so cosine similarity
//! is a dot product downstream.

mod cache;
mod hashing;
mod http;
mod vector;

pub use cache::{content_hash, EmbeddingCache, CACHE_FILE};
pub use hashing::{hashing_embed, seeded_hash, token_slot};
pub use vector::{concat_normalized, is_normalized, l2_normalize, norm, EmbeddingVector, NORM_TOLERANCE};

pub(crate) use hashing::splitmix64;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, truncate_words, Corpus};
use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Hashing,
    Http,
}

fn default_max_words() -> usize {
    512
}

fn default_batch_size() -> usize {
    32
}

fn default_timeout_secs() -> u64 {
    60
}

/// Configuration for one embedding model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub model_id: String,
    pub kind: ProviderKind,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    /// Texts are cut to this many words before embedding.
    #[serde(default = "default_max_words")]
    pub max_sequence_words: usize,
    /// Hash seed (hashing provider only).
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl ProviderSpec {
    pub fn hashing(model_id: impl Into<String>, dim: usize, seed: u64) -> Self {
        ProviderSpec {
            model_id: model_id.into(),
            kind: ProviderKind::Hashing,
            dim,
            endpoint_url: None,
            max_sequence_words: default_max_words(),
            seed,
            batch_size: default_batch_size(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn http(model_id: impl Into<String>, dim: usize, endpoint_url: impl Into<String>) -> Self {
        ProviderSpec {
            kind: ProviderKind::Http,
            endpoint_url: Some(endpoint_url.into()),
            ..ProviderSpec::hashing(model_id, dim, 0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_id.is_empty() {
            return Err(Error::Config("provider model_id is empty".into()));
        }
        if self.dim < 2 {
            return Err(Error::Config(format!("provider `{}`: dim must be >= 2", self.model_id)));
        }
        if self.max_sequence_words == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "provider `{}`: max_sequence_words and batch_size must be positive",
                self.model_id
            )));
        }
        if self.kind == ProviderKind::Http && self.endpoint_url.is_none() {
            return Err(Error::Config(format!(
                "provider `{}`: http provider needs endpoint_url",
                self.model_id
            )));
        }
        Ok(())
    }

    /// Normalizes and truncates `text` into the exact string the model sees.
    pub fn prepare(&self, text: &str) -> String {
        truncate_words(&normalize_text(text), self.max_sequence_words)
    }
}

/// Embeds `texts` in order, consulting `cache` first when given.
pub fn embed_texts(
    provider: &ProviderSpec,
    texts: &[&str],
    cache: Option<&EmbeddingCache>,
) -> Result<Vec<EmbeddingVector>> {
    provider.validate()?;
    let prepared: Vec<String> = texts.iter().map(|t| provider.prepare(t)).collect();
    if let Some(i) = prepared.iter().position(|t| t.is_empty()) {
        return Err(Error::invalid(format!(
            "text #{i} is empty after normalization; it has no direction to embed"
        )));
    }
    let hashes: Vec<String> = prepared.iter().map(|t| content_hash(t)).collect();

    let mut out: Vec<Option<Vec<f64>>> = hashes
        .iter()
        .map(|h| {
            cache
                .and_then(|c| c.get(&provider.model_id, h))
                .filter(|v| v.len() == provider.dim)
        })
        .collect();
    let missing: Vec<usize> = (0..out.len()).filter(|&i| out[i].is_none()).collect();

    if !missing.is_empty() {
        let computed = match provider.kind {
            ProviderKind::Hashing => par::try_map(&missing, |&i| {
                hashing_embed(&provider.model_id, &prepared[i], provider.dim, provider.seed).map(|v| v.values)
            })?,
            ProviderKind::Http => embed_http(provider, &missing, &prepared)?,
        };
        for (&i, values) in missing.iter().zip(computed) {
            if let Some(c) = cache {
                c.put(&provider.model_id, &hashes[i], &values)?;
            }
            out[i] = Some(values);
        }
    }

    Ok(out
        .into_iter()
        .map(|values| EmbeddingVector {
            model_id: provider.model_id.clone(),
            values: values.expect("every slot filled"),
            normalized: true,
        })
        .collect())
}

fn embed_http(provider: &ProviderSpec, missing: &[usize], prepared: &[String]) -> Result<Vec<Vec<f64>>> {
    let url = provider
        .endpoint_url
        .as_deref()
        .ok_or_else(|| Error::Config("http provider needs endpoint_url".into()))?;
    let client = http::HttpClient::new(url, Duration::from_secs(provider.timeout_secs));
    let batches: Vec<(usize, Vec<String>)> = missing
        .chunks(provider.batch_size)
        .enumerate()
        .map(|(b, idx)| (b, idx.iter().map(|&i| prepared[i].clone()).collect()))
        .collect();
    let results = par::try_map(&batches, |(b, texts)| {
        let rows = client.embed_batch(&provider.model_id, *b, texts, provider.dim)?;
        rows.iter()
            .map(|r| {
                l2_normalize(r).map_err(|e| Error::Provider {
                    model_id: provider.model_id.clone(),
                    batch: *b,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(results.into_iter().flatten().collect())
}

/// All corpus embeddings for one model, aligned with the corpus id order.
#[derive(Debug, Clone)]
pub struct CorpusEmbeddings {
    pub model_id: String,
    pub dim: usize,
    pub documents: Vec<Vec<f64>>,
    pub queries: Vec<Vec<f64>>,
}

impl CorpusEmbeddings {
    pub fn compute(provider: &ProviderSpec, corpus: &Corpus, cache: Option<&EmbeddingCache>) -> Result<Self> {
        let doc_texts: Vec<&str> = corpus.documents().iter().map(|d| d.text.as_str()).collect();
        let query_texts: Vec<&str> = corpus.queries().iter().map(|q| q.text.as_str()).collect();
        let documents = if doc_texts.is_empty() {
            Vec::new()
        } else {
            embed_texts(provider, &doc_texts, cache)?
        };
        let queries = if query_texts.is_empty() {
            Vec::new()
        } else {
            embed_texts(provider, &query_texts, cache)?
        };
        Ok(CorpusEmbeddings {
            model_id: provider.model_id.clone(),
            dim: provider.dim,
            documents: documents.into_iter().map(|v| v.values).collect(),
            queries: queries.into_iter().map(|v| v.values).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    #[test]
    fn same_text_twice_is_bit_identical() {
        let p = ProviderSpec::hashing("h", 32, 7);
        let v = embed_texts(&p, &["mount targets", "mount targets"], None).unwrap();
        assert_eq!(v[0].values, v[1].values);
    }

    #[test]
    fn long_text_is_truncated() {
        let mut p = ProviderSpec::hashing("h", 64, 1);
        p.max_sequence_words = 512;
        let words: Vec<String> = (0..10_000).map(|i| format!("w{i}")).collect();
        let long = words.join(" ");
        let head = words[..512].join(" ");
        let v = embed_texts(&p, &[&long, &head], None).unwrap();
        assert_eq!(v[0].values, v[1].values);
    }

    #[test]
    fn empty_text_rejected() {
        let p = ProviderSpec::hashing("h", 8, 0);
        assert!(embed_texts(&p, &["ok", ""], None).is_err());
    }

    #[test]
    fn order_preserved_and_all_normalized() {
        let p = ProviderSpec::hashing("h", 16, 0);
        let texts = ["a", "b c", "d e f", "a"];
        let v = embed_texts(&p, &texts, None).unwrap();
        for (t, e) in texts.iter().zip(&v) {
            assert_eq!(e.values, hashing_embed("h", t, 16, 0).unwrap().values);
            assert!(is_normalized(&e.values));
        }
    }

    #[test]
    fn cache_is_used_and_survives_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CACHE_FILE);
        let p = ProviderSpec::hashing("h", 16, 0);
        let first = {
            let cache = EmbeddingCache::open(&path).unwrap();
            let v = embed_texts(&p, &["alpha beta", "gamma"], Some(&cache)).unwrap();
            assert_eq!(cache.len(), 2);
            v
        };
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        let cache = EmbeddingCache::open(&path).unwrap();
        assert_eq!(cache.len(), 1);
        let second = embed_texts(&p, &["alpha beta", "gamma"], Some(&cache)).unwrap();
        assert_eq!(first, second);
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn stale_dim_in_cache_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(&dir.path().join(CACHE_FILE)).unwrap();
        let small = ProviderSpec::hashing("h", 8, 0);
        let big = ProviderSpec::hashing("h", 16, 0);
        embed_texts(&small, &["x"], Some(&cache)).unwrap();
        let v = embed_texts(&big, &["x"], Some(&cache)).unwrap();
        assert_eq!(v[0].dim(), 16);
    }

    type Responder = Box<dyn Fn(&serde_json::Value) -> String + Send>;

    /// Serves `responses.len()` requests, answering each with the given
    /// status and body builder; returns the endpoint URL.
    fn serve(responses: Vec<(u16, Responder)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/embed", listener.local_addr().unwrap());
        std::thread::spawn(move || {
            for (status, body_fn) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let payload = body_fn(&req);
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                    payload.len()
                )
                .unwrap();
            }
        });
        url
    }

    fn rows_for(req: &serde_json::Value, dim: usize) -> String {
        let texts = req["texts"].as_array().unwrap();
        let rows: Vec<Vec<f64>> = texts
            .iter()
            .map(|t| {
                let n = t.as_str().unwrap().len() as f64;
                let mut r = vec![0.0; dim];
                r[0] = 3.0 * n;
                r[1] = 4.0 * n;
                r
            })
            .collect();
        serde_json::json!({ "vectors": rows }).to_string()
    }

    #[test]
    fn http_provider_posts_and_normalizes() {
        let url = serve(vec![(
            200,
            Box::new(|req: &serde_json::Value| {
                assert_eq!(req["model"], "remote");
                rows_for(req, 3)
            }),
        )]);
        let p = ProviderSpec::http("remote", 3, url);
        let v = embed_texts(&p, &["hello", "world wide"], None).unwrap();
        assert_eq!(v.len(), 2);
        for e in &v {
            assert!((e.values[0] - 0.6).abs() < 1e-12);
            assert!((e.values[1] - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn http_dim_mismatch_is_provider_error() {
        let url = serve(vec![(200, Box::new(|req: &serde_json::Value| rows_for(req, 5)))]);
        let p = ProviderSpec::http("remote", 3, url);
        let err = embed_texts(&p, &["x"], None).unwrap_err();
        assert!(matches!(err, Error::Provider { batch: 0, .. }), "{err}");
    }

    #[test]
    fn http_non_200_is_provider_error() {
        let url = serve(vec![(503, Box::new(|_: &serde_json::Value| "{}".to_string()))]);
        let p = ProviderSpec::http("remote", 3, url);
        let err = embed_texts(&p, &["x"], None).unwrap_err();
        assert!(err.to_string().contains("503"), "{err}");
    }

    #[test]
    fn http_malformed_body_is_provider_error() {
        let url = serve(vec![(
            200,
            Box::new(|_: &serde_json::Value| "{\"vec\": 1}".to_string()),
        )]);
        let p = ProviderSpec::http("remote", 3, url);
        assert!(matches!(embed_texts(&p, &["x"], None), Err(Error::Provider { .. })));
    }

    #[test]
    fn http_transport_failure_is_provider_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/embed", listener.local_addr().unwrap());
        drop(listener);
        let p = ProviderSpec::http("remote", 3, url);
        assert!(matches!(embed_texts(&p, &["x"], None), Err(Error::Provider { .. })));
    }
}
