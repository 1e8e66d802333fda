//! HTTP embedding provider.
//!
//! Contract: `POST endpoint` with `{"model": .., "texts": [..]}`; the server
//! answers `200` with `{"vectors": [[..], ..]}`, one row of length `dim` per
//! text. Anything else is a provider error naming the batch.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

pub struct HttpClient {
    agent: ureq::Agent,
    endpoint: String,
}

impl HttpClient {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpClient {
            agent,
            endpoint: endpoint.to_string(),
        }
    }

    /// Sends one batch and returns the raw (unnormalized) rows.
    pub fn embed_batch(
        &self,
        model_id: &str,
        batch_index: usize,
        texts: &[String],
        dim: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let fail = |message: String| Error::Provider {
            model_id: model_id.to_string(),
            batch: batch_index,
            message,
        };
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { model: model_id, texts })
            .map_err(|e| fail(format!("transport: {e}")))?;
        if resp.status().as_u16() != 200 {
            return Err(fail(format!("http status {}", resp.status())));
        }
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| fail(format!("malformed response: {e}")))?;
        if body.vectors.len() != texts.len() {
            return Err(fail(format!(
                "expected {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        if let Some(row) = body.vectors.iter().find(|r| r.len() != dim) {
            return Err(fail(format!("expected dim {dim}, got {}", row.len())));
        }
        Ok(body.vectors)
    }
}
