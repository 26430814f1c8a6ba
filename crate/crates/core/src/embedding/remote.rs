use std::sync::Arc;

use async_trait::async_trait;
use futures::future::join_all;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use super::{EmbedError, Embedder, EmbedderKind, EmbedderSpec, EmbeddingVector};

pub const DEFAULT_BATCH_SIZE: usize = 32;
const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// Body of `POST <base>/embed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

/// Response of `POST <base>/embed`. Vectors are validated after decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub model: String,
    pub dim: usize,
    pub embeddings: Vec<Vec<f64>>,
}

/// Sends one request and validates the reply against the wire contract.
pub async fn embed_remote(
    client: &reqwest::Client,
    spec: &EmbedderSpec,
    texts: &[String],
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if spec.kind != EmbedderKind::Remote {
        return Err(EmbedError::ProtocolViolation(format!("{spec} is not a remote backend")));
    }
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let url = format!("{}/embed", spec.source.trim_end_matches('/'));
    let resp = client
        .post(&url)
        .json(&EmbedRequest { texts: texts.to_vec() })
        .send()
        .await
        .map_err(|e| EmbedError::TransportFailure(format!("{url}: {e}")))?;

    let status = resp.status();
    if status != reqwest::StatusCode::OK {
        return Err(EmbedError::TransportFailure(format!("{url}: HTTP {status}")));
    }
    let body = resp.bytes().await.map_err(|e| EmbedError::TransportFailure(format!("{url}: {e}")))?;
    let decoded: EmbedResponse = serde_json::from_slice(&body)
        .map_err(|e| EmbedError::ProtocolViolation(format!("undecodable response: {e}")))?;

    if decoded.embeddings.len() != texts.len() {
        return Err(EmbedError::ProtocolViolation(format!(
            "sent {} texts, received {} embeddings",
            texts.len(),
            decoded.embeddings.len()
        )));
    }
    decoded
        .embeddings
        .into_iter()
        .enumerate()
        .map(|(i, components)| {
            if components.len() != decoded.dim {
                return Err(EmbedError::ProtocolViolation(format!(
                    "embedding {i} has {} components, declared dim is {}",
                    components.len(),
                    decoded.dim
                )));
            }
            EmbeddingVector::new(components)
                .map_err(|e| EmbedError::ProtocolViolation(format!("embedding {i}: {e}")))
        })
        .collect()
}

/// HTTP client for an external embedding service.
///
/// Large inputs are split into batches that are sent concurrently, with at
/// most `max_in_flight` requests outstanding.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    client: reqwest::Client,
    spec: EmbedderSpec,
    identifier: String,
    batch_size: usize,
    limiter: Arc<Semaphore>,
}

impl RemoteEmbedder {
    pub fn new(spec: EmbedderSpec) -> Self {
        let identifier = spec.identifier();
        Self {
            client: reqwest::Client::new(),
            spec,
            identifier,
            batch_size: DEFAULT_BATCH_SIZE,
            limiter: Arc::new(Semaphore::new(DEFAULT_MAX_IN_FLIGHT)),
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn with_max_in_flight(mut self, max_in_flight: usize) -> Self {
        self.limiter = Arc::new(Semaphore::new(max_in_flight.max(1)));
        self
    }

    pub fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }
}

#[async_trait]
impl Embedder for RemoteEmbedder {
    fn identifier(&self) -> &str {
        &self.identifier
    }

    async fn embed_batch(&self, texts: &[String]) -> Vec<Result<EmbeddingVector, EmbedError>> {
        let chunks = texts.chunks(self.batch_size).map(|chunk| async move {
            let _permit = self.limiter.acquire().await.expect("semaphore closed");
            (chunk.len(), embed_remote(&self.client, &self.spec, chunk).await)
        });

        let mut out = Vec::with_capacity(texts.len());
        let mut dim = None;
        for (len, result) in join_all(chunks).await {
            match result {
                Ok(vectors) => {
                    for v in vectors {
                        let expected = *dim.get_or_insert(v.dim());
                        if v.dim() == expected {
                            out.push(Ok(v));
                        } else {
                            out.push(Err(EmbedError::ProtocolViolation(format!(
                                "dimension changed between batches: {expected} then {}",
                                v.dim()
                            ))));
                        }
                    }
                }
                Err(e) => out.extend(std::iter::repeat_n(Err(e), len)),
            }
        }
        out
    }
}
