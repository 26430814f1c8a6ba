//! Thin HTTP client for the zslreq service.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use zslreq_core::api::*;
use zslreq_core::labelspace::LabelConfig;
use zslreq_core::ErrorKind;

#[derive(Debug, Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{0}")]
    Api(ApiError),
    #[error("cannot reach the service: {0}")]
    Transport(String),
    #[error("unexpected response from the service: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ClientError::Api(e) => e.kind,
            ClientError::Transport(_) | ClientError::Decode(_) => ErrorKind::Backend,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        let base = base.into().trim_end_matches('/').to_owned();
        Self { http: reqwest::Client::new(), base }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        let body = resp.bytes().await.map_err(|e| ClientError::Transport(e.to_string()))?;
        if status.is_success() {
            return serde_json::from_slice(&body).map_err(|e| ClientError::Decode(e.to_string()));
        }
        match serde_json::from_slice::<ApiError>(&body) {
            Ok(e) => Err(ClientError::Api(e)),
            Err(_) => Err(ClientError::Decode(format!("status {status}: {}", String::from_utf8_lossy(&body)))),
        }
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let resp = self
            .http
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Self::decode(resp).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .await
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Self::decode(resp).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/health").await
    }

    pub async fn configs(&self) -> Result<Vec<ConfigSummary>, ClientError> {
        self.get("/v1/configs").await
    }

    pub async fn config(&self, id: &str) -> Result<LabelConfig, ClientError> {
        // Ids are alphanumeric with underscores; nothing needs escaping.
        self.get(&format!("/v1/configs/{id}")).await
    }

    pub async fn classify(&self, req: &ClassifyRequest) -> Result<ClassifyResponse, ClientError> {
        self.post("/v1/classify", req).await
    }

    pub async fn run_experiment(&self, req: &ExperimentRequest) -> Result<ExperimentResponse, ClientError> {
        self.post("/v1/experiments", req).await
    }

    pub async fn labelgen(&self, req: &LabelgenRequest) -> Result<LabelgenResponse, ClientError> {
        self.post("/v1/labelgen", req).await
    }

    pub async fn irr(&self, req: &IrrRequest) -> Result<IrrResponse, ClientError> {
        self.post("/v1/irr", req).await
    }

    pub async fn compare(&self, req: &CompareRequest) -> Result<CompareResponse, ClientError> {
        self.post("/v1/compare", req).await
    }
}
