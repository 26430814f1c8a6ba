//! Turning text into vectors.
//!
//! Two backends ship with the crate: a static word-vector lexicon with mean
//! pooling ([`StaticEmbedder`]), useful for tests and offline runs, and an
//! HTTP client for an external inference service ([`RemoteEmbedder`]) that
//! hosts the actual language models. Both sit behind the [`Embedder`] trait
//! and can be wrapped in a [`CachedEmbedder`].

mod cache;
mod lexicon;
mod remote;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use cache::{cached_embed, CacheError, CachedEmbedder, EmbeddingCache};
pub use lexicon::{load_lexicon, parse_lexicon, tokenize, Lexicon, LexiconError};
pub use remote::{embed_remote, EmbedRequest, EmbedResponse, RemoteEmbedder, DEFAULT_BATCH_SIZE};

/// A fixed-dimension vector with finite components.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(components: Vec<f64>) -> Result<Self, EmbedError> {
        if components.is_empty() {
            return Err(EmbedError::EmptyVector);
        }
        if let Some(index) = components.iter().position(|c| !c.is_finite()) {
            return Err(EmbedError::NonFinite { index });
        }
        Ok(Self(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbedError;

    fn try_from(components: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(components)
    }
}

impl<'de> Deserialize<'de> for EmbeddingVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let components = Vec::<f64>::deserialize(deserializer)?;
        Self::new(components).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("embedding vector has no components")]
    EmptyVector,
    #[error("embedding component {index} is not finite")]
    NonFinite { index: usize },
    #[error("no token of {text:?} is in the lexicon")]
    NoKnownTokens { text: String },
    #[error("transport failure: {0}")]
    TransportFailure(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
}

impl EmbedError {
    /// Transport failures may succeed on retry; everything else will not.
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbedError::TransportFailure(_))
    }

    /// True when the failure concerns one text rather than the backend.
    pub fn is_item_level(&self) -> bool {
        matches!(self, EmbedError::NoKnownTokens { .. })
    }
}

/// A text embedding backend.
#[async_trait]
pub trait Embedder: Send + Sync {
    /// Stable name of the backend, used as the cache namespace.
    fn identifier(&self) -> &str;

    /// Embeds every text, returning one result per input in input order.
    async fn embed_batch(&self, texts: &[String]) -> Vec<Result<EmbeddingVector, EmbedError>>;

    async fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        self.embed_batch(&[text.to_owned()])
            .await
            .pop()
            .unwrap_or_else(|| Err(EmbedError::ProtocolViolation("backend returned no result".into())))
    }
}

/// Mean-pooled word vectors from a [`Lexicon`].
#[derive(Debug, Clone)]
pub struct StaticEmbedder {
    lexicon: Arc<Lexicon>,
    identifier: String,
}

impl StaticEmbedder {
    pub fn new(lexicon: Arc<Lexicon>, identifier: impl Into<String>) -> Self {
        Self { lexicon, identifier: identifier.into() }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }
}

#[async_trait]
impl Embedder for StaticEmbedder {
    fn identifier(&self) -> &str {
        &self.identifier
    }

    async fn embed_batch(&self, texts: &[String]) -> Vec<Result<EmbeddingVector, EmbedError>> {
        texts.iter().map(|t| embed_static(&self.lexicon, t)).collect()
    }
}

/// Mean of the lexicon vectors of the in-vocabulary tokens of `text`.
///
/// Unknown tokens are skipped. Vectors are summed in sorted token order, so
/// the result depends only on the multiset of known tokens.
pub fn embed_static(lexicon: &Lexicon, text: &str) -> Result<EmbeddingVector, EmbedError> {
    let mut known: Vec<(String, &EmbeddingVector)> = tokenize(text)
        .into_iter()
        .filter_map(|tok| lexicon.get(&tok).map(|v| (tok, v)))
        .collect();
    if known.is_empty() {
        return Err(EmbedError::NoKnownTokens { text: text.to_owned() });
    }
    known.sort_by(|a, b| a.0.cmp(&b.0));

    let mut sum = vec![0.0f64; lexicon.dim()];
    for (_, v) in &known {
        for (acc, c) in sum.iter_mut().zip(v.as_slice()) {
            *acc += c;
        }
    }
    let n = known.len() as f64;
    sum.iter_mut().for_each(|c| *c /= n);
    EmbeddingVector::new(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmbedderKind {
    StaticLexicon,
    Remote,
}

/// How token vectors are reduced to one sentence vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Pooling {
    #[default]
    Mean,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pooling::Mean => f.write_str("mean"),
        }
    }
}

/// Description of an embedding backend: `static:<lexicon path>` or
/// `remote:<base url>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EmbedderSpec {
    pub kind: EmbedderKind,
    pub source: String,
    pub pooling: Pooling,
}

impl EmbedderSpec {
    pub fn static_lexicon(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: EmbedderKind::StaticLexicon,
            source: path.into().display().to_string(),
            pooling: Pooling::Mean,
        }
    }

    pub fn remote(base_url: impl Into<String>) -> Self {
        Self { kind: EmbedderKind::Remote, source: base_url.into(), pooling: Pooling::Mean }
    }

    /// Cache namespace; distinct for every (kind, source, pooling).
    pub fn identifier(&self) -> String {
        let kind = match self.kind {
            EmbedderKind::StaticLexicon => "static-lexicon",
            EmbedderKind::Remote => "remote",
        };
        format!("{kind}:{}:{}", self.pooling, self.source)
    }
}

impl fmt::Display for EmbedderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            EmbedderKind::StaticLexicon => write!(f, "static:{}", self.source),
            EmbedderKind::Remote => write!(f, "remote:{}", self.source),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid backend {0:?}: expected static:<path> or remote:<url>")]
pub struct ParseSpecError(pub String);

impl FromStr for EmbedderSpec {
    type Err = ParseSpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("static", path)) if !path.is_empty() => Ok(Self::static_lexicon(path)),
            Some(("remote", url)) if !url.is_empty() => Ok(Self::remote(url)),
            _ => Err(ParseSpecError(s.to_owned())),
        }
    }
}

impl Serialize for EmbedderSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EmbedderSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
