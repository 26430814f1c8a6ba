use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use async_trait::async_trait;
use dashmap::DashMap;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{EmbedError, Embedder, EmbeddingVector};

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache file line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct CacheKey {
    backend: String,
    text_hash: String,
}

impl CacheKey {
    fn new(backend: &str, text: &str) -> Self {
        Self { backend: backend.to_owned(), text_hash: hex::encode(Sha256::digest(text.as_bytes())) }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    backend: String,
    text_hash: String,
    dim: usize,
    components: Vec<f64>,
}

/// Embeddings keyed by (backend identifier, SHA-256 of the exact text bytes).
///
/// Concurrent readers and writers are fine; two concurrent misses for the
/// same key may both compute and the later insert wins.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: DashMap<CacheKey, EmbeddingVector>,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, backend: &str, text: &str) -> Option<EmbeddingVector> {
        self.entries.get(&CacheKey::new(backend, text)).map(|v| v.clone())
    }

    pub fn insert(&self, backend: &str, text: &str, vector: EmbeddingVector) {
        self.entries.insert(CacheKey::new(backend, text), vector);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads a JSON-lines cache file. A missing file yields an empty cache.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let cache = Self::new();
        let file = match File::open(path.as_ref()) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(cache),
            Err(e) => return Err(e.into()),
        };
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CacheRecord = serde_json::from_str(&line)
                .map_err(|e| CacheError::Corrupt { line: line_no, reason: e.to_string() })?;
            if rec.components.len() != rec.dim {
                return Err(CacheError::Corrupt {
                    line: line_no,
                    reason: format!("dim {} but {} components", rec.dim, rec.components.len()),
                });
            }
            let vector = EmbeddingVector::new(rec.components)
                .map_err(|e| CacheError::Corrupt { line: line_no, reason: e.to_string() })?;
            cache.entries.insert(CacheKey { backend: rec.backend, text_hash: rec.text_hash }, vector);
        }
        Ok(cache)
    }

    /// Writes every entry, sorted by key, replacing the file atomically.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CacheError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut records: Vec<_> = self.entries.iter().map(|e| (e.key().clone(), e.value().clone())).collect();
        records.sort_by(|a, b| a.0.cmp(&b.0));

        let tmp = path.with_extension("tmp");
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            for (key, vector) in records {
                let rec = CacheRecord {
                    backend: key.backend,
                    text_hash: key.text_hash,
                    dim: vector.dim(),
                    components: vector.into_inner(),
                };
                serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

/// Returns the cached vector for `(backend, text)`, delegating on a miss.
/// Failures are not cached.
pub async fn cached_embed(
    cache: &EmbeddingCache,
    backend: &dyn Embedder,
    text: &str,
) -> Result<EmbeddingVector, EmbedError> {
    if let Some(hit) = cache.get(backend.identifier(), text) {
        return Ok(hit);
    }
    let vector = backend.embed(text).await?;
    cache.insert(backend.identifier(), text, vector.clone());
    Ok(vector)
}

/// An [`Embedder`] that consults an [`EmbeddingCache`] before delegating.
#[derive(Clone)]
pub struct CachedEmbedder {
    inner: Arc<dyn Embedder>,
    cache: Arc<EmbeddingCache>,
}

impl CachedEmbedder {
    pub fn new(inner: Arc<dyn Embedder>, cache: Arc<EmbeddingCache>) -> Self {
        Self { inner, cache }
    }

    pub fn cache(&self) -> &Arc<EmbeddingCache> {
        &self.cache
    }
}

#[async_trait]
impl Embedder for CachedEmbedder {
    fn identifier(&self) -> &str {
        self.inner.identifier()
    }

    async fn embed_batch(&self, texts: &[String]) -> Vec<Result<EmbeddingVector, EmbedError>> {
        let id = self.inner.identifier();
        let mut out: Vec<Option<Result<EmbeddingVector, EmbedError>>> =
            texts.iter().map(|t| self.cache.get(id, t).map(Ok)).collect();

        // Unique missing texts, each delegated once.
        let mut positions: IndexMap<&str, Vec<usize>> = IndexMap::new();
        for (i, (t, slot)) in texts.iter().zip(&out).enumerate() {
            if slot.is_none() {
                positions.entry(t.as_str()).or_default().push(i);
            }
        }
        if !positions.is_empty() {
            let misses: Vec<String> = positions.keys().map(|t| (*t).to_owned()).collect();
            let results = self.inner.embed_batch(&misses).await;
            for ((text, slots), result) in positions.iter().zip(results) {
                if let Ok(v) = &result {
                    self.cache.insert(id, text, v.clone());
                }
                for &i in slots {
                    out[i] = Some(result.clone());
                }
            }
        }
        out.into_iter()
            .map(|r| r.unwrap_or_else(|| Err(EmbedError::ProtocolViolation("backend returned too few results".into()))))
            .collect()
    }
}
