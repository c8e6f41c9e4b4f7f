//! Text embedding: a deterministic hashing embedder for tests and offline
//! runs, and an HTTP client for a hosted embedding model.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::text::{tokenize, truncate_chars};

/// Dimension of the hosted embedding model's output.
pub const DEFAULT_DIMENSION: usize = 1536;
/// Documents are embedded from at most this many leading characters.
pub const MAX_EMBED_CHARS: usize = 8000;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("text is empty")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("vector has a non-finite entry")]
    NonFinite,
    #[error("embedding service unavailable: {message}")]
    RemoteUnavailable {
        message: String,
        retry_after: Option<Duration>,
    },
    #[error("unexpected embedding response: {0}")]
    BadResponse(String),
    #[error("invalid embedder config: {0}")]
    Config(String),
    #[error("embedding cache {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A dense vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector<F>(Vec<F>);

impl<F: Scalar> EmbeddingVector<F> {
    pub fn new(values: Vec<F>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<F> {
        self.0
    }

    pub fn norm(&self) -> F {
        self.0.iter().map(|v| *v * *v).sum::<F>().sqrt()
    }

    /// Unit-length copy; fails on the zero vector.
    pub fn normalized(&self) -> Result<Self, EmbedError> {
        let n = self.norm();
        if n == F::zero() {
            return Err(EmbedError::ZeroVector);
        }
        Ok(Self(self.0.iter().map(|v| *v / n).collect()))
    }

    pub fn scaled(&self, factor: F) -> Self {
        Self(self.0.iter().map(|v| *v * factor).collect())
    }
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// `u·v / (‖u‖‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity<F: Scalar>(
    u: &EmbeddingVector<F>,
    v: &EmbeddingVector<F>,
) -> Result<F, EmbedError> {
    if u.dimension() != v.dimension() {
        return Err(EmbedError::DimensionMismatch {
            expected: u.dimension(),
            found: v.dimension(),
        });
    }
    let nu = u.norm();
    let nv = v.norm();
    if nu == F::zero() || nv == F::zero() {
        return Err(EmbedError::ZeroVector);
    }
    let c = dot(u.as_slice(), v.as_slice()) / (nu * nv);
    Ok(c.max(-F::one()).min(F::one()))
}

pub trait Embedder<F: Scalar>: Send + Sync {
    fn dimension(&self) -> usize;

    /// Identifier stored alongside indexes so queries use a matching model.
    fn model_id(&self) -> String;

    fn embed(&self, text: &str) -> Result<EmbeddingVector<F>, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<F>>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

impl<F: Scalar, E: Embedder<F> + ?Sized> Embedder<F> for Box<E> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn model_id(&self) -> String {
        (**self).model_id()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector<F>, EmbedError> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<F>>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

impl<F: Scalar, E: Embedder<F> + ?Sized> Embedder<F> for std::sync::Arc<E> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn model_id(&self) -> String {
        (**self).model_id()
    }
    fn embed(&self, text: &str) -> Result<EmbeddingVector<F>, EmbedError> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<F>>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

/// Embeds the first [`MAX_EMBED_CHARS`] characters of a document and reports
/// whether the text was cut.
pub fn embed_document<F: Scalar, E: Embedder<F> + ?Sized>(
    embedder: &E,
    text: &str,
) -> Result<(EmbeddingVector<F>, bool), EmbedError> {
    let (head, truncated) = truncate_chars(text, MAX_EMBED_CHARS);
    Ok((embedder.embed(head)?, truncated))
}

/// Signed feature hashing over lowercase word tokens, L2-normalized.
///
/// Each token lands in one of `dimension` buckets and adds ±1 there. The
/// output is a pure function of `(text, seed, dimension)`.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dimension: usize,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Result<Self, EmbedError> {
        if dimension == 0 {
            return Err(EmbedError::Config("dimension must be > 0".into()));
        }
        Ok(Self { dimension, seed })
    }

    /// Rebuilds the embedder named by a `mock-hash:d=<dim>:seed=<seed>`
    /// model id, as stored in index files.
    pub fn from_model_id(model_id: &str) -> Option<Self> {
        let rest = model_id.strip_prefix("mock-hash:d=")?;
        let (d, seed) = rest.split_once(":seed=")?;
        Self::new(d.parse().ok()?, seed.parse().ok()?).ok()
    }

    fn token_hash(&self, token: &str) -> u64 {
        // FNV-1a over the seed bytes then the token, followed by a splitmix
        // finalizer so low bits are well mixed.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.seed.to_le_bytes().iter().chain(token.as_bytes()) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^ (h >> 31)
    }
}

impl<F: Scalar> Embedder<F> for MockEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn model_id(&self) -> String {
        format!("mock-hash:d={}:seed={}", self.dimension, self.seed)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<F>, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut counts = vec![0i64; self.dimension];
        for token in tokenize(text) {
            let h = self.token_hash(&token);
            let bucket = (h % self.dimension as u64) as usize;
            if h >> 63 == 1 {
                counts[bucket] -= 1;
            } else {
                counts[bucket] += 1;
            }
        }
        let norm = (counts.iter().map(|c| (c * c) as f64).sum::<f64>()).sqrt();
        if norm == 0.0 {
            // no alphanumeric tokens, or every bucket cancelled out
            return Err(EmbedError::EmptyText);
        }
        let values = counts
            .into_iter()
            .map(|c| F::from_f64_lossy(c as f64 / norm))
            .collect();
        EmbeddingVector::new(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedBackend {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub backend: EmbedBackend,
    pub model_id: String,
    pub dimension: usize,
    pub cache_path: Option<PathBuf>,
    /// Hash seed for the mock backend.
    #[serde(default)]
    pub seed: u64,
    /// Endpoint and key for the remote backend.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
}

impl EmbedderConfig {
    pub fn mock(dimension: usize, seed: u64) -> Self {
        Self {
            backend: EmbedBackend::Mock,
            model_id: "mock-hash".into(),
            dimension,
            cache_path: None,
            seed,
            endpoint: None,
            api_key: None,
        }
    }

    /// Remote settings from `EMBED_MODEL`, `EMBED_API_KEY` and `EMBED_ENDPOINT`.
    pub fn remote_from_env(dimension: usize, cache_path: Option<PathBuf>) -> Self {
        Self {
            backend: EmbedBackend::Remote,
            model_id: std::env::var("EMBED_MODEL")
                .unwrap_or_else(|_| "text-embedding-ada-002".into()),
            dimension,
            cache_path,
            seed: 0,
            endpoint: std::env::var("EMBED_ENDPOINT").ok(),
            api_key: std::env::var("EMBED_API_KEY").ok(),
        }
    }

    pub fn build<F: Scalar>(&self) -> Result<Box<dyn Embedder<F>>, EmbedError> {
        if self.dimension == 0 {
            return Err(EmbedError::Config("dimension must be > 0".into()));
        }
        match self.backend {
            EmbedBackend::Mock => Ok(Box::new(MockEmbedder::new(self.dimension, self.seed)?)),
            EmbedBackend::Remote => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .ok_or_else(|| EmbedError::Config("EMBED_ENDPOINT is not set".into()))?;
                Ok(Box::new(RemoteEmbedder::new(
                    endpoint,
                    self.api_key.clone(),
                    self.model_id.clone(),
                    self.dimension,
                    self.cache_path.clone(),
                )?))
            }
        }
    }
}

/// Client for an OpenAI-style `/embeddings` endpoint with an on-disk cache.
///
/// Cache entries are one file per SHA-256 of `(model_id, text)`, holding the
/// vector as raw little-endian `f32`.
pub struct RemoteEmbedder {
    endpoint: String,
    api_key: Option<String>,
    model_id: String,
    dimension: usize,
    cache_dir: Option<PathBuf>,
    http: reqwest::blocking::Client,
    cache_write: Mutex<()>,
}

impl fmt::Debug for RemoteEmbedder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteEmbedder")
            .field("endpoint", &self.endpoint)
            .field("model_id", &self.model_id)
            .field("dimension", &self.dimension)
            .field("cache_dir", &self.cache_dir)
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f32>,
    #[serde(default)]
    index: Option<usize>,
}

impl RemoteEmbedder {
    pub fn new(
        endpoint: String,
        api_key: Option<String>,
        model_id: String,
        dimension: usize,
        cache_dir: Option<PathBuf>,
    ) -> Result<Self, EmbedError> {
        if let Some(dir) = &cache_dir {
            std::fs::create_dir_all(dir).map_err(|source| EmbedError::Cache {
                path: dir.clone(),
                source,
            })?;
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| EmbedError::Config(e.to_string()))?;
        Ok(Self {
            endpoint,
            api_key,
            model_id,
            dimension,
            cache_dir,
            http,
            cache_write: Mutex::new(()),
        })
    }

    pub fn cache_key(model_id: &str, text: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(model_id.as_bytes());
        hasher.update([0u8]);
        hasher.update(text.as_bytes());
        hex::encode(hasher.finalize())
    }

    fn cache_file(&self, text: &str) -> Option<PathBuf> {
        self.cache_dir
            .as_ref()
            .map(|d| d.join(format!("{}.f32", Self::cache_key(&self.model_id, text))))
    }

    fn read_cache(&self, path: &Path) -> Option<Vec<f32>> {
        let bytes = std::fs::read(path).ok()?;
        if bytes.len() != self.dimension * 4 {
            return None;
        }
        Some(bytes.chunks_exact(4).map(f32::read_le).collect())
    }

    fn write_cache(&self, path: &Path, values: &[f32]) -> Result<(), EmbedError> {
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            v.write_le(&mut bytes);
        }
        let _guard = self.cache_write.lock().unwrap_or_else(|e| e.into_inner());
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &bytes)
            .and_then(|_| std::fs::rename(&tmp, path))
            .map_err(|source| EmbedError::Cache {
                path: path.to_path_buf(),
                source,
            })
    }

    fn request(&self, inputs: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let body = serde_json::json!({ "model": self.model_id, "input": inputs });
        let mut req = self.http.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| EmbedError::RemoteUnavailable {
            message: e.to_string(),
            retry_after: None,
        })?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            let retry_after = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(EmbedError::RemoteUnavailable {
                message: format!("HTTP {status}"),
                retry_after,
            });
        }
        if !status.is_success() {
            return Err(EmbedError::BadResponse(format!("HTTP {status}")));
        }
        let mut parsed: EmbeddingResponse = resp
            .json()
            .map_err(|e| EmbedError::BadResponse(e.to_string()))?;
        if parsed.data.len() != inputs.len() {
            return Err(EmbedError::BadResponse(format!(
                "expected {} embeddings, got {}",
                inputs.len(),
                parsed.data.len()
            )));
        }
        parsed.data.sort_by_key(|d| d.index.unwrap_or(0));
        parsed
            .data
            .into_iter()
            .map(|d| {
                if d.embedding.len() != self.dimension {
                    Err(EmbedError::DimensionMismatch {
                        expected: self.dimension,
                        found: d.embedding.len(),
                    })
                } else {
                    Ok(d.embedding)
                }
            })
            .collect()
    }

    fn to_vector<F: Scalar>(values: &[f32]) -> Result<EmbeddingVector<F>, EmbedError> {
        EmbeddingVector::new(values.iter().map(|v| F::from_f64_lossy(f64::from(*v))).collect())
    }
}

impl<F: Scalar> Embedder<F> for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn model_id(&self) -> String {
        self.model_id.clone()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<F>, EmbedError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<F>>, EmbedError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyText);
        }
        let mut out: Vec<Option<Vec<f32>>> = texts
            .iter()
            .map(|t| self.cache_file(t).and_then(|p| self.read_cache(&p)))
            .collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|i| out[*i].is_none()).collect();
        if !missing.is_empty() {
            let inputs: Vec<&str> = missing.iter().map(|i| texts[*i]).collect();
            let fetched = self.request(&inputs)?;
            for (i, values) in missing.into_iter().zip(fetched) {
                if let Some(path) = self.cache_file(texts[i]) {
                    self.write_cache(&path, &values)?;
                }
                out[i] = Some(values);
            }
        }
        out.into_iter()
            .map(|v| Self::to_vector(&v.expect("filled above")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn mock() -> MockEmbedder {
        MockEmbedder::new(32, 7).unwrap()
    }

    #[test]
    fn mock_model_id_roundtrip() {
        let e = MockEmbedder::new(48, 901).unwrap();
        let id = <MockEmbedder as Embedder<f32>>::model_id(&e);
        let back = MockEmbedder::from_model_id(&id).unwrap();
        assert_eq!(<MockEmbedder as Embedder<f32>>::model_id(&back), id);
        assert!(MockEmbedder::from_model_id("text-embedding-ada-002").is_none());
    }

    fn v(values: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn mock_is_deterministic() {
        let a: EmbeddingVector<f32> = mock().embed("quarry blasting").unwrap();
        let b: EmbeddingVector<f32> = mock().embed("quarry blasting").unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mock_rejects_empty() {
        let r: Result<EmbeddingVector<f32>, _> = mock().embed("   ");
        assert!(matches!(r, Err(EmbedError::EmptyText)));
    }

    #[test]
    fn seed_changes_vector() {
        let a: EmbeddingVector<f64> = mock().embed("wheel loader").unwrap();
        let b: EmbeddingVector<f64> = MockEmbedder::new(32, 8).unwrap().embed("wheel loader").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn lexical_overlap_is_closer() {
        let e = MockEmbedder::new(DEFAULT_DIMENSION, 42).unwrap();
        let q: EmbeddingVector<f64> = e.embed("quarry blasting").unwrap();
        let near = e.embed("quarry blasting operations").unwrap();
        let far = e.embed("fleet financing").unwrap();
        assert!(cosine_similarity(&q, &near).unwrap() > cosine_similarity(&q, &far).unwrap());
    }

    #[test]
    fn cosine_examples() {
        let a = v(&[0.3, -1.2, 4.0]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!((c - 1.0 / 2f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(EmbedError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(EmbedError::ZeroVector)
        ));
        assert!(matches!(
            EmbeddingVector::new(vec![f64::NAN]),
            Err(EmbedError::NonFinite)
        ));
    }

    #[test]
    fn document_truncation_flag() {
        let e = mock();
        let long = "word ".repeat(2000);
        let (_, cut): (EmbeddingVector<f32>, bool) = embed_document(&e, &long).unwrap();
        assert!(cut);
        let (_, cut): (EmbeddingVector<f32>, bool) = embed_document(&e, "short").unwrap();
        assert!(!cut);
    }

    fn nonzero_vec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 4)
            .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
    }

    proptest! {
        #[test]
        fn cosine_symmetric(a in nonzero_vec(), b in nonzero_vec()) {
            let (a, b) = (v(&a), v(&b));
            prop_assert_eq!(cosine_similarity(&a, &b).unwrap(), cosine_similarity(&b, &a).unwrap());
        }

        #[test]
        fn cosine_scale_invariant(a in nonzero_vec(), b in nonzero_vec(), alpha in 0.01f64..100.0) {
            let (a, b) = (v(&a), v(&b));
            let scaled = a.scaled(alpha);
            let d = cosine_similarity(&scaled, &b).unwrap() - cosine_similarity(&a, &b).unwrap();
            prop_assert!(d.abs() < 1e-9);
        }

        #[test]
        fn mock_is_unit_norm(text in "[a-z]{1,8}( [a-z]{1,8}){0,12}") {
            if let Ok(vec) = Embedder::<f64>::embed(&mock(), &text) {
                prop_assert!((vec.norm() - 1.0).abs() < 1e-6);
            }
        }
    }

    /// Serves `responses.len()` HTTP requests with canned bodies, then exits.
    fn stub_server(responses: Vec<(u16, String)>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut content_length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0u8; content_length];
                reader.read_exact(&mut buf).unwrap();
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nRetry-After: 3\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        format!("http://{addr}/v1/embeddings")
    }

    #[test]
    fn remote_caches_by_content_hash() {
        let dir = tempfile::tempdir().unwrap();
        let endpoint = stub_server(vec![(
            200,
            r#"{"data":[{"index":0,"embedding":[0.5,-0.25,1.0]}]}"#.to_string(),
        )]);
        let remote =
            RemoteEmbedder::new(endpoint, None, "m".into(), 3, Some(dir.path().to_path_buf()))
                .unwrap();
        let first: EmbeddingVector<f32> = remote.embed("hello").unwrap();
        // stub is gone; the second call must be served from the cache
        let second: EmbeddingVector<f32> = remote.embed("hello").unwrap();
        assert_eq!(first, second);
        assert_eq!(first.as_slice(), &[0.5, -0.25, 1.0]);
        let file = dir
            .path()
            .join(format!("{}.f32", RemoteEmbedder::cache_key("m", "hello")));
        assert_eq!(std::fs::read(file).unwrap().len(), 12);
    }

    #[test]
    fn remote_unavailable_carries_retry_hint() {
        let endpoint = stub_server(vec![(503, "{}".to_string())]);
        let remote = RemoteEmbedder::new(endpoint, None, "m".into(), 3, None).unwrap();
        let err = Embedder::<f32>::embed(&remote, "x").unwrap_err();
        match err {
            EmbedError::RemoteUnavailable { retry_after, .. } => {
                assert_eq!(retry_after, Some(Duration::from_secs(3)))
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
