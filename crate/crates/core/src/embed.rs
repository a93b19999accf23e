//! Embedding providers.
//!
//! [`HashingProvider`] is the deterministic offline default. It hashes
//! character trigrams into a fixed number of buckets. [`HttpProvider`] talks
//! to an external embedding service:
//!
//! ```text
//! POST {endpoint}          {"texts": ["...", ...]}
//! 200                      {"vectors": [[f, ...], ...], "dim": d}
//! ```
//!
//! Requests are batched, retried with exponential backoff, and may run
//! concurrently up to an in-flight limit. [`CachedProvider`] wraps any
//! provider with an on-disk JSONL cache keyed by (provider tag, text).

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = Vec<f32>;

/// Maps texts to unit-norm vectors of one fixed dimension.
pub trait EmbeddingProvider: Send + Sync {
    /// Identifies the provider and its parameters; used as the cache key.
    fn tag(&self) -> &str;

    /// One vector per input text, in input order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vector>>;
}

/// Scales `v` to unit L2 norm. Fails on a zero vector.
pub fn normalize(v: &mut [f32]) -> Result<()> {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::domain("degenerate (zero or non-finite) embedding"));
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    Ok(())
}

/// Cosine similarity computed in f64.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

pub const DEFAULT_HASH_DIM: usize = 256;
pub const DEFAULT_HASH_SEED: u64 = 0x5EED_5A7E;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Character-trigram feature hashing. Texts are padded with start and end
/// markers so single characters still produce one trigram.
#[derive(Debug, Clone)]
pub struct HashingProvider {
    dim: usize,
    seed: u64,
    tag: String,
}

impl HashingProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "hashing dimension must be positive");
        Self {
            dim,
            seed,
            tag: format!("hashing-trigram:d{dim}:s{seed}"),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_one(&self, text: &str) -> Vector {
        let padded: Vec<char> = std::iter::once('\u{2}')
            .chain(text.chars())
            .chain(std::iter::once('\u{3}'))
            .collect();
        let mut v = vec![0.0f32; self.dim];
        let mut buf = String::new();
        for w in padded.windows(3.min(padded.len())) {
            buf.clear();
            buf.extend(w);
            let h = fnv1a(self.seed, buf.as_bytes());
            v[(h % self.dim as u64) as usize] += 1.0;
        }
        normalize(&mut v).expect("at least one trigram is always hashed");
        v
    }
}

impl Default for HashingProvider {
    fn default() -> Self {
        Self::new(DEFAULT_HASH_DIM, DEFAULT_HASH_SEED)
    }
}

impl EmbeddingProvider for HashingProvider {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vector>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpOptions {
    pub batch_size: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub timeout_ms: u64,
}

impl Default for HttpOptions {
    fn default() -> Self {
        Self {
            batch_size: 128,
            max_retries: 3,
            backoff_ms: 200,
            max_in_flight: 4,
            timeout_ms: 30_000,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vector>,
    dim: usize,
}

/// Client for the `POST /embed` JSON service.
pub struct HttpProvider {
    endpoint: String,
    options: HttpOptions,
    client: reqwest::blocking::Client,
    tag: String,
}

impl HttpProvider {
    /// `endpoint` is either the full `/embed` URL or its base; `/embed` is
    /// appended when missing.
    pub fn new(endpoint: &str, options: HttpOptions) -> Result<Self> {
        if options.batch_size == 0 || options.max_in_flight == 0 {
            return Err(Error::config("batch size and in-flight limit must be >= 1"));
        }
        let base = endpoint.trim_end_matches('/');
        let endpoint = if base.ends_with("/embed") {
            base.to_string()
        } else {
            format!("{base}/embed")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(options.timeout_ms))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Self {
            tag: format!("http:{endpoint}"),
            endpoint,
            options,
            client,
        })
    }

    fn post_once(&self, texts: &[String]) -> Result<Vec<Vector>> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::Transport(format!("{} returned {status}", self.endpoint)));
        }
        let body: EmbedResponse = resp
            .json()
            .map_err(|e| Error::Transport(format!("bad response body: {e}")))?;
        if body.vectors.len() != texts.len() {
            return Err(Error::Transport(format!(
                "expected {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        let mut vectors = body.vectors;
        for v in &mut vectors {
            if v.len() != body.dim {
                return Err(Error::Transport(format!(
                    "vector of length {} does not match dim {}",
                    v.len(),
                    body.dim
                )));
            }
            normalize(v)?;
        }
        Ok(vectors)
    }

    fn post_with_retry(&self, texts: &[String]) -> Result<Vec<Vector>> {
        let mut attempt = 0;
        loop {
            match self.post_once(texts) {
                Ok(v) => return Ok(v),
                Err(Error::Transport(msg)) if attempt < self.options.max_retries => {
                    let wait = self.options.backoff_ms.saturating_mul(1 << attempt);
                    log::warn!("embedding request failed ({msg}); retrying in {wait} ms");
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl EmbeddingProvider for HttpProvider {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vector>> {
        let chunks: Vec<&[String]> = texts.chunks(self.options.batch_size).collect();
        let mut out = Vec::with_capacity(texts.len());
        for group in chunks.chunks(self.options.max_in_flight) {
            let results: Vec<Result<Vec<Vector>>> = std::thread::scope(|s| {
                let handles: Vec<_> = group
                    .iter()
                    .map(|chunk| s.spawn(move || self.post_with_retry(chunk)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("embedding worker panicked"))
                    .collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        if let Some(first) = out.first() {
            let d = first.len();
            if out.iter().any(|v| v.len() != d) {
                return Err(Error::Transport("service returned mixed dimensions".into()));
            }
        }
        Ok(out)
    }
}

const CACHE_FORMAT: &str = "synmine-embedding-cache";
const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    provider: String,
    text: String,
    vector: Vector,
}

/// Embedding cache keyed by (provider tag, text).
///
/// On disk it is JSONL: a header line
/// `{"format":"synmine-embedding-cache","version":1}` followed by one
/// `{"provider":..,"text":..,"vector":[..]}` record per line. New entries are
/// appended. Reads are concurrent; writes are serialized.
pub struct EmbeddingCache {
    map: RwLock<HashMap<(String, String), Vector>>,
    writer: Mutex<Option<BufWriter<File>>>,
    path: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self {
            map: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
            path: None,
        }
    }

    /// Opens (or creates) a cache file.
    pub fn open(path: &Path) -> Result<Self> {
        let mut map = HashMap::new();
        let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
        if exists {
            let reader = BufReader::new(File::open(path)?);
            let mut lines = reader.lines();
            let header: CacheHeader = match lines.next() {
                Some(line) => serde_json::from_str(&line?)?,
                None => unreachable!("non-empty file has a first line"),
            };
            if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
                return Err(Error::input(format!(
                    "{}: unsupported cache format {} v{}",
                    path.display(),
                    header.format,
                    header.version
                )));
            }
            for line in lines {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: CacheEntry = serde_json::from_str(&line)?;
                map.insert((e.provider, e.text), e.vector);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut writer = BufWriter::new(file);
        if !exists {
            serde_json::to_writer(
                &mut writer,
                &CacheHeader {
                    format: CACHE_FORMAT.into(),
                    version: CACHE_VERSION,
                },
            )?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        Ok(Self {
            map: RwLock::new(map),
            writer: Mutex::new(Some(writer)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, provider: &str, text: &str) -> Option<Vector> {
        self.map
            .read()
            .expect("cache lock poisoned")
            .get(&(provider.to_string(), text.to_string()))
            .cloned()
    }

    pub fn insert_many(&self, provider: &str, items: Vec<(String, Vector)>) -> Result<()> {
        let mut writer = self.writer.lock().expect("cache lock poisoned");
        let mut map = self.map.write().expect("cache lock poisoned");
        for (text, vector) in items {
            if let Some(w) = writer.as_mut() {
                let entry = CacheEntry {
                    provider: provider.to_string(),
                    text: text.clone(),
                    vector: vector.clone(),
                };
                serde_json::to_writer(&mut *w, &entry)?;
                w.write_all(b"\n")?;
            }
            map.insert((provider.to_string(), text), vector);
        }
        if let Some(w) = writer.as_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

/// Serves repeated texts from an [`EmbeddingCache`].
pub struct CachedProvider<P> {
    inner: P,
    cache: EmbeddingCache,
}

impl<P: EmbeddingProvider> CachedProvider<P> {
    pub fn new(inner: P, cache: EmbeddingCache) -> Self {
        Self { inner, cache }
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedProvider<P> {
    fn tag(&self) -> &str {
        self.inner.tag()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vector>> {
        let tag = self.inner.tag();
        let mut seen = HashSet::new();
        let misses: Vec<String> = texts
            .iter()
            .filter(|t| self.cache.get(tag, t).is_none() && seen.insert(t.as_str()))
            .cloned()
            .collect();
        let mut fresh: HashMap<String, Vector> = HashMap::new();
        if !misses.is_empty() {
            let vectors = self.inner.embed_batch(&misses)?;
            let items: Vec<_> = misses.into_iter().zip(vectors).collect();
            fresh.extend(items.iter().cloned());
            self.cache.insert_many(tag, items)?;
        }
        texts
            .iter()
            .map(|t| {
                fresh
                    .get(t)
                    .cloned()
                    .or_else(|| self.cache.get(tag, t))
                    .ok_or_else(|| Error::Transport(format!("no embedding returned for `{t}`")))
            })
            .collect()
    }
}
