//! Text-to-embedding providers.
//!
//! Three providers share the [`EmbeddingProvider`] trait:
//!
//! * [`TokenHashProvider`]: offline bag-of-tokens hashing. Each token seeds a
//!   pseudorandom Gaussian direction; a description is the normalized sum of
//!   its token directions, so similarity grows with token overlap.
//! * [`FixtureProvider`]: exact-string lookup in a JSON map of raw vectors.
//! * [`RemoteProvider`]: one batch round-trip to an HTTP encoder,
//!   `POST {base}/embed` with `{"texts": [...]}` answered by
//!   `{"dim": N, "embeddings": [[...], ...]}`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Embedding, GraphError};

pub const DEFAULT_DIM: usize = 64;
pub const MIN_TOKEN_HASH_DIM: usize = 8;
/// Environment variable holding the default base address of the remote encoder.
pub const REMOTE_URL_ENV: &str = "PERCEPT_EMBED_URL";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot encode empty text")]
    EmptyText,
    #[error("text has no alphanumeric tokens: {0:?}")]
    NoTokens(String),
    #[error("token-hash dimension must be at least {MIN_TOKEN_HASH_DIM}, got {0}")]
    DimTooSmall(usize),
    #[error("fixture has no embedding for {0:?}")]
    FixtureMiss(String),
    #[error("invalid fixture: {0}")]
    Fixture(String),
    #[error("remote encoder transport error: {0}")]
    Transport(String),
    #[error("remote encoder returned HTTP {0}")]
    Status(u16),
    #[error("invalid remote encoder response: {0}")]
    Response(String),
    #[error("provider dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("batch element {index} failed: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<EmbedError>,
    },
    #[error("invalid embedder spec {spec:?}: {reason}")]
    Spec { spec: String, reason: String },
    #[error(transparent)]
    Embedding(#[from] GraphError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    TokenHash,
    Fixture,
    Remote,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::TokenHash => "token-hash",
            ProviderKind::Fixture => "fixture",
            ProviderKind::Remote => "remote",
        })
    }
}

/// Identifies which encoder produced a set of embeddings.
///
/// `detail` is the decimal seed for token-hash, the fixture path, or the
/// remote base address.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderId {
    pub kind: ProviderKind,
    pub detail: String,
    pub dim: usize,
}

impl fmt::Display for ProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{} (dim {})", self.kind, self.detail, self.dim)
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> ProviderId;

    fn dim(&self) -> usize;

    fn encode(&self, text: &str) -> Result<Embedding, EmbedError>;

    /// Element `i` equals `encode(texts[i])`. The first failure aborts the batch.
    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| {
                self.encode(t).map_err(|e| EmbedError::Batch {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

fn check_text(text: &str) -> Result<(), EmbedError> {
    if text.trim().is_empty() {
        Err(EmbedError::EmptyText)
    } else {
        Ok(())
    }
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Pseudorandom unit direction for one token.
pub fn token_base_vector(token: &str, dim: usize, seed: u64) -> Result<Embedding, EmbedError> {
    if dim < MIN_TOKEN_HASH_DIM {
        return Err(EmbedError::DimTooSmall(dim));
    }
    let stream = splitmix64(fnv1a64(token.as_bytes()) ^ splitmix64(seed));
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    Ok(Embedding::from_raw(raw)?)
}

/// Bag-of-tokens embedding: normalized sum of token base vectors.
pub fn token_hash_embed(text: &str, dim: usize, seed: u64) -> Result<Embedding, EmbedError> {
    if dim < MIN_TOKEN_HASH_DIM {
        return Err(EmbedError::DimTooSmall(dim));
    }
    let tokens = tokenize(text);
    let Some(first) = tokens.first() else {
        return Err(EmbedError::NoTokens(text.to_string()));
    };
    // A single distinct token is exactly its base direction.
    if tokens.iter().all(|t| t == first) {
        return token_base_vector(first, dim, seed);
    }
    let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
    for t in &tokens {
        *counts.entry(t.as_str()).or_default() += 1.0;
    }
    let mut sum = vec![0.0; dim];
    for (token, count) in counts {
        let base = token_base_vector(token, dim, seed)?;
        for (acc, v) in sum.iter_mut().zip(base.values()) {
            *acc += count * v;
        }
    }
    Ok(Embedding::from_raw(sum)?)
}

#[derive(Debug, Clone)]
pub struct TokenHashProvider {
    dim: usize,
    seed: u64,
}

impl TokenHashProvider {
    pub fn new(dim: usize, seed: u64) -> Result<Self, EmbedError> {
        if dim < MIN_TOKEN_HASH_DIM {
            return Err(EmbedError::DimTooSmall(dim));
        }
        Ok(Self { dim, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl EmbeddingProvider for TokenHashProvider {
    fn id(&self) -> ProviderId {
        ProviderId {
            kind: ProviderKind::TokenHash,
            detail: self.seed.to_string(),
            dim: self.dim,
        }
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding, EmbedError> {
        check_text(text)?;
        token_hash_embed(text, self.dim, self.seed)
    }
}

/// Parses a fixture document: a JSON object from exact description to raw vector.
pub fn parse_fixture_str(json: &str) -> Result<BTreeMap<String, Embedding>, EmbedError> {
    let raw: BTreeMap<String, Vec<f64>> =
        serde_json::from_str(json).map_err(|e| EmbedError::Fixture(e.to_string()))?;
    let dim = raw
        .values()
        .next()
        .map(Vec::len)
        .ok_or_else(|| EmbedError::Fixture("fixture has no entries".into()))?;
    raw.into_iter()
        .map(|(text, values)| {
            if values.len() != dim {
                return Err(EmbedError::Fixture(format!(
                    "entry {text:?} has dimension {}, expected {dim}",
                    values.len()
                )));
            }
            let e = Embedding::from_raw(values)
                .map_err(|e| EmbedError::Fixture(format!("entry {text:?}: {e}")))?;
            Ok((text, e))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FixtureProvider {
    path: String,
    dim: usize,
    table: BTreeMap<String, Embedding>,
}

impl FixtureProvider {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| EmbedError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_table(path.display().to_string(), parse_fixture_str(&text)?)
    }

    pub fn from_table(
        label: impl Into<String>,
        table: BTreeMap<String, Embedding>,
    ) -> Result<Self, EmbedError> {
        let dim = table
            .values()
            .next()
            .map(Embedding::dim)
            .ok_or_else(|| EmbedError::Fixture("fixture has no entries".into()))?;
        if let Some(bad) = table.values().find(|e| e.dim() != dim) {
            return Err(EmbedError::DimMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        Ok(Self {
            path: label.into(),
            dim,
            table,
        })
    }
}

impl EmbeddingProvider for FixtureProvider {
    fn id(&self) -> ProviderId {
        ProviderId {
            kind: ProviderKind::Fixture,
            detail: self.path.clone(),
            dim: self.dim,
        }
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding, EmbedError> {
        check_text(text)?;
        self.table
            .get(text)
            .cloned()
            .ok_or_else(|| EmbedError::FixtureMiss(text.to_string()))
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    embeddings: Vec<Vec<f64>>,
}

/// Decodes a remote encoder response body, checking count and dimension and
/// normalizing every row.
pub fn parse_embed_response(
    body: &str,
    expected_count: usize,
    dim: usize,
) -> Result<Vec<Embedding>, EmbedError> {
    let resp: EmbedResponse =
        serde_json::from_str(body).map_err(|e| EmbedError::Response(e.to_string()))?;
    if resp.dim != dim {
        return Err(EmbedError::DimMismatch {
            expected: dim,
            found: resp.dim,
        });
    }
    if resp.embeddings.len() != expected_count {
        return Err(EmbedError::Response(format!(
            "expected {expected_count} embeddings, got {}",
            resp.embeddings.len()
        )));
    }
    resp.embeddings
        .into_iter()
        .enumerate()
        .map(|(index, row)| {
            if row.len() != dim {
                return Err(EmbedError::Batch {
                    index,
                    source: Box::new(EmbedError::DimMismatch {
                        expected: dim,
                        found: row.len(),
                    }),
                });
            }
            Embedding::from_raw(row).map_err(|e| EmbedError::Batch {
                index,
                source: Box::new(e.into()),
            })
        })
        .collect()
}

pub struct RemoteProvider {
    base: String,
    dim: usize,
    agent: ureq::Agent,
}

impl RemoteProvider {
    pub fn new(base: impl Into<String>, dim: usize) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build();
        Self {
            base: base.into(),
            dim,
            agent: config.into(),
        }
    }

    fn endpoint(&self) -> String {
        format!("{}/embed", self.base.trim_end_matches('/'))
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn id(&self) -> ProviderId {
        ProviderId {
            kind: ProviderKind::Remote,
            detail: self.base.clone(),
            dim: self.dim,
        }
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Embedding, EmbedError> {
        check_text(text)?;
        let mut out = self.encode_batch(&[text]).map_err(|e| match e {
            EmbedError::Batch { source, .. } => *source,
            other => other,
        })?;
        Ok(out.remove(0))
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        for (index, t) in texts.iter().enumerate() {
            check_text(t).map_err(|e| EmbedError::Batch {
                index,
                source: Box::new(e),
            })?;
        }
        let mut resp = self
            .agent
            .post(&self.endpoint())
            .send_json(EmbedRequest { texts })
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(EmbedError::Status(status));
        }
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        parse_embed_response(&body, texts.len(), self.dim)
    }
}

/// Command-line embedder selection: `token-hash[:seed]`, `fixture:PATH`, or `remote[:URL]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    TokenHash { seed: u64 },
    Fixture { path: String },
    Remote { url: Option<String> },
}

impl FromStr for ProviderSpec {
    type Err = EmbedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| EmbedError::Spec {
            spec: s.to_string(),
            reason: reason.to_string(),
        };
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k, Some(r)),
            None => (s, None),
        };
        match (kind, rest) {
            ("token-hash", None) => Ok(ProviderSpec::TokenHash { seed: 0 }),
            ("token-hash", Some(seed)) => seed
                .parse()
                .map(|seed| ProviderSpec::TokenHash { seed })
                .map_err(|_| err("seed must be an unsigned 64-bit integer")),
            ("fixture", Some(path)) if !path.is_empty() => Ok(ProviderSpec::Fixture {
                path: path.to_string(),
            }),
            ("fixture", _) => Err(err("fixture requires a path")),
            ("remote", None) => Ok(ProviderSpec::Remote { url: None }),
            ("remote", Some(url)) if !url.is_empty() => Ok(ProviderSpec::Remote {
                url: Some(url.to_string()),
            }),
            ("remote", Some(_)) => Err(err("remote requires a base address")),
            _ => Err(err(
                "expected token-hash[:seed], fixture:PATH or remote[:URL]",
            )),
        }
    }
}

impl ProviderSpec {
    /// Builds the provider. `dim` applies to token-hash and remote; a fixture
    /// takes its dimension from the file. `default_url` backs a bare `remote`.
    pub fn build(
        &self,
        dim: usize,
        default_url: Option<&str>,
    ) -> Result<Box<dyn EmbeddingProvider>, EmbedError> {
        match self {
            ProviderSpec::TokenHash { seed } => Ok(Box::new(TokenHashProvider::new(dim, *seed)?)),
            ProviderSpec::Fixture { path } => Ok(Box::new(FixtureProvider::from_path(path)?)),
            ProviderSpec::Remote { url } => {
                let url = url
                    .as_deref()
                    .or(default_url)
                    .ok_or_else(|| EmbedError::Spec {
                        spec: "remote".into(),
                        reason: format!("no URL given and {REMOTE_URL_ENV} is unset"),
                    })?;
                Ok(Box::new(RemoteProvider::new(url, dim)))
            }
        }
    }
}

/// Reconstructs the provider recorded in a store, verifying its dimension.
pub fn provider_from_id(id: &ProviderId) -> Result<Box<dyn EmbeddingProvider>, EmbedError> {
    let provider: Box<dyn EmbeddingProvider> = match id.kind {
        ProviderKind::TokenHash => {
            let seed = id.detail.parse().map_err(|_| EmbedError::Spec {
                spec: id.to_string(),
                reason: "token-hash detail must be a decimal seed".into(),
            })?;
            Box::new(TokenHashProvider::new(id.dim, seed)?)
        }
        ProviderKind::Fixture => Box::new(FixtureProvider::from_path(&id.detail)?),
        ProviderKind::Remote => Box::new(RemoteProvider::new(id.detail.clone(), id.dim)),
    };
    if provider.dim() != id.dim {
        return Err(EmbedError::DimMismatch {
            expected: id.dim,
            found: provider.dim(),
        });
    }
    Ok(provider)
}
