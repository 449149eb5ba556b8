//! Text embedding backends.
//!
//! The store only needs unit vectors of a fixed dimension; where they come
//! from is abstracted behind [`Embedder`]. Two implementations ship: a live
//! OpenAI-compatible `/embeddings` client and a seeded hash-based mock that
//! produces reproducible unit vectors offline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::CatalogError;
use crate::gateway::GatewayError;

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, CatalogError>;
}

/// Deterministic mock embedder: the text's SHA-256 seeds a ChaCha stream of
/// standard normals, normalized to unit length. Identical text always maps
/// to the identical vector; distinct texts land roughly uniformly on the
/// sphere, with a bag-of-words component mixed in so token overlap raises
/// cosine similarity the way a real embedding would.
pub struct HashEmbedder {
    seed: u64,
    dim: usize,
}

impl HashEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim >= 2, "embedding dimension must be at least 2");
        Self { seed, dim }
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest = hasher.finalize();
        let token_seed = u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"));
        let mut rng = ChaCha8Rng::seed_from_u64(token_seed);
        (0..self.dim)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect()
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        "hash"
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, CatalogError> {
        let mut accum = vec![0.0f64; self.dim];
        let tokens = crate::metrics::tokenize(text);
        if tokens.is_empty() {
            // arbitrary but fixed direction for degenerate input
            accum[0] = 1.0;
            return Ok(accum);
        }
        for token in &tokens {
            let tv = self.token_vector(token);
            for (a, t) in accum.iter_mut().zip(tv) {
                *a += t;
            }
        }
        let norm = accum.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for a in &mut accum {
                *a /= norm;
            }
        } else {
            accum[0] = 1.0;
        }
        Ok(accum)
    }
}

#[derive(Debug, Clone)]
pub struct HttpEmbedderConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub dimension: usize,
}

/// OpenAI-compatible `/embeddings` client.
pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Self {
        Self {
            config,
            client: reqwest::blocking::Client::new(),
        }
    }
}

#[derive(Deserialize)]
struct WireEmbeddings {
    data: Vec<WireEmbedding>,
}

#[derive(Deserialize)]
struct WireEmbedding {
    embedding: Vec<f64>,
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.config.model
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, CatalogError> {
        let url = format!("{}/embeddings", self.config.base_url.trim_end_matches('/'));
        let mut builder = self.client.post(&url).json(&serde_json::json!({
            "model": self.config.model,
            "input": [text],
        }));
        if !self.config.api_key_env.is_empty() {
            let key = std::env::var(&self.config.api_key_env).map_err(|_| {
                CatalogError::Gateway(GatewayError::Auth(format!(
                    "credential env var {} is unset",
                    self.config.api_key_env
                )))
            })?;
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| CatalogError::Gateway(GatewayError::Transport(e.to_string())))?;
        if !response.status().is_success() {
            return Err(CatalogError::Gateway(GatewayError::Provider(format!(
                "embeddings endpoint returned {}",
                response.status()
            ))));
        }
        let wire: WireEmbeddings = response
            .json()
            .map_err(|e| CatalogError::Gateway(GatewayError::MalformedResponse(e.to_string())))?;
        let vector = wire
            .data
            .into_iter()
            .next()
            .ok_or_else(|| {
                CatalogError::Gateway(GatewayError::MalformedResponse(
                    "no embedding in response".into(),
                ))
            })?
            .embedding;
        if vector.len() != self.config.dimension {
            return Err(CatalogError::DimensionMismatch {
                expected: self.config.dimension,
                got: vector.len(),
            });
        }
        Ok(vector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embedder_is_reproducible() {
        let e = HashEmbedder::new(42, 16);
        let a = e.embed("red cotton tee").unwrap();
        let b = e.embed("red cotton tee").unwrap();
        assert_eq!(a, b);
        let other = HashEmbedder::new(42, 16).embed("red cotton tee").unwrap();
        assert_eq!(a, other);
    }

    #[test]
    fn hash_embedder_output_is_unit_norm() {
        let e = HashEmbedder::new(7, 32);
        for text in ["a", "blue denim jacket", "", "x y z w"] {
            let v = e.embed(text).unwrap();
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9, "norm {norm} for {text:?}");
        }
    }

    #[test]
    fn token_overlap_raises_similarity() {
        let e = HashEmbedder::new(11, 64);
        let a = e.embed("red cotton crew tee").unwrap();
        let b = e.embed("red cotton vneck tee").unwrap();
        let c = e.embed("waterproof hiking boots").unwrap();
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        assert!(dot(&a, &b) > dot(&a, &c));
    }
}
