//! Product catalog: ingest, summarization, embedding index, retrieval.
//!
//! Raw multimodal product records are filtered for completeness at ingest,
//! summarized into noise-free attribute text through the gateway, embedded
//! into a unit-norm vector store, and served by exhaustive cosine search
//! with optional LLM reranking on top.

mod embed;
mod rerank;
mod store;
mod summarize;

pub use embed::{Embedder, HashEmbedder, HttpEmbedder, HttpEmbedderConfig};
pub use rerank::rerank;
pub use store::{build_index, RankedHit, VectorStore};
pub use summarize::{summarize, summarize_catalog, SummarizeConfig, SummaryCache};

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayError, ImageRef};

pub const CATALOG_SCHEMA: &str = "shoptalk/catalog";

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("no records survived ingest")]
    EmptyCatalog,
    #[error("product {0} has no summary yet")]
    NotSummarized(String),
    #[error("summary came back empty for product {0}")]
    SummaryEmpty(String),
    #[error("embedder returned dimension {got}, store expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector store is empty")]
    EmptyStore,
    #[error("no candidate hits to rerank")]
    EmptyHits,
    #[error("unknown product id {0}")]
    UnknownProduct(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// A catalog item with complete multimodal information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub product_id: String,
    pub title: String,
    pub description: String,
    pub image_ref: ImageRef,
    pub category_path: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

impl Product {
    pub fn summary_or_description(&self) -> &str {
        self.summary.as_deref().unwrap_or(&self.description)
    }
}

/// Raw input record shape: one JSON object per line.
#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    image: Option<String>,
    #[serde(default)]
    categories: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct IngestConfig {
    /// When set, keep only records whose first category is in this list.
    pub category_whitelist: Option<Vec<String>>,
}

/// Why records were rejected, tallied per reason.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: u64,
    pub rejected: BTreeMap<String, u64>,
}

impl IngestReport {
    fn reject(&mut self, reason: &str) {
        *self.rejected.entry(reason.to_string()).or_insert(0) += 1;
    }

    pub fn total_rejected(&self) -> u64 {
        self.rejected.values().sum()
    }
}

/// Immutable, id-ordered product collection.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Catalog {
    products: BTreeMap<String, Product>,
}

impl Catalog {
    pub fn from_products(products: impl IntoIterator<Item = Product>) -> Self {
        Self {
            products: products
                .into_iter()
                .map(|p| (p.product_id.clone(), p))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    pub fn get(&self, product_id: &str) -> Option<&Product> {
        self.products.get(product_id)
    }

    pub fn contains(&self, product_id: &str) -> bool {
        self.products.contains_key(product_id)
    }

    pub fn products(&self) -> impl Iterator<Item = &Product> {
        self.products.values()
    }

    pub fn products_mut(&mut self) -> impl Iterator<Item = &mut Product> {
        self.products.values_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.products.keys().map(String::as_str)
    }
}

/// Ingest a raw JSONL stream, keeping only records with complete multimodal
/// information. Malformed lines are counted, not fatal; an entirely empty
/// result is.
pub fn ingest<R: BufRead>(
    reader: R,
    config: &IngestConfig,
) -> Result<(Catalog, IngestReport), CatalogError> {
    let mut report = IngestReport::default();
    let mut products = BTreeMap::new();

    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = match serde_json::from_str(&line) {
            Ok(raw) => raw,
            Err(_) => {
                report.reject("parse error");
                continue;
            }
        };
        let image = match raw.image {
            Some(image) if !image.trim().is_empty() => image,
            _ => {
                report.reject("incomplete multimodal");
                continue;
            }
        };
        if raw.title.trim().is_empty() {
            report.reject("missing title");
            continue;
        }
        if raw.description.trim().is_empty() {
            report.reject("missing description");
            continue;
        }
        if let Some(whitelist) = &config.category_whitelist {
            let head = raw.categories.first().map(String::as_str).unwrap_or("");
            if !whitelist.iter().any(|c| c == head) {
                report.reject("category filtered");
                continue;
            }
        }
        if products.contains_key(&raw.id) {
            report.reject("duplicate id");
            continue;
        }
        report.accepted += 1;
        products.insert(
            raw.id.clone(),
            Product {
                product_id: raw.id,
                title: raw.title.trim().to_string(),
                description: raw.description.trim().to_string(),
                image_ref: ImageRef(image),
                category_path: raw.categories,
                summary: None,
            },
        );
    }

    if products.is_empty() {
        return Err(CatalogError::EmptyCatalog);
    }
    Ok((Catalog { products }, report))
}
