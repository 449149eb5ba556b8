//! Exhaustive cosine vector store.
//!
//! At the catalog scales this pipeline targets, an exact scan beats any
//! approximate index and makes retrieval directly checkable against the
//! brute-force definition. Vectors are unit-normalized at build time, so
//! cosine similarity reduces to a dot product. Ties break by ascending
//! product id.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Catalog, CatalogError, Embedder};

pub const INDEX_SCHEMA: &str = "shoptalk/index";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedHit {
    pub product_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorStore {
    schema: String,
    version: u32,
    dimension: usize,
    embedder_id: String,
    /// Sorted by product id; every vector is unit length.
    entries: Vec<StoreEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoreEntry {
    id: String,
    values: Vec<f64>,
}

fn normalize(mut values: Vec<f64>) -> Vec<f64> {
    let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    }
    values
}

/// Embed every product summary into a unit-norm vector store. Requires all
/// products to be summarized first.
pub fn build_index(catalog: &Catalog, embedder: &dyn Embedder) -> Result<VectorStore, CatalogError> {
    for product in catalog.products() {
        if product.summary.is_none() {
            return Err(CatalogError::NotSummarized(product.product_id.clone()));
        }
    }
    let expected = embedder.dimension();
    let products: Vec<_> = catalog.products().collect();
    let entries: Result<Vec<StoreEntry>, CatalogError> = products
        .par_iter()
        .map(|product| {
            let vector = embedder.embed(product.summary_or_description())?;
            if vector.len() != expected {
                return Err(CatalogError::DimensionMismatch {
                    expected,
                    got: vector.len(),
                });
            }
            Ok(StoreEntry {
                id: product.product_id.clone(),
                values: normalize(vector),
            })
        })
        .collect();
    let mut entries = entries?;
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(VectorStore {
        schema: INDEX_SCHEMA.to_string(),
        version: 1,
        dimension: expected,
        embedder_id: embedder.id().to_string(),
        entries,
    })
}

impl VectorStore {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    /// Top-k by cosine similarity over an exhaustive scan, ties broken by
    /// ascending product id. Equals the brute-force definition by
    /// construction.
    pub fn search_vector(&self, query: &[f64], k: usize) -> Result<Vec<RankedHit>, CatalogError> {
        if self.entries.is_empty() {
            return Err(CatalogError::EmptyStore);
        }
        if query.len() != self.dimension {
            return Err(CatalogError::DimensionMismatch {
                expected: self.dimension,
                got: query.len(),
            });
        }
        let query = normalize(query.to_vec());
        let mut hits: Vec<RankedHit> = self
            .entries
            .iter()
            .map(|entry| RankedHit {
                product_id: entry.id.clone(),
                score: entry
                    .values
                    .iter()
                    .zip(&query)
                    .map(|(a, b)| a * b)
                    .sum::<f64>(),
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.product_id.cmp(&b.product_id))
        });
        hits.truncate(k.max(1));
        Ok(hits)
    }

    /// Embed the query text and search.
    pub fn search(
        &self,
        query_text: &str,
        embedder: &dyn Embedder,
        k: usize,
    ) -> Result<Vec<RankedHit>, CatalogError> {
        let query = embedder.embed(query_text)?;
        self.search_vector(&query, k)
    }

    /// Persist as a headered single-object JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<(), CatalogError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let raw = std::fs::read_to_string(path)?;
        let store: VectorStore = serde_json::from_str(&raw)?;
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::HashEmbedder;
    use crate::gateway::ImageRef;
    use crate::catalog::Product;

    struct FixedEmbedder {
        vectors: std::collections::HashMap<String, Vec<f64>>,
        dim: usize,
    }

    impl Embedder for FixedEmbedder {
        fn id(&self) -> &str {
            "fixed"
        }
        fn dimension(&self) -> usize {
            self.dim
        }
        fn embed(&self, text: &str) -> Result<Vec<f64>, CatalogError> {
            Ok(self.vectors.get(text).cloned().unwrap_or_else(|| {
                let mut v = vec![0.0; self.dim];
                v[0] = 1.0;
                v
            }))
        }
    }

    fn product(id: &str, summary: &str) -> Product {
        Product {
            product_id: id.into(),
            title: id.into(),
            description: "d".into(),
            image_ref: ImageRef(format!("img/{id}.jpg")),
            category_path: vec![],
            summary: Some(summary.into()),
        }
    }

    #[test]
    fn vectors_are_normalized_at_build() {
        let catalog = Catalog::from_products([product("p1", "three four")]);
        let embedder = FixedEmbedder {
            vectors: [("three four".to_string(), vec![3.0, 4.0])].into(),
            dim: 2,
        };
        let store = build_index(&catalog, &embedder).unwrap();
        assert_eq!(store.entries[0].values, vec![0.6, 0.8]);
    }

    #[test]
    fn unsummarized_product_fails_build() {
        let mut p = product("p1", "s");
        p.summary = None;
        let catalog = Catalog::from_products([p]);
        let embedder = HashEmbedder::new(1, 8);
        assert!(matches!(
            build_index(&catalog, &embedder),
            Err(CatalogError::NotSummarized(_))
        ));
    }

    #[test]
    fn exact_match_scores_one() {
        let catalog = Catalog::from_products([product("p1", "alpha"), product("p2", "beta")]);
        let embedder = HashEmbedder::new(3, 16);
        let store = build_index(&catalog, &embedder).unwrap();
        let hits = store.search("alpha", &embedder, 2).unwrap();
        assert_eq!(hits[0].product_id, "p1");
        assert!((hits[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_query_ties_break_by_id() {
        let catalog = Catalog::from_products([
            product("p2", "x"),
            product("p1", "y"),
            product("p3", "z"),
        ]);
        let embedder = FixedEmbedder {
            vectors: [
                ("x".to_string(), vec![1.0, 0.0, 0.0]),
                ("y".to_string(), vec![0.0, 1.0, 0.0]),
                ("z".to_string(), vec![0.0, 0.0, 1.0]),
            ]
            .into(),
            dim: 3,
        };
        let store = build_index(&catalog, &embedder).unwrap();
        // query orthogonal to everything stored
        let hits = store.search_vector(&[0.0, 0.0, 0.0], 3).unwrap();
        assert!(hits.iter().all(|h| h.score == 0.0));
        let ids: Vec<&str> = hits.iter().map(|h| h.product_id.as_str()).collect();
        assert_eq!(ids, vec!["p1", "p2", "p3"]);
    }

    #[test]
    fn empty_store_errors() {
        let store = VectorStore {
            schema: INDEX_SCHEMA.into(),
            version: 1,
            dimension: 2,
            embedder_id: "fixed".into(),
            entries: vec![],
        };
        assert!(matches!(
            store.search_vector(&[1.0, 0.0], 5),
            Err(CatalogError::EmptyStore)
        ));
    }

    #[test]
    fn norms_hold_across_five_hundred_products() {
        let products: Vec<Product> = (0..500)
            .map(|i| product(&format!("p{i:03}"), &format!("item number {i} cotton wool {}", i % 7)))
            .collect();
        let catalog = Catalog::from_products(products);
        let embedder = HashEmbedder::new(9, 24);
        let store = build_index(&catalog, &embedder).unwrap();
        assert_eq!(store.len(), 500);
        for entry in &store.entries {
            let norm: f64 = entry.values.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn save_load_roundtrip_is_exact() {
        let catalog = Catalog::from_products([product("p1", "alpha"), product("p2", "beta")]);
        let embedder = HashEmbedder::new(3, 8);
        let store = build_index(&catalog, &embedder).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        store.save(&path).unwrap();
        let loaded = VectorStore::load(&path).unwrap();
        assert_eq!(
            serde_json::to_string(&store).unwrap(),
            serde_json::to_string(&loaded).unwrap()
        );
    }
}
