//! LLM reranking over rough-retrieval hits.

use log::warn;

use crate::gateway::{ChatMessage, ChatRequest, FieldKind, Gateway, SchemaDescriptor};
use crate::prompts::{self, tag, temperature};

use super::{Catalog, CatalogError, RankedHit};

/// Show the top-m hits to an LLM judge and return the best-matched product.
/// A single hit short-circuits without a call. If the judge names an id
/// outside the candidate set, fall back to the rough-retrieval top hit.
pub fn rerank(
    hits: &[RankedHit],
    catalog: &Catalog,
    user_interest: &str,
    gateway: &Gateway,
    m: usize,
) -> Result<RankedHit, CatalogError> {
    if hits.is_empty() {
        return Err(CatalogError::EmptyHits);
    }
    if hits.len() == 1 {
        return Ok(hits[0].clone());
    }

    let shown = &hits[..m.min(hits.len())];
    let mut candidates = Vec::with_capacity(shown.len());
    let mut message_images = Vec::new();
    for hit in shown {
        let product = catalog
            .get(&hit.product_id)
            .ok_or_else(|| CatalogError::UnknownProduct(hit.product_id.clone()))?;
        candidates.push((
            product.product_id.clone(),
            product.summary_or_description().to_string(),
        ));
        message_images.push(product.image_ref.clone());
    }

    let mut message = ChatMessage::user(prompts::rerank(&candidates, user_interest));
    for image in message_images {
        message = message.with_image(image);
    }
    let request = ChatRequest::new(tag::CATALOG_RERANK, vec![message])
        .with_temperature(temperature::ROLE_PLAY);
    let schema = SchemaDescriptor::new(&[("product_id", FieldKind::Str)]);

    let value = gateway.complete_json(&request, &schema)?;
    let chosen = value["product_id"].as_str().unwrap_or_default();
    if let Some(hit) = shown.iter().find(|h| h.product_id == chosen) {
        return Ok(hit.clone());
    }
    warn!(
        "rerank judge named unknown id '{chosen}', falling back to rough top-1 '{}'",
        hits[0].product_id
    );
    Ok(hits[0].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Product;
    use crate::gateway::{ImageRef, MockProvider, MockScript, TagScript};
    use std::sync::Arc;

    fn catalog(n: usize) -> Catalog {
        Catalog::from_products((0..n).map(|i| Product {
            product_id: format!("p{i}"),
            title: format!("Item {i}"),
            description: "d".into(),
            image_ref: ImageRef(format!("img/p{i}.jpg")),
            category_path: vec![],
            summary: Some(format!("summary {i}")),
        }))
    }

    fn hits(n: usize) -> Vec<RankedHit> {
        (0..n)
            .map(|i| RankedHit {
                product_id: format!("p{i}"),
                score: 1.0 - i as f64 * 0.1,
            })
            .collect()
    }

    fn gateway_with_reply(reply: &str) -> (Gateway, Arc<MockProvider>) {
        let script =
            MockScript::new(1).with_tag(tag::CATALOG_RERANK, TagScript::template(reply));
        let mock = Arc::new(MockProvider::new(script));
        (Gateway::new(mock.clone()), mock)
    }

    #[test]
    fn single_hit_returns_without_gateway_call() {
        let (gateway, mock) = gateway_with_reply(r#"{"product_id": "p0"}"#);
        let one = hits(1);
        let best = rerank(&one, &catalog(1), "anything", &gateway, 5).unwrap();
        assert_eq!(best.product_id, "p0");
        assert_eq!(mock.instrument().total_calls, 0);
    }

    #[test]
    fn judge_choice_is_returned() {
        let (gateway, _) = gateway_with_reply(r#"{"product_id": "p2"}"#);
        let best = rerank(&hits(5), &catalog(5), "blue", &gateway, 5).unwrap();
        assert_eq!(best.product_id, "p2");
    }

    #[test]
    fn unknown_id_falls_back_to_top_one() {
        let (gateway, _) = gateway_with_reply(r#"{"product_id": "p999"}"#);
        let best = rerank(&hits(5), &catalog(5), "blue", &gateway, 5).unwrap();
        assert_eq!(best.product_id, "p0");
    }

    #[test]
    fn only_top_m_are_shown() {
        // judge picks p4 but m=3 only shows p0..p2, so p4 is "unknown"
        let (gateway, _) = gateway_with_reply(r#"{"product_id": "p4"}"#);
        let best = rerank(&hits(5), &catalog(5), "blue", &gateway, 3).unwrap();
        assert_eq!(best.product_id, "p0");
    }

    #[test]
    fn empty_hits_error() {
        let (gateway, _) = gateway_with_reply(r#"{"product_id": "p0"}"#);
        assert!(matches!(
            rerank(&[], &catalog(1), "x", &gateway, 5),
            Err(CatalogError::EmptyHits)
        ));
    }
}
