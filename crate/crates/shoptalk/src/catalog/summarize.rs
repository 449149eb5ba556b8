//! Product summarization through the gateway, with a disk cache.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::gateway::{ChatMessage, ChatRequest, Gateway};
use crate::prompts::{self, tag, temperature};
use crate::seed::text_fingerprint;

use super::{Catalog, CatalogError, Product};

#[derive(Debug, Clone)]
pub struct SummarizeConfig {
    /// Upper bound on summary length in characters; longer replies are cut
    /// back to a sentence boundary.
    pub max_chars: usize,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        Self { max_chars: 400 }
    }
}

/// Summaries cached on disk keyed by product id plus prompt hash, so reruns
/// with an unchanged prompt never pay for the call again.
pub struct SummaryCache {
    dir: PathBuf,
}

impl SummaryCache {
    pub fn new(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn path_for(&self, product_id: &str, prompt_hash: &str) -> PathBuf {
        self.dir.join(format!("{product_id}-{prompt_hash}.txt"))
    }

    fn get(&self, product_id: &str, prompt_hash: &str) -> Option<String> {
        std::fs::read_to_string(self.path_for(product_id, prompt_hash)).ok()
    }

    fn put(&self, product_id: &str, prompt_hash: &str, summary: &str) {
        // cache failures are non-fatal; the summary still flows through
        let _ = std::fs::write(self.path_for(product_id, prompt_hash), summary);
    }
}

/// Cut `text` back to at most `max_chars` characters, preferring the last
/// sentence end, then the last word boundary.
fn truncate_at_sentence(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let prefix: String = text.chars().take(max_chars).collect();
    if let Some(pos) = prefix.rfind(['.', '!', '?']) {
        return prefix[..=pos].trim().to_string();
    }
    if let Some(pos) = prefix.rfind(char::is_whitespace) {
        return prefix[..pos].trim().to_string();
    }
    prefix
}

/// Generate and store a noise-free summary for one product.
pub fn summarize(
    product: &mut Product,
    gateway: &Gateway,
    config: &SummarizeConfig,
    cache: Option<&SummaryCache>,
) -> Result<String, CatalogError> {
    let prompt = prompts::summarize_product(&product.title, &product.description);
    let prompt_hash = text_fingerprint(&prompt);

    if let Some(cache) = cache {
        if let Some(cached) = cache.get(&product.product_id, &prompt_hash) {
            product.summary = Some(cached.clone());
            return Ok(cached);
        }
    }

    let request = ChatRequest::new(
        tag::CATALOG_SUMMARIZE,
        vec![ChatMessage::user(prompt).with_image(product.image_ref.clone())],
    )
    .with_temperature(temperature::ROLE_PLAY);
    let response = gateway.complete(&request)?;
    let text = response.text.trim();
    if text.is_empty() {
        return Err(CatalogError::SummaryEmpty(product.product_id.clone()));
    }
    let summary = truncate_at_sentence(text, config.max_chars);
    if let Some(cache) = cache {
        cache.put(&product.product_id, &prompt_hash, &summary);
    }
    product.summary = Some(summary.clone());
    Ok(summary)
}

/// Summarize every product in the catalog, in parallel, with deterministic
/// output ordering (the catalog stays id-ordered).
pub fn summarize_catalog(
    catalog: &mut Catalog,
    gateway: &Gateway,
    config: &SummarizeConfig,
    cache: Option<&SummaryCache>,
) -> Result<(), CatalogError> {
    let results: Vec<Result<(), CatalogError>> = catalog
        .products_mut()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|product| summarize(product, gateway, config, cache).map(|_| ()))
        .collect();
    for result in results {
        result?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ImageRef, MockProvider, MockScript, TagScript};
    use std::sync::Arc;

    fn product() -> Product {
        Product {
            product_id: "p1".into(),
            title: "Crew Tee".into(),
            description: "A red cotton t-shirt with a crew neck.".into(),
            image_ref: ImageRef("img/p1.jpg".into()),
            category_path: vec!["Clothing".into()],
            summary: None,
        }
    }

    fn gateway_with(reply: &str) -> Gateway {
        let script = MockScript::new(1)
            .with_tag(tag::CATALOG_SUMMARIZE, TagScript::replies([reply]));
        Gateway::new(Arc::new(MockProvider::new(script)))
    }

    #[test]
    fn mock_summary_is_stored_verbatim() {
        let gateway = gateway_with("red cotton tee, crew neck");
        let mut p = product();
        let summary = summarize(&mut p, &gateway, &SummarizeConfig::default(), None).unwrap();
        assert_eq!(summary, "red cotton tee, crew neck");
        assert_eq!(p.summary.as_deref(), Some("red cotton tee, crew neck"));
    }

    #[test]
    fn empty_reply_is_summary_empty_error() {
        let gateway = gateway_with("!empty");
        let mut p = product();
        assert!(matches!(
            summarize(&mut p, &gateway, &SummarizeConfig::default(), None),
            Err(CatalogError::SummaryEmpty(_))
        ));
    }

    #[test]
    fn long_reply_is_cut_at_sentence_boundary() {
        let long = "First sentence about the tee. Second sentence with more detail. \
                    Third sentence that overflows the cap entirely and keeps going.";
        let gateway = gateway_with(long);
        let mut p = product();
        let config = SummarizeConfig { max_chars: 70 };
        let summary = summarize(&mut p, &gateway, &config, None).unwrap();
        assert_eq!(summary, "First sentence about the tee. Second sentence with more detail.");
    }

    #[test]
    fn truncation_oracle_on_fixture_strings() {
        // oracle: result is a prefix, within cap, ending at a sentence mark
        // whenever the input contains one inside the cap
        let cases = [
            ("Alpha beta. Gamma delta epsilon zeta eta theta.", 20),
            ("No sentence marks here just words flowing on and on", 24),
            ("Short.", 100),
            ("Tiny", 2),
        ];
        for (text, cap) in cases {
            let out = truncate_at_sentence(text, cap);
            if text.chars().count() <= cap {
                assert_eq!(out, text);
            } else {
                assert!(out.chars().count() <= cap);
                assert!(text.starts_with(&out), "case {text:?}: got {out:?}");
                let prefix: String = text.chars().take(cap).collect();
                if prefix.contains(['.', '!', '?']) {
                    assert!(out.ends_with(['.', '!', '?']), "case {text:?}: got {out:?}");
                }
            }
        }
    }

    #[test]
    fn cache_hit_skips_the_gateway() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SummaryCache::new(dir.path()).unwrap();
        // script has exactly one reply; the second call must come from cache
        let gateway = gateway_with("cached summary here");
        let mut p = product();
        let config = SummarizeConfig::default();
        let first = summarize(&mut p, &gateway, &config, Some(&cache)).unwrap();
        let mut p2 = product();
        let second = summarize(&mut p2, &gateway, &config, Some(&cache)).unwrap();
        assert_eq!(first, second);
    }
}
