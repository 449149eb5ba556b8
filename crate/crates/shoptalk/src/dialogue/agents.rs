//! Querier retrieval pipeline and user-simulator reactions.

use std::collections::BTreeSet;

use crate::catalog::{rerank, Catalog, Embedder, Product, RankedHit, VectorStore};
use crate::gateway::{ChatMessage, ChatRequest, FieldKind, Gateway, SchemaDescriptor};
use crate::profile::UserProfile;
use crate::prompts::{self, tag, temperature};

use super::{DialogueError, InterestState};

fn string_list(value: &serde_json::Value, key: &str) -> Vec<String> {
    value[key]
        .as_array()
        .map(|items| {
            items
                .iter()
                .filter_map(|v| v.as_str())
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
        .unwrap_or_default()
}

/// One querier pass: craft interests from the context, clarify them into
/// attribute language, rough-retrieve, and rerank. Products in `excluded`
/// (already recommended this conversation) are skipped; if the whole top-k
/// is excluded, `k` widens once, and `None` signals that the target should
/// be surfaced early.
#[allow(clippy::too_many_arguments)]
pub fn querier_step(
    context: &str,
    interest: &mut InterestState,
    catalog: &Catalog,
    store: &VectorStore,
    embedder: &dyn Embedder,
    gateway: &Gateway,
    k: usize,
    m: usize,
    excluded: &BTreeSet<String>,
) -> Result<Option<RankedHit>, DialogueError> {
    let request = ChatRequest::new(
        tag::QUERIER_INTERESTS,
        vec![ChatMessage::user(prompts::querier_interests(context))],
    )
    .with_temperature(temperature::ROLE_PLAY);
    let schema = SchemaDescriptor::new(&[("interests", FieldKind::StrArray)]);
    let value = gateway.complete_json(&request, &schema)?;
    let mut crafted = string_list(&value, "interests");
    if crafted.is_empty() {
        // model produced nothing useful; retrieval still proceeds on the
        // previous interests or the raw context
        crafted = if interest.crafted.is_empty() {
            vec![context.lines().last().unwrap_or(context).to_string()]
        } else {
            interest.crafted.clone()
        };
    }

    // clarified needs are regenerated whenever the crafted list changes
    if crafted != interest.crafted {
        interest.crafted = crafted;
        let request = ChatRequest::new(
            tag::QUERIER_CLARIFY,
            vec![ChatMessage::user(prompts::querier_clarify(&interest.crafted))],
        )
        .with_temperature(temperature::ROLE_PLAY);
        let schema = SchemaDescriptor::new(&[("clarified", FieldKind::StrArray)]);
        let value = gateway.complete_json(&request, &schema)?;
        let clarified = string_list(&value, "clarified");
        // clarification is best-effort: an unchanged or empty reply still
        // leaves a usable query
        interest.clarified = if clarified.is_empty() {
            interest.crafted.clone()
        } else {
            clarified
        };
    }

    let query = interest.clarified.join("; ");
    let keep = |hits: Vec<RankedHit>| -> Vec<RankedHit> {
        hits.into_iter()
            .filter(|h| !excluded.contains(&h.product_id))
            .collect()
    };
    let mut hits = keep(store.search(&query, embedder, k)?);
    if hits.is_empty() {
        hits = keep(store.search(&query, embedder, k * 2)?);
    }
    if hits.is_empty() {
        return Ok(None);
    }
    let interest_text = interest.crafted.join("; ");
    let best = rerank(&hits, catalog, &interest_text, gateway, m)?;
    Ok(Some(best))
}

/// What the user simulator decided about a recommended product.
#[derive(Debug, Clone)]
pub struct Reaction {
    pub accept: bool,
    /// For rejections: the violated target requirement, guaranteed to be
    /// quoted inside `text` and to come from the profile's list.
    pub cited_requirement: Option<String>,
    pub text: String,
}

/// Compare a recommended product against the profile's target requirements.
/// The profile's own target product is always accepted; otherwise the
/// simulator judges the match and rejections name a violated requirement.
pub fn user_react(
    profile: &UserProfile,
    product: &Product,
    context: &str,
    gateway: &Gateway,
) -> Result<Reaction, DialogueError> {
    let summary = product.summary_or_description();

    if product.product_id == profile.target_product_id {
        let request = ChatRequest::new(
            tag::USER_ACCEPT,
            vec![ChatMessage::user(prompts::user_accept(context, summary))],
        )
        .with_temperature(temperature::ROLE_PLAY);
        let text = gateway.complete(&request)?.text.trim().to_string();
        return Ok(Reaction {
            accept: true,
            cited_requirement: None,
            text,
        });
    }

    let request = ChatRequest::new(
        tag::USER_REACT,
        vec![
            ChatMessage::user(prompts::user_react(&profile.target_requirements, summary))
                .with_image(product.image_ref.clone()),
        ],
    )
    .with_temperature(temperature::ROLE_PLAY);
    let schema = SchemaDescriptor::new(&[
        ("accept", FieldKind::Bool),
        ("violated_requirement", FieldKind::Str),
        ("response", FieldKind::Str),
    ]);
    let value = gateway.complete_json(&request, &schema)?;
    let accept = value["accept"].as_bool().unwrap_or(false);
    let mut text = value["response"].as_str().unwrap_or_default().trim().to_string();

    if accept {
        return Ok(Reaction {
            accept: true,
            cited_requirement: None,
            text,
        });
    }

    // snap the cited requirement onto the profile's list, then make sure the
    // rejection text actually quotes it
    let named = value["violated_requirement"].as_str().unwrap_or_default().trim();
    let requirement = profile
        .target_requirements
        .iter()
        .find(|req| req.eq_ignore_ascii_case(named))
        .or_else(|| {
            profile
                .target_requirements
                .iter()
                .find(|req| named.to_lowercase().contains(&req.to_lowercase()))
        })
        .unwrap_or(&profile.target_requirements[0])
        .clone();
    if !text.to_lowercase().contains(&requirement.to_lowercase()) {
        if !text.is_empty() && !text.ends_with(['.', '!', '?']) {
            text.push('.');
        }
        text.push_str(&format!(" I really need {requirement}."));
        text = text.trim().to_string();
    }
    Ok(Reaction {
        accept: false,
        cited_requirement: Some(requirement),
        text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build_index, HashEmbedder};
    use crate::gateway::{ImageRef, MockProvider, MockScript, TagScript};
    use crate::profile::BasicUserInfo;
    use std::sync::Arc;

    fn fixture_catalog() -> Catalog {
        let summaries = [
            ("p1", "quick-drying polyester running shirt, breathable mesh"),
            ("p2", "navy wool suit jacket, slim tailored cut"),
            ("p3", "white linen beach shirt, relaxed fit"),
            ("p4", "black leather ankle boots, low heel"),
            ("p5", "red cotton crew-neck tee, classic fit"),
        ];
        Catalog::from_products(summaries.map(|(id, s)| Product {
            product_id: id.into(),
            title: id.into(),
            description: s.into(),
            image_ref: ImageRef(format!("img/{id}.jpg")),
            category_path: vec!["Clothing".into()],
            summary: Some(s.into()),
        }))
    }

    fn profile() -> UserProfile {
        UserProfile {
            profile_id: "u00001".into(),
            basic: BasicUserInfo {
                age: 30,
                gender: "male".into(),
                occupation: "runner".into(),
                notes: String::new(),
            },
            scenario_id: "s0001".into(),
            target_product_id: "p1".into(),
            backstory: "Training for a race.".into(),
            scenario_requirements: vec!["good for running".into()],
            target_requirements: vec!["quick-drying fabric".into(), "breathable".into()],
        }
    }

    fn interests_reply(items: &[&str]) -> String {
        serde_json::json!({ "interests": items }).to_string()
    }

    fn clarify_reply(items: &[&str]) -> String {
        serde_json::json!({ "clarified": items }).to_string()
    }

    #[test]
    fn single_matching_product_is_retrieved() {
        let catalog = fixture_catalog();
        let embedder = HashEmbedder::new(5, 48);
        let store = build_index(&catalog, &embedder).unwrap();
        let script = MockScript::new(1)
            .with_tag(
                tag::QUERIER_INTERESTS,
                TagScript::replies([interests_reply(&["something quick-drying for runs"])]),
            )
            .with_tag(
                tag::QUERIER_CLARIFY,
                TagScript::replies([clarify_reply(&[
                    "quick-drying polyester running shirt breathable mesh",
                ])]),
            )
            .with_tag(
                tag::CATALOG_RERANK,
                TagScript::template(r#"{"product_id": "p1"}"#),
            );
        let gateway = Gateway::new(Arc::new(MockProvider::new(script)));
        let mut interest = InterestState::default();
        let hit = querier_step(
            "User: I need a shirt that dries fast.\n",
            &mut interest,
            &catalog,
            &store,
            &embedder,
            &gateway,
            3,
            3,
            &BTreeSet::new(),
        )
        .unwrap()
        .unwrap();
        assert_eq!(hit.product_id, "p1");
        assert!(!interest.clarified.is_empty());
    }

    #[test]
    fn fully_excluded_store_returns_none() {
        let catalog = fixture_catalog();
        let embedder = HashEmbedder::new(5, 48);
        let store = build_index(&catalog, &embedder).unwrap();
        let script = MockScript::new(1)
            .with_tag(
                tag::QUERIER_INTERESTS,
                TagScript::template(&interests_reply(&["anything"])),
            )
            .with_tag(
                tag::QUERIER_CLARIFY,
                TagScript::template(&clarify_reply(&["anything"])),
            )
            .with_tag(
                tag::CATALOG_RERANK,
                TagScript::template(r#"{"product_id": "p1"}"#),
            );
        let gateway = Gateway::new(Arc::new(MockProvider::new(script)));
        let excluded: BTreeSet<String> =
            ["p1", "p2", "p3", "p4", "p5"].iter().map(|s| s.to_string()).collect();
        let mut interest = InterestState::default();
        let hit = querier_step(
            "User: hi\n",
            &mut interest,
            &catalog,
            &store,
            &embedder,
            &gateway,
            2,
            3,
            &excluded,
        )
        .unwrap();
        assert!(hit.is_none());
    }

    #[test]
    fn widening_rescues_partially_excluded_topk() {
        let catalog = fixture_catalog();
        let embedder = HashEmbedder::new(5, 48);
        let store = build_index(&catalog, &embedder).unwrap();
        let script = MockScript::new(1)
            .with_tag(
                tag::QUERIER_INTERESTS,
                TagScript::template(&interests_reply(&["quick-drying running shirt"])),
            )
            .with_tag(
                tag::QUERIER_CLARIFY,
                TagScript::template(&clarify_reply(&[
                    "quick-drying polyester running shirt breathable mesh",
                ])),
            )
            .with_tag(
                tag::CATALOG_RERANK,
                TagScript::template(r#"{"product_id": "zzz"}"#),
            );
        let gateway = Gateway::new(Arc::new(MockProvider::new(script)));
        // exclude the k=1 top hit; widening to k=2 leaves one candidate,
        // rerank degenerates (single hit) or falls back to top-1
        let embedder_hits = store.search("quick-drying polyester running shirt breathable mesh", &embedder, 1).unwrap();
        let excluded: BTreeSet<String> =
            embedder_hits.iter().map(|h| h.product_id.clone()).collect();
        let mut interest = InterestState::default();
        let hit = querier_step(
            "User: hi\n",
            &mut interest,
            &catalog,
            &store,
            &embedder,
            &gateway,
            1,
            3,
            &excluded,
        )
        .unwrap()
        .unwrap();
        assert!(!excluded.contains(&hit.product_id));
    }

    #[test]
    fn unchanged_clarifier_output_still_searches() {
        let catalog = fixture_catalog();
        let embedder = HashEmbedder::new(5, 48);
        let store = build_index(&catalog, &embedder).unwrap();
        // clarifier echoes the crafted interests verbatim
        let script = MockScript::new(1)
            .with_tag(
                tag::QUERIER_INTERESTS,
                TagScript::template(&interests_reply(&["red cotton tee"])),
            )
            .with_tag(
                tag::QUERIER_CLARIFY,
                TagScript::template(&clarify_reply(&["red cotton tee"])),
            )
            .with_tag(
                tag::CATALOG_RERANK,
                TagScript::template(r#"{"product_id": "p5"}"#),
            );
        let gateway = Gateway::new(Arc::new(MockProvider::new(script)));
        let mut interest = InterestState::default();
        let hit = querier_step(
            "User: a red tee please\n",
            &mut interest,
            &catalog,
            &store,
            &embedder,
            &gateway,
            5,
            5,
            &BTreeSet::new(),
        )
        .unwrap()
        .unwrap();
        assert_eq!(hit.product_id, "p5");
    }

    #[test]
    fn target_product_is_always_accepted() {
        let catalog = fixture_catalog();
        let script = MockScript::new(1).with_tag(
            tag::USER_ACCEPT,
            TagScript::template("This is exactly what I wanted, thank you!"),
        );
        let gateway = Gateway::new(Arc::new(MockProvider::new(script)));
        let p = profile();
        let product = catalog.get("p1").unwrap();
        let reaction = user_react(&p, product, "User: hi\n", &gateway).unwrap();
        assert!(reaction.accept);
    }

    #[test]
    fn mismatch_rejection_cites_the_requirement() {
        let catalog = fixture_catalog();
        let reply = serde_json::json!({
            "accept": false,
            "violated_requirement": "quick-drying fabric",
            "response": "That looks warm but wool will not dry fast on a run.",
        })
        .to_string();
        let script = MockScript::new(1).with_tag(tag::USER_REACT, TagScript::template(&reply));
        let gateway = Gateway::new(Arc::new(MockProvider::new(script)));
        let p = profile();
        let product = catalog.get("p2").unwrap();
        let reaction = user_react(&p, product, "User: hi\n", &gateway).unwrap();
        assert!(!reaction.accept);
        let cited = reaction.cited_requirement.unwrap();
        assert!(p.target_requirements.contains(&cited));
        assert!(reaction.text.to_lowercase().contains(&cited.to_lowercase()));
    }

    #[test]
    fn uncited_requirement_is_appended_to_the_text() {
        let catalog = fixture_catalog();
        let reply = serde_json::json!({
            "accept": false,
            "violated_requirement": "something about color",
            "response": "Not for me, sorry",
        })
        .to_string();
        let script = MockScript::new(1).with_tag(tag::USER_REACT, TagScript::template(&reply));
        let gateway = Gateway::new(Arc::new(MockProvider::new(script)));
        let p = profile();
        let product = catalog.get("p4").unwrap();
        let reaction = user_react(&p, product, "User: hi\n", &gateway).unwrap();
        assert!(!reaction.accept);
        let cited = reaction.cited_requirement.unwrap();
        // snapped to the profile's first target requirement
        assert_eq!(cited, "quick-drying fabric");
        assert!(reaction.text.contains("quick-drying fabric"));
    }
}
