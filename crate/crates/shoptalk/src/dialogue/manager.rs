//! Manager: opening exchanges, round action control, and the conversation
//! loop that wires the user simulator, chatter, and querier together.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Embedder, VectorStore};
use crate::gateway::{ChatMessage, ChatRequest, FieldKind, Gateway, SchemaDescriptor};
use crate::profile::UserProfile;
use crate::prompts::{self, tag, temperature};
use crate::seed::rng_for;

use super::{
    querier_step, render_turns, user_react, Action, Conversation, DialogueError, InterestState,
    OpenMode, SimConfig, Speaker, Status, Turn,
};

/// What the manager schedules for a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundAction {
    Chitchat,
    Recommend,
}

/// Draw the next round action: chit-chat with probability
/// `base * decay^round`, recommendation otherwise. The final round before
/// the limit always recommends.
pub fn next_action(round_index: usize, config: &SimConfig, rng: &mut impl Rng) -> RoundAction {
    if round_index + 1 >= config.round_limit {
        return RoundAction::Recommend;
    }
    let p = config.chitchat_base * config.chitchat_decay.powi(round_index as i32);
    if rng.gen::<f64>() < p {
        RoundAction::Chitchat
    } else {
        RoundAction::Recommend
    }
}

/// Result of the opening exchange.
#[derive(Debug, Clone)]
pub struct OpenOutcome {
    pub turns: Vec<Turn>,
    pub open_mode: OpenMode,
    pub outfit_item_id: Option<String>,
}

fn make_turn(
    index: usize,
    speaker: Speaker,
    action: Action,
    text: String,
    product_id: Option<String>,
    image_refs: Vec<String>,
) -> Turn {
    Turn {
        index,
        speaker,
        action,
        text,
        product_id,
        image_refs,
    }
}

/// Open a conversation. A seeded fraction of profiles attempts the
/// outfit-matching multimodal opening: describe a plausible owned item,
/// retrieve it from the catalog, and assess compatibility with the target
/// and scenario. Any failure in that chain falls back to a text opening.
pub fn open_dialogue(
    profile: &UserProfile,
    catalog: &Catalog,
    store: &VectorStore,
    embedder: &dyn Embedder,
    gateway: &Gateway,
    config: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<OpenOutcome, DialogueError> {
    if catalog.is_empty() {
        return Err(DialogueError::EmptyCatalog);
    }
    let target = catalog
        .get(&profile.target_product_id)
        .ok_or_else(|| DialogueError::InvalidConfig(format!(
            "profile {} targets unknown product {}",
            profile.profile_id, profile.target_product_id
        )))?;
    let scenario_text = &profile.backstory;

    let mut outfit: Option<(String, String)> = None; // (product_id, summary)
    if rng.gen::<f64>() < config.multimodal_fraction {
        outfit = attempt_outfit_open(profile, catalog, store, embedder, gateway, target)?;
    }

    let (open_mode, outfit_item_id, opening_image, outfit_summary) = match &outfit {
        Some((id, summary)) => {
            let image = catalog.get(id).expect("outfit id came from the catalog");
            (
                OpenMode::MultimodalOpen,
                Some(id.clone()),
                vec![image.image_ref.as_str().to_string()],
                Some(summary.clone()),
            )
        }
        None => (OpenMode::TextOpen, None, Vec::new(), None),
    };

    let user_prompt = prompts::user_open(
        scenario_text,
        &profile.scenario_requirements,
        outfit_summary.as_deref(),
    );
    let mut user_message = ChatMessage::user(user_prompt);
    if let Some(id) = &outfit_item_id {
        let product = catalog.get(id).expect("outfit id came from the catalog");
        user_message = user_message.with_image(product.image_ref.clone());
    }
    let user_text = gateway
        .complete(
            &ChatRequest::new(tag::USER_OPEN, vec![user_message])
                .with_temperature(temperature::ROLE_PLAY),
        )?
        .text
        .trim()
        .to_string();

    let assistant_text = gateway
        .complete(
            &ChatRequest::new(
                tag::ASSISTANT_OPEN,
                vec![ChatMessage::user(prompts::assistant_open(&user_text))],
            )
            .with_temperature(temperature::ROLE_PLAY),
        )?
        .text
        .trim()
        .to_string();

    let turns = vec![
        make_turn(0, Speaker::User, Action::Open, user_text, None, opening_image),
        make_turn(1, Speaker::Assistant, Action::Open, assistant_text, None, Vec::new()),
    ];
    Ok(OpenOutcome {
        turns,
        open_mode,
        outfit_item_id,
    })
}

/// The outfit flow: description -> retrieval -> compatibility check.
/// Returns the retrieved owned item on success.
fn attempt_outfit_open(
    profile: &UserProfile,
    catalog: &Catalog,
    store: &VectorStore,
    embedder: &dyn Embedder,
    gateway: &Gateway,
    target: &crate::catalog::Product,
) -> Result<Option<(String, String)>, DialogueError> {
    let target_summary = target.summary_or_description();
    let description = gateway
        .complete(
            &ChatRequest::new(
                tag::OPEN_OUTFIT,
                vec![ChatMessage::user(prompts::outfit_description(
                    target_summary,
                    &profile.backstory,
                ))],
            )
            .with_temperature(temperature::ROLE_PLAY),
        )?
        .text
        .trim()
        .to_string();
    if description.is_empty() {
        return Ok(None);
    }

    let hits = store.search(&description, embedder, 5)?;
    let owned = hits
        .iter()
        .find(|h| h.product_id != profile.target_product_id);
    let Some(owned) = owned else {
        return Ok(None);
    };
    let owned_product = catalog
        .get(&owned.product_id)
        .expect("hit ids resolve against the catalog");
    let owned_summary = owned_product.summary_or_description().to_string();

    let request = ChatRequest::new(
        tag::OPEN_COMPAT,
        vec![ChatMessage::user(prompts::outfit_compat(
            &owned_summary,
            target_summary,
            &profile.backstory,
        ))
        .with_image(owned_product.image_ref.clone())],
    )
    .with_temperature(temperature::ROLE_PLAY);
    let schema = SchemaDescriptor::new(&[("compatible", FieldKind::Bool)]);
    let value = gateway.complete_json(&request, &schema)?;
    if value["compatible"].as_bool().unwrap_or(false) {
        Ok(Some((owned.product_id.clone(), owned_summary)))
    } else {
        Ok(None)
    }
}

fn assistant_text(
    gateway: &Gateway,
    tag_name: &str,
    prompt: String,
    image: Option<crate::gateway::ImageRef>,
) -> Result<String, DialogueError> {
    let mut message = ChatMessage::user(prompt);
    if let Some(image) = image {
        message = message.with_image(image);
    }
    let text = gateway
        .complete(
            &ChatRequest::new(tag_name, vec![message]).with_temperature(temperature::ROLE_PLAY),
        )?
        .text
        .trim()
        .to_string();
    Ok(text)
}

/// Simulate one full conversation for a profile. Deterministic given the
/// config seed: the per-conversation RNG derives from the profile id.
pub fn run_conversation(
    profile: &UserProfile,
    catalog: &Catalog,
    store: &VectorStore,
    embedder: &dyn Embedder,
    gateway: &Gateway,
    config: &SimConfig,
    conversation_id: String,
) -> Result<Conversation, DialogueError> {
    config.validate()?;
    let mut rng = rng_for(config.seed, &format!("conv|{}", profile.profile_id));

    let opening = open_dialogue(profile, catalog, store, embedder, gateway, config, &mut rng)?;
    let mut turns = opening.turns;
    let mut interest = InterestState::default();
    let mut recommended: BTreeSet<String> = BTreeSet::new();
    let mut rec_rounds = 0usize;
    let mut chit_pairs = 0usize;
    let chit_cap = config.chitchat_cap();
    // product awaiting a reaction, and whether it came from provide_target
    let mut pending: Option<(String, bool)> = None;
    let mut round_index = 0usize;
    let status;

    // the loop provably ends within round_limit + chitchat_cap + 2 pairs;
    // the fuse guards against regressions
    let fuse = config.round_limit + chit_cap + 4;

    loop {
        if round_index > fuse {
            return Err(DialogueError::RoundFuse);
        }

        let mut action = next_action(round_index, config, &mut rng);
        if chit_pairs >= chit_cap {
            action = RoundAction::Recommend;
        }
        let limit_reached = rec_rounds >= config.round_limit;

        // ---- user turn ----
        if let Some((product_id, was_forced)) = pending.take() {
            let product = catalog
                .get(&product_id)
                .expect("pending product came from the catalog");
            let context = render_turns(&turns);
            let reaction = user_react(profile, product, &context, gateway)?;
            let idx = turns.len();
            if reaction.accept {
                turns.push(make_turn(
                    idx,
                    Speaker::User,
                    Action::Accept,
                    reaction.text,
                    Some(product_id),
                    Vec::new(),
                ));
                status = if was_forced {
                    Status::ForcedTarget
                } else {
                    Status::Accepted
                };
                break;
            }
            turns.push(make_turn(
                idx,
                Speaker::User,
                Action::Reject,
                reaction.text,
                Some(product_id),
                Vec::new(),
            ));
        } else {
            // casual user turn: small talk, or a nudge when a
            // recommendation is coming
            let nudge = action == RoundAction::Recommend || limit_reached;
            let context = render_turns(&turns);
            let text = gateway
                .complete(
                    &ChatRequest::new(
                        tag::USER_CHITCHAT,
                        vec![ChatMessage::user(prompts::user_chitchat(&context, nudge))],
                    )
                    .with_temperature(temperature::ROLE_PLAY),
                )?
                .text
                .trim()
                .to_string();
            let idx = turns.len();
            turns.push(make_turn(idx, Speaker::User, Action::Chitchat, text, None, Vec::new()));
        }

        // ---- assistant turn ----
        let context = render_turns(&turns);
        if limit_reached {
            // round limit: surface the profile's target product to end
            let target = catalog
                .get(&profile.target_product_id)
                .expect("profile target resolves");
            let text = assistant_text(
                gateway,
                tag::ASSISTANT_PROVIDE_TARGET,
                prompts::assistant_provide_target(&context, target.summary_or_description()),
                Some(target.image_ref.clone()),
            )?;
            let idx = turns.len();
            turns.push(make_turn(
                idx,
                Speaker::Assistant,
                Action::ProvideTarget,
                text,
                Some(target.product_id.clone()),
                vec![target.image_ref.as_str().to_string()],
            ));
            pending = Some((target.product_id.clone(), true));
        } else if action == RoundAction::Chitchat {
            let text = assistant_text(
                gateway,
                tag::ASSISTANT_CHITCHAT,
                prompts::assistant_chitchat(&context),
                None,
            )?;
            let idx = turns.len();
            turns.push(make_turn(
                idx,
                Speaker::Assistant,
                Action::Chitchat,
                text,
                None,
                Vec::new(),
            ));
            chit_pairs += 1;
        } else {
            match querier_step(
                &context,
                &mut interest,
                catalog,
                store,
                embedder,
                gateway,
                config.retrieval_k,
                config.rerank_m,
                &recommended,
            )? {
                Some(hit) => {
                    let product = catalog
                        .get(&hit.product_id)
                        .expect("hit ids resolve against the catalog");
                    let text = assistant_text(
                        gateway,
                        tag::ASSISTANT_RECOMMEND,
                        prompts::assistant_recommend(
                            &context,
                            product.summary_or_description(),
                            &profile.target_requirements,
                        ),
                        Some(product.image_ref.clone()),
                    )?;
                    let idx = turns.len();
                    turns.push(make_turn(
                        idx,
                        Speaker::Assistant,
                        Action::Recommend,
                        text,
                        Some(product.product_id.clone()),
                        vec![product.image_ref.as_str().to_string()],
                    ));
                    recommended.insert(product.product_id.clone());
                    rec_rounds += 1;
                    pending = Some((product.product_id.clone(), false));
                }
                None => {
                    // every viable candidate was already recommended;
                    // surface the target early
                    let target = catalog
                        .get(&profile.target_product_id)
                        .expect("profile target resolves");
                    let text = assistant_text(
                        gateway,
                        tag::ASSISTANT_PROVIDE_TARGET,
                        prompts::assistant_provide_target(
                            &context,
                            target.summary_or_description(),
                        ),
                        Some(target.image_ref.clone()),
                    )?;
                    let idx = turns.len();
                    turns.push(make_turn(
                        idx,
                        Speaker::Assistant,
                        Action::ProvideTarget,
                        text,
                        Some(target.product_id.clone()),
                        vec![target.image_ref.as_str().to_string()],
                    ));
                    pending = Some((target.product_id.clone(), true));
                }
            }
        }
        round_index += 1;
    }

    Ok(Conversation {
        conversation_id,
        profile_id: profile.profile_id.clone(),
        open_mode: opening.open_mode,
        outfit_item_id: opening.outfit_item_id,
        turns,
        status,
        review: None,
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SimStats {
    pub requested: u64,
    pub simulated: u64,
    pub abandoned: u64,
}

/// Simulate conversations for a batch of profiles in parallel. Failures
/// abandon the conversation (counted, excluded from output); per-profile
/// sub-seeding keeps the output independent of scheduling.
pub fn run_batch(
    profiles: &[UserProfile],
    catalog: &Catalog,
    store: &VectorStore,
    embedder: &dyn Embedder,
    gateway: &Gateway,
    config: &SimConfig,
) -> (Vec<Conversation>, SimStats) {
    let results: Vec<Option<Conversation>> = profiles
        .par_iter()
        .enumerate()
        .map(|(i, profile)| {
            let conversation_id = format!("c{:05}", i + 1);
            match run_conversation(
                profile,
                catalog,
                store,
                embedder,
                gateway,
                config,
                conversation_id,
            ) {
                Ok(conversation) => Some(conversation),
                Err(err) => {
                    log::warn!("conversation for {} abandoned: {err}", profile.profile_id);
                    None
                }
            }
        })
        .collect();

    let mut stats = SimStats {
        requested: profiles.len() as u64,
        ..SimStats::default()
    };
    let mut conversations = Vec::with_capacity(results.len());
    for result in results {
        match result {
            Some(conversation) => {
                stats.simulated += 1;
                conversations.push(conversation);
            }
            None => stats.abandoned += 1,
        }
    }
    (conversations, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_base_probability_always_recommends() {
        let config = SimConfig {
            chitchat_base: 0.0,
            ..SimConfig::default()
        };
        let mut rng = rng_for(1, "t");
        for round in 0..10 {
            assert_eq!(next_action(round, &config, &mut rng), RoundAction::Recommend);
        }
    }

    #[test]
    fn final_round_before_limit_always_recommends() {
        let config = SimConfig {
            round_limit: 3,
            chitchat_base: 1.0,
            chitchat_decay: 1.0,
            ..SimConfig::default()
        };
        let mut rng = rng_for(1, "t");
        // rounds 0 and 1 may chit-chat (base 1.0 means they always do),
        // round 2 is the final round before the limit
        assert_eq!(next_action(2, &config, &mut rng), RoundAction::Recommend);
    }

    #[test]
    fn chitchat_probability_follows_decay_formula() {
        // p(2) = 0.5 * 0.5^2 = 0.125, checked by Monte Carlo
        let config = SimConfig {
            round_limit: 100,
            chitchat_base: 0.5,
            chitchat_decay: 0.5,
            ..SimConfig::default()
        };
        let mut rng = rng_for(42, "mc");
        let n = 100_000;
        let chats = (0..n)
            .filter(|_| next_action(2, &config, &mut rng) == RoundAction::Chitchat)
            .count();
        let rate = chats as f64 / n as f64;
        assert!((rate - 0.125).abs() < 0.005, "rate {rate}");
    }

    #[test]
    fn monte_carlo_rate_at_round_one() {
        // 10,000 draws at r=1, p0=0.4, decay=0.8 -> 0.32 +/- 0.02
        let config = SimConfig {
            round_limit: 100,
            chitchat_base: 0.4,
            chitchat_decay: 0.8,
            ..SimConfig::default()
        };
        let mut rng = rng_for(7, "mc");
        let n = 10_000;
        let chats = (0..n)
            .filter(|_| next_action(1, &config, &mut rng) == RoundAction::Chitchat)
            .count();
        let rate = chats as f64 / n as f64;
        assert!((rate - 0.32).abs() < 0.02, "rate {rate}");
    }
}
