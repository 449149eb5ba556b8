//! Stage 2: simulated multimodal conversations.
//!
//! A manager drives one conversation per user profile: it opens the dialogue
//! (text-only or outfit-matching multimodal), alternates user and assistant
//! turns, decays chit-chat probability as rounds pass, runs the querier
//! retrieval pipeline for recommendations, and terminates by acceptance or
//! by surfacing the profile's target product at the round limit.
//!
//! Turn grammar: `turns[0]` is the user opening, `turns[1]` the assistant
//! opening, and everything after comes in (user, assistant) pairs. Reactions
//! to a recommendation are always the user turn immediately after it, so
//! speakers alternate strictly from start to finish and every conversation
//! ends on a user `accept` turn.

mod agents;
mod manager;

pub use agents::{querier_step, user_react, Reaction};
pub use manager::{
    next_action, open_dialogue, run_batch, run_conversation, OpenOutcome, RoundAction, SimStats,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError};
use crate::gateway::GatewayError;
use crate::optimize::ReviewScore;
use crate::profile::UserProfile;

pub const CONVERSATIONS_SCHEMA: &str = "shoptalk/conversations";

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("conversation exceeded its hard round fuse")]
    RoundFuse,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Assistant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Open,
    Chitchat,
    Recommend,
    Reject,
    Accept,
    ProvideTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub speaker: Speaker,
    pub action: Action,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub image_refs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpenMode {
    TextOpen,
    MultimodalOpen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Accepted,
    ForcedTarget,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: String,
    pub profile_id: String,
    pub open_mode: OpenMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outfit_item_id: Option<String>,
    pub turns: Vec<Turn>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review: Option<ReviewScore>,
}

impl Conversation {
    /// Render turns as prompt context.
    pub fn render(&self) -> String {
        render_turns(&self.turns)
    }

    pub fn recommend_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns
            .iter()
            .filter(|t| matches!(t.action, Action::Recommend | Action::ProvideTarget))
    }

    /// Distinct product ids mentioned anywhere in the conversation.
    pub fn product_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .turns
            .iter()
            .filter_map(|t| t.product_id.as_deref())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

pub fn render_turns(turns: &[Turn]) -> String {
    let mut out = String::new();
    for turn in turns {
        let who = match turn.speaker {
            Speaker::User => "User",
            Speaker::Assistant => "Assistant",
        };
        out.push_str(who);
        out.push_str(": ");
        out.push_str(&turn.text);
        out.push('\n');
    }
    out
}

/// Simulation knobs. `chitchat_base` and `chitchat_decay` drive the per-round
/// chit-chat probability `p0 * decay^round`; the base raises how chatty the
/// opening is and the decay makes long conversations increasingly
/// transactional.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Recommendation rounds allowed before the target is surfaced.
    pub round_limit: usize,
    pub chitchat_base: f64,
    pub chitchat_decay: f64,
    /// Fraction of conversations that attempt the outfit-matching multimodal
    /// opening (falling back to text on compatibility failure).
    pub multimodal_fraction: f64,
    /// Rough-retrieval depth.
    pub retrieval_k: usize,
    /// Candidates shown to the rerank judge.
    pub rerank_m: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            round_limit: 5,
            chitchat_base: 0.4,
            chitchat_decay: 0.6,
            multimodal_fraction: 0.3,
            retrieval_k: 10,
            rerank_m: 5,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), DialogueError> {
        if self.round_limit == 0 {
            return Err(DialogueError::InvalidConfig("round_limit must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.chitchat_base) {
            return Err(DialogueError::InvalidConfig(
                "chitchat_base must lie in [0, 1]".into(),
            ));
        }
        if !(self.chitchat_decay > 0.0 && self.chitchat_decay <= 1.0) {
            return Err(DialogueError::InvalidConfig(
                "chitchat_decay must lie in (0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.multimodal_fraction) {
            return Err(DialogueError::InvalidConfig(
                "multimodal_fraction must lie in [0, 1]".into(),
            ));
        }
        if self.retrieval_k == 0 || self.rerank_m == 0 {
            return Err(DialogueError::InvalidConfig(
                "retrieval_k and rerank_m must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Hard cap on chit-chat pairs: `round_limit * ceil(p0 / (1 - decay))`,
    /// degrading to `round_limit` when the decay is 1.
    pub fn chitchat_cap(&self) -> usize {
        if self.chitchat_base == 0.0 {
            return 0;
        }
        if self.chitchat_decay >= 1.0 {
            return self.round_limit;
        }
        self.round_limit * (self.chitchat_base / (1.0 - self.chitchat_decay)).ceil() as usize
    }
}

/// Querier working memory: interests crafted from the conversation so far
/// and their attribute-language clarification. The clarified list is
/// regenerated whenever the crafted list changes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterestState {
    pub crafted: Vec<String>,
    pub clarified: Vec<String>,
}

/// Structural audit of one conversation. Returns human-readable violations;
/// an empty list means every invariant holds. `profile` and `catalog` enable
/// the referential checks when available.
pub fn check_conversation(
    conversation: &Conversation,
    profile: Option<&UserProfile>,
    catalog: Option<&Catalog>,
    round_limit: Option<usize>,
) -> Vec<String> {
    let mut violations = Vec::new();
    let turns = &conversation.turns;

    if turns.len() < 3 {
        violations.push(format!("conversation has only {} turns", turns.len()));
        return violations;
    }

    for (i, turn) in turns.iter().enumerate() {
        if turn.index != i {
            violations.push(format!("turn {i} has index {}", turn.index));
        }
        let expected_speaker = if i % 2 == 0 { Speaker::User } else { Speaker::Assistant };
        if turn.speaker != expected_speaker {
            violations.push(format!("turn {i} breaks user/assistant alternation"));
        }
    }

    if turns[0].action != Action::Open || turns[1].action != Action::Open {
        violations.push("conversation does not start with an opening exchange".into());
    }

    // action placement and product/image payload rules
    let mut accept_count = 0;
    for (i, turn) in turns.iter().enumerate() {
        match turn.action {
            Action::Open => {
                if i > 1 {
                    violations.push(format!("turn {i}: open action outside the opening block"));
                }
            }
            Action::Recommend | Action::ProvideTarget => {
                if turn.speaker != Speaker::Assistant {
                    violations.push(format!("turn {i}: only the assistant recommends"));
                }
                match (&turn.product_id, catalog) {
                    (None, _) => violations.push(format!("turn {i}: recommendation without product_id")),
                    (Some(id), Some(catalog)) => match catalog.get(id) {
                        None => violations.push(format!("turn {i}: unknown product {id}")),
                        Some(product) => {
                            if turn.image_refs != vec![product.image_ref.as_str().to_string()] {
                                violations.push(format!(
                                    "turn {i}: image_refs do not match product {id}"
                                ));
                            }
                        }
                    },
                    (Some(_), None) => {
                        if turn.image_refs.len() != 1 {
                            violations.push(format!("turn {i}: recommendation must carry one image"));
                        }
                    }
                }
            }
            Action::Accept | Action::Reject => {
                if turn.speaker != Speaker::User {
                    violations.push(format!("turn {i}: only the user reacts"));
                }
                if i == 0
                    || !matches!(
                        turns[i - 1].action,
                        Action::Recommend | Action::ProvideTarget
                    )
                {
                    violations.push(format!(
                        "turn {i}: reaction does not follow a recommendation"
                    ));
                }
                if turn.action == Action::Accept {
                    accept_count += 1;
                }
            }
            Action::Chitchat => {
                if turn.product_id.is_some() {
                    violations.push(format!("turn {i}: chitchat carries a product_id"));
                }
            }
        }
    }

    if accept_count != 1 {
        violations.push(format!("expected exactly one accept turn, found {accept_count}"));
    } else if turns.last().map(|t| t.action) != Some(Action::Accept) {
        violations.push("conversation does not terminate on an accept turn".into());
    }

    // every provide_target must be immediately accepted
    for (i, turn) in turns.iter().enumerate() {
        if turn.action == Action::ProvideTarget {
            let next = turns.get(i + 1).map(|t| t.action);
            if next != Some(Action::Accept) {
                violations.push(format!("turn {i}: provide_target not followed by accept"));
            }
        }
    }

    // no product recommended twice
    let mut seen = std::collections::BTreeSet::new();
    for turn in conversation.recommend_turns() {
        if let Some(id) = &turn.product_id {
            if !seen.insert(id.clone()) {
                violations.push(format!("product {id} recommended more than once"));
            }
        }
    }

    if let Some(limit) = round_limit {
        let rec_rounds = turns
            .iter()
            .filter(|t| t.action == Action::Recommend)
            .count();
        if rec_rounds > limit {
            violations.push(format!("{rec_rounds} recommendation rounds exceed limit {limit}"));
        }
    }

    match conversation.open_mode {
        OpenMode::MultimodalOpen => match &conversation.outfit_item_id {
            None => violations.push("multimodal open without outfit_item_id".into()),
            Some(outfit_id) => {
                let expected = catalog
                    .and_then(|c| c.get(outfit_id))
                    .map(|p| p.image_ref.as_str().to_string());
                if turns[0].image_refs.is_empty() {
                    violations.push("multimodal opening turn carries no image".into());
                } else if let Some(expected) = expected {
                    if turns[0].image_refs != vec![expected] {
                        violations.push("opening image does not match the outfit item".into());
                    }
                }
            }
        },
        OpenMode::TextOpen => {
            if !turns[0].image_refs.is_empty() {
                violations.push("text open carries an image".into());
            }
            if conversation.outfit_item_id.is_some() {
                violations.push("text open carries an outfit_item_id".into());
            }
        }
    }

    if conversation.status == Status::Abandoned {
        violations.push("abandoned conversation present in output".into());
    }

    if let Some(profile) = profile {
        if conversation.profile_id != profile.profile_id {
            violations.push("conversation references a different profile".into());
        }
        // forced target ends on the profile's target product
        if conversation.status == Status::ForcedTarget {
            let last_product = turns.last().and_then(|t| t.product_id.as_deref());
            if last_product != Some(profile.target_product_id.as_str()) {
                violations.push("forced_target conversation does not end on the target product".into());
            }
        }
        // every reject cites a requirement from the profile
        for turn in turns {
            if turn.action == Action::Reject {
                let text = turn.text.to_lowercase();
                let cited = profile
                    .target_requirements
                    .iter()
                    .any(|req| text.contains(&req.to_lowercase()));
                if !cited {
                    violations.push(format!(
                        "turn {}: rejection cites no target requirement",
                        turn.index
                    ));
                }
            }
        }
    }

    violations
}
