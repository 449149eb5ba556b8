//! Stage 3: conversation optimization.
//!
//! The rewriter re-expresses every turn at high temperature to break up the
//! repetitive phrasing that low-temperature simulation produces, optionally
//! injecting a colloquial-style instruction per turn. A low-temperature
//! supervisor verifies each rewrite for semantic consistency and product
//! attribute immutability, reverting failures to the original text, so the
//! structural projection of a conversation (speakers, actions, products,
//! images) can never change. The reviewer then scores whole conversations on
//! three indicators and the filter keeps only those passing the threshold.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dialogue::{Conversation, Speaker, Turn};
use crate::gateway::{
    ChatMessage, ChatRequest, FieldKind, Gateway, GatewayError, SchemaDescriptor,
};
use crate::profile::GateStats;
use crate::prompts::{self, tag, temperature};
use crate::seed::rng_for;

pub const CORPUS_SCHEMA: &str = "shoptalk/corpus";

/// Three-indicator quality assessment, each scored 0-2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewScore {
    pub content_quality: u8,
    pub logical_fluency: u8,
    pub user_consistency: u8,
    pub total: u8,
    pub pass: bool,
}

impl ReviewScore {
    pub fn new(content_quality: u8, logical_fluency: u8, user_consistency: u8, threshold: u8) -> Self {
        let total = content_quality + logical_fluency + user_consistency;
        Self {
            content_quality,
            logical_fluency,
            user_consistency,
            total,
            pass: total >= threshold,
        }
    }

    /// The fail-closed score attached when review itself failed.
    pub fn failed_closed() -> Self {
        Self {
            content_quality: 0,
            logical_fluency: 0,
            user_consistency: 0,
            total: 0,
            pass: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeConfig {
    /// Probability that a turn's rewrite prompt carries the colloquial
    /// instruction.
    pub colloquial_prob: f64,
    /// Review pass threshold over the 0-6 total.
    pub threshold: u8,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            colloquial_prob: 0.35,
            threshold: 5,
            seed: 0,
        }
    }
}

/// Outcome of rewriting one conversation. Only turn text ever differs
/// between `original` and `rewritten`; everything else is cloned.
#[derive(Debug, Clone)]
pub struct RewriteResult {
    pub original: Vec<Turn>,
    pub rewritten: Vec<Turn>,
    /// Indices of turns reverted by the supervisor.
    pub reverted: Vec<usize>,
    /// Indices of turns whose prompt carried the colloquial instruction.
    pub colloquial: Vec<usize>,
    /// True when a gateway failure kept the whole conversation original.
    pub skipped: bool,
}

impl RewriteResult {
    pub fn turns_rewritten(&self) -> usize {
        self.rewritten
            .iter()
            .zip(&self.original)
            .filter(|(r, o)| r.text != o.text)
            .count()
    }
}

fn rewrite_one_turn(
    turn: &Turn,
    gateway: &Gateway,
    colloquial: bool,
) -> Result<Option<String>, GatewayError> {
    let speaker = match turn.speaker {
        Speaker::User => "customer",
        Speaker::Assistant => "assistant",
    };
    let request = ChatRequest::new(
        tag::REWRITE_TURN,
        vec![ChatMessage::user(prompts::rewrite_turn(
            speaker, &turn.text, colloquial,
        ))],
    )
    .with_temperature(temperature::REWRITE);
    let rewritten = gateway.complete(&request)?.text.trim().to_string();
    if rewritten.is_empty() {
        return Ok(None);
    }

    let supervise = ChatRequest::new(
        tag::REWRITE_SUPERVISE,
        vec![ChatMessage::user(prompts::rewrite_supervise(
            &turn.text, &rewritten,
        ))],
    )
    .with_temperature(temperature::SUPERVISE);
    let schema = SchemaDescriptor::new(&[("consistent", FieldKind::Bool)]);
    let verdict = gateway.complete_json(&supervise, &schema)?;
    if verdict["consistent"].as_bool().unwrap_or(false) {
        Ok(Some(rewritten))
    } else {
        Ok(None)
    }
}

/// Rewrite a conversation's turn texts under supervision. Structural fields
/// are never touched; supervision failures revert individual turns; any
/// gateway error keeps the whole conversation original (conversations are
/// never dropped at this stage).
pub fn rewrite(
    conversation: &Conversation,
    gateway: &Gateway,
    config: &OptimizeConfig,
    rng: &mut ChaCha8Rng,
) -> RewriteResult {
    let original = conversation.turns.clone();
    let mut rewritten = conversation.turns.clone();
    let mut reverted = Vec::new();
    let mut colloquial = Vec::new();

    // draw colloquial flags up front so RNG consumption is independent of
    // gateway outcomes
    let flags: Vec<bool> = original
        .iter()
        .map(|_| rng.gen::<f64>() < config.colloquial_prob)
        .collect();

    for (i, turn) in original.iter().enumerate() {
        if flags[i] {
            colloquial.push(i);
        }
        match rewrite_one_turn(turn, gateway, flags[i]) {
            Ok(Some(text)) => rewritten[i].text = text,
            Ok(None) => reverted.push(i),
            Err(err) => {
                log::warn!(
                    "rewrite of {} failed ({err}); keeping original text",
                    conversation.conversation_id
                );
                return RewriteResult {
                    rewritten: original.clone(),
                    original,
                    reverted: Vec::new(),
                    colloquial,
                    skipped: true,
                };
            }
        }
    }

    RewriteResult {
        original,
        rewritten,
        reverted,
        colloquial,
        skipped: false,
    }
}

/// Apply a rewrite to the conversation it came from.
pub fn apply_rewrite(conversation: &Conversation, result: &RewriteResult) -> Conversation {
    let mut out = conversation.clone();
    out.turns = result.rewritten.clone();
    out
}

/// Score one conversation on the three indicators. Structured-output
/// failure fails closed: the conversation gets a zero, non-passing score.
pub fn review(conversation: &Conversation, gateway: &Gateway, threshold: u8) -> ReviewScore {
    let request = ChatRequest::new(
        tag::REVIEW_SCORE,
        vec![ChatMessage::user(prompts::review_conversation(
            &conversation.render(),
        ))],
    )
    .with_temperature(temperature::SUPERVISE);
    let schema = SchemaDescriptor::new(&[
        ("content_quality", FieldKind::Int),
        ("logical_fluency", FieldKind::Int),
        ("user_consistency", FieldKind::Int),
    ]);
    match gateway.complete_json(&request, &schema) {
        Ok(value) => {
            let score = |key: &str| -> Option<u8> {
                let v = value[key].as_u64()?;
                (v <= 2).then_some(v as u8)
            };
            match (
                score("content_quality"),
                score("logical_fluency"),
                score("user_consistency"),
            ) {
                (Some(c), Some(l), Some(u)) => ReviewScore::new(c, l, u, threshold),
                _ => {
                    log::warn!(
                        "review of {} returned out-of-range scores; failing closed",
                        conversation.conversation_id
                    );
                    ReviewScore::failed_closed()
                }
            }
        }
        Err(err) => {
            log::warn!(
                "review of {} failed ({err}); failing closed",
                conversation.conversation_id
            );
            ReviewScore::failed_closed()
        }
    }
}

/// Gate report for the optimization stage.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OptimizeStats {
    /// Per-turn supervision outcomes across the batch.
    pub rewrite_gate: GateStats,
    /// Whole-conversation review outcomes.
    pub review_gate: GateStats,
    pub conversations_skipped_by_rewriter: u64,
}

/// Rewrite, review, and filter a corpus. Conversations are processed
/// independently in parallel; per-conversation RNG streams derive from the
/// config seed and conversation id.
pub fn optimize_corpus(
    conversations: Vec<Conversation>,
    gateway: &Gateway,
    config: &OptimizeConfig,
    rewrite_enabled: bool,
) -> (Vec<Conversation>, OptimizeStats) {
    let processed: Vec<(Conversation, RewriteResult)> = conversations
        .par_iter()
        .map(|conversation| {
            let result = if rewrite_enabled {
                let mut rng = rng_for(
                    config.seed,
                    &format!("rewrite|{}", conversation.conversation_id),
                );
                rewrite(conversation, gateway, config, &mut rng)
            } else {
                RewriteResult {
                    original: conversation.turns.clone(),
                    rewritten: conversation.turns.clone(),
                    reverted: Vec::new(),
                    colloquial: Vec::new(),
                    skipped: false,
                }
            };
            let mut updated = apply_rewrite(conversation, &result);
            let score = review(&updated, gateway, config.threshold);
            updated.review = Some(score);
            (updated, result)
        })
        .collect();

    let mut stats = OptimizeStats {
        rewrite_gate: GateStats::new("rewrite_consistency"),
        review_gate: GateStats::new("review"),
        ..OptimizeStats::default()
    };
    let mut retained = Vec::new();
    for (conversation, result) in processed {
        if rewrite_enabled && !result.skipped {
            for i in 0..result.original.len() {
                stats.rewrite_gate.record(!result.reverted.contains(&i));
            }
        }
        if result.skipped {
            stats.conversations_skipped_by_rewriter += 1;
        }
        let pass = conversation.review.map(|r| r.pass).unwrap_or(false);
        stats.review_gate.record(pass);
        if pass {
            retained.push(conversation);
        }
    }
    (retained, stats)
}

/// Keep only conversations with a passing review. The independent predicate
/// filter for callers that already reviewed.
pub fn filter_corpus(
    conversations: Vec<Conversation>,
    threshold: u8,
) -> (Vec<Conversation>, GateStats) {
    let mut gate = GateStats::new("review");
    let retained = conversations
        .into_iter()
        .filter(|c| {
            let pass = c
                .review
                .map(|r| r.pass && r.total >= threshold)
                .unwrap_or(false);
            gate.record(pass);
            pass
        })
        .collect();
    (retained, gate)
}
