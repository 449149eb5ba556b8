//! Stage 1: scenario-grounded user profiles.
//!
//! Expands seed purchase scenarios with BLEU-deduplicated self-instruct
//! rounds, generates basic users, screens (user, scenario, product) triples
//! for rationality, writes deduplicated purchase backstories, and assembles
//! the full profiles that drive the user simulator.

mod generate;
mod scenario;

pub use generate::{
    assemble_profile, generate_backstory, generate_basic_user, generate_profiles, screen_triple,
    ProfileGenConfig, ProfileGenOutcome,
};
pub use scenario::{expand_scenarios, ExpandConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::GatewayError;

pub const SCENARIOS_SCHEMA: &str = "shoptalk/scenarios";
pub const PROFILES_SCHEMA: &str = "shoptalk/profiles";

pub const MIN_AGE: u32 = 13;
pub const MAX_AGE: u32 = 100;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("scenario expansion stalled: {0} consecutive duplicate candidates")]
    ExpansionStalled(usize),
    #[error("no valid basic user after {0} attempts")]
    UserGenerationFailed(u32),
    #[error("backstory deduplication exhausted after {0} attempts")]
    DedupExhausted(u32),
    #[error("profile assembly produced an empty requirement list")]
    EmptyRequirements,
    #[error("product {0} is missing its summary or image")]
    IncompleteProduct(String),
    #[error("could not generate {got} of {want} requested profiles before the attempt budget ran out")]
    BudgetExhausted { want: usize, got: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Catalog(#[from] crate::catalog::CatalogError),
}

/// A short real-world purchase situation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicUserInfo {
    pub age: u32,
    pub gender: String,
    pub occupation: String,
    #[serde(default)]
    pub notes: String,
}

impl BasicUserInfo {
    pub fn is_valid(&self) -> bool {
        (MIN_AGE..=MAX_AGE).contains(&self.age)
            && !self.gender.trim().is_empty()
            && !self.occupation.trim().is_empty()
    }
}

/// Rationality verdict over a (user, scenario, product) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleVerdict {
    pub user_product_match: bool,
    pub scenario_product_match: bool,
    pub rationale: String,
}

impl TripleVerdict {
    /// Accepted iff both matches hold.
    pub fn accepted(&self) -> bool {
        self.user_product_match && self.scenario_product_match
    }
}

/// Scenario-grounded persona driving one simulated conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub profile_id: String,
    pub basic: BasicUserInfo,
    pub scenario_id: String,
    pub target_product_id: String,
    pub backstory: String,
    pub scenario_requirements: Vec<String>,
    pub target_requirements: Vec<String>,
}

/// Per-screening accounting: generated = rejected + retained, always.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GateStats {
    pub name: String,
    pub generated: u64,
    pub rejected: u64,
    pub retained: u64,
}

impl GateStats {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    pub fn record(&mut self, retained: bool) {
        self.generated += 1;
        if retained {
            self.retained += 1;
        } else {
            self.rejected += 1;
        }
    }

    pub fn reconciles(&self) -> bool {
        self.generated == self.rejected + self.retained
    }

    pub fn pass_rate(&self) -> f64 {
        if self.generated == 0 {
            0.0
        } else {
            self.retained as f64 / self.generated as f64
        }
    }
}

/// Max pairwise BLEU-4 of `candidate` against everything retained so far
/// stays below `tau`, or the candidate is a duplicate.
pub fn is_duplicate(candidate: &str, retained: &[String], tau: f64) -> bool {
    retained
        .iter()
        .any(|kept| crate::metrics::bleu_text(candidate, kept) >= tau)
}
