//! User generation, triple screening, backstories, and profile assembly.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Embedder, Product, VectorStore};
use crate::gateway::{ChatMessage, ChatRequest, FieldKind, Gateway, SchemaDescriptor};
use crate::prompts::{self, tag, temperature};
use crate::seed::rng_for;

use super::{
    is_duplicate, BasicUserInfo, GateStats, ProfileError, Scenario, TripleVerdict, UserProfile,
    MAX_AGE, MIN_AGE,
};

const USER_GEN_ATTEMPTS: u32 = 5;

/// Generate one basic user. Out-of-range or incomplete replies are thrown
/// back and regenerated with a fresh attempt marker, up to a small budget.
/// The `nonce` varies the prompt so independent calls draw distinct users.
pub fn generate_basic_user(gateway: &Gateway, nonce: u64) -> Result<BasicUserInfo, ProfileError> {
    let schema = SchemaDescriptor::new(&[
        ("age", FieldKind::Int),
        ("gender", FieldKind::Str),
        ("occupation", FieldKind::Str),
        ("notes", FieldKind::Str),
    ]);
    for attempt in 0..USER_GEN_ATTEMPTS {
        let prompt = prompts::basic_user(nonce * USER_GEN_ATTEMPTS as u64 + attempt as u64);
        let request = ChatRequest::new(tag::PROFILE_USER, vec![ChatMessage::user(prompt)])
            .with_temperature(temperature::ROLE_PLAY);
        let value = gateway.complete_json(&request, &schema)?;
        let user = BasicUserInfo {
            age: value["age"].as_u64().unwrap_or(0) as u32,
            gender: value["gender"].as_str().unwrap_or_default().to_string(),
            occupation: value["occupation"].as_str().unwrap_or_default().to_string(),
            notes: value["notes"].as_str().unwrap_or_default().to_string(),
        };
        if user.is_valid() {
            return Ok(user);
        }
        log::debug!(
            "basic user attempt {attempt} rejected (age {} outside [{MIN_AGE}, {MAX_AGE}] or empty fields)",
            user.age
        );
    }
    Err(ProfileError::UserGenerationFailed(USER_GEN_ATTEMPTS))
}

/// Rationality screen over a (user, scenario, product) triple. The judge
/// sees the product summary and image and scores both match directions.
pub fn screen_triple(
    user: &BasicUserInfo,
    scenario: &Scenario,
    product: &Product,
    gateway: &Gateway,
) -> Result<TripleVerdict, ProfileError> {
    let summary = product
        .summary
        .as_deref()
        .ok_or_else(|| ProfileError::IncompleteProduct(product.product_id.clone()))?;
    let prompt = prompts::screen_triple(
        user.age,
        &user.gender,
        &user.occupation,
        &scenario.text,
        summary,
    );
    let request = ChatRequest::new(
        tag::PROFILE_SCREEN,
        vec![ChatMessage::user(prompt).with_image(product.image_ref.clone())],
    )
    .with_temperature(temperature::ROLE_PLAY);
    let schema = SchemaDescriptor::new(&[
        ("user_product_match", FieldKind::Bool),
        ("scenario_product_match", FieldKind::Bool),
        ("rationale", FieldKind::Str),
    ]);
    let value = gateway.complete_json(&request, &schema)?;
    Ok(TripleVerdict {
        user_product_match: value["user_product_match"].as_bool().unwrap_or(false),
        scenario_product_match: value["scenario_product_match"].as_bool().unwrap_or(false),
        rationale: value["rationale"].as_str().unwrap_or_default().to_string(),
    })
}

/// True when the backstory visibly grounds itself in the scenario: some
/// scenario content word (4+ chars) appears in it.
fn mentions_scenario(backstory: &str, scenario_text: &str) -> bool {
    let haystack = backstory.to_lowercase();
    crate::metrics::tokenize(scenario_text)
        .iter()
        .any(|tok| tok.chars().count() >= 4 && haystack.contains(tok.as_str()))
}

/// Generate a purchase backstory for an accepted triple, deduplicated by
/// BLEU-4 against all prior backstories.
pub fn generate_backstory(
    user: &BasicUserInfo,
    scenario: &Scenario,
    product: &Product,
    gateway: &Gateway,
    tau: f64,
    prior: &[String],
    max_attempts: u32,
) -> Result<String, ProfileError> {
    let summary = product
        .summary
        .as_deref()
        .ok_or_else(|| ProfileError::IncompleteProduct(product.product_id.clone()))?;
    for attempt in 0..max_attempts {
        let mut prompt = prompts::backstory(
            user.age,
            &user.gender,
            &user.occupation,
            summary,
            &scenario.text,
        );
        if attempt > 0 {
            prompt.push_str(&format!(
                "\nYour previous story was too close to an existing one; tell it differently \
                 (variation {attempt})."
            ));
        }
        let request = ChatRequest::new(tag::PROFILE_BACKSTORY, vec![ChatMessage::user(prompt)])
            .with_temperature(temperature::ROLE_PLAY);
        let text = gateway.complete(&request)?.text.trim().to_string();
        if text.is_empty() || !mentions_scenario(&text, &scenario.text) {
            continue;
        }
        if !is_duplicate(&text, prior, tau) {
            return Ok(text);
        }
    }
    Err(ProfileError::DedupExhausted(max_attempts))
}

/// Extract requirement lists and assemble the final profile. Both lists must
/// come back non-empty.
pub fn assemble_profile(
    user: BasicUserInfo,
    scenario: &Scenario,
    product: &Product,
    backstory: String,
    gateway: &Gateway,
    profile_id: String,
) -> Result<UserProfile, ProfileError> {
    let summary = product
        .summary
        .as_deref()
        .ok_or_else(|| ProfileError::IncompleteProduct(product.product_id.clone()))?;
    let prompt = prompts::assemble_profile(&backstory, &scenario.text, summary);
    let request = ChatRequest::new(tag::PROFILE_ASSEMBLE, vec![ChatMessage::user(prompt)])
        .with_temperature(temperature::ROLE_PLAY);
    let schema = SchemaDescriptor::new(&[
        ("scenario_requirements", FieldKind::StrArray),
        ("target_requirements", FieldKind::StrArray),
    ]);
    let value = gateway.complete_json(&request, &schema)?;
    let as_list = |key: &str| -> Vec<String> {
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
    };
    let scenario_requirements = as_list("scenario_requirements");
    let target_requirements = as_list("target_requirements");
    if scenario_requirements.is_empty() || target_requirements.is_empty() {
        return Err(ProfileError::EmptyRequirements);
    }
    Ok(UserProfile {
        profile_id,
        basic: user,
        scenario_id: scenario.scenario_id.clone(),
        target_product_id: product.product_id.clone(),
        backstory,
        scenario_requirements,
        target_requirements,
    })
}

#[derive(Debug, Clone)]
pub struct ProfileGenConfig {
    /// How many accepted profiles to produce.
    pub count: usize,
    /// BLEU-4 dedup threshold for backstories.
    pub tau: f64,
    /// Candidate products sampled from this many top hits of a scenario
    /// search, keeping triples plausible before the LLM screen.
    pub candidate_pool: usize,
    pub backstory_attempts: u32,
    /// Attempt budget as a multiple of `count`.
    pub attempt_factor: usize,
    pub seed: u64,
}

impl Default for ProfileGenConfig {
    fn default() -> Self {
        Self {
            count: 20,
            tau: 0.6,
            candidate_pool: 20,
            backstory_attempts: 5,
            attempt_factor: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileGenOutcome {
    pub profiles: Vec<UserProfile>,
    pub triple_gate: GateStats,
    pub backstory_gate: GateStats,
}

/// Candidate attempt evaluated in parallel: user plus screened triple.
struct ScreenedAttempt {
    user: BasicUserInfo,
    scenario_idx: usize,
    product_id: String,
    verdict: TripleVerdict,
}

/// Produce `count` accepted profiles. Screening parallelizes across a batch
/// of candidate triples; backstory dedup and assembly run serially in
/// attempt order so the retained set is deterministic.
pub fn generate_profiles(
    scenarios: &[Scenario],
    catalog: &Catalog,
    store: &VectorStore,
    embedder: &dyn Embedder,
    gateway: &Gateway,
    config: &ProfileGenConfig,
) -> Result<ProfileGenOutcome, ProfileError> {
    assert!(!scenarios.is_empty(), "need at least one scenario");
    let mut triple_gate = GateStats::new("triple_screen");
    let mut backstory_gate = GateStats::new("backstory_dedup");
    let mut profiles: Vec<UserProfile> = Vec::with_capacity(config.count);
    let mut backstories: Vec<String> = Vec::new();

    let budget = config.count * config.attempt_factor.max(1);
    let batch = 16usize;
    let mut nonce = 0u64;

    'outer: while profiles.len() < config.count && (nonce as usize) < budget {
        let batch_nonces: Vec<u64> = (0..batch as u64).map(|i| nonce + i).collect();
        nonce += batch as u64;

        let attempts: Vec<Result<ScreenedAttempt, ProfileError>> = batch_nonces
            .par_iter()
            .map(|&n| {
                let mut rng = rng_for(config.seed, &format!("profile-attempt-{n}"));
                let scenario_idx = rng.gen_range(0..scenarios.len());
                let scenario = &scenarios[scenario_idx];
                let user = generate_basic_user(gateway, n)?;
                let hits = store.search(&scenario.text, embedder, config.candidate_pool)?;
                let hit = hits
                    .choose(&mut rng)
                    .expect("search returns at least one hit for non-empty store");
                let product = catalog
                    .get(&hit.product_id)
                    .expect("hit ids resolve against the catalog");
                let verdict = screen_triple(&user, scenario, product, gateway)?;
                Ok(ScreenedAttempt {
                    user,
                    scenario_idx,
                    product_id: hit.product_id.clone(),
                    verdict,
                })
            })
            .collect();

        // serial section: dedup set insertions stay in attempt order
        for attempt in attempts {
            let attempt = attempt?;
            triple_gate.record(attempt.verdict.accepted());
            if !attempt.verdict.accepted() {
                continue;
            }
            let scenario = &scenarios[attempt.scenario_idx];
            let product = catalog.get(&attempt.product_id).expect("checked above");
            let backstory = match generate_backstory(
                &attempt.user,
                scenario,
                product,
                gateway,
                config.tau,
                &backstories,
                config.backstory_attempts,
            ) {
                Ok(text) => {
                    backstory_gate.record(true);
                    text
                }
                Err(ProfileError::DedupExhausted(_)) => {
                    backstory_gate.record(false);
                    continue;
                }
                Err(other) => return Err(other),
            };
            backstories.push(backstory.clone());
            let profile_id = format!("u{:05}", profiles.len() + 1);
            let profile = assemble_profile(
                attempt.user,
                scenario,
                product,
                backstory,
                gateway,
                profile_id,
            )?;
            profiles.push(profile);
            if profiles.len() >= config.count {
                break 'outer;
            }
        }
    }

    if profiles.len() < config.count {
        return Err(ProfileError::BudgetExhausted {
            want: config.count,
            got: profiles.len(),
        });
    }
    Ok(ProfileGenOutcome {
        profiles,
        triple_gate,
        backstory_gate,
    })
}
