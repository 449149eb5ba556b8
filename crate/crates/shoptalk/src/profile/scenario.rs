//! Self-instruct scenario expansion with BLEU deduplication.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::gateway::{ChatMessage, ChatRequest, FieldKind, Gateway, SchemaDescriptor};
use crate::prompts::{self, tag, temperature};

use super::{is_duplicate, GateStats, ProfileError, Scenario};

#[derive(Debug, Clone)]
pub struct ExpandConfig {
    pub target_count: usize,
    /// BLEU-4 dedup threshold; a candidate scoring >= tau against any
    /// retained scenario is dropped.
    pub tau: f64,
    /// Consecutive duplicate candidates tolerated before giving up.
    pub stall_limit: usize,
    /// How many new scenarios each prompt asks for.
    pub batch_size: usize,
}

impl Default for ExpandConfig {
    fn default() -> Self {
        Self {
            target_count: 100,
            tau: 0.6,
            stall_limit: 20,
            batch_size: 8,
        }
    }
}

/// Grow the scenario pool from seeds until `target_count` is reached. Seeds
/// are always retained; every retained pair stays below the BLEU threshold.
pub fn expand_scenarios(
    seeds: &[Scenario],
    config: &ExpandConfig,
    gateway: &Gateway,
    rng: &mut impl Rng,
) -> Result<(Vec<Scenario>, GateStats), ProfileError> {
    assert!(!seeds.is_empty(), "seed scenarios must be non-empty");
    assert!(
        config.tau > 0.0 && config.tau < 1.0,
        "dedup threshold must lie in (0, 1)"
    );

    let mut retained: Vec<Scenario> = seeds.to_vec();
    let mut retained_texts: Vec<String> = seeds.iter().map(|s| s.text.clone()).collect();
    let mut gate = GateStats::new("scenario_dedup");
    let mut consecutive_duplicates = 0usize;
    let mut round = 0u64;
    let mut next_id = 0usize;

    let schema = SchemaDescriptor::new(&[("scenarios", FieldKind::StrArray)]);

    while retained.len() < config.target_count {
        round += 1;
        let exemplars: Vec<String> = retained_texts
            .choose_multiple(rng, 3.min(retained_texts.len()))
            .cloned()
            .collect();
        let prompt = prompts::expand_scenarios(&exemplars, config.batch_size, round);
        let request = ChatRequest::new(tag::SCENARIO_EXPAND, vec![ChatMessage::user(prompt)])
            .with_temperature(temperature::ROLE_PLAY);
        let value = gateway.complete_json(&request, &schema)?;
        let candidates: Vec<String> = value["scenarios"]
            .as_array()
            .map(|items| {
                items
                    .iter()
                    .filter_map(|v| v.as_str())
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            })
            .unwrap_or_default();

        for candidate in candidates {
            if retained.len() >= config.target_count {
                break;
            }
            let duplicate = is_duplicate(&candidate, &retained_texts, config.tau);
            gate.record(!duplicate);
            if duplicate {
                consecutive_duplicates += 1;
                if consecutive_duplicates >= config.stall_limit {
                    return Err(ProfileError::ExpansionStalled(consecutive_duplicates));
                }
                continue;
            }
            consecutive_duplicates = 0;
            next_id += 1;
            retained.push(Scenario {
                scenario_id: format!("s{next_id:04}"),
                text: candidate.clone(),
            });
            retained_texts.push(candidate);
        }
    }

    Ok((retained, gate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockProvider, MockScript, TagScript};
    use crate::metrics::bleu_text;
    use crate::seed::rng_for;
    use std::sync::Arc;

    fn seeds() -> Vec<Scenario> {
        vec![
            Scenario {
                scenario_id: "seed-01".into(),
                text: "attending an important business conference next month".into(),
            },
            Scenario {
                scenario_id: "seed-02".into(),
                text: "training for a first marathon in rainy weather".into(),
            },
        ]
    }

    fn batch_reply(texts: &[&str]) -> String {
        serde_json::json!({ "scenarios": texts }).to_string()
    }

    #[test]
    fn exact_seed_copy_is_dropped() {
        let script = MockScript::new(1).with_tag(
            tag::SCENARIO_EXPAND,
            TagScript::replies([
                batch_reply(&[
                    "attending an important business conference next month",
                    "celebrating a silver wedding anniversary with a formal dinner",
                ]),
            ]),
        );
        let gateway = Gateway::new(Arc::new(MockProvider::new(script)));
        let config = ExpandConfig {
            target_count: 3,
            ..ExpandConfig::default()
        };
        let mut rng = rng_for(1, "test");
        let (out, gate) = expand_scenarios(&seeds(), &config, &gateway, &mut rng).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(gate.generated, 2);
        assert_eq!(gate.rejected, 1);
        // seeds sit at the front untouched
        assert_eq!(out[0].scenario_id, "seed-01");
        assert_eq!(out[1].scenario_id, "seed-02");
    }

    #[test]
    fn disjoint_vocabulary_candidate_is_retained() {
        let script = MockScript::new(1).with_tag(
            tag::SCENARIO_EXPAND,
            TagScript::replies([batch_reply(&["packing sandals before a tropical honeymoon"])]),
        );
        let gateway = Gateway::new(Arc::new(MockProvider::new(script)));
        let config = ExpandConfig {
            target_count: 3,
            ..ExpandConfig::default()
        };
        let mut rng = rng_for(1, "test");
        let (out, gate) = expand_scenarios(&seeds(), &config, &gateway, &mut rng).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(gate.rejected, 0);
    }

    #[test]
    fn retained_set_passes_pairwise_bleu_oracle() {
        // 30 candidates, 7 of which are near-copies of earlier ones
        let mut texts: Vec<String> = (0..23)
            .map(|i| {
                format!(
                    "scenario variant {i}: shopping for {} because of {}",
                    ["boots", "a coat", "gloves", "a dress", "a suit"][i % 5],
                    ["snow", "a gala", "a trip", "a gift", "sports"][(i * 2) % 5]
                )
            })
            .collect();
        for i in 0..7 {
            // near-copy: same words, one token tweaked at the end
            let mut copy = texts[i].clone();
            copy.push_str(" soon");
            texts.push(copy);
        }
        let replies: Vec<String> = texts
            .chunks(6)
            .map(|chunk| {
                let refs: Vec<&str> = chunk.iter().map(String::as_str).collect();
                batch_reply(&refs)
            })
            .collect();
        let script = MockScript::new(1)
            .with_tag(tag::SCENARIO_EXPAND, TagScript::replies(replies));
        let gateway = Gateway::new(Arc::new(MockProvider::new(script)));
        let tau = 0.6;
        let config = ExpandConfig {
            target_count: 25,
            tau,
            ..ExpandConfig::default()
        };
        let mut rng = rng_for(1, "test");
        let (out, gate) = expand_scenarios(&seeds(), &config, &gateway, &mut rng).unwrap();

        // oracle: exhaustive pairwise scan over the retained texts
        for (i, a) in out.iter().enumerate() {
            for b in out.iter().skip(i + 1) {
                let score = bleu_text(&a.text, &b.text).max(bleu_text(&b.text, &a.text));
                assert!(score < tau, "pair too similar: {:?} / {:?}", a.text, b.text);
            }
        }
        assert!(gate.reconciles());
        assert_eq!(out.len(), 25);
    }

    #[test]
    fn endless_duplicates_stall_out() {
        let script = MockScript::new(1).with_tag(
            tag::SCENARIO_EXPAND,
            TagScript::template(&batch_reply(&[
                "attending an important business conference next month",
            ])),
        );
        let gateway = Gateway::new(Arc::new(MockProvider::new(script)));
        let config = ExpandConfig {
            target_count: 10,
            stall_limit: 5,
            ..ExpandConfig::default()
        };
        let mut rng = rng_for(1, "test");
        let err = expand_scenarios(&seeds(), &config, &gateway, &mut rng).unwrap_err();
        assert!(matches!(err, ProfileError::ExpansionStalled(5)));
    }
}
