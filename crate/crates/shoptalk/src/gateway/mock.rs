//! Deterministic scripted mock provider.
//!
//! A [`MockScript`] maps stage tags to an ordered reply list, optional
//! fingerprint-keyed replies, and a fallback used once the list is consumed.
//! Fallback randomness (weighted replies, `{{pick:..}}`) is seeded from the
//! script seed plus the request fingerprint, so responses do not depend on
//! call interleaving across threads.
//!
//! Template placeholders:
//! - `{{n}}` — 1-based per-tag call index (sequential contexts only)
//! - `{{h}}` — short hash of the request fingerprint (parallel-safe variety)
//! - `{{pick:a|b|c}}` — seeded choice among options
//! - `{{user_snippet:K}}` — last `K` words of the final user message
//!
//! Script entries beginning with `!` inject failures instead of replying:
//! `!rate_limited`, `!transport`, `!auth`, `!malformed`, and `!empty` (an
//! empty reply).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::rng_for;

use super::{ChatRequest, ChatResponse, GatewayError, Provider, Role, Usage};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockScript {
    pub seed: u64,
    pub tags: BTreeMap<String, TagScript>,
}

impl MockScript {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            tags: BTreeMap::new(),
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>, script: TagScript) -> Self {
        self.tags.insert(tag.into(), script);
        self
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let raw = std::fs::read_to_string(path).map_err(|e| {
            GatewayError::Provider(format!("cannot read mock script {}: {e}", path.display()))
        })?;
        serde_json::from_str(&raw).map_err(|e| {
            GatewayError::Provider(format!("invalid mock script {}: {e}", path.display()))
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TagScript {
    /// Ordered replies consumed one per call.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<String>,
    /// Replies keyed by request fingerprint; take precedence and do not
    /// consume the ordered list.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub keyed: BTreeMap<String, String>,
    /// Used once the ordered list is exhausted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<Fallback>,
}

impl TagScript {
    pub fn replies<S: Into<String>>(items: impl IntoIterator<Item = S>) -> Self {
        Self {
            script: items.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn template(template: impl Into<String>) -> Self {
        Self {
            fallback: Some(Fallback::Template {
                template: template.into(),
            }),
            ..Self::default()
        }
    }

    pub fn weighted(options: impl IntoIterator<Item = (f64, String)>) -> Self {
        Self {
            fallback: Some(Fallback::Weighted {
                weighted: options
                    .into_iter()
                    .map(|(weight, text)| WeightedReply { weight, text })
                    .collect(),
            }),
            ..Self::default()
        }
    }

    pub fn with_keyed(mut self, fingerprint: impl Into<String>, reply: impl Into<String>) -> Self {
        self.keyed.insert(fingerprint.into(), reply.into());
        self
    }

    pub fn with_fallback_template(mut self, template: impl Into<String>) -> Self {
        self.fallback = Some(Fallback::Template {
            template: template.into(),
        });
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Fallback {
    Template { template: String },
    Weighted { weighted: Vec<WeightedReply> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedReply {
    pub weight: f64,
    pub text: String,
}

#[derive(Debug, Default)]
struct TagState {
    cursor: usize,
    calls: u64,
}

#[derive(Debug, Default)]
struct InstrumentState {
    in_flight: usize,
    max_in_flight: usize,
    total_calls: u64,
    per_tag_calls: BTreeMap<String, u64>,
    requests: Vec<RecordedRequest>,
}

/// Snapshot of what the mock observed, for tests.
#[derive(Debug, Clone, Default)]
pub struct MockInstrument {
    pub max_in_flight: usize,
    pub total_calls: u64,
    pub per_tag_calls: BTreeMap<String, u64>,
    pub requests: Vec<RecordedRequest>,
}

#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub tag: String,
    pub fingerprint: String,
    pub text: String,
}

pub struct MockProvider {
    id: String,
    script: MockScript,
    state: Mutex<BTreeMap<String, TagState>>,
    instrument: Mutex<InstrumentState>,
    latency: Option<Duration>,
    record_requests: bool,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        Self {
            id: "mock".to_string(),
            script,
            state: Mutex::new(BTreeMap::new()),
            instrument: Mutex::new(InstrumentState::default()),
            latency: None,
            record_requests: false,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::new(MockScript::load(path)?))
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Artificial per-call latency, for exercising concurrency limits.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    /// Keep a copy of every request's text for later inspection.
    pub fn recording_requests(mut self) -> Self {
        self.record_requests = true;
        self
    }

    pub fn instrument(&self) -> MockInstrument {
        let state = self.instrument.lock().expect("instrument poisoned");
        MockInstrument {
            max_in_flight: state.max_in_flight,
            total_calls: state.total_calls,
            per_tag_calls: state.per_tag_calls.clone(),
            requests: state.requests.clone(),
        }
    }

    fn enter(&self, request: &ChatRequest) {
        let mut state = self.instrument.lock().expect("instrument poisoned");
        state.in_flight += 1;
        state.max_in_flight = state.max_in_flight.max(state.in_flight);
        state.total_calls += 1;
        *state.per_tag_calls.entry(request.tag.clone()).or_insert(0) += 1;
        if self.record_requests {
            state.requests.push(RecordedRequest {
                tag: request.tag.clone(),
                fingerprint: request.fingerprint(),
                text: request
                    .messages
                    .iter()
                    .map(|m| m.text_content())
                    .collect::<Vec<_>>()
                    .join("\n"),
            });
        }
    }

    fn exit(&self) {
        let mut state = self.instrument.lock().expect("instrument poisoned");
        state.in_flight -= 1;
    }

    fn resolve(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let tag_script = self
            .script
            .tags
            .get(&request.tag)
            .or_else(|| self.script.tags.get("*"))
            .ok_or_else(|| {
                GatewayError::Provider(format!("mock: no script for tag '{}'", request.tag))
            })?;

        let fingerprint = request.fingerprint();
        let call_index;
        {
            let mut state = self.state.lock().expect("mock state poisoned");
            let tag_state = state.entry(request.tag.clone()).or_default();
            tag_state.calls += 1;
            call_index = tag_state.calls;

            if let Some(reply) = tag_script.keyed.get(&fingerprint) {
                return self.render(reply, request, &fingerprint, call_index);
            }
            if tag_state.cursor < tag_script.script.len() {
                let entry = tag_script.script[tag_state.cursor].clone();
                tag_state.cursor += 1;
                return self.render(&entry, request, &fingerprint, call_index);
            }
        }

        match &tag_script.fallback {
            Some(Fallback::Template { template }) => {
                self.render(template, request, &fingerprint, call_index)
            }
            Some(Fallback::Weighted { weighted }) => {
                if weighted.is_empty() {
                    return Err(GatewayError::Provider(format!(
                        "mock: empty weighted fallback for tag '{}'",
                        request.tag
                    )));
                }
                let total: f64 = weighted.iter().map(|w| w.weight).sum();
                let mut rng = rng_for(
                    self.script.seed,
                    &format!("{}|{}|weighted", request.tag, fingerprint),
                );
                let mut draw = rng.gen::<f64>() * total;
                let mut chosen = &weighted[weighted.len() - 1].text;
                for option in weighted {
                    if draw < option.weight {
                        chosen = &option.text;
                        break;
                    }
                    draw -= option.weight;
                }
                let text = chosen.clone();
                self.render(&text, request, &fingerprint, call_index)
            }
            None => Err(GatewayError::Provider(format!(
                "mock: script exhausted for tag '{}'",
                request.tag
            ))),
        }
    }

    fn render(
        &self,
        entry: &str,
        request: &ChatRequest,
        fingerprint: &str,
        call_index: u64,
    ) -> Result<String, GatewayError> {
        match entry {
            "!rate_limited" => return Err(GatewayError::RateLimited("mock injected".into())),
            "!transport" => return Err(GatewayError::Transport("mock injected".into())),
            "!auth" => return Err(GatewayError::Auth("mock injected".into())),
            "!malformed" => {
                return Err(GatewayError::MalformedResponse("mock injected".into()))
            }
            "!empty" => return Ok(String::new()),
            _ => {}
        }

        let mut out = String::with_capacity(entry.len());
        let mut rest = entry;
        let mut pick_counter = 0u32;
        while let Some(open) = rest.find("{{") {
            out.push_str(&rest[..open]);
            let after = &rest[open + 2..];
            let Some(close) = after.find("}}") else {
                out.push_str(&rest[open..]);
                rest = "";
                break;
            };
            let token = &after[..close];
            self.substitute(token, request, fingerprint, call_index, &mut pick_counter, &mut out);
            rest = &after[close + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }

    fn substitute(
        &self,
        token: &str,
        request: &ChatRequest,
        fingerprint: &str,
        call_index: u64,
        pick_counter: &mut u32,
        out: &mut String,
    ) {
        if token == "n" {
            out.push_str(&call_index.to_string());
        } else if token == "h" {
            out.push_str(&fingerprint[..6.min(fingerprint.len())]);
        } else if let Some(options) = token.strip_prefix("pick:") {
            let choices: Vec<&str> = options.split('|').collect();
            if choices.is_empty() {
                return;
            }
            *pick_counter += 1;
            let mut rng = rng_for(
                self.script.seed,
                &format!("{}|{}|pick{}", request.tag, fingerprint, pick_counter),
            );
            out.push_str(choices[rng.gen_range(0..choices.len())]);
        } else if let Some(count) = token.strip_prefix("user_snippet:") {
            let k: usize = count.parse().unwrap_or(8);
            let last_user = request
                .messages
                .iter()
                .rev()
                .find(|m| m.role == Role::User)
                .map(|m| m.text_content())
                .unwrap_or_default();
            let words: Vec<&str> = last_user.split_whitespace().collect();
            let tail = &words[words.len().saturating_sub(k)..];
            out.push_str(&tail.join(" "));
        } else {
            // unknown placeholder passes through verbatim
            out.push_str("{{");
            out.push_str(token);
            out.push_str("}}");
        }
    }
}

impl Provider for MockProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.enter(request);
        if let Some(latency) = self.latency {
            std::thread::sleep(latency);
        }
        let result = self.resolve(request);
        self.exit();
        let text = result?;
        let usage = Usage {
            prompt_tokens: request.prompt_token_estimate(),
            completion_tokens: text.split_whitespace().count() as u64,
            image_count: request.image_count(),
        };
        Ok(ChatResponse {
            text,
            usage,
            provider_id: self.id.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatMessage;

    fn request(tag: &str, text: &str) -> ChatRequest {
        ChatRequest::new(tag, vec![ChatMessage::user(text)])
    }

    #[test]
    fn script_entries_consumed_in_order() {
        let script = MockScript::new(1).with_tag("t", TagScript::replies(["one", "two"]));
        let mock = MockProvider::new(script);
        assert_eq!(mock.complete(&request("t", "x")).unwrap().text, "one");
        assert_eq!(mock.complete(&request("t", "x")).unwrap().text, "two");
        assert!(mock.complete(&request("t", "x")).is_err());
    }

    #[test]
    fn keyed_reply_matches_fingerprint() {
        let req = request("t", "what color?");
        let fp = req.fingerprint();
        let script = MockScript::new(1)
            .with_tag("t", TagScript::template("fallback").with_keyed(fp, "yes"));
        let mock = MockProvider::new(script);
        assert_eq!(mock.complete(&req).unwrap().text, "yes");
        assert_eq!(mock.complete(&request("t", "other")).unwrap().text, "fallback");
    }

    #[test]
    fn template_placeholders_fill_in() {
        let script = MockScript::new(1).with_tag(
            "t",
            TagScript::template("call {{n}} hash {{h}} tail: {{user_snippet:2}}"),
        );
        let mock = MockProvider::new(script);
        let text = mock
            .complete(&request("t", "need a red cotton tee"))
            .unwrap()
            .text;
        assert!(text.starts_with("call 1 hash "));
        assert!(text.ends_with("tail: cotton tee"));
    }

    #[test]
    fn pick_is_deterministic_per_request() {
        let script =
            MockScript::new(7).with_tag("t", TagScript::template("{{pick:red|green|blue}}"));
        let mock = MockProvider::new(script.clone());
        let a = mock.complete(&request("t", "same")).unwrap().text;
        let b = mock.complete(&request("t", "same")).unwrap().text;
        assert_eq!(a, b);
        let fresh = MockProvider::new(script);
        assert_eq!(fresh.complete(&request("t", "same")).unwrap().text, a);
    }

    #[test]
    fn weighted_fallback_rate_tracks_weights() {
        let script = MockScript::new(99).with_tag(
            "gate",
            TagScript::weighted([(0.3, "yes".to_string()), (0.7, "no".to_string())]),
        );
        let mock = MockProvider::new(script);
        let mut yes = 0;
        let n = 2000;
        for i in 0..n {
            let text = mock.complete(&request("gate", &format!("case {i}"))).unwrap().text;
            if text == "yes" {
                yes += 1;
            }
        }
        let rate = yes as f64 / n as f64;
        assert!((rate - 0.3).abs() < 0.04, "rate {rate}");
    }

    #[test]
    fn failure_directives_map_to_errors() {
        let script = MockScript::new(1).with_tag(
            "t",
            TagScript::replies(["!rate_limited", "!auth", "!malformed", "!empty"]),
        );
        let mock = MockProvider::new(script);
        assert!(matches!(
            mock.complete(&request("t", "x")),
            Err(GatewayError::RateLimited(_))
        ));
        assert!(matches!(
            mock.complete(&request("t", "x")),
            Err(GatewayError::Auth(_))
        ));
        assert!(matches!(
            mock.complete(&request("t", "x")),
            Err(GatewayError::MalformedResponse(_))
        ));
        assert_eq!(mock.complete(&request("t", "x")).unwrap().text, "");
    }

    #[test]
    fn identical_seed_and_sequence_replays_identically() {
        let script = MockScript::new(5)
            .with_tag("a", TagScript::template("{{pick:x|y|z}} {{n}}"))
            .with_tag("b", TagScript::weighted([(0.5, "l".into()), (0.5, "r".into())]));
        let run = |script: MockScript| {
            let mock = MockProvider::new(script);
            let mut out = Vec::new();
            for i in 0..20 {
                let tag = if i % 2 == 0 { "a" } else { "b" };
                out.push(mock.complete(&request(tag, &format!("m{i}"))).unwrap().text);
            }
            out
        };
        assert_eq!(run(script.clone()), run(script));
    }

    #[test]
    fn star_tag_is_default_route() {
        let script = MockScript::new(1).with_tag("*", TagScript::template("anything"));
        let mock = MockProvider::new(script);
        assert_eq!(mock.complete(&request("whatever", "x")).unwrap().text, "anything");
    }
}
