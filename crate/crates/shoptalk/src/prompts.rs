//! Stage tags and prompt templates for every agent in the pipeline.
//!
//! Tags serve three jobs at once: they route requests to per-stage providers,
//! they key cost accounting, and they select mock-script entries. Keep them
//! stable; mock scripts reference them verbatim.

/// Stage tags, grouped by pipeline phase.
pub mod tag {
    pub const CATALOG_SUMMARIZE: &str = "catalog.summarize";
    pub const CATALOG_RERANK: &str = "catalog.rerank";

    pub const SCENARIO_EXPAND: &str = "scenario.expand";
    pub const PROFILE_USER: &str = "profile.user";
    pub const PROFILE_SCREEN: &str = "profile.screen";
    pub const PROFILE_BACKSTORY: &str = "profile.backstory";
    pub const PROFILE_ASSEMBLE: &str = "profile.assemble";

    pub const OPEN_OUTFIT: &str = "open.outfit";
    pub const OPEN_COMPAT: &str = "open.compat";
    pub const USER_OPEN: &str = "user.open";
    pub const ASSISTANT_OPEN: &str = "assistant.open";
    pub const USER_CHITCHAT: &str = "user.chitchat";
    pub const ASSISTANT_CHITCHAT: &str = "assistant.chitchat";
    pub const QUERIER_INTERESTS: &str = "querier.interests";
    pub const QUERIER_CLARIFY: &str = "querier.clarify";
    pub const ASSISTANT_RECOMMEND: &str = "assistant.recommend";
    pub const ASSISTANT_PROVIDE_TARGET: &str = "assistant.provide_target";
    pub const USER_REACT: &str = "user.react";
    pub const USER_ACCEPT: &str = "user.accept";

    pub const REWRITE_TURN: &str = "rewrite.turn";
    pub const REWRITE_SUPERVISE: &str = "rewrite.supervise";
    pub const REVIEW_SCORE: &str = "review.score";

    pub const EVAL_QUERY: &str = "eval.query";
    pub const JUDGE_SCORE: &str = "judge.score";
}

/// Default temperatures per stage family. Role-playing agents run cold for
/// stable instruction following; the rewriter runs hot to diversify phrasing;
/// its supervisor runs cold again.
pub mod temperature {
    pub const ROLE_PLAY: f64 = 0.1;
    pub const REWRITE: f64 = 0.85;
    pub const SUPERVISE: f64 = 0.1;
}

pub fn summarize_product(title: &str, description: &str) -> String {
    format!(
        "Summarize this product for a retrieval database. Keep only fundamental and visual \
         attributes (type, material, color, cut, fit, notable details). Drop marketing language, \
         redundant phrasing, and shipping or pricing noise. Reply with the summary only.\n\n\
         Title: {title}\nDescription: {description}"
    )
}

pub fn expand_scenarios(exemplars: &[String], batch: usize, round: u64) -> String {
    let mut prompt = String::from(
        "You collect short real-world situations that make a person shop for clothing, shoes, \
         or accessories. Here are some existing scenarios:\n",
    );
    for exemplar in exemplars {
        prompt.push_str("- ");
        prompt.push_str(exemplar);
        prompt.push('\n');
    }
    prompt.push_str(&format!(
        "\nWrite {batch} new scenarios unlike the ones above, each one or two sentences about a \
         concrete situation (occasions, athletic needs, special dates, gifts, weather, travel, \
         work). Round {round}. Reply as JSON: {{\"scenarios\": [\"...\"]}}"
    ));
    prompt
}

pub fn basic_user(nonce: u64) -> String {
    format!(
        "Invent shopper #{nonce} for a clothing store study. Reply as JSON: \
         {{\"age\": <integer 13-100>, \"gender\": \"...\", \"occupation\": \"...\", \
         \"notes\": \"one sentence of extra demographic detail\"}}"
    )
}

pub fn screen_triple(
    age: u32,
    gender: &str,
    occupation: &str,
    scenario: &str,
    product_summary: &str,
) -> String {
    format!(
        "Judge whether this (user, scenario, product) combination is rational.\n\
         User: {age}-year-old {gender} {occupation}.\nScenario: {scenario}\n\
         Product: {product_summary}\nThe product image is attached.\n\
         Assess two things: does the product suit this user, and does it suit this scenario? \
         Reply as JSON: {{\"user_product_match\": <bool>, \"scenario_product_match\": <bool>, \
         \"rationale\": \"...\"}}"
    )
}

pub fn backstory(
    age: u32,
    gender: &str,
    occupation: &str,
    product_summary: &str,
    scenario: &str,
) -> String {
    format!(
        "Write a short purchase backstory (2-3 sentences, first person) explaining why this \
         user wants this product right now. Ground it in the scenario.\n\
         User: {age}-year-old {gender} {occupation}.\nProduct: {product_summary}\n\
         Scenario: {scenario}"
    )
}

pub fn assemble_profile(backstory: &str, scenario: &str, product_summary: &str) -> String {
    format!(
        "Extract the user's requirements from this purchase context.\n\
         Backstory: {backstory}\nScenario: {scenario}\nTarget product: {product_summary}\n\
         Scenario requirements are needs driven by the situation; target requirements are \
         desired features of the item itself, including visual attributes. Reply as JSON: \
         {{\"scenario_requirements\": [\"...\"], \"target_requirements\": [\"...\"]}}"
    )
}

pub fn outfit_description(product_summary: &str, scenario: &str) -> String {
    format!(
        "A shopper wants this target item for the scenario below and already owns a piece to \
         wear with it. Describe one plausible owned item that would pair with the target \
         (a matching-item description usable as a search query). Reply with the description only.\n\
         Target: {product_summary}\nScenario: {scenario}"
    )
}

pub fn outfit_compat(owned_summary: &str, target_summary: &str, scenario: &str) -> String {
    format!(
        "Can this owned item coordinate with the target item while fitting the scenario?\n\
         Owned item: {owned_summary}\nTarget item: {target_summary}\nScenario: {scenario}\n\
         The owned item's image is attached. Reply as JSON: {{\"compatible\": <bool>, \
         \"reason\": \"...\"}}"
    )
}

pub fn user_open(scenario: &str, requirements: &[String], outfit_summary: Option<&str>) -> String {
    let reqs = requirements.join("; ");
    match outfit_summary {
        Some(owned) => format!(
            "You are a shopper opening a chat with a shopping assistant. Scenario: {scenario}. \
             Your needs: {reqs}. You already own this item and want something to match it: \
             {owned} (image attached). Greet the assistant, state your situation and needs, and \
             ask for something that pairs with your item. Reply with your message only."
        ),
        None => format!(
            "You are a shopper opening a chat with a shopping assistant. Scenario: {scenario}. \
             Your needs: {reqs}. Greet the assistant and state your situation and needs. Reply \
             with your message only."
        ),
    }
}

pub fn assistant_open(user_message: &str) -> String {
    format!(
        "You are a shopping assistant. The customer opened with:\n{user_message}\n\
         Greet them warmly, acknowledge their situation, and confirm you can help. Do not \
         recommend a product yet. Reply with your message only."
    )
}

pub fn user_chitchat(context: &str, nudge: bool) -> String {
    if nudge {
        format!(
            "You are the shopper in this conversation:\n{context}\n\
             Briefly ask the assistant what they would suggest for you. Reply with your message \
             only."
        )
    } else {
        format!(
            "You are the shopper in this conversation:\n{context}\n\
             Make a short piece of casual small talk related to your situation (not a product \
             request). Reply with your message only."
        )
    }
}

pub fn assistant_chitchat(context: &str) -> String {
    format!(
        "You are the shopping assistant in this conversation:\n{context}\n\
         Respond to the customer's last message with engaging, supportive small talk. No product \
         recommendation. Reply with your message only."
    )
}

pub fn querier_interests(context: &str) -> String {
    format!(
        "Read this shopping conversation and craft the user's current interests as a short \
         list.\n{context}\nReply as JSON: {{\"interests\": [\"...\"]}}"
    )
}

pub fn querier_clarify(interests: &[String]) -> String {
    format!(
        "Rewrite these vague shopper interests as concrete catalog attribute language \
         (materials, colors, cuts, categories). Example: a need for quick-drying clothing \
         becomes polyester or modal fabrics.\nInterests: {}\nReply as JSON: \
         {{\"clarified\": [\"...\"]}}",
        interests.join("; ")
    )
}

pub fn rerank(candidates: &[(String, String)], interest: &str) -> String {
    let mut prompt = format!(
        "A shopper's interests: {interest}\nCandidate products (images attached in order):\n"
    );
    for (id, summary) in candidates {
        prompt.push_str(&format!("- id {id}: {summary}\n"));
    }
    prompt.push_str(
        "Pick the single best-matched product. Reply as JSON: {\"product_id\": \"...\"}",
    );
    prompt
}

pub fn assistant_recommend(context: &str, summary: &str, selling_points: &[String]) -> String {
    format!(
        "You are the shopping assistant in this conversation:\n{context}\n\
         Recommend this product: {summary} (image attached). The customer cares about: {}. \
         Highlight how the product's look and attributes fit those needs as your selling \
         points. Reply with your message only.",
        selling_points.join("; ")
    )
}

pub fn assistant_provide_target(context: &str, summary: &str) -> String {
    format!(
        "You are the shopping assistant in this conversation:\n{context}\n\
         Present this final product, which matches everything the customer asked for: {summary} \
         (image attached). Reply with your message only."
    )
}

pub fn user_react(
    requirements: &[String],
    product_summary: &str,
) -> String {
    format!(
        "You are the shopper. Your target requirements: {}.\nThe assistant recommended: \
         {product_summary} (image attached). Compare the product's visual and textual details \
         against each requirement. If anything falls short, reject it, quoting one violated \
         requirement verbatim in your reply. If it matches, accept with appreciation. Reply as \
         JSON: {{\"accept\": <bool>, \"violated_requirement\": \"the quoted requirement or empty\", \
         \"response\": \"what you say to the assistant\"}}",
        requirements.join("; ")
    )
}

pub fn user_accept(context: &str, product_summary: &str) -> String {
    format!(
        "You are the shopper in this conversation:\n{context}\n\
         The assistant's latest suggestion is exactly what you wanted: {product_summary}. \
         Accept it with appropriate appreciation. Reply with your message only."
    )
}

pub fn rewrite_turn(speaker: &str, text: &str, colloquial: bool) -> String {
    let style = if colloquial {
        " Use colloquial expressions so it reads like everyday speech."
    } else {
        ""
    };
    format!(
        "Rewrite this {speaker} message with different sentence structure and wording while \
         keeping the meaning and every product attribute exactly intact.{style}\n\
         Message: {text}\nReply with the rewritten message only."
    )
}

pub fn rewrite_supervise(original: &str, rewritten: &str) -> String {
    format!(
        "Compare the two messages. The rewrite must keep the original meaning and leave every \
         product attribute (colors, materials, sizes, names) unchanged.\nOriginal: {original}\n\
         Rewrite: {rewritten}\nReply as JSON: {{\"consistent\": <bool>}}"
    )
}

pub fn review_conversation(rendered: &str) -> String {
    format!(
        "Review this shopping conversation on three indicators, each scored 0-2: content \
         quality, logical fluency, and user consistency.\n{rendered}\nReply as JSON: \
         {{\"content_quality\": <0-2>, \"logical_fluency\": <0-2>, \"user_consistency\": <0-2>}}"
    )
}

pub fn eval_query(context: &str) -> String {
    format!(
        "Given this shopping conversation so far, write a concise retrieval query describing \
         the product that should be recommended next.\n{context}\nReply with the query only."
    )
}

pub fn judge_conversation(rendered: &str, round: u32) -> String {
    format!(
        "Score this shopping conversation 0-2 on five dimensions: natural (fluent, human-like), \
         logical (responses follow from context), informative (rich relevant detail), \
         pc_correlation (products fit the user's scenario), it_correspondence (text matches the \
         attached images). Scoring round {round}.\n{rendered}\nReply as JSON: \
         {{\"natural\": <0-2>, \"logical\": <0-2>, \"informative\": <0-2>, \
         \"pc_correlation\": <0-2>, \"it_correspondence\": <0-2>}}"
    )
}
