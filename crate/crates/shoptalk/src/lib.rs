//! Shoptalk synthesizes multimodal conversational-recommendation corpora from
//! a real product catalog.
//!
//! The pipeline runs in three stages, each backed by model calls through a
//! provider [`gateway`]:
//!
//! 1. [`profile`] — expand real-world purchase scenarios, match them with
//!    generated users and catalog products, and write scenario-grounded user
//!    profiles with purchase backstories.
//! 2. [`dialogue`] — simulate one multimodal conversation per profile with a
//!    manager/user/rec-assistant state machine over the [`catalog`] retrieval
//!    backend.
//! 3. [`optimize`] — rewrite conversations for lexical diversity under
//!    consistency supervision, then score and filter them.
//!
//! The [`metrics`] module carries the measurement kit (distinct-n, BLEU,
//! ROUGE, recall@n/MRR@n, corpus statistics, an LLM-judge runner), and
//! [`pipeline`] orchestrates the stages with resumable on-disk artifacts.
//!
//! Every model call goes through the gateway, which ships a deterministic
//! scripted mock provider, so the whole pipeline runs and tests offline.

pub mod catalog;
pub mod dialogue;
pub mod gateway;
pub mod jsonl;
pub mod metrics;
pub mod optimize;
pub mod pipeline;
pub mod profile;
pub mod prompts;
pub mod seed;
