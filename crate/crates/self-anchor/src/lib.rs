//! Anchored decoding for structured reasoning.
//!
//! The engine prompts a model to answer as a JSON object of plan steps and
//! their reasoning, recognises that structure while it streams, and steers
//! the model's attention toward the question and the plan step currently
//! being reasoned about. Steering is simulated with logit arithmetic: each
//! token is chosen from `omega * logits(context) + (1 - omega) *
//! logits(context with anchors masked)`, and `omega` is re-derived at every
//! step boundary from the previous step's chosen-token confidence.
//!
//! The crate is backend-agnostic: anything that can tokenize, detokenize,
//! and return next-token logits works. A deterministic table-driven stub
//! backend makes exact desk-scale tests possible; a JSON-over-HTTP client
//! talks to real model servers. An evaluation harness with prompt templates
//! for several baseline methods, answer extraction, scoring, and analytics
//! (accuracy, chain length, task complexity, performance gains, throughput)
//! rounds out the toolkit.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --example anchored_generation
//! cargo run --example steer_logits
//! cargo run --example stream_segmenter
//! cargo run --example evaluate_dataset
//! cargo run --example analyze_results
//! ```
//!
//! or the `anchor` binary (`anchor run`, `anchor eval`, `anchor analyze`,
//! `anchor ablate-means`).

pub mod backend;
pub mod cli;
pub mod error;
pub mod eval;
pub mod orchestrator;
pub mod prompt;
pub mod segment;
pub mod steering;

pub use backend::{Backend, BackendDescriptor, RemoteBackend, RemoteConfig, StubBackend, StubFixture, StubRule};
pub use error::{Error, Result};
pub use orchestrator::{
    current_anchors, generate, step_strength, AnchorState, GenerationOutput, Phase, StepRecord,
    Trace, TraceStatus,
};
pub use prompt::{assemble_prompt, PromptParts, PromptTemplate, QUESTION_SLOT};
pub use segment::{CharSpan, SegmentEvent, StreamSegmenter};
pub use steering::{
    aggregate_confidence, combine_logits, effective_strength, mask_anchor_tokens, select_token,
    AnchorMode, AnchorSet, Budget, ConfidenceWindow, LogitVector, MeanKind, SelectionPolicy,
    SteeringConfig, TokenId, TokenSelector, TokenSpan,
};
