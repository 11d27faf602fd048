//! Uniform token-level model interface.
//!
//! Two implementations ship with the crate: a deterministic table-driven
//! [`StubBackend`] for exact tests and demos, and a [`RemoteBackend`] that
//! speaks a small JSON-over-HTTP wire protocol to a real model server.
//!
//! The logits endpoint is stateless: every request carries the full context.
//! Prefix caching is a server-side optimisation outside this contract.

mod remote;
mod stub;

pub use remote::{RemoteBackend, RemoteConfig};
pub use stub::{StubBackend, StubFixture, StubRule};

use crate::error::Result;
use crate::steering::{LogitVector, TokenId};

/// Static facts about a backend, stable for its lifetime.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BackendDescriptor {
    pub vocab_size: usize,
    #[serde(rename = "mask_token_id")]
    pub mask_token: Option<TokenId>,
    #[serde(rename = "eos_token_id")]
    pub eos_token: TokenId,
    pub name: String,
}

/// Token-level model interface.
///
/// Implementations must tolerate concurrent independent requests; there is
/// no session affinity.
pub trait Backend: Send + Sync {
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>>;

    fn detokenize(&self, tokens: &[TokenId]) -> Result<String>;

    /// Next-token logits for the full context; length always equals
    /// `descriptor().vocab_size`.
    fn logits(&self, context: &[TokenId]) -> Result<LogitVector>;

    fn descriptor(&self) -> &BackendDescriptor;
}
