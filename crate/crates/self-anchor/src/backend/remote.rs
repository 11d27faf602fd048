//! JSON-over-HTTP client for a model server exposing raw logits.
//!
//! Wire protocol (paths are part of the contract):
//!   POST /v1/tokenize    {"text": string}    -> {"tokens": [int]}
//!   POST /v1/detokenize  {"tokens": [int]}   -> {"text": string}
//!   POST /v1/logits      {"tokens": [int]}   -> {"logits": [number]}
//!   GET  /v1/descriptor                      -> {"vocab_size": int,
//!                                               "mask_token_id": int|null,
//!                                               "eos_token_id": int,
//!                                               "name": string}

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendDescriptor};
use crate::error::{Error, Result};
use crate::steering::{LogitVector, TokenId};

/// Connection settings for a remote backend.
#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub connect_timeout: Duration,
    pub read_timeout: Duration,
    /// Sent as `Authorization: Bearer <token>` when present.
    pub bearer_token: Option<String>,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        RemoteConfig {
            base_url: base_url.into(),
            connect_timeout: Duration::from_secs(30),
            read_timeout: Duration::from_secs(30),
            bearer_token: None,
        }
    }
}

#[derive(Serialize)]
struct TokenizeRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct TokenizeResponse {
    tokens: Vec<TokenId>,
}

#[derive(Serialize)]
struct TokensRequest<'a> {
    tokens: &'a [TokenId],
}

#[derive(Deserialize)]
struct DetokenizeResponse {
    text: String,
}

#[derive(Deserialize)]
struct LogitsResponse {
    logits: Vec<f64>,
}

/// Stateless HTTP client; the descriptor is fetched once at connect time.
pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    descriptor: BackendDescriptor,
}

impl RemoteBackend {
    /// Connects and fetches the descriptor; an unreachable server is a
    /// backend error.
    pub fn connect(config: RemoteConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .connect_timeout(config.connect_timeout)
            .timeout(config.read_timeout)
            .build()
            .map_err(|e| Error::Backend(format!("cannot build HTTP client: {e}")))?;
        let url = format!("{}/v1/descriptor", config.base_url.trim_end_matches('/'));
        let mut req = client.get(&url);
        if let Some(token) = &config.bearer_token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| Error::Backend(format!("descriptor request to {url} failed: {e}")))?;
        if !resp.status().is_success() {
            return Err(Error::Backend(format!("descriptor request returned {}", resp.status())));
        }
        let descriptor: BackendDescriptor = resp
            .json()
            .map_err(|e| Error::Backend(format!("invalid descriptor payload: {e}")))?;
        if descriptor.vocab_size == 0 {
            return Err(Error::Backend("server reports an empty vocabulary".into()));
        }
        Ok(RemoteBackend { config, client, descriptor })
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp> {
        let url = format!("{}{path}", self.config.base_url.trim_end_matches('/'));
        let mut req = self.client.post(&url).json(body);
        if let Some(token) = &self.config.bearer_token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| Error::Backend(format!("request to {url} failed: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            let detail = resp.text().unwrap_or_default();
            return Err(Error::Backend(format!("{url} returned {status}: {detail}")));
        }
        resp.json()
            .map_err(|e| Error::Backend(format!("invalid response from {url}: {e}")))
    }
}

impl Backend for RemoteBackend {
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        let resp: TokenizeResponse = self.post("/v1/tokenize", &TokenizeRequest { text })?;
        Ok(resp.tokens)
    }

    fn detokenize(&self, tokens: &[TokenId]) -> Result<String> {
        let resp: DetokenizeResponse = self.post("/v1/detokenize", &TokensRequest { tokens })?;
        Ok(resp.text)
    }

    fn logits(&self, context: &[TokenId]) -> Result<LogitVector> {
        let resp: LogitsResponse = self.post("/v1/logits", &TokensRequest { tokens: context })?;
        if resp.logits.len() != self.descriptor.vocab_size {
            return Err(Error::Backend(format!(
                "server returned {} logits, descriptor declares vocab_size {}",
                resp.logits.len(),
                self.descriptor.vocab_size
            )));
        }
        LogitVector::new(resp.logits)
            .map_err(|e| Error::Backend(format!("server returned invalid logits: {e}")))
    }

    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }
}
