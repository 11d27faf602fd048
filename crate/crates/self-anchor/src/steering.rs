//! Pure numeric core of anchored decoding.
//!
//! Everything in this module is a pure function over immutable inputs:
//! logit combination, anchor-token masking, confidence aggregation,
//! strength modulation, and token selection. All arithmetic is `f64`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token id in a backend's vocabulary.
pub type TokenId = u32;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Per-vocabulary-entry scores at one decoding position.
///
/// Values are unitless log-odds; construction rejects NaN and infinities so
/// downstream arithmetic never has to re-check.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    values: Vec<f64>,
}

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::contract("logit vector must be non-empty"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::contract(format!("non-finite logit {bad}")));
        }
        Ok(LogitVector { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Softmax at temperature 1, numerically stabilised by max subtraction.
    pub fn softmax(&self) -> Vec<f64> {
        let max = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.values.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }

    /// Index of the maximum value, ties broken to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate().skip(1) {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// Half-open token range `[start, end)` over a token buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(Error::contract(format!("token span {start}..{end} is inverted")));
        }
        Ok(TokenSpan { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, index: usize) -> bool {
        index >= self.start && index < self.end
    }
}

/// The set of token spans the model's attention is steered to.
///
/// Spans are kept sorted by start and pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnchorSet {
    spans: Vec<TokenSpan>,
}

impl AnchorSet {
    pub fn empty() -> Self {
        AnchorSet { spans: Vec::new() }
    }

    /// Builds an anchor set from spans, dropping empty ones and sorting.
    /// Overlapping spans are a contract violation.
    pub fn new(mut spans: Vec<TokenSpan>) -> Result<Self> {
        spans.retain(|s| !s.is_empty());
        spans.sort();
        for pair in spans.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::contract(format!(
                    "anchor spans overlap: {}..{} and {}..{}",
                    pair[0].start, pair[0].end, pair[1].start, pair[1].end
                )));
            }
        }
        Ok(AnchorSet { spans })
    }

    pub fn spans(&self) -> &[TokenSpan] {
        &self.spans
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.spans.iter().any(|s| s.contains(index))
    }

    /// Total number of tokens covered.
    pub fn token_count(&self) -> usize {
        self.spans.iter().map(TokenSpan::len).sum()
    }

    /// Largest `end` over all spans, 0 when empty.
    pub fn max_end(&self) -> usize {
        self.spans.iter().map(|s| s.end).max().unwrap_or(0)
    }
}

/// Chosen-token probabilities of one completed step.
///
/// An empty window is representable; aggregation refuses it so the caller
/// decides the fallback.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfidenceWindow {
    probs: Vec<f64>,
}

impl ConfidenceWindow {
    pub fn empty() -> Self {
        ConfidenceWindow { probs: Vec::new() }
    }

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        for p in &probs {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(Error::contract(format!("probability {p} outside (0, 1]")));
            }
        }
        Ok(ConfidenceWindow { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Aggregation used to turn a step's token probabilities into one confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanKind {
    Harmonic,
    Geometric,
    Arithmetic,
}

impl MeanKind {
    pub const ALL: [MeanKind; 3] = [MeanKind::Harmonic, MeanKind::Geometric, MeanKind::Arithmetic];

    pub fn name(&self) -> &'static str {
        match self {
            MeanKind::Harmonic => "harmonic",
            MeanKind::Geometric => "geometric",
            MeanKind::Arithmetic => "arithmetic",
        }
    }
}

impl std::str::FromStr for MeanKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(MeanKind::Harmonic),
            "geometric" => Ok(MeanKind::Geometric),
            "arithmetic" => Ok(MeanKind::Arithmetic),
            other => Err(Error::Config(format!("unknown mean kind `{other}`"))),
        }
    }
}

/// Which context spans are anchored during reasoning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// Question plus the plan step currently being reasoned about.
    QuestionPlusCurrentPlan,
    /// Question plus every plan step seen so far.
    QuestionPlusAllPlans,
    /// Question only, in every phase.
    QuestionOnly,
    /// Steering bypassed entirely.
    None,
}

impl std::str::FromStr for AnchorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "current" => Ok(AnchorMode::QuestionPlusCurrentPlan),
            "all-prior" => Ok(AnchorMode::QuestionPlusAllPlans),
            "question-only" => Ok(AnchorMode::QuestionOnly),
            "none" => Ok(AnchorMode::None),
            other => Err(Error::Config(format!("unknown anchor mode `{other}`"))),
        }
    }
}

impl AnchorMode {
    pub fn cli_name(&self) -> &'static str {
        match self {
            AnchorMode::QuestionPlusCurrentPlan => "current",
            AnchorMode::QuestionPlusAllPlans => "all-prior",
            AnchorMode::QuestionOnly => "question-only",
            AnchorMode::None => "none",
        }
    }
}

/// How the next token is chosen from the (steered) logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    Greedy,
    /// Sample from `softmax(logits / tau)`; the reported probability is
    /// still the temperature-1 softmax of the chosen token.
    Temperature { tau: f64 },
}

/// Generation budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_steps: usize,
    pub max_new_tokens: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_steps: 32, max_new_tokens: 2048 }
    }
}

/// Full steering configuration for one generation session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringConfig {
    pub omega_base: f64,
    pub mean_kind: MeanKind,
    pub anchor_mode: AnchorMode,
    /// `None` means "use the backend-declared mask token".
    pub mask_token: Option<TokenId>,
    pub selection: SelectionPolicy,
    pub seed: u64,
    pub budget: Budget,
}

impl Default for SteeringConfig {
    fn default() -> Self {
        SteeringConfig {
            omega_base: 1.5,
            mean_kind: MeanKind::Harmonic,
            anchor_mode: AnchorMode::QuestionPlusCurrentPlan,
            mask_token: None,
            selection: SelectionPolicy::Greedy,
            seed: 0,
            budget: Budget::default(),
        }
    }
}

impl SteeringConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.omega_base.is_finite() || self.omega_base < 0.0 {
            return Err(Error::Config(format!(
                "omega_base must be finite and >= 0, got {}",
                self.omega_base
            )));
        }
        if let SelectionPolicy::Temperature { tau } = self.selection {
            if !tau.is_finite() || tau <= 0.0 {
                return Err(Error::Config(format!("temperature must be finite and > 0, got {tau}")));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Linear combination of original and masked-context logits:
/// `omega * original + (1 - omega) * masked`, elementwise.
///
/// `omega == 1` short-circuits to a value-identical copy of `original`, so
/// baseline-equivalence checks can demand bit-exact equality.
pub fn combine_logits(original: &LogitVector, masked: &LogitVector, omega: f64) -> Result<LogitVector> {
    if original.len() != masked.len() {
        return Err(Error::contract(format!(
            "logit length mismatch: {} vs {}",
            original.len(),
            masked.len()
        )));
    }
    if !omega.is_finite() {
        return Err(Error::contract(format!("non-finite omega {omega}")));
    }
    if omega == 1.0 {
        return Ok(original.clone());
    }
    let values = original
        .values
        .iter()
        .zip(&masked.values)
        .map(|(o, m)| omega * o + (1.0 - omega) * m)
        .collect();
    LogitVector::new(values)
}

/// Replaces every token inside the anchor spans with `mask`, preserving
/// sequence length so the two contexts stay position-aligned.
pub fn mask_anchor_tokens(tokens: &[TokenId], anchors: &AnchorSet, mask: TokenId) -> Result<Vec<TokenId>> {
    if anchors.max_end() > tokens.len() {
        return Err(Error::contract(format!(
            "anchor span ends at {} but buffer has {} tokens",
            anchors.max_end(),
            tokens.len()
        )));
    }
    let mut out = tokens.to_vec();
    for span in anchors.spans() {
        for slot in &mut out[span.start..span.end] {
            *slot = mask;
        }
    }
    Ok(out)
}

/// Aggregates a confidence window into a single probability.
pub fn aggregate_confidence(window: &ConfidenceWindow, kind: MeanKind) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let n = window.len() as f64;
    let value = match kind {
        MeanKind::Harmonic => n / window.probs().iter().map(|p| 1.0 / p).sum::<f64>(),
        // exp(mean(ln p)) is the stable form of (prod p)^(1/n)
        MeanKind::Geometric => (window.probs().iter().map(|p| p.ln()).sum::<f64>() / n).exp(),
        MeanKind::Arithmetic => window.probs().iter().sum::<f64>() / n,
    };
    Ok(value.min(1.0))
}

/// Step-level steering strength from the base strength and the previous
/// step's confidence: `1 + (omega_base - 1) * (1 - p_avg)`.
///
/// Full confidence recovers unsteered decoding; zero confidence applies the
/// full base strength.
pub fn effective_strength(omega_base: f64, p_avg: f64) -> Result<f64> {
    if !omega_base.is_finite() || omega_base < 0.0 {
        return Err(Error::contract(format!("omega_base out of range: {omega_base}")));
    }
    if !(0.0..=1.0).contains(&p_avg) {
        return Err(Error::contract(format!("p_avg outside [0, 1]: {p_avg}")));
    }
    // exact endpoints: full confidence disables steering, zero confidence
    // applies the full base strength
    if p_avg == 0.0 {
        return Ok(omega_base);
    }
    if p_avg == 1.0 {
        return Ok(1.0);
    }
    Ok(1.0 + (omega_base - 1.0) * (1.0 - p_avg))
}

/// Stateful token selector for one generation session.
///
/// Greedy selection is a pure function of the logits; temperature selection
/// draws from a ChaCha stream seeded once per session, so identical inputs
/// and seeds yield identical outputs.
#[derive(Debug, Clone)]
pub struct TokenSelector {
    policy: SelectionPolicy,
    rng: ChaCha8Rng,
}

impl TokenSelector {
    pub fn new(policy: SelectionPolicy, seed: u64) -> Self {
        use rand::SeedableRng;
        TokenSelector { policy, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Returns the chosen token id and its temperature-1 softmax probability.
    pub fn select(&mut self, logits: &LogitVector) -> Result<(TokenId, f64)> {
        let probs = logits.softmax();
        match self.policy {
            SelectionPolicy::Greedy => {
                let idx = logits.argmax();
                Ok((idx as TokenId, probs[idx]))
            }
            SelectionPolicy::Temperature { tau } => {
                if !tau.is_finite() || tau <= 0.0 {
                    return Err(Error::contract(format!("temperature must be > 0, got {tau}")));
                }
                let scaled = LogitVector::new(logits.values().iter().map(|v| v / tau).collect())?;
                let sampling = scaled.softmax();
                let draw: f64 = self.rng.gen_range(0.0..1.0);
                let mut acc = 0.0;
                let mut idx = sampling.len() - 1;
                for (i, p) in sampling.iter().enumerate() {
                    acc += p;
                    if draw < acc {
                        idx = i;
                        break;
                    }
                }
                Ok((idx as TokenId, probs[idx]))
            }
        }
    }
}

/// One-shot greedy selection; see [`TokenSelector`] for sampling.
pub fn select_token(logits: &LogitVector) -> Result<(TokenId, f64)> {
    TokenSelector::new(SelectionPolicy::Greedy, 0).select(logits)
}
