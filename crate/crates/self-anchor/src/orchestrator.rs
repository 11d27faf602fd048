//! The anchored plan/reason generation loop.
//!
//! One session keeps two token buffers in lockstep: the original context and
//! a copy with the current anchor spans replaced by the mask token. Each
//! emitted token is chosen from a linear combination of the logits of both
//! contexts; the combination strength is re-derived at every step boundary
//! from the previous step's chosen-token probabilities.
//!
//! Anchor selection is automatic: the question span is always anchored, and
//! while a step's reasoning is being generated the corresponding plan span
//! (or all plan spans, depending on the configured mode) is anchored too.
//! Structural tokens between segments decode with the question anchor and
//! the current strength.

use std::time::Instant;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::prompt::{assemble_prompt, PromptParts, PromptTemplate};
use crate::segment::{CharSpan, SegmentEvent, StreamSegmenter};
use crate::steering::{
    aggregate_confidence, combine_logits, effective_strength, mask_anchor_tokens, AnchorMode,
    AnchorSet, ConfidenceWindow, SteeringConfig, TokenId, TokenSelector, TokenSpan,
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Where the session currently is inside the structured output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Preamble,
    PlanKey,
    ReasonValue,
    FinalAnswer,
    Done,
}

/// Terminal state of a generation session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    Answered,
    NoAnswer,
    Truncated,
    BackendError,
}

/// One completed plan, reason, or final-answer segment.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Step number, starting at 1; a plan and its reasoning share a number.
    pub index: usize,
    pub phase: Phase,
    /// Decoded text of the segment.
    pub text: String,
    /// Token range in the original buffer covered by the segment.
    pub token_span: TokenSpan,
    /// Temperature-1 softmax probabilities of the segment's chosen tokens.
    pub chosen_probs: ConfidenceWindow,
    /// Steering strength in effect while the segment was decoded.
    pub omega_used: f64,
}

#[derive(Serialize, Deserialize)]
struct StepRecordWire {
    index: usize,
    phase: Phase,
    text: String,
    token_start: usize,
    token_end: usize,
    probs: Vec<f64>,
    omega: f64,
}

impl Serialize for StepRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        StepRecordWire {
            index: self.index,
            phase: self.phase,
            text: self.text.clone(),
            token_start: self.token_span.start,
            token_end: self.token_span.end,
            probs: self.chosen_probs.probs().to_vec(),
            omega: self.omega_used,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StepRecord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = StepRecordWire::deserialize(deserializer)?;
        Ok(StepRecord {
            index: wire.index,
            phase: wire.phase,
            text: wire.text,
            token_span: TokenSpan::new(wire.token_start, wire.token_end)
                .map_err(D::Error::custom)?,
            chosen_probs: ConfidenceWindow::new(wire.probs).map_err(D::Error::custom)?,
            omega_used: wire.omega,
        })
    }
}

/// Serialized transcript of one generation session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub prompt: PromptParts,
    pub steps: Vec<StepRecord>,
    pub final_answer: Option<String>,
    pub status: TraceStatus,
    pub tokens_generated: usize,
    pub wall_seconds: f64,
    /// Number of logits requests issued.
    pub backend_calls: usize,
}

/// A completed session: the transcript plus the raw generated material,
/// which callers need for answer extraction and chain-length measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutput {
    pub trace: Trace,
    pub text: String,
    pub tokens: Vec<TokenId>,
}

// ---------------------------------------------------------------------------
// Anchor selection
// ---------------------------------------------------------------------------

/// The pieces of session state anchor selection depends on.
#[derive(Debug, Clone)]
pub struct AnchorState<'a> {
    pub question: TokenSpan,
    pub plan_spans: &'a [TokenSpan],
    pub phase: Phase,
}

/// Anchor set for the current phase under the configured mode.
pub fn current_anchors(state: &AnchorState<'_>, mode: AnchorMode) -> AnchorSet {
    if mode == AnchorMode::None {
        return AnchorSet::empty();
    }
    let mut spans = vec![state.question];
    if state.phase == Phase::ReasonValue {
        match mode {
            AnchorMode::QuestionPlusCurrentPlan => {
                if let Some(last) = state.plan_spans.last() {
                    spans.push(*last);
                }
            }
            AnchorMode::QuestionPlusAllPlans => spans.extend_from_slice(state.plan_spans),
            AnchorMode::QuestionOnly | AnchorMode::None => {}
        }
    }
    merge_spans(spans)
}

// Token spans can touch when one token bridges two segments; merge instead
// of rejecting.
fn merge_spans(mut spans: Vec<TokenSpan>) -> AnchorSet {
    spans.retain(|s| !s.is_empty());
    spans.sort();
    let mut merged: Vec<TokenSpan> = Vec::with_capacity(spans.len());
    for span in spans {
        match merged.last_mut() {
            Some(last) if span.start <= last.end => {
                if span.end > last.end {
                    last.end = span.end;
                }
            }
            _ => merged.push(span),
        }
    }
    AnchorSet::new(merged).expect("merged spans are disjoint")
}

/// Strength for the next step: the base strength when there is no completed
/// previous step (or its window is empty), otherwise the confidence-modulated
/// strength.
pub fn step_strength(previous: Option<&StepRecord>, config: &SteeringConfig) -> f64 {
    let window = match previous {
        Some(record) if !record.chosen_probs.is_empty() => &record.chosen_probs,
        _ => return config.omega_base,
    };
    match aggregate_confidence(window, config.mean_kind) {
        Ok(p_avg) => effective_strength(config.omega_base, p_avg).unwrap_or(config.omega_base),
        Err(_) => config.omega_base,
    }
}

// ---------------------------------------------------------------------------
// Generation loop
// ---------------------------------------------------------------------------

struct Session<'a> {
    backend: &'a dyn Backend,
    config: &'a SteeringConfig,
    mask: Option<TokenId>,
    question: TokenSpan,
    prompt_len: usize,

    original: Vec<TokenId>,
    masked: Vec<TokenId>,
    anchors: AnchorSet,

    selector: TokenSelector,
    segmenter: StreamSegmenter,
    phase: Phase,
    omega: f64,

    text: String,
    char_pos: usize,
    token_chars: Vec<(usize, usize)>,
    token_probs: Vec<f64>,

    steps: Vec<StepRecord>,
    plan_spans: Vec<TokenSpan>,
    plan_count: usize,
    final_answer: Option<String>,

    backend_calls: usize,
}

impl<'a> Session<'a> {
    fn steering_enabled(&self) -> bool {
        self.config.anchor_mode != AnchorMode::None
    }

    fn generated_count(&self) -> usize {
        self.original.len() - self.prompt_len
    }

    /// Token span (absolute indices) of the generated tokens whose text
    /// overlaps the character range.
    fn token_span_for(&self, span: CharSpan) -> TokenSpan {
        let mut start = None;
        let mut end = 0;
        for (i, (s, e)) in self.token_chars.iter().enumerate() {
            if *s < span.end && *e > span.start {
                if start.is_none() {
                    start = Some(i);
                }
                end = i + 1;
            }
        }
        match start {
            Some(s) => TokenSpan::new(self.prompt_len + s, self.prompt_len + end)
                .expect("overlap scan yields ordered bounds"),
            None => TokenSpan::new(0, 0).unwrap(),
        }
    }

    fn window_for(&self, span: TokenSpan) -> ConfidenceWindow {
        if span.is_empty() {
            return ConfidenceWindow::empty();
        }
        let probs: Vec<f64> = self.token_probs[span.start - self.prompt_len..span.end - self.prompt_len]
            .iter()
            .map(|p| p.clamp(f64::MIN_POSITIVE, 1.0))
            .collect();
        ConfidenceWindow::new(probs).expect("clamped probabilities are in (0, 1]")
    }

    /// Records a completed segment and re-derives the strength for the next
    /// step from its window. Returns false when the segment had no tokens.
    fn complete_segment(&mut self, phase: Phase, index: usize, span: CharSpan, text: String) -> bool {
        let token_span = self.token_span_for(span);
        if token_span.is_empty() {
            return false;
        }
        let record = StepRecord {
            index,
            phase,
            text,
            token_span,
            chosen_probs: self.window_for(token_span),
            omega_used: self.omega,
        };
        if self.steering_enabled() {
            self.omega = step_strength(Some(&record), self.config);
        }
        self.steps.push(record);
        true
    }

    fn refresh_anchors(&mut self) -> Result<()> {
        if !self.steering_enabled() {
            return Ok(());
        }
        let state = AnchorState {
            question: self.question,
            plan_spans: &self.plan_spans,
            phase: self.phase,
        };
        let next = current_anchors(&state, self.config.anchor_mode);
        if next != self.anchors {
            self.anchors = next;
            let mask = self.mask.expect("steering requires a mask token");
            self.masked = mask_anchor_tokens(&self.original, &self.anchors, mask)?;
        }
        Ok(())
    }
}

/// Runs one anchored generation session to completion.
///
/// Configuration problems (including a missing mask token while steering is
/// enabled) fail before any decoding. Backend failures during the loop yield
/// a partial trace with [`TraceStatus::BackendError`].
pub fn generate(
    parts: &PromptParts,
    template: &PromptTemplate,
    config: &SteeringConfig,
    backend: &dyn Backend,
) -> Result<GenerationOutput> {
    config.validate()?;
    let descriptor = backend.descriptor().clone();

    let steering = config.anchor_mode != AnchorMode::None;
    let mask = if steering {
        let mask = config.mask_token.or(descriptor.mask_token).ok_or_else(|| {
            Error::Config(
                "steering needs a mask token: the backend declares none and the config provides none"
                    .into(),
            )
        })?;
        if mask as usize >= descriptor.vocab_size {
            return Err(Error::Config(format!(
                "mask token {mask} out of range for vocab size {}",
                descriptor.vocab_size
            )));
        }
        Some(mask)
    } else {
        None
    };

    let started = Instant::now();
    let (prompt_tokens, question) = assemble_prompt(parts, template, backend)?;
    let prompt_len = prompt_tokens.len();

    let mut session = Session {
        backend,
        config,
        mask,
        question,
        prompt_len,
        original: prompt_tokens,
        masked: Vec::new(),
        anchors: AnchorSet::empty(),
        selector: TokenSelector::new(config.selection, config.seed),
        segmenter: StreamSegmenter::new(),
        phase: Phase::Preamble,
        // with steering bypassed the effective strength is identically 1
        omega: if steering { config.omega_base } else { 1.0 },
        text: String::new(),
        char_pos: 0,
        token_chars: Vec::new(),
        token_probs: Vec::new(),
        steps: Vec::new(),
        plan_spans: Vec::new(),
        plan_count: 0,
        final_answer: None,
        backend_calls: 0,
    };

    if steering {
        let state = AnchorState {
            question: session.question,
            plan_spans: &session.plan_spans,
            phase: session.phase,
        };
        session.anchors = current_anchors(&state, config.anchor_mode);
        session.masked =
            mask_anchor_tokens(&session.original, &session.anchors, mask.unwrap())?;
    }

    let status = run_loop(&mut session)?;

    let tokens = session.original[prompt_len..].to_vec();
    let trace = Trace {
        prompt: parts.clone(),
        steps: session.steps,
        final_answer: session.final_answer,
        status,
        tokens_generated: tokens.len(),
        wall_seconds: started.elapsed().as_secs_f64().max(1e-9),
        backend_calls: session.backend_calls,
    };

    Ok(GenerationOutput { trace, text: session.text, tokens })
}

fn run_loop(session: &mut Session<'_>) -> Result<TraceStatus> {
    let eos = session.backend.descriptor().eos_token;
    loop {
        if session.generated_count() >= session.config.budget.max_new_tokens {
            return Ok(TraceStatus::Truncated);
        }

        let original_logits = match session.backend.logits(&session.original) {
            Ok(v) => v,
            Err(Error::Backend(_)) | Err(Error::Tokenization(_)) => {
                return Ok(TraceStatus::BackendError)
            }
            Err(e) => return Err(e),
        };
        session.backend_calls += 1;

        let used = if session.steering_enabled()
            && !session.anchors.is_empty()
            && session.omega != 1.0
        {
            let masked_logits = match session.backend.logits(&session.masked) {
                Ok(v) => v,
                Err(Error::Backend(_)) | Err(Error::Tokenization(_)) => {
                    return Ok(TraceStatus::BackendError)
                }
                Err(e) => return Err(e),
            };
            session.backend_calls += 1;
            combine_logits(&original_logits, &masked_logits, session.omega)?
        } else {
            original_logits
        };

        let (token, prob) = session.selector.select(&used)?;

        session.original.push(token);
        if session.steering_enabled() {
            session.masked.push(token);
        }

        let piece = match session.backend.detokenize(&[token]) {
            Ok(p) => p,
            Err(Error::Backend(_)) => return Ok(TraceStatus::BackendError),
            Err(e) => return Err(e),
        };
        let start = session.char_pos;
        session.char_pos += piece.chars().count();
        session.token_chars.push((start, session.char_pos));
        session.token_probs.push(prob);
        session.text.push_str(&piece);

        let events = session.segmenter.feed(&piece);
        let mut terminal: Option<TraceStatus> = None;
        for event in events {
            match event {
                SegmentEvent::PlanKeyStart { .. } => session.phase = Phase::PlanKey,
                SegmentEvent::PlanKeyEnd { span, text } => {
                    let index = session.plan_count + 1;
                    if session.complete_segment(Phase::PlanKey, index, span, text) {
                        session.plan_count = index;
                        let token_span = session.steps.last().unwrap().token_span;
                        session.plan_spans.push(token_span);
                    }
                    session.phase = Phase::Preamble;
                    if session.plan_count > session.config.budget.max_steps {
                        terminal = Some(TraceStatus::Truncated);
                    }
                }
                SegmentEvent::ReasonValueStart { .. } => session.phase = Phase::ReasonValue,
                SegmentEvent::ReasonValueEnd { span, text } => {
                    let index = session.plan_count.max(1);
                    session.complete_segment(Phase::ReasonValue, index, span, text);
                    session.phase = Phase::Preamble;
                }
                SegmentEvent::FinalAnswerKeySeen => session.phase = Phase::FinalAnswer,
                SegmentEvent::FinalAnswerValueEnd { span, text } => {
                    session.complete_segment(Phase::FinalAnswer, session.plan_count + 1, span, text.clone());
                    session.final_answer = Some(text);
                    session.phase = Phase::Done;
                    terminal = Some(TraceStatus::Answered);
                }
                SegmentEvent::ObjectClosed => {
                    session.phase = Phase::Done;
                    if terminal.is_none() {
                        terminal = Some(if session.final_answer.is_some() {
                            TraceStatus::Answered
                        } else {
                            TraceStatus::NoAnswer
                        });
                    }
                }
            }
        }

        if let Some(status) = terminal {
            return Ok(status);
        }
        if token == eos {
            return Ok(if session.final_answer.is_some() {
                TraceStatus::Answered
            } else {
                TraceStatus::NoAnswer
            });
        }

        session.refresh_anchors()?;
    }
}
