//! Shared helpers for the integration and acceptance suites.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use self_anchor::backend::{Backend, BackendDescriptor, StubFixture, StubRule};
use self_anchor::segment::{normalize_key, CharSpan, SegmentEvent};
use self_anchor::steering::{LogitVector, TokenId};

/// Backend wrapper that logs every logits request context.
pub struct RecordingBackend<B: Backend> {
    inner: B,
    log: Mutex<Vec<Vec<TokenId>>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn logits_requests(&self) -> Vec<Vec<TokenId>> {
        self.log.lock().unwrap().clone()
    }

    pub fn clear(&self) {
        self.log.lock().unwrap().clear();
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn tokenize(&self, text: &str) -> self_anchor::Result<Vec<TokenId>> {
        self.inner.tokenize(text)
    }
    fn detokenize(&self, tokens: &[TokenId]) -> self_anchor::Result<String> {
        self.inner.detokenize(tokens)
    }
    fn logits(&self, context: &[TokenId]) -> self_anchor::Result<LogitVector> {
        self.log.lock().unwrap().push(context.to_vec());
        self.inner.logits(context)
    }
    fn descriptor(&self) -> &BackendDescriptor {
        self.inner.descriptor()
    }
}

// ---------------------------------------------------------------------------
// Character-symbol fixture builder (hand-crafted rule tables)
// ---------------------------------------------------------------------------

/// Builds stub fixtures over a single-character vocabulary plus optional
/// multi-character entries, addressing tokens by their text.
pub struct CharFixture {
    vocab: Vec<String>,
    ids: BTreeMap<String, TokenId>,
    rules: Vec<StubRule>,
    default_logits: Option<Vec<f64>>,
}

impl CharFixture {
    pub fn new(charset: &str, multi: &[&str]) -> Self {
        let chars: std::collections::BTreeSet<char> = charset.chars().collect();
        let mut vocab: Vec<String> = vec!["<m>".into(), "<eos>".into()];
        vocab.extend(multi.iter().map(|s| s.to_string()));
        vocab.extend(chars.iter().map(|c| c.to_string()));
        let ids = vocab
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as TokenId))
            .collect();
        CharFixture { vocab, ids, rules: Vec::new(), default_logits: None }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn id(&self, sym: &str) -> TokenId {
        *self.ids.get(sym).unwrap_or_else(|| panic!("symbol `{sym}` not in fixture vocab"))
    }

    /// Logits that favor one symbol with `peak`, zero elsewhere.
    pub fn peaked(&self, sym: &str, peak: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.vocab.len()];
        v[self.id(sym) as usize] = peak;
        v
    }

    /// Logits from explicit (symbol, value) pairs, zero elsewhere.
    pub fn logits_of(&self, pairs: &[(&str, f64)]) -> Vec<f64> {
        let mut v = vec![0.0; self.vocab.len()];
        for (sym, value) in pairs {
            v[self.id(sym) as usize] = *value;
        }
        v
    }

    pub fn rule(&mut self, suffix: &[&str], logits: Vec<f64>) -> &mut Self {
        let suffix = suffix.iter().map(|s| self.id(s)).collect();
        self.rules.push(StubRule { suffix, logits });
        self
    }

    pub fn default(&mut self, logits: Vec<f64>) -> &mut Self {
        self.default_logits = Some(logits);
        self
    }

    pub fn build(self) -> StubFixture {
        StubFixture {
            default_logits: self.default_logits.expect("default logits not set"),
            vocab: self.vocab,
            rules: self.rules,
            mask_token: Some(0),
            eos_token: 1,
        }
    }
}

/// Charset wide enough to tokenize every built-in prompt template.
pub fn template_charset() -> String {
    let mut s: String = (32u8..127).map(char::from).collect();
    s.push('\n');
    s
}

/// JSON script text for a multi-step run ending in a final answer.
pub fn script_json(steps: usize, answer: &str, variant: usize) -> String {
    let mut s = String::from("{");
    for i in 1..=steps {
        s.push_str(&format!("\"Step {i}: plan {variant}.{i}\": \"reason {variant}.{i} ok\", "));
    }
    s.push_str(&format!("\"Final answer\": \"{answer}\"}}"));
    s
}

/// Scripted stub over the template charset, so any built-in prompt tokenizes.
pub fn scripted_backend(script: &str, peak: f64) -> StubFixture {
    StubFixture::scripted(script, &template_charset(), peak).unwrap()
}

/// Stub scripting `{"PR":"V","Final answer":"x"}` over the template charset,
/// with masked-context logits at the value position designed so only the
/// harmonic-mean arm crosses the flip threshold.
///
/// Plan-key token probabilities are e^2/(e^2+98) and e^4/(e^4+98). With
/// omega_base = 2 the reasoning strength is 2 minus their mean: harmonic
/// 1.8828, geometric 1.8416, arithmetic 1.7860. The steered scores at the
/// value position are V: 3 and W: (7/6)w + 5/6, which cross at w = 13/7 =
/// 1.8571 — between harmonic and geometric.
pub fn means_flip_fixture() -> StubFixture {
    let mut f = CharFixture::new(&template_charset(), &["Final answer"]);
    let flip_orig = f.logits_of(&[("V", 3.0), ("W", 2.0)]);
    let flip_mask = f.logits_of(&[("V", 3.0), ("W", 5.0 / 6.0)]);
    let answer_rule = f.peaked("x", 2.0);
    f.rule(&["R", "\"", ":", "\""], flip_orig);
    f.rule(&["<m>", "\"", ":", "\""], flip_mask);
    f.rule(&["Final answer", "\"", ":", "\""], answer_rule);
    let two = |f: &CharFixture, sym: &str| f.peaked(sym, 2.0);
    let r = two(&f, "P");
    f.rule(&["{", "\""], r);
    let r = f.peaked("R", 4.0);
    f.rule(&["P"], r);
    let r = two(&f, ":");
    f.rule(&["R", "\""], r);
    let r = two(&f, ",");
    f.rule(&["V", "\""], r);
    let r = two(&f, ",");
    f.rule(&["W", "\""], r);
    let r = two(&f, "Final answer");
    f.rule(&[",", "\""], r);
    let r = two(&f, ":");
    f.rule(&["Final answer", "\""], r);
    for sym in ["{", "R", "V", "W", ",", ":", "Final answer", "x"] {
        let r = two(&f, "\"");
        f.rule(&[sym], r);
    }
    let d = two(&f, "{");
    f.default(d);
    f.build()
}

/// Three-item dataset whose questions tokenize under the template charset.
pub fn demo_dataset_jsonl() -> String {
    [
        r#"{"id":"q1","task_kind":"free_text","question":"What is the answer to task one?","gold":"x","suite":"demo"}"#,
        r#"{"id":"q2","task_kind":"free_text","question":"And task two?","gold":"y","suite":"demo"}"#,
        r#"{"id":"q3","task_kind":"free_text","question":"And the third?","gold":"x","suite":"other"}"#,
    ]
    .join("\n")
}

// ---------------------------------------------------------------------------
// Offline oracle for the streaming segmenter
// ---------------------------------------------------------------------------

fn char_index(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

fn parse_one(s: &str) -> (serde_json::Value, usize) {
    let mut iter = serde_json::Deserializer::from_str(s).into_iter::<serde_json::Value>();
    let value = iter.next().expect("oracle: empty value").expect("oracle: invalid JSON value");
    (value, iter.byte_offset())
}

/// Structural parse of a complete, valid JSON object, recovering the same
/// event list the streaming segmenter must produce. Uses serde_json for
/// string unescaping and value extents, so it shares no code with the
/// incremental state machine.
pub fn oracle_events(text: &str) -> Vec<SegmentEvent> {
    let mut events = Vec::new();
    let Some(open) = text.find('{') else {
        return events;
    };
    let bytes = text.as_bytes();
    let mut pos = open + 1;
    let mut pending_final = false;
    let mut final_done = false;

    let skip_ws = |pos: &mut usize| {
        while *pos < bytes.len() && (bytes[*pos] as char).is_ascii_whitespace() {
            *pos += 1;
        }
    };

    loop {
        skip_ws(&mut pos);
        assert!(pos < bytes.len(), "oracle: ran past end of valid JSON");
        match bytes[pos] {
            b'}' => {
                events.push(SegmentEvent::ObjectClosed);
                return events;
            }
            b',' => {
                pos += 1;
                continue;
            }
            b'"' => {}
            other => panic!("oracle: unexpected byte `{}` at {pos}", other as char),
        }

        // key string
        let (key_value, consumed) = parse_one(&text[pos..]);
        let key = key_value.as_str().expect("oracle: key must be a string").to_string();
        let key_span = CharSpan::new(char_index(text, pos + 1), char_index(text, pos + consumed - 1));
        events.push(SegmentEvent::PlanKeyStart { pos: key_span.start });
        let is_final = !final_done && normalize_key(&key) == "final answer";
        if is_final {
            pending_final = true;
            events.push(SegmentEvent::FinalAnswerKeySeen);
        } else {
            events.push(SegmentEvent::PlanKeyEnd { span: key_span, text: key });
        }
        pos += consumed;

        skip_ws(&mut pos);
        assert_eq!(bytes[pos], b':', "oracle: expected colon");
        pos += 1;
        skip_ws(&mut pos);

        // value
        let vstart = pos;
        let (value, consumed) = parse_one(&text[pos..]);
        let (span, vtext) = match value {
            serde_json::Value::String(s) => (
                CharSpan::new(char_index(text, vstart + 1), char_index(text, vstart + consumed - 1)),
                s,
            ),
            _ => (
                CharSpan::new(char_index(text, vstart), char_index(text, vstart + consumed)),
                text[vstart..vstart + consumed].to_string(),
            ),
        };
        if pending_final {
            pending_final = false;
            final_done = true;
            events.push(SegmentEvent::FinalAnswerValueEnd { span, text: vtext });
        } else {
            events.push(SegmentEvent::ReasonValueStart { pos: span.start });
            events.push(SegmentEvent::ReasonValueEnd { span, text: vtext });
        }
        pos += consumed;
    }
}

// ---------------------------------------------------------------------------
// Random JSON generator for segmenter fixtures
// ---------------------------------------------------------------------------

const WORD_CHARS: &[char] = &[
    'a', 'b', 'c', 'd', 'e', 'x', 'y', 'z', 'A', 'Z', '0', '7', ' ', '-', '_', '/', '.', '(',
    ')', 'ä', 'é', 'ß', '中', '文', 'π', 'Ω', '😀', '🚀', '♥',
];

fn random_word(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let len = rng.gen_range(min..=max);
    (0..len).map(|_| WORD_CHARS[rng.gen_range(0..WORD_CHARS.len())]).collect()
}

/// Encodes a string as a JSON literal, randomly mixing literal characters,
/// `\uXXXX` escapes, surrogate pairs for astral characters, and the named
/// escapes.
fn encode_string(rng: &mut ChaCha8Rng, s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c if (c as u32) > 0xFFFF => {
                if rng.gen_bool(0.6) {
                    let v = c as u32 - 0x10000;
                    let hi = 0xD800 + (v >> 10);
                    let lo = 0xDC00 + (v & 0x3FF);
                    out.push_str(&format!("\\u{hi:04X}\\u{lo:04X}"));
                } else {
                    out.push(c);
                }
            }
            c => {
                if rng.gen_bool(0.12) {
                    out.push_str(&format!("\\u{:04x}", c as u32));
                } else if c == '/' && rng.gen_bool(0.5) {
                    out.push_str("\\/");
                } else {
                    out.push(c);
                }
            }
        }
    }
    out.push('"');
    out
}

fn maybe_ws(rng: &mut ChaCha8Rng, out: &mut String) {
    if rng.gen_bool(0.4) {
        for _ in 0..rng.gen_range(1..=3) {
            out.push(*[' ', '\n', '\t'].get(rng.gen_range(0..3)).unwrap());
        }
    }
}

fn push_random_value(rng: &mut ChaCha8Rng, out: &mut String, depth: usize) {
    let choice = rng.gen_range(0..100);
    match choice {
        0..=39 => {
            let word = random_word(rng, 0, 12);
            out.push_str(&encode_string(rng, &word));
        }
        40..=54 => out.push_str(&format!("{}", rng.gen_range(-5000..5000))),
        55..=64 => out.push_str(&format!("{:.4}", rng.gen_range(-10.0..10.0))),
        65..=72 => out.push_str(if rng.gen_bool(0.5) { "true" } else { "false" }),
        73..=79 => out.push_str("null"),
        80..=89 if depth < 2 => {
            out.push('[');
            let n = rng.gen_range(0..=4);
            for i in 0..n {
                if i > 0 {
                    out.push(',');
                }
                maybe_ws(rng, out);
                push_random_value(rng, out, depth + 1);
            }
            maybe_ws(rng, out);
            out.push(']');
        }
        _ if depth < 2 => {
            out.push('{');
            let n = rng.gen_range(0..=3);
            for i in 0..n {
                if i > 0 {
                    out.push(',');
                }
                maybe_ws(rng, out);
                let word = random_word(rng, 1, 8);
                out.push_str(&encode_string(rng, &word));
                maybe_ws(rng, out);
                out.push(':');
                maybe_ws(rng, out);
                push_random_value(rng, out, depth + 1);
            }
            maybe_ws(rng, out);
            out.push('}');
        }
        _ => {
            let word = random_word(rng, 0, 12);
            out.push_str(&encode_string(rng, &word));
        }
    }
}

/// One random, syntactically valid JSON object of the structured-output
/// shape, with escapes, unicode, nesting, and optionally a final-answer key.
pub fn random_json_text(rng: &mut ChaCha8Rng, with_final: bool) -> String {
    let mut out = String::new();
    if rng.gen_bool(0.3) {
        // leading prose before the object is part of the contract
        out.push_str("Here is the plan. ");
    }
    out.push('{');
    let pairs = rng.gen_range(1..=6);
    let final_at = if with_final { Some(rng.gen_range(0..pairs)) } else { None };
    for i in 0..pairs {
        if i > 0 {
            out.push(',');
        }
        maybe_ws(rng, &mut out);
        if Some(i) == final_at {
            let variants =
                ["Final answer", "final answer", "FINAL ANSWER", "Final  Answer", "final\tanswer"];
            let v = variants[rng.gen_range(0..variants.len())];
            out.push_str(&encode_string(rng, v));
        } else {
            let key = format!("Step {}: {}", i + 1, random_word(rng, 1, 10));
            out.push_str(&encode_string(rng, &key));
        }
        maybe_ws(rng, &mut out);
        out.push(':');
        maybe_ws(rng, &mut out);
        if Some(i) == final_at {
            let word = random_word(rng, 1, 6);
            out.push_str(&encode_string(rng, &word));
        } else {
            push_random_value(rng, &mut out, 0);
        }
        maybe_ws(rng, &mut out);
    }
    out.push('}');
    out
}
