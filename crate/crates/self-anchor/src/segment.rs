//! Streaming segmentation of structured plan/reason output.
//!
//! The model is instructed to answer as a single JSON object whose keys are
//! plan steps and whose values are the reasoning for each step, ending with a
//! `"Final answer"` pair. This module recognises that structure while the
//! text is still being generated, one chunk (usually one detokenized token)
//! at a time, and emits boundary events with character-exact spans.
//!
//! The recogniser is tolerant by contract: malformed input never aborts it,
//! unexpected characters are skipped, and unterminated constructs simply
//! produce no `End` event. Chunk boundaries are irrelevant — the machine is
//! driven character by character, so escape sequences and multi-byte
//! characters may be split arbitrarily across chunks.
//!
//! Event conventions (mirrored by the offline oracle in the test suite):
//! - A key emits [`SegmentEvent::PlanKeyStart`] the moment its opening quote
//!   is seen (its text is not yet known), and on completion either
//!   [`SegmentEvent::PlanKeyEnd`] or — when the key normalises to
//!   `final answer` for the first time — [`SegmentEvent::FinalAnswerKeySeen`].
//! - String spans cover the raw characters strictly between the delimiting
//!   quotes (escape sequences count as their raw characters); carried text is
//!   the unescaped content.
//! - Non-string values (numbers, nested objects or arrays, literals) span the
//!   whole raw value; carried text is the raw slice.
//! - Only depth-1 keys and values produce events; nesting inside values is
//!   tracked but silent.

/// Half-open character range `[start, end)` over the streamed text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        CharSpan { start, end }
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

/// Boundary event produced while streaming structured output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentEvent {
    /// A depth-1 key string opened; `pos` is where its content starts.
    PlanKeyStart { pos: usize },
    /// A depth-1 key completed and is a plan step.
    PlanKeyEnd { span: CharSpan, text: String },
    /// A depth-1 value region opened; `pos` is where its content starts.
    ReasonValueStart { pos: usize },
    /// A depth-1 value completed and belongs to a plan step.
    ReasonValueEnd { span: CharSpan, text: String },
    /// A depth-1 key completed and normalises to `final answer`.
    FinalAnswerKeySeen,
    /// The value following the final-answer key completed.
    FinalAnswerValueEnd { span: CharSpan, text: String },
    /// The depth-1 object closed.
    ObjectClosed,
}

/// Case-insensitive, whitespace-collapsed key normalisation.
pub fn normalize_key(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

const FINAL_ANSWER_KEY: &str = "final answer";

#[derive(Debug, Clone, Copy, PartialEq)]
enum Esc {
    None,
    Backslash,
    Hex { value: u32, count: u8 },
}

#[derive(Debug, Clone)]
struct StringScan {
    content_start: usize,
    text: String,
    esc: Esc,
    pending_high: Option<u16>,
    // true once '\' of the expected low-surrogate escape was consumed
    pending_backslash: bool,
}

impl StringScan {
    fn new(content_start: usize) -> Self {
        StringScan {
            content_start,
            text: String::new(),
            esc: Esc::None,
            pending_high: None,
            pending_backslash: false,
        }
    }

    fn flush_pending(&mut self) {
        if self.pending_high.take().is_some() {
            self.text.push('\u{FFFD}');
        }
        self.pending_backslash = false;
    }

    fn push_code(&mut self, code: u32) {
        if let Some(hi) = self.pending_high.take() {
            if (0xDC00..=0xDFFF).contains(&code) {
                let combined = 0x10000 + ((u32::from(hi) - 0xD800) << 10) + (code - 0xDC00);
                self.text.push(char::from_u32(combined).unwrap_or('\u{FFFD}'));
                return;
            }
            self.text.push('\u{FFFD}');
        }
        if (0xD800..=0xDBFF).contains(&code) {
            self.pending_high = Some(code as u16);
        } else if (0xDC00..=0xDFFF).contains(&code) {
            self.text.push('\u{FFFD}');
        } else {
            self.text.push(char::from_u32(code).unwrap_or('\u{FFFD}'));
        }
    }

    /// Consumes one character. Returns `Some(end)` when the string closed.
    fn step(&mut self, c: char, pos: usize) -> Option<usize> {
        loop {
            match self.esc {
                Esc::None => {
                    if self.pending_high.is_some() {
                        if !self.pending_backslash {
                            if c == '\\' {
                                self.pending_backslash = true;
                                return None;
                            }
                            self.flush_pending();
                            continue;
                        }
                        if c == 'u' {
                            self.pending_backslash = false;
                            self.esc = Esc::Hex { value: 0, count: 0 };
                            return None;
                        }
                        // dangling backslash: flush the surrogate, then treat
                        // the backslash as the start of an ordinary escape
                        self.pending_high.take();
                        self.text.push('\u{FFFD}');
                        self.pending_backslash = false;
                        self.esc = Esc::Backslash;
                        continue;
                    }
                    match c {
                        '"' => return Some(pos),
                        '\\' => {
                            self.esc = Esc::Backslash;
                            return None;
                        }
                        other => {
                            self.text.push(other);
                            return None;
                        }
                    }
                }
                Esc::Backslash => {
                    self.esc = Esc::None;
                    match c {
                        '"' => self.text.push('"'),
                        '\\' => self.text.push('\\'),
                        '/' => self.text.push('/'),
                        'b' => self.text.push('\u{0008}'),
                        'f' => self.text.push('\u{000C}'),
                        'n' => self.text.push('\n'),
                        'r' => self.text.push('\r'),
                        't' => self.text.push('\t'),
                        'u' => self.esc = Esc::Hex { value: 0, count: 0 },
                        // invalid escape: keep the character, drop the backslash
                        other => self.text.push(other),
                    }
                    return None;
                }
                Esc::Hex { value, count } => {
                    if let Some(d) = c.to_digit(16) {
                        let value = (value << 4) | d;
                        if count + 1 == 4 {
                            self.esc = Esc::None;
                            self.push_code(value);
                        } else {
                            self.esc = Esc::Hex { value, count: count + 1 };
                        }
                        return None;
                    }
                    // invalid \u escape: substitute and reprocess the char
                    self.esc = Esc::None;
                    self.flush_pending();
                    self.text.push('\u{FFFD}');
                    continue;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct RawScan {
    start: usize,
    raw: String,
    depth: usize,
    in_string: bool,
    str_escape: bool,
}

impl RawScan {
    fn new(start: usize) -> Self {
        RawScan { start, raw: String::new(), depth: 0, in_string: false, str_escape: false }
    }

    /// Returns `Some((end, consumed))` when the value is complete. When
    /// `consumed` is false the terminating character was not part of the
    /// value and must be reprocessed by the caller.
    fn step(&mut self, c: char, pos: usize) -> Option<(usize, bool)> {
        if self.in_string {
            self.raw.push(c);
            if self.str_escape {
                self.str_escape = false;
            } else if c == '\\' {
                self.str_escape = true;
            } else if c == '"' {
                self.in_string = false;
            }
            return None;
        }
        match c {
            '"' => {
                self.raw.push(c);
                self.in_string = true;
                None
            }
            '{' | '[' => {
                self.raw.push(c);
                self.depth += 1;
                None
            }
            '}' | ']' if self.depth > 0 => {
                self.raw.push(c);
                self.depth -= 1;
                if self.depth == 0 {
                    Some((pos + 1, true))
                } else {
                    None
                }
            }
            c if self.depth == 0 && (c.is_whitespace() || c == ',' || c == '}') => {
                Some((pos, false))
            }
            other => {
                self.raw.push(other);
                None
            }
        }
    }
}

#[derive(Debug, Clone)]
enum State {
    BeforeObject,
    ExpectKey,
    InKey(StringScan),
    AfterKey,
    BeforeValue,
    InStringValue { scan: StringScan, is_final: bool },
    InRawValue { scan: RawScan, is_final: bool },
    AfterValue,
    Closed,
}

/// Incremental recogniser for the plan/reason output contract.
#[derive(Debug, Clone)]
pub struct StreamSegmenter {
    state: State,
    pos: usize,
    pending_final: bool,
    final_answer_done: bool,
}

impl Default for StreamSegmenter {
    fn default() -> Self {
        Self::new()
    }
}

impl StreamSegmenter {
    pub fn new() -> Self {
        StreamSegmenter {
            state: State::BeforeObject,
            pos: 0,
            pending_final: false,
            final_answer_done: false,
        }
    }

    /// Number of characters consumed so far.
    pub fn chars_fed(&self) -> usize {
        self.pos
    }

    /// True once the depth-1 object has closed.
    pub fn is_closed(&self) -> bool {
        matches!(self.state, State::Closed)
    }

    /// Feeds the next chunk of generated text, returning the boundary events
    /// completed within it, in order.
    pub fn feed(&mut self, chunk: &str) -> Vec<SegmentEvent> {
        let mut events = Vec::new();
        for c in chunk.chars() {
            self.step(c, &mut events);
            self.pos += 1;
        }
        events
    }

    fn close_object(&mut self, events: &mut Vec<SegmentEvent>) {
        events.push(SegmentEvent::ObjectClosed);
        self.state = State::Closed;
    }

    fn step(&mut self, c: char, events: &mut Vec<SegmentEvent>) {
        loop {
            match &mut self.state {
                State::BeforeObject => {
                    if c == '{' {
                        self.state = State::ExpectKey;
                    }
                    return;
                }
                State::ExpectKey => {
                    match c {
                        '"' => {
                            events.push(SegmentEvent::PlanKeyStart { pos: self.pos + 1 });
                            self.state = State::InKey(StringScan::new(self.pos + 1));
                        }
                        '}' => self.close_object(events),
                        _ => {}
                    }
                    return;
                }
                State::InKey(scan) => {
                    if let Some(end) = scan.step(c, self.pos) {
                        let span = CharSpan::new(scan.content_start, end);
                        let text = std::mem::take(&mut scan.text);
                        if !self.final_answer_done && normalize_key(&text) == FINAL_ANSWER_KEY {
                            self.pending_final = true;
                            events.push(SegmentEvent::FinalAnswerKeySeen);
                        } else {
                            events.push(SegmentEvent::PlanKeyEnd { span, text });
                        }
                        self.state = State::AfterKey;
                    }
                    return;
                }
                State::AfterKey => {
                    match c {
                        ':' => self.state = State::BeforeValue,
                        '}' => self.close_object(events),
                        _ => {}
                    }
                    return;
                }
                State::BeforeValue => {
                    if c.is_whitespace() {
                        return;
                    }
                    match c {
                        '"' => {
                            let is_final = std::mem::take(&mut self.pending_final);
                            if !is_final {
                                events.push(SegmentEvent::ReasonValueStart { pos: self.pos + 1 });
                            }
                            self.state = State::InStringValue {
                                scan: StringScan::new(self.pos + 1),
                                is_final,
                            };
                            return;
                        }
                        '}' => {
                            self.close_object(events);
                            return;
                        }
                        ',' => {
                            // value missing; tolerate and look for the next key
                            self.state = State::ExpectKey;
                            return;
                        }
                        _ => {
                            let is_final = std::mem::take(&mut self.pending_final);
                            if !is_final {
                                events.push(SegmentEvent::ReasonValueStart { pos: self.pos });
                            }
                            self.state = State::InRawValue { scan: RawScan::new(self.pos), is_final };
                            continue; // the char is part of the value
                        }
                    }
                }
                State::InStringValue { scan, is_final } => {
                    if let Some(end) = scan.step(c, self.pos) {
                        let span = CharSpan::new(scan.content_start, end);
                        let text = std::mem::take(&mut scan.text);
                        if *is_final {
                            self.final_answer_done = true;
                            events.push(SegmentEvent::FinalAnswerValueEnd { span, text });
                        } else {
                            events.push(SegmentEvent::ReasonValueEnd { span, text });
                        }
                        self.state = State::AfterValue;
                    }
                    return;
                }
                State::InRawValue { scan, is_final } => {
                    if let Some((end, consumed)) = scan.step(c, self.pos) {
                        let span = CharSpan::new(scan.start, end);
                        let text = std::mem::take(&mut scan.raw);
                        if *is_final {
                            self.final_answer_done = true;
                            events.push(SegmentEvent::FinalAnswerValueEnd { span, text });
                        } else {
                            events.push(SegmentEvent::ReasonValueEnd { span, text });
                        }
                        self.state = State::AfterValue;
                        if !consumed {
                            continue; // ',' or '}' still needs handling
                        }
                    }
                    return;
                }
                State::AfterValue => {
                    match c {
                        ',' => self.state = State::ExpectKey,
                        '}' => self.close_object(events),
                        _ => {}
                    }
                    return;
                }
                State::Closed => return,
            }
        }
    }
}
