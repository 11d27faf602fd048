//! Streaming segmentation of structured output, fed in small chunks the way
//! a decoder would produce them.
//!
//! ```bash
//! cargo run --example stream_segmenter
//! ```

use self_anchor::segment::{SegmentEvent, StreamSegmenter};

fn main() {
    let text = concat!(
        "Sure, here is my plan. ",
        r#"{"Step 1: read the question": "The question asks for 2+2.", "#,
        r#""Step 2: compute": {"lhs": 2, "rhs": 2, "note": "nested \"values\" are fine"}, "#,
        r#""Final answer": "4"}"#,
    );

    println!("input ({} chars):\n{text}\n", text.chars().count());

    // feed in 7-char chunks; boundaries may split escapes or multi-byte
    // characters, the machine does not care
    let chars: Vec<char> = text.chars().collect();
    let mut segmenter = StreamSegmenter::new();
    let mut consumed = 0;
    for chunk in chars.chunks(7) {
        let piece: String = chunk.iter().collect();
        let events = segmenter.feed(&piece);
        consumed += chunk.len();
        for event in events {
            match event {
                SegmentEvent::PlanKeyStart { pos } => {
                    println!("[{consumed:>3} chars] key opens at {pos}")
                }
                SegmentEvent::PlanKeyEnd { span, text } => {
                    println!("[{consumed:>3} chars] plan key {:?} spans [{}, {})", text, span.start, span.end)
                }
                SegmentEvent::ReasonValueStart { pos } => {
                    println!("[{consumed:>3} chars] reasoning opens at {pos}")
                }
                SegmentEvent::ReasonValueEnd { span, text } => {
                    println!(
                        "[{consumed:>3} chars] reasoning {:?} spans [{}, {})",
                        text, span.start, span.end
                    )
                }
                SegmentEvent::FinalAnswerKeySeen => {
                    println!("[{consumed:>3} chars] final-answer key seen")
                }
                SegmentEvent::FinalAnswerValueEnd { text, .. } => {
                    println!("[{consumed:>3} chars] final answer: {text:?}")
                }
                SegmentEvent::ObjectClosed => println!("[{consumed:>3} chars] object closed"),
            }
        }
    }

    // malformed input never aborts; an unterminated key just never ends
    let mut segmenter = StreamSegmenter::new();
    let events = segmenter.feed("{\"Step 1");
    println!("\ntruncated input {:?} yields {} event(s): {events:?}", "{\"Step 1", events.len());
}
