//! The numeric steering kernel, piece by piece: logit combination, anchor
//! masking, confidence means, strength modulation, and token selection.
//!
//! ```bash
//! cargo run --example steer_logits
//! ```

use self_anchor::steering::{
    aggregate_confidence, combine_logits, effective_strength, mask_anchor_tokens, select_token,
    AnchorSet, ConfidenceWindow, LogitVector, MeanKind, TokenSpan,
};

fn main() -> self_anchor::Result<()> {
    // The steered distribution is a linear combination of the logits over
    // the full context and over the context with the anchors masked out:
    //   steered = omega * original + (1 - omega) * masked
    let original = LogitVector::new(vec![2.0, 0.0, 1.0])?;
    let masked = LogitVector::new(vec![1.0, 1.0, 1.5])?;

    for omega in [0.0, 1.0, 1.5, 2.0] {
        let steered = combine_logits(&original, &masked, omega)?;
        println!("omega = {omega:>3}: steered = {:?} (argmax {})", steered.values(), steered.argmax());
    }
    println!("omega > 1 amplifies whatever the anchored tokens contributed.\n");

    // Masking replaces anchored positions with a mask token, length-preserving.
    let context = vec![11, 12, 13, 14, 15];
    let anchors = AnchorSet::new(vec![TokenSpan::new(1, 3)?])?;
    let masked_context = mask_anchor_tokens(&context, &anchors, 0)?;
    println!("context        = {context:?}");
    println!("masked context = {masked_context:?} (anchors {:?})\n", anchors.spans());

    // A completed step's chosen-token probabilities collapse into one
    // confidence; the harmonic mean is the most sensitive to weak tokens.
    let window = ConfidenceWindow::new(vec![0.9, 0.8, 0.2])?;
    for kind in MeanKind::ALL {
        let value = aggregate_confidence(&window, kind)?;
        println!("{:>10} mean of {:?} = {value:.4}", kind.name(), window.probs());
    }

    // The confidence scales the next step's strength: full confidence turns
    // steering off, low confidence applies the full base strength.
    println!();
    let omega_base = 2.0;
    for p_avg in [1.0, 0.75, 0.5, 0.0] {
        println!(
            "confidence {p_avg:>4}: next omega = {}",
            effective_strength(omega_base, p_avg)?
        );
    }

    // Greedy selection returns the argmax and its softmax probability.
    let (token, prob) = select_token(&LogitVector::new(vec![3.0, 1.0, 2.0])?)?;
    println!("\ngreedy pick from [3, 1, 2]: token {token} with probability {prob:.4}");
    Ok(())
}
