//! Anchored generation against a live model server speaking the wire
//! protocol (see the README for the endpoint shapes).
//!
//! ```bash
//! ANCHOR_BACKEND_URL=http://localhost:8080 cargo run --example remote_backend
//! ```

use self_anchor::backend::{Backend, RemoteBackend, RemoteConfig};
use self_anchor::eval::prompts::structured_prompt;
use self_anchor::orchestrator::generate;
use self_anchor::steering::{AnchorMode, SteeringConfig};

fn main() -> self_anchor::Result<()> {
    let Ok(url) = std::env::var("ANCHOR_BACKEND_URL") else {
        println!("ANCHOR_BACKEND_URL is not set.");
        println!();
        println!("Point it at a server that exposes:");
        println!("  POST /v1/tokenize    {{\"text\": string}}  -> {{\"tokens\": [int]}}");
        println!("  POST /v1/detokenize  {{\"tokens\": [int]}} -> {{\"text\": string}}");
        println!("  POST /v1/logits      {{\"tokens\": [int]}} -> {{\"logits\": [number]}}");
        println!("  GET  /v1/descriptor  -> vocab_size, mask_token_id, eos_token_id, name");
        println!();
        println!("then rerun:  ANCHOR_BACKEND_URL=http://host:port cargo run --example remote_backend");
        return Ok(());
    };

    println!("connecting to {url} ...");
    let backend = RemoteBackend::connect(RemoteConfig::new(url))?;
    let descriptor = backend.descriptor();
    println!(
        "model {:?}: vocab {}, mask token {:?}, eos token {}",
        descriptor.name, descriptor.vocab_size, descriptor.mask_token, descriptor.eos_token
    );

    let question =
        std::env::args().nth(1).unwrap_or_else(|| "Can a prime number be even?".to_string());
    let rendered = structured_prompt(&question)?;
    let config = SteeringConfig {
        omega_base: 1.5,
        anchor_mode: AnchorMode::QuestionPlusCurrentPlan,
        ..SteeringConfig::default()
    };

    println!("question: {question}\n");
    let output = generate(&rendered.parts, &rendered.template, &config, &backend)?;
    for step in &output.trace.steps {
        println!("step {} {:?} (omega {:.3}): {}", step.index, step.phase, step.omega_used, step.text);
    }
    println!();
    match &output.trace.final_answer {
        Some(answer) => println!("final answer: {answer}"),
        None => println!("no final answer (status {:?})", output.trace.status),
    }
    println!(
        "{} tokens, {} logits requests, {:.2}s",
        output.trace.tokens_generated, output.trace.backend_calls, output.trace.wall_seconds
    );
    Ok(())
}
