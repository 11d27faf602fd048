//! Analytics over evaluation records: per-item task complexity, performance
//! gains between two methods bucketed by complexity, chain lengths, and
//! throughput.
//!
//! ```bash
//! cargo run --example analyze_results
//! ```

use self_anchor::eval::analysis::{
    chain_lengths, performance_gain, task_complexity, throughput, ComplexityOptions,
};
use self_anchor::eval::{EvalRecord, Method};

fn record(item: &str, method: Method, model: &str, correct: bool, tokens: usize, secs: f64) -> EvalRecord {
    EvalRecord {
        item_id: item.to_string(),
        method,
        model_name: model.to_string(),
        prediction_raw: "r".into(),
        prediction_norm: correct.then(|| "r".to_string()),
        correct,
        tokens_generated: tokens,
        wall_seconds: secs,
        chain_length: 1 + tokens / 8,
        trace_ref: None,
    }
}

fn main() -> self_anchor::Result<()> {
    // two models, two methods, six items of increasing difficulty
    let mut records = Vec::new();
    for (i, item) in ["e1", "e2", "m1", "m2", "h1", "h2"].iter().enumerate() {
        for model in ["model-a", "model-b"] {
            // the anchored method keeps solving items the baseline drops
            let base_ok = i < 2 || (i < 4 && model == "model-a");
            let anchored_ok = i < 5;
            records.push(record(item, Method::Re2, model, base_ok, 40 + 10 * i, 4.0));
            records.push(record(item, Method::SelfAnchor, model, anchored_ok, 50 + 12 * i, 6.0));
        }
    }

    let complexity = task_complexity(&records, ComplexityOptions::default())?;
    println!("task complexity (1 - mean accuracy across models):");
    for (item, value) in &complexity {
        println!("  {item}: {value:.3}");
    }

    let baseline: Vec<EvalRecord> =
        records.iter().filter(|r| r.method == Method::Re2).cloned().collect();
    let anchored: Vec<EvalRecord> =
        records.iter().filter(|r| r.method == Method::SelfAnchor).cloned().collect();
    let gains = performance_gain(&anchored, &baseline, &complexity, 3)?;
    println!("\nper-complexity-bucket gain of {} over {}:", gains.method_a, gains.method_b);
    for bucket in &gains.buckets {
        println!(
            "  [{:.2}, {:.2}): n={} min={:+.2} median={:+.2} mean={:+.2} max={:+.2}",
            bucket.complexity_lo, bucket.complexity_hi, bucket.n, bucket.min, bucket.median,
            bucket.mean, bucket.max
        );
    }

    println!("\nchain lengths:");
    for row in chain_lengths(&records)? {
        println!(
            "  {:<14} {:<8} mean={:.1} range=[{}, {}]",
            row.method, row.model, row.mean_chain_length, row.min, row.max
        );
    }

    println!("\nthroughput (tokens per second, two decimals):");
    for row in throughput(&records)? {
        println!(
            "  {:<8} {:<14} {} tokens / {:.0} s = {:.2}",
            row.model, row.method, row.total_tokens, row.total_seconds, row.tokens_per_sec
        );
    }
    Ok(())
}
