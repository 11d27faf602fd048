//! Dataset evaluation across prompting methods on a scripted stub model,
//! end to end: fixture and dataset files, per-item records, and the summary
//! report.
//!
//! ```bash
//! cargo run --example evaluate_dataset
//! ```

use std::collections::BTreeMap;

use self_anchor::backend::{StubBackend, StubFixture};
use self_anchor::eval::analysis::summarize;
use self_anchor::eval::runner::{evaluate_items, EvalOptions};
use self_anchor::eval::{load_dataset, write_records, Method};

fn printable_ascii() -> String {
    let mut s: String = (32u8..127).map(char::from).collect();
    s.push('\n');
    s
}

fn main() -> self_anchor::Result<()> {
    let dir = std::env::temp_dir().join(format!("anchor-eval-demo-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;

    // a stub that always produces a two-step structured answer ending in "4";
    // the wide charset lets it tokenize every method's prompt template
    let script = r#"{"Step 1: read": "the question asks for a sum", "Step 2: add": "2 + 2 = 4", "Final answer": "4"}"#;
    let fixture = StubFixture::scripted(script, &printable_ascii(), 2.0)?;
    let fixture_path = dir.join("scripted.json");
    fixture.to_path(&fixture_path)?;
    let backend = StubBackend::from_path(&fixture_path)?;

    let dataset_path = dir.join("demo.jsonl");
    std::fs::write(
        &dataset_path,
        concat!(
            r#"{"id":"sum-1","task_kind":"numeric","question":"What is 2 + 2?","gold":"4","suite":"math"}"#,
            "\n",
            r#"{"id":"sum-2","task_kind":"numeric","question":"What is 3 + 3?","gold":"6","suite":"math"}"#,
            "\n",
            r#"{"id":"pick-1","task_kind":"multiple_choice","question":"Which option is four?","options":["three","four"],"gold":"B","suite":"choices"}"#,
            "\n",
        ),
    )?;
    let items = load_dataset(&dataset_path)?;
    println!("dataset: {} items from {}\n", items.len(), dataset_path.display());

    let mut all_records = Vec::new();
    for method in [Method::Cot, Method::PsPlus, Method::Re2, Method::SelfAnchor] {
        let mut options = EvalOptions::new(method);
        options.steering.omega_base = 2.0;
        let records = evaluate_items(&items, &backend, &options)?;
        let correct = records.iter().filter(|r| r.correct).count();
        println!(
            "{:<22} {}/{} correct, {} tokens total",
            method.name(),
            correct,
            records.len(),
            records.iter().map(|r| r.tokens_generated).sum::<usize>()
        );
        all_records.extend(records);
    }

    let results_path = dir.join("results.jsonl");
    write_records(&results_path, &all_records)?;

    let suites: BTreeMap<String, String> =
        items.iter().map(|i| (i.id.clone(), i.suite.clone())).collect();
    let report = summarize(&all_records, &suites)?;
    println!("\nsummary (suite, method, model, n, accuracy, mean chain length, tokens/s):");
    for row in &report.rows {
        println!(
            "  {:<8} {:<22} {:<6} n={} acc={:.2} chain={:.1} tok/s={:.2}",
            row.suite, row.method, row.model, row.n, row.accuracy, row.mean_chain_length, row.tokens_per_sec
        );
    }
    println!("\nrecords: {}", results_path.display());
    Ok(())
}
