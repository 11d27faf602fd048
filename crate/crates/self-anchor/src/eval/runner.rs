//! Runs benchmark items through a backend and scores the results.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::backend::Backend;
use crate::error::{Error, Result};
use crate::eval::prompts::render_prompt;
use crate::eval::{capture_final_answer, chain_length, normalize_answer, score, BenchmarkItem, EvalRecord, Method};
use crate::orchestrator::generate;
use crate::steering::{AnchorMode, SteeringConfig};

/// Options for one evaluation pass.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub method: Method,
    pub steering: SteeringConfig,
    /// Number of items evaluated concurrently.
    pub jobs: usize,
    /// When set, one trace JSON per item is written here.
    pub trace_dir: Option<PathBuf>,
}

impl EvalOptions {
    pub fn new(method: Method) -> Self {
        EvalOptions { method, steering: SteeringConfig::default(), jobs: 1, trace_dir: None }
    }

    /// The steering configuration actually used for this method: only
    /// `self_anchor` steers; every other method decodes plainly.
    pub fn effective_steering(&self) -> SteeringConfig {
        let mut config = self.steering.clone();
        if self.method != Method::SelfAnchor {
            config.anchor_mode = AnchorMode::None;
        }
        config
    }
}

// Per-item seed derivation: stable FNV-1a over the item id, folded into the
// run seed so --jobs reordering cannot change results.
fn item_seed(base: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    base ^ h
}

/// Evaluates one item, returning its record (and writing the trace when
/// requested).
pub fn evaluate_item(
    item: &BenchmarkItem,
    backend: &dyn Backend,
    options: &EvalOptions,
) -> Result<EvalRecord> {
    let rendered = render_prompt(item, options.method)?;
    let mut config = options.effective_steering();
    config.seed = item_seed(config.seed, &item.id);

    let output = generate(&rendered.parts, &rendered.template, &config, backend)?;

    let raw = capture_final_answer(&output.text).unwrap_or_default();
    let norm = if raw.is_empty() { None } else { normalize_answer(&raw, item.task_kind) };
    let correct = score(norm.as_deref(), &item.gold, item.task_kind);

    let trace_ref = match &options.trace_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{}.{}.json", sanitize(&item.id), options.method.name()));
            std::fs::write(&path, serde_json::to_string_pretty(&output.trace)?)?;
            Some(path.to_string_lossy().into_owned())
        }
        None => None,
    };

    Ok(EvalRecord {
        item_id: item.id.clone(),
        method: options.method,
        model_name: backend.descriptor().name.clone(),
        prediction_raw: raw,
        prediction_norm: norm,
        correct,
        tokens_generated: output.trace.tokens_generated,
        wall_seconds: output.trace.wall_seconds,
        chain_length: chain_length(&output.text),
        trace_ref,
    })
}

/// Evaluates all items, up to `jobs` concurrently, preserving dataset order.
pub fn evaluate_items(
    items: &[BenchmarkItem],
    backend: &dyn Backend,
    options: &EvalOptions,
) -> Result<Vec<EvalRecord>> {
    if options.jobs <= 1 {
        return items.iter().map(|item| evaluate_item(item, backend, options)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| {
        items
            .par_iter()
            .map(|item| evaluate_item(item, backend, options))
            .collect::<Result<Vec<_>>>()
    })
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}
