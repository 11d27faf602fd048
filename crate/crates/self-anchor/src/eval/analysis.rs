//! Analytics over evaluation records: accuracy summaries, per-item task
//! complexity, method-pair performance gains, chain lengths, and throughput.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalRecord;

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

/// Aggregate row per (suite, method, model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub suite: String,
    pub method: String,
    pub model: String,
    pub n: usize,
    pub accuracy: f64,
    pub mean_chain_length: f64,
    pub tokens_per_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub rows: Vec<SummaryRow>,
}

/// Suites are carried by items, not records; the caller supplies the
/// item -> suite mapping (empty map folds everything into one suite).
pub fn summarize(records: &[EvalRecord], suite_of: &BTreeMap<String, String>) -> Result<SummaryReport> {
    if records.is_empty() {
        return Err(Error::Analysis("no records to summarize".into()));
    }
    let mut groups: BTreeMap<(String, String, String), Vec<&EvalRecord>> = BTreeMap::new();
    for record in records {
        let suite = suite_of.get(&record.item_id).cloned().unwrap_or_else(|| "all".to_string());
        groups
            .entry((suite, record.method.name().to_string(), record.model_name.clone()))
            .or_default()
            .push(record);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((suite, method, model), group) in groups {
        let n = group.len();
        let correct = group.iter().filter(|r| r.correct).count();
        let chain_sum: usize = group.iter().map(|r| r.chain_length).sum();
        let tokens: usize = group.iter().map(|r| r.tokens_generated).sum();
        let seconds: f64 = group.iter().map(|r| r.wall_seconds).sum();
        if seconds <= 0.0 {
            return Err(Error::Analysis(format!(
                "zero total wall time for ({suite}, {method}, {model})"
            )));
        }
        rows.push(SummaryRow {
            suite,
            method,
            model,
            n,
            accuracy: correct as f64 / n as f64,
            mean_chain_length: chain_sum as f64 / n as f64,
            tokens_per_sec: round2(tokens as f64 / seconds),
        });
    }
    Ok(SummaryReport { rows })
}

pub fn write_summary_csv(report: &SummaryReport, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["suite", "method", "model", "n", "accuracy", "mean_chain_length", "tokens_per_sec"])?;
    for row in &report.rows {
        writer.write_record([
            row.suite.as_str(),
            row.method.as_str(),
            row.model.as_str(),
            &row.n.to_string(),
            &format!("{:.4}", row.accuracy),
            &format!("{:.2}", row.mean_chain_length),
            &format!("{:.2}", row.tokens_per_sec),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Task complexity
// ---------------------------------------------------------------------------

/// Subsampling control for complexity analysis.
#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexityOptions {
    /// Keep at most this many items, chosen by a seeded shuffle.
    pub sample: Option<usize>,
    pub seed: u64,
}

/// Per-item complexity: 1 minus the mean over models of that model's
/// accuracy on the item. Every item must have at least one record from
/// every model present in the input.
pub fn task_complexity(
    records: &[EvalRecord],
    options: ComplexityOptions,
) -> Result<BTreeMap<String, f64>> {
    if records.is_empty() {
        return Err(Error::Analysis("no records for complexity analysis".into()));
    }
    let models: BTreeSet<&str> = records.iter().map(|r| r.model_name.as_str()).collect();
    let mut per_item: BTreeMap<&str, BTreeMap<&str, (usize, usize)>> = BTreeMap::new();
    for record in records {
        let (correct, total) = per_item
            .entry(record.item_id.as_str())
            .or_default()
            .entry(record.model_name.as_str())
            .or_insert((0, 0));
        if record.correct {
            *correct += 1;
        }
        *total += 1;
    }

    let mut ids: Vec<&str> = per_item.keys().copied().collect();
    if let Some(n) = options.sample {
        if ids.len() > n {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            ids.shuffle(&mut rng);
            ids.truncate(n);
            ids.sort_unstable();
        }
    }

    let mut out = BTreeMap::new();
    for id in ids {
        let by_model = &per_item[id];
        let mut acc_sum = 0.0;
        for model in &models {
            let Some((correct, total)) = by_model.get(model) else {
                return Err(Error::Analysis(format!(
                    "item `{id}` has no record for model `{model}`"
                )));
            };
            acc_sum += *correct as f64 / *total as f64;
        }
        out.insert(id.to_string(), 1.0 - acc_sum / models.len() as f64);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Performance gains
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainBucket {
    pub complexity_lo: f64,
    pub complexity_hi: f64,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub method_a: String,
    pub method_b: String,
    pub per_item: BTreeMap<String, f64>,
    pub buckets: Vec<GainBucket>,
}

fn per_item_accuracy(records: &[EvalRecord]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for record in records {
        let entry = acc.entry(record.item_id.clone()).or_insert((0, 0));
        if record.correct {
            entry.0 += 1;
        }
        entry.1 += 1;
    }
    acc.into_iter().map(|(id, (c, t))| (id, c as f64 / t as f64)).collect()
}

/// Linear-interpolation quantile over sorted values.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Per-item accuracy difference between two arms, bucketed by complexity.
///
/// Both arms must cover the same item set; complexity values must cover it
/// too (compute them from the combined records).
pub fn performance_gain(
    records_a: &[EvalRecord],
    records_b: &[EvalRecord],
    complexity: &BTreeMap<String, f64>,
    num_buckets: usize,
) -> Result<GainReport> {
    if records_a.is_empty() || records_b.is_empty() {
        return Err(Error::Analysis("both arms need records".into()));
    }
    if num_buckets == 0 {
        return Err(Error::Analysis("need at least one bucket".into()));
    }
    let acc_a = per_item_accuracy(records_a);
    let acc_b = per_item_accuracy(records_b);
    if acc_a.keys().ne(acc_b.keys()) {
        return Err(Error::Analysis("the two arms cover different item sets".into()));
    }

    let method_a = records_a[0].method.name().to_string();
    let method_b = records_b[0].method.name().to_string();

    let mut per_item = BTreeMap::new();
    let mut bucketed: Vec<Vec<f64>> = vec![Vec::new(); num_buckets];
    for (id, a) in &acc_a {
        let gain = a - acc_b[id];
        per_item.insert(id.clone(), gain);
        let Some(c) = complexity.get(id) else {
            return Err(Error::Analysis(format!("no complexity value for item `{id}`")));
        };
        let idx = ((c * num_buckets as f64).floor() as usize).min(num_buckets - 1);
        bucketed[idx].push(gain);
    }

    let mut buckets = Vec::new();
    for (i, mut gains) in bucketed.into_iter().enumerate() {
        if gains.is_empty() {
            continue;
        }
        gains.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = gains.iter().sum::<f64>() / gains.len() as f64;
        buckets.push(GainBucket {
            complexity_lo: i as f64 / num_buckets as f64,
            complexity_hi: (i + 1) as f64 / num_buckets as f64,
            n: gains.len(),
            min: gains[0],
            q1: quantile(&gains, 0.25),
            median: quantile(&gains, 0.5),
            q3: quantile(&gains, 0.75),
            mean,
            max: gains[gains.len() - 1],
        });
    }

    Ok(GainReport { method_a, method_b, per_item, buckets })
}

// ---------------------------------------------------------------------------
// Chain length and throughput
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub method: String,
    pub model: String,
    pub n: usize,
    pub mean_chain_length: f64,
    pub min: usize,
    pub max: usize,
}

pub fn chain_lengths(records: &[EvalRecord]) -> Result<Vec<ChainRow>> {
    if records.is_empty() {
        return Err(Error::Analysis("no records for chain-length analysis".into()));
    }
    let mut groups: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for record in records {
        groups
            .entry((record.method.name().to_string(), record.model_name.clone()))
            .or_default()
            .push(record.chain_length);
    }
    Ok(groups
        .into_iter()
        .map(|((method, model), lengths)| ChainRow {
            method,
            model,
            n: lengths.len(),
            mean_chain_length: lengths.iter().sum::<usize>() as f64 / lengths.len() as f64,
            min: *lengths.iter().min().unwrap(),
            max: *lengths.iter().max().unwrap(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRow {
    pub model: String,
    pub method: String,
    pub total_tokens: usize,
    pub total_seconds: f64,
    /// sum(tokens) / sum(seconds), rounded to two decimals.
    pub tokens_per_sec: f64,
}

pub fn throughput(records: &[EvalRecord]) -> Result<Vec<ThroughputRow>> {
    if records.is_empty() {
        return Err(Error::Analysis("no records for throughput analysis".into()));
    }
    let mut groups: BTreeMap<(String, String), (usize, f64)> = BTreeMap::new();
    for record in records {
        let entry = groups
            .entry((record.model_name.clone(), record.method.name().to_string()))
            .or_insert((0, 0.0));
        entry.0 += record.tokens_generated;
        entry.1 += record.wall_seconds;
    }
    let mut rows = Vec::new();
    for ((model, method), (tokens, seconds)) in groups {
        if seconds <= 0.0 {
            return Err(Error::Analysis(format!("zero total time for ({model}, {method})")));
        }
        rows.push(ThroughputRow {
            model,
            method,
            total_tokens: tokens,
            total_seconds: seconds,
            tokens_per_sec: round2(tokens as f64 / seconds),
        });
    }
    Ok(rows)
}
