//! Benchmark evaluation: datasets, answer extraction, scoring, and the
//! chain-length measure.

pub mod analysis;
pub mod prompts;
pub mod runner;

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What shape of answer an item expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    MultipleChoice,
    Numeric,
    Boolean,
    FreeText,
}

/// Evaluation method / prompting strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cot,
    PsPlus,
    Re2,
    SelfAnchor,
    SelfAnchorNoSteer,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::Cot, Method::PsPlus, Method::Re2, Method::SelfAnchor, Method::SelfAnchorNoSteer];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Cot => "cot",
            Method::PsPlus => "ps_plus",
            Method::Re2 => "re2",
            Method::SelfAnchor => "self_anchor",
            Method::SelfAnchorNoSteer => "self_anchor_no_steer",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cot" => Ok(Method::Cot),
            "ps_plus" => Ok(Method::PsPlus),
            "re2" => Ok(Method::Re2),
            "self_anchor" => Ok(Method::SelfAnchor),
            "self_anchor_no_steer" => Ok(Method::SelfAnchorNoSteer),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// One benchmark question with its gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub task_kind: TaskKind,
    pub question: String,
    /// Choice texts; labels A, B, C, ... are implied by position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    pub gold: String,
    pub suite: String,
}

impl BenchmarkItem {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.question.is_empty() {
            return Err("empty question".into());
        }
        match self.task_kind {
            TaskKind::MultipleChoice => {
                let options = self.options.as_ref().ok_or("multiple_choice item without options")?;
                if options.len() < 2 {
                    return Err("multiple_choice item needs at least 2 options".into());
                }
                if options.len() > 26 {
                    return Err("more than 26 options cannot be labeled A..Z".into());
                }
                let mut gold_chars = self.gold.chars();
                let label = gold_chars.next().ok_or("empty gold")?;
                if gold_chars.next().is_some()
                    || !label.is_ascii_uppercase()
                    || (label as usize - 'A' as usize) >= options.len()
                {
                    return Err(format!("gold `{}` is not a valid option label", self.gold));
                }
            }
            TaskKind::Numeric => {
                let normalized = normalize_answer(&self.gold, TaskKind::Numeric)
                    .ok_or(format!("gold `{}` is not numeric", self.gold))?;
                if normalized != self.gold {
                    return Err(format!(
                        "numeric gold must be pre-normalized: `{}` (expected `{normalized}`)",
                        self.gold
                    ));
                }
            }
            TaskKind::Boolean => {
                if self.gold != "yes" && self.gold != "no" {
                    return Err(format!("boolean gold must be `yes` or `no`, got `{}`", self.gold));
                }
            }
            TaskKind::FreeText => {
                if self.gold.is_empty() {
                    return Err("empty gold".into());
                }
            }
        }
        Ok(())
    }
}

/// One scored run of one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item_id: String,
    pub method: Method,
    pub model_name: String,
    pub prediction_raw: String,
    #[serde(default)]
    pub prediction_norm: Option<String>,
    pub correct: bool,
    pub tokens_generated: usize,
    pub wall_seconds: f64,
    pub chain_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_ref: Option<String>,
}

/// Loads a JSONL dataset, validating every line and rejecting duplicate ids.
pub fn load_dataset(path: &Path) -> Result<Vec<BenchmarkItem>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Load { line: 0, msg: format!("cannot open {}: {e}", path.display()) })?;
    let mut items = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Load { line: lineno, msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let item: BenchmarkItem = serde_json::from_str(&line)
            .map_err(|e| Error::Load { line: lineno, msg: e.to_string() })?;
        item.validate().map_err(|msg| Error::Load { line: lineno, msg })?;
        if !seen.insert(item.id.clone()) {
            return Err(Error::Load { line: lineno, msg: format!("duplicate id `{}`", item.id) });
        }
        items.push(item);
    }
    Ok(items)
}

/// Loads evaluation records from a results JSONL file.
pub fn load_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Load { line: 0, msg: format!("cannot open {}: {e}", path.display()) })?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Load { line: lineno, msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EvalRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Load { line: lineno, msg: e.to_string() })?;
        records.push(record);
    }
    Ok(records)
}

/// Writes records as JSONL, one per line.
pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for record in records {
        serde_json::to_writer(&mut file, record)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// Raw capture of the final-answer marker, before normalization.
///
/// Looks for the last case-insensitive `final answer`, then takes the
/// following quoted string, or the remainder of that line after a colon.
/// Models often restate the marker; the final statement is authoritative.
pub fn capture_final_answer(text: &str) -> Option<String> {
    let marker = regex_lite_find_last(text)?;
    let tail = &text[marker..];
    let line = tail.split('\n').next().unwrap_or("");

    // skip the key's own closing quote plus optional colon, then try a
    // quoted capture (which may continue on the next line)
    let mut scan = tail;
    if let Some(rest) = scan.strip_prefix('"') {
        scan = rest;
    }
    scan = scan.trim_start();
    if let Some(rest) = scan.strip_prefix(':') {
        scan = rest.trim_start();
    }
    if let Some(rest) = scan.strip_prefix('"') {
        if let Some(close) = rest.find('"') {
            let captured = rest[..close].trim();
            if !captured.is_empty() {
                return Some(captured.to_string());
            }
            return None;
        }
    }

    // line rule: remainder of the marker's line after a colon
    let after_colon = line.find(':').map(|i| line[i + 1..].trim())?;
    let stripped = strip_wrapping_quotes(after_colon).trim();
    if stripped.is_empty() {
        None
    } else {
        Some(stripped.to_string())
    }
}

// end byte offset of the last case-insensitive "final answer"
fn regex_lite_find_last(text: &str) -> Option<usize> {
    use std::sync::OnceLock;
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    let re = RE.get_or_init(|| regex::Regex::new(r"(?i)final answer").unwrap());
    re.find_iter(text).last().map(|m| m.end())
}

fn strip_wrapping_quotes(s: &str) -> &str {
    let s = s.trim();
    if s.len() >= 2 && s.starts_with('"') && s.ends_with('"') {
        &s[1..s.len() - 1]
    } else {
        s
    }
}

/// Canonicalizes a raw capture for the task kind. `None` means the capture
/// does not contain an answer of the right shape.
pub fn normalize_answer(raw: &str, kind: TaskKind) -> Option<String> {
    let raw = raw.trim();
    match kind {
        TaskKind::MultipleChoice => {
            let chars: Vec<char> = raw.chars().collect();
            for (i, c) in chars.iter().enumerate() {
                if !matches!(c, 'A'..='E' | 'a'..='e') {
                    continue;
                }
                let prev_alnum = i > 0 && chars[i - 1].is_alphanumeric();
                let next_alnum = i + 1 < chars.len() && chars[i + 1].is_alphanumeric();
                if !prev_alnum && !next_alnum {
                    return Some(c.to_ascii_uppercase().to_string());
                }
            }
            None
        }
        TaskKind::Numeric => {
            let cleaned: String = raw
                .chars()
                .filter(|c| !matches!(c, '$' | '€' | '£' | '¥' | ',') && !c.is_whitespace())
                .collect();
            let cleaned = cleaned.trim_end_matches('.');
            let value: f64 = cleaned.parse().ok()?;
            if !value.is_finite() {
                return None;
            }
            Some(format!("{value}"))
        }
        TaskKind::Boolean => {
            let cleaned = raw.trim_matches('"').trim_end_matches('.').trim().to_lowercase();
            match cleaned.as_str() {
                "yes" | "true" => Some("yes".to_string()),
                "no" | "false" => Some("no".to_string()),
                _ => None,
            }
        }
        TaskKind::FreeText => {
            if raw.is_empty() {
                None
            } else {
                Some(raw.to_string())
            }
        }
    }
}

/// Locates and normalizes the final answer in a transcript.
pub fn extract_answer(text: &str, kind: TaskKind) -> Option<String> {
    normalize_answer(&capture_final_answer(text)?, kind)
}

/// Exact match after normalization; numeric answers compare as numbers with
/// 1e-6 relative tolerance. A missing prediction never scores.
pub fn score(prediction: Option<&str>, gold: &str, kind: TaskKind) -> bool {
    let Some(prediction) = prediction else {
        return false;
    };
    if prediction == gold {
        return true;
    }
    if kind == TaskKind::Numeric {
        if let (Ok(a), Ok(b)) = (prediction.parse::<f64>(), gold.parse::<f64>()) {
            if a == b {
                return true;
            }
            return (a - b).abs() <= 1e-6 * b.abs().max(a.abs());
        }
    }
    false
}

/// Number of non-empty lines: split on newline, trim, drop empties.
pub fn chain_length(text: &str) -> usize {
    text.split('\n').map(str::trim).filter(|l| !l.is_empty()).count()
}
