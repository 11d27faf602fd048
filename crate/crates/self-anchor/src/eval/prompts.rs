//! Prompt templates for the evaluated methods.
//!
//! Every method's prompt ends with the same conclusion instruction so answer
//! extraction works uniformly across methods.

use crate::error::Result;
use crate::eval::{BenchmarkItem, Method, TaskKind};
use crate::prompt::{PromptParts, PromptTemplate};

/// Shared instruction that pins the extraction format.
pub const CONCLUDE_INSTRUCTION: &str =
    "Conclude with the final answer using the format: \"Final answer\": \"<your answer>\"";

const STRUCTURED_SYSTEM: &str = "You are an expert problem solver. Your task is to decompose the given problem into a clear, step-by-step plan, reasoning the plan and solve the problem step by step in JSON format.\n\nFor each plan step, provide a key-value pair: the key is the plan step (as stated), the value is the detailed reasoning and action for that step.\n\nNow, implement a reasoning structure to follow step-by-step and arrive at correct answers in JSON format. Conclude with the final answer using the format: \"Final answer\": \"<your answer>\".\n\nOriginal problem: ";

const COT_INSTRUCTION: &str = "Let's think step by step.";

const PS_PLUS_MATH: &str = "Let's first understand the problem, extract relevant variables and their corresponding numerals, and make and devise a complete plan. Then, let's carry out the plan, calculate intermediate variables (pay attention to correct numerical calculation and commonsense), solve the problem step by step, and show the answer.";

const PS_PLUS_GENERAL: &str = "Let's first prepare relevant information and make a plan. Then, let's answer the question step by step (pay attention to commonsense and logical coherence).";

const RE2_MARKER: &str = "Read the question again:";

/// A prompt ready for assembly: the tracked parts plus the layout around the
/// question slot (the template prefix always equals the system text).
#[derive(Debug, Clone)]
pub struct RenderedPrompt {
    pub parts: PromptParts,
    pub template: PromptTemplate,
}

/// The question as presented to the model: the raw statement plus labeled
/// options when the item has them.
pub fn question_with_options(item: &BenchmarkItem) -> String {
    match &item.options {
        Some(options) if !options.is_empty() => {
            let mut text = item.question.clone();
            text.push_str("\nOptions:");
            for (i, option) in options.iter().enumerate() {
                let label = char::from(b'A' + i as u8);
                text.push_str(&format!("\n({label}) {option}"));
            }
            text
        }
        _ => item.question.clone(),
    }
}

/// The structured decomposition prompt for a bare question, outside any
/// benchmark item (used by `anchor run`).
pub fn structured_prompt(question: &str) -> Result<RenderedPrompt> {
    let parts = PromptParts::new(STRUCTURED_SYSTEM, question)?;
    let template = PromptTemplate { prefix: parts.system_text.clone(), suffix: String::new() };
    Ok(RenderedPrompt { parts, template })
}

/// Renders the method's prompt for one item.
pub fn render_prompt(item: &BenchmarkItem, method: Method) -> Result<RenderedPrompt> {
    let question = question_with_options(item);
    let (system, suffix) = match method {
        Method::Cot => {
            (String::new(), format!("\n\n{COT_INSTRUCTION}\n{CONCLUDE_INSTRUCTION}"))
        }
        Method::PsPlus => {
            let variant =
                if item.task_kind == TaskKind::Numeric { PS_PLUS_MATH } else { PS_PLUS_GENERAL };
            (String::new(), format!("\n\n{variant}\n{CONCLUDE_INSTRUCTION}"))
        }
        Method::Re2 => {
            (format!("{question}\n\n{RE2_MARKER}\n\n"), format!("\n\n{CONCLUDE_INSTRUCTION}"))
        }
        Method::SelfAnchor | Method::SelfAnchorNoSteer => {
            (STRUCTURED_SYSTEM.to_string(), String::new())
        }
    };
    let parts = PromptParts::new(system, question)?;
    let template = PromptTemplate { prefix: parts.system_text.clone(), suffix };
    Ok(RenderedPrompt { parts, template })
}
