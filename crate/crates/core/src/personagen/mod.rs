//! Persona synthesis from success stories with few-shot and
//! chain-of-thought prompts.

mod generate;
mod llm;
mod parse;
mod prompt;
pub mod synth;

use thiserror::Error;

pub use generate::{
    read_records_jsonl, write_records_jsonl, BatchFailure, BatchOutcome, Clock, FixedClock,
    GenerationRecord, PersonaGenerator, SystemClock, REPAIR_INSTRUCTION,
};
pub use llm::{
    messages_hash, render_messages, whitespace_tokens, Completion, CompletionParams, LlmClient,
    LlmError, Message, RemoteLlmClient, Responder, Role, ScriptedClient,
};
pub use parse::parse_persona_output;
pub use prompt::{
    build_cot_prompt, build_few_shot_prompt, PromptStrategy, PromptTemplate, DEFAULT_COT_TEMPLATE,
    DEFAULT_FEW_SHOT_TEMPLATE, EXAMPLE_MARKER, FEW_SHOT_EXAMPLE_COUNT, MIN_REASONING_STEPS,
    REASONING_HEADING, STORY_MARKER,
};

#[derive(Debug, Error)]
pub enum PersonaGenError {
    #[error("few-shot prompts need exactly {expected} examples, got {found}")]
    WrongExampleCount { expected: usize, found: usize },
    #[error("example persona {index} has unknown or empty attributes: {}", attributes.join(", "))]
    IncompleteExample { index: usize, attributes: Vec<String> },
    #[error("success story has no text")]
    EmptyStory,
    #[error("model output contains no JSON object")]
    NoJsonFound,
    #[error("model output lacks persona attributes: {}", .0.join(", "))]
    MissingAttribute(Vec<String>),
    #[error("template error: {0}")]
    Template(String),
    #[error("unknown prompt strategy `{0}` (expected few_shot or cot)")]
    UnknownStrategy(String),
    #[error("generation failed after {attempts} attempt(s): {reason}")]
    GenerationFailed {
        attempts: u32,
        reason: String,
        raw_response: Option<String>,
    },
    #[error(transparent)]
    Client(#[from] LlmError),
    #[error("record i/o: {0}")]
    Io(String),
}
