//! `key = value` settings shared by all subcommands. A settings file is read
//! first, then `--set key=value` flags override it.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use persona_rag_core::chat::{ChatConfig, DEFAULT_CONTEXT_BUDGET, DEFAULT_HISTORY_TURNS};
use persona_rag_core::corpus::{DEFAULT_CONTAINER_SELECTOR, DEFAULT_MAX_CHUNK_CHARS, DEFAULT_PARAGRAPH_TAG};
use persona_rag_core::embedding::EmbedBackend;
use persona_rag_core::retrieval::RetrievalConfig;

use crate::CliError;

pub const DEFAULT_MOCK_DIMENSION: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmBackend {
    /// Offline deterministic responder.
    Scripted,
    /// Replays responses recorded in `llm.script`.
    Replay,
    Remote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub embed_backend: EmbedBackend,
    pub embed_dimension: usize,
    pub embed_cache: Option<PathBuf>,
    pub llm_backend: LlmBackend,
    pub llm_script: Option<PathBuf>,
    pub top_k: usize,
    pub per_method_depth: usize,
    pub rrf_k: f64,
    pub history_turns: usize,
    pub context_budget: usize,
    pub container_selector: String,
    pub paragraph_tag: String,
    pub max_chunk_chars: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let r = RetrievalConfig::default();
        Self {
            embed_backend: EmbedBackend::Mock,
            embed_dimension: DEFAULT_MOCK_DIMENSION,
            embed_cache: None,
            llm_backend: LlmBackend::Scripted,
            llm_script: None,
            top_k: r.top_k,
            per_method_depth: r.per_method_depth,
            rrf_k: r.rrf_k,
            history_turns: DEFAULT_HISTORY_TURNS,
            context_budget: DEFAULT_CONTEXT_BUDGET,
            container_selector: DEFAULT_CONTAINER_SELECTOR.to_string(),
            paragraph_tag: DEFAULT_PARAGRAPH_TAG.to_string(),
            max_chunk_chars: DEFAULT_MAX_CHUNK_CHARS,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::validation("invalid_setting", format!("bad value `{value}` for `{key}`")))
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), CliError> {
        let value = value.trim().trim_matches('"');
        match key.trim() {
            "embed.backend" => {
                self.embed_backend = match value {
                    "mock" => EmbedBackend::Mock,
                    "remote" => EmbedBackend::Remote,
                    _ => return Err(CliError::validation("invalid_setting", format!("unknown embed backend `{value}`"))),
                }
            }
            "embed.dimension" => self.embed_dimension = parse(key, value)?,
            "embed.cache" => self.embed_cache = Some(base.join(value)),
            "llm.backend" => {
                self.llm_backend = match value {
                    "scripted" => LlmBackend::Scripted,
                    "replay" => LlmBackend::Replay,
                    "remote" => LlmBackend::Remote,
                    _ => return Err(CliError::validation("invalid_setting", format!("unknown llm backend `{value}`"))),
                }
            }
            "llm.script" => self.llm_script = Some(base.join(value)),
            "retrieval.top_k" => self.top_k = parse(key, value)?,
            "retrieval.depth" => self.per_method_depth = parse(key, value)?,
            "retrieval.rrf_k" => self.rrf_k = parse(key, value)?,
            "chat.history_turns" => self.history_turns = parse(key, value)?,
            "chat.context_budget" => self.context_budget = parse(key, value)?,
            "ingest.container_selector" => self.container_selector = value.to_string(),
            "ingest.paragraph_tag" => self.paragraph_tag = value.to_string(),
            "ingest.max_chunk_chars" => self.max_chunk_chars = parse(key, value)?,
            other => return Err(CliError::validation("unknown_setting", format!("unknown setting `{other}`"))),
        }
        Ok(())
    }

    /// Applies a settings file: one `key = value` per line, `#` comments.
    pub fn apply_file(&mut self, text: &str, base: &Path) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::validation("invalid_setting", format!("line {}: expected key = value", i + 1))
            })?;
            self.set(k, v, base)?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, kv: &str, base: &Path) -> Result<(), CliError> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::validation("invalid_setting", format!("expected key=value, got `{kv}`")))?;
        self.set(k, v, base)
    }

    pub fn retrieval(&self) -> RetrievalConfig {
        RetrievalConfig {
            top_k: self.top_k,
            per_method_depth: self.per_method_depth,
            rrf_k: self.rrf_k,
        }
    }

    pub fn chat(&self) -> ChatConfig {
        ChatConfig {
            retrieval: self.retrieval(),
            history_turns: self.history_turns,
            context_budget: self.context_budget,
            ..ChatConfig::default()
        }
    }
}
