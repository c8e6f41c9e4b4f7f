//! The `persona-rag` command line: every pipeline stage as a subcommand.
//!
//! Failures print one JSON line to stderr and exit with 2 (invalid input),
//! 3 (file I/O) or 4 (model or embedding service failure).

mod commands;
mod settings;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use persona_rag_core::chat::ChatError;
use persona_rag_core::corpus::CorpusError;
use persona_rag_core::embedding::EmbedError;
use persona_rag_core::evalstats::EvalError;
use persona_rag_core::index::IndexError;
use persona_rag_core::personagen::{LlmError, PersonaGenError};
use persona_rag_core::retrieval::RetrievalError;

pub use settings::{LlmBackend, Settings, DEFAULT_MOCK_DIMENSION};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_GENERATION: i32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub exit_code: i32,
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn validation(code: &str, message: impl Into<String>) -> Self {
        Self { exit_code: EXIT_VALIDATION, code: code.into(), message: message.into() }
    }
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self { exit_code: EXIT_IO, code: "io".into(), message: format!("{}: {e}", path.display()) }
    }
    pub fn generation(code: &str, message: impl Into<String>) -> Self {
        Self { exit_code: EXIT_GENERATION, code: code.into(), message: message.into() }
    }

    /// The machine-readable error line.
    pub fn to_json_line(&self) -> String {
        json!({"error": {"code": self.code, "exit_code": self.exit_code, "message": self.message}}).to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

fn variant_code<E: std::fmt::Debug>(e: &E) -> String {
    let dbg = format!("{e:?}");
    let name: String = dbg.chars().take_while(|c| c.is_ascii_alphanumeric()).collect();
    // CamelCase → snake_case
    let mut out = String::new();
    for (i, ch) in name.chars().enumerate() {
        if ch.is_ascii_uppercase() && i > 0 {
            out.push('_');
        }
        out.push(ch.to_ascii_lowercase());
    }
    out
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let exit_code = if e.is_io() { EXIT_IO } else { EXIT_VALIDATION };
        Self { exit_code, code: variant_code(&e), message: e.to_string() }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        let exit_code = match e {
            EmbedError::RemoteUnavailable { .. } | EmbedError::BadResponse(_) => EXIT_GENERATION,
            EmbedError::Cache { .. } => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        Self { exit_code, code: variant_code(&e), message: e.to_string() }
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Embed(inner) => inner.into(),
            IndexError::Io(_) => Self { exit_code: EXIT_IO, code: "io".into(), message: e.to_string() },
            other => Self { exit_code: EXIT_VALIDATION, code: variant_code(&other), message: other.to_string() },
        }
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Index(inner) => inner.into(),
            RetrievalError::Embed(inner) => inner.into(),
            other => Self { exit_code: EXIT_VALIDATION, code: variant_code(&other), message: other.to_string() },
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        let exit_code = match e {
            LlmError::Config(_) => EXIT_VALIDATION,
            _ => EXIT_GENERATION,
        };
        Self { exit_code, code: variant_code(&e), message: e.to_string() }
    }
}

impl From<PersonaGenError> for CliError {
    fn from(e: PersonaGenError) -> Self {
        let exit_code = match e {
            PersonaGenError::GenerationFailed { .. } | PersonaGenError::Client(_) => EXIT_GENERATION,
            PersonaGenError::Io(_) => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        Self { exit_code, code: variant_code(&e), message: e.to_string() }
    }
}

impl From<ChatError> for CliError {
    fn from(e: ChatError) -> Self {
        match e {
            ChatError::Retrieval(inner) => inner.into(),
            ChatError::GenerationFailed(_) => Self::generation("generation_failed", e.to_string()),
            ChatError::Io { .. } => Self { exit_code: EXIT_IO, code: "io".into(), message: e.to_string() },
            other => Self { exit_code: EXIT_VALIDATION, code: variant_code(&other), message: other.to_string() },
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        let exit_code = match e {
            EvalError::Io { .. } => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        Self { exit_code, code: variant_code(&e), message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "persona-rag", version, about = "Persona knowledge base pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Base directory for every relative path.
    #[arg(long, global = true, default_value = ".")]
    pub workdir: PathBuf,
    /// Settings file with `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one setting; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed for the mock embedder, the graph and sampling.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Freeze the clock at this RFC 3339 time (zero elapsed time).
    #[arg(long, global = true)]
    pub fixed_time: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract success stories from saved HTML pages.
    Ingest(commands::IngestArgs),
    /// Build and save a search index.
    Index(commands::IndexArgs),
    /// Generate personas from stories with both prompting strategies.
    Generate(commands::GenerateArgs),
    /// McNemar tests over paired judgments.
    Evaluate(commands::EvaluateArgs),
    /// Descriptive statistics for a survey.
    Survey(commands::SurveyArgs),
    /// Ask questions against a saved index.
    Chat(commands::ChatArgs),
    /// Run the HTTP service.
    Serve(commands::ServeArgs),
    /// Write plot-ready CSV files.
    Report(commands::ReportArgs),
}

/// Shared resolved context for one invocation.
pub struct Context {
    pub workdir: PathBuf,
    pub settings: Settings,
    pub seed: u64,
    pub fixed_time: Option<chrono::DateTime<chrono::Utc>>,
}

impl Context {
    pub fn from_args(g: &GlobalArgs) -> Result<Self, CliError> {
        let workdir = g.workdir.clone();
        let mut settings = Settings::default();
        if let Some(cfg) = &g.config {
            let path = workdir.join(cfg);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            settings.apply_file(&text, &workdir)?;
        }
        for kv in &g.overrides {
            settings.apply_override(kv, &workdir)?;
        }
        let fixed_time = g
            .fixed_time
            .as_deref()
            .map(|t| {
                chrono::DateTime::parse_from_rfc3339(t)
                    .map(|d| d.with_timezone(&chrono::Utc))
                    .map_err(|e| CliError::validation("invalid_time", format!("--fixed-time: {e}")))
            })
            .transpose()?;
        Ok(Self { workdir, settings, seed: g.seed, fixed_time })
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        self.workdir.join(p)
    }
}

/// Runs one parsed invocation, writing its summary to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let ctx = Context::from_args(&cli.global)?;
    match cli.command {
        Command::Ingest(a) => commands::ingest(&ctx, a, out),
        Command::Index(a) => commands::index(&ctx, a, out),
        Command::Generate(a) => commands::generate(&ctx, a, out),
        Command::Evaluate(a) => commands::evaluate(&ctx, a, out),
        Command::Survey(a) => commands::survey(&ctx, a, out),
        Command::Chat(a) => commands::chat(&ctx, a, out),
        Command::Serve(a) => commands::serve(&ctx, a, out),
        Command::Report(a) => commands::report(&ctx, a, out),
    }
}
