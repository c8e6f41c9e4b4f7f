//! Grounded question answering: retrieve the top documents for a query, put
//! them in front of the model together with the recent conversation, and
//! record which documents were supplied.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Embedder;
use crate::index::SearchIndex;
use crate::personagen::synth::SOURCE_MARKER;
use crate::personagen::{CompletionParams, LlmClient, LlmError, Message};
use crate::retrieval::{hybrid_search, FusedHit, RetrievalConfig, RetrievalError};
use crate::sections::{list_lines, section_map};
use crate::Scalar;

pub const DEFAULT_SYSTEM_MESSAGE: &str = include_str!("../templates/system_message.txt");
pub const DEFAULT_HISTORY_TURNS: usize = 10;
pub const DEFAULT_CONTEXT_BUDGET: usize = 24_000;
/// Smallest accepted context budget; leaves room for three source headers.
pub const MIN_CONTEXT_BUDGET: usize = 512;
/// Titles longer than this are shortened in source headers.
const MAX_HEADER_TITLE_CHARS: usize = 120;
/// Context text used when retrieval returns nothing.
pub const NO_CONTEXT_NOTE: &str =
    "No context available: the knowledge base returned no documents for this question.";

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("empty query")]
    EmptyQuery,
    #[error("system message is missing the [{0}] section")]
    MissingSection(String),
    #[error("answer generation failed: {0}")]
    GenerationFailed(#[from] LlmError),
    #[error(transparent)]
    Retrieval(RetrievalError),
    #[error("invalid chat config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl From<RetrievalError> for ChatError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::EmptyQuery => ChatError::EmptyQuery,
            other => ChatError::Retrieval(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemMessageConfig {
    pub role_instructions: String,
    pub tone: String,
    pub answer_guidelines: Vec<String>,
    pub source_file: Option<PathBuf>,
}

impl SystemMessageConfig {
    /// Parses `[role]`, `[tone]` and `[guidelines]` sections; guidelines are
    /// one per line.
    pub fn parse(text: &str, source_file: Option<PathBuf>) -> Result<Self, ChatError> {
        let sections = section_map(text);
        let get = |name: &str| {
            sections
                .get(name)
                .filter(|s| !s.trim().is_empty())
                .cloned()
                .ok_or_else(|| ChatError::MissingSection(name.to_string()))
        };
        let role_instructions = get("role")?;
        let tone = get("tone")?;
        let answer_guidelines = list_lines(&get("guidelines")?);
        Ok(Self {
            role_instructions,
            tone,
            answer_guidelines,
            source_file,
        })
    }

    pub fn bundled() -> Self {
        Self::parse(DEFAULT_SYSTEM_MESSAGE, None).expect("bundled system message is valid")
    }

    /// System prompt text without the context documents.
    pub fn render(&self) -> String {
        let mut out = format!("{}\n\nTone: {}\n\nGuidelines:\n", self.role_instructions, self.tone);
        for g in &self.answer_guidelines {
            out.push_str("- ");
            out.push_str(g);
            out.push('\n');
        }
        out
    }
}

pub fn load_system_message(path: &Path) -> Result<SystemMessageConfig, ChatError> {
    let text = std::fs::read_to_string(path).map_err(|source| ChatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SystemMessageConfig::parse(&text, Some(path.to_path_buf()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnRole {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: TurnRole,
    pub text: String,
    /// Documents given to the model for this answer; empty for user turns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cited_doc_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    pub turns: Vec<Turn>,
    pub created_at: DateTime<Utc>,
}

impl ChatSession {
    pub fn new(session_id: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        Self {
            session_id: session_id.into(),
            turns: Vec::new(),
            created_at,
        }
    }

    /// Roles alternate, starting with the user.
    pub fn is_well_formed(&self) -> bool {
        self.turns.iter().enumerate().all(|(i, t)| {
            let expected = if i % 2 == 0 { TurnRole::User } else { TurnRole::Assistant };
            t.role == expected && (t.role == TurnRole::Assistant || t.cited_doc_ids.is_empty())
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatConfig {
    pub retrieval: RetrievalConfig,
    /// Most recent session turns (user and assistant messages each count as
    /// one) included in the prompt.
    pub history_turns: usize,
    /// Upper bound, in characters, on the assembled context block.
    pub context_budget: usize,
    pub params: CompletionParams,
}

impl Default for ChatConfig {
    fn default() -> Self {
        Self {
            retrieval: RetrievalConfig::default(),
            history_turns: DEFAULT_HISTORY_TURNS,
            context_budget: DEFAULT_CONTEXT_BUDGET,
            params: CompletionParams::default(),
        }
    }
}

impl ChatConfig {
    pub fn validate(&self) -> Result<(), ChatError> {
        self.retrieval.validate()?;
        if self.context_budget < MIN_CONTEXT_BUDGET {
            return Err(ChatError::InvalidConfig(format!(
                "context budget must be at least {MIN_CONTEXT_BUDGET} characters"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub doc_id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatAnswer {
    pub answer_text: String,
    pub citations: Vec<Citation>,
    /// The exact messages sent to the model.
    pub prompt: Vec<Message>,
    /// Character length of the context block inside the system message.
    pub context_chars: usize,
}

fn char_prefix(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn source_header(n: usize, title: &str) -> String {
    let title = title.replace(['\n', '\r'], " ");
    let short = char_prefix(&title, MAX_HEADER_TITLE_CHARS);
    format!("{SOURCE_MARKER} {n}: {short}\n")
}

/// Concatenates `(title, content)` pairs as labelled blocks within `budget`
/// characters. When the contents do not fit, every content is cut to the
/// same fraction of its length; the rank order and the set of documents are
/// kept. Returns the context and the number of documents it contains.
pub fn assemble_context(docs: &[(&str, &str)], budget: usize) -> (String, usize) {
    if docs.is_empty() {
        return (NO_CONTEXT_NOTE.to_string(), 0);
    }
    const SEPARATOR: &str = "\n\n";
    let headers: Vec<String> = docs
        .iter()
        .enumerate()
        .map(|(i, (title, _))| source_header(i + 1, title))
        .collect();
    // Lower-ranked documents go first if even the headers do not fit.
    let mut kept = docs.len();
    let overhead = |k: usize| -> usize {
        headers[..k].iter().map(|h| h.chars().count()).sum::<usize>()
            + SEPARATOR.len() * (k - 1)
    };
    while kept > 1 && overhead(kept) > budget {
        kept -= 1;
    }
    let available = budget.saturating_sub(overhead(kept));
    let lengths: Vec<usize> = docs[..kept].iter().map(|(_, c)| c.chars().count()).collect();
    let total: usize = lengths.iter().sum();

    let mut blocks = Vec::with_capacity(kept);
    for (i, (_, content)) in docs[..kept].iter().enumerate() {
        let keep = if total <= available {
            lengths[i]
        } else {
            // floor(available·len/total) sums to at most `available`.
            ((available as u128 * lengths[i] as u128) / total as u128) as usize
        };
        blocks.push(format!("{}{}", headers[i], char_prefix(content, keep)));
    }
    (blocks.join(SEPARATOR), kept)
}

/// Answers `query` within `session`. On success the user turn and the
/// assistant turn are appended; on any failure the session is untouched.
#[allow(clippy::too_many_arguments)]
pub fn answer<F: Scalar, E: Embedder<F> + ?Sized>(
    session: &mut ChatSession,
    query: &str,
    index: &SearchIndex<F>,
    embedder: &E,
    cfg: &ChatConfig,
    client: &dyn LlmClient,
    sys: &SystemMessageConfig,
) -> Result<ChatAnswer, ChatError> {
    if query.trim().is_empty() {
        return Err(ChatError::EmptyQuery);
    }
    cfg.validate()?;
    let hits: Vec<FusedHit<F>> = match hybrid_search(index, embedder, query, &cfg.retrieval) {
        Ok(h) => h,
        Err(RetrievalError::EmptyIndex) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let docs: Vec<(&str, &str)> = hits
        .iter()
        .filter_map(|h| index.get(&h.doc_id))
        .map(|d| (d.title.as_str(), d.content.as_str()))
        .collect();
    let (context, included) = assemble_context(&docs, cfg.context_budget);
    let citations: Vec<Citation> = hits
        .iter()
        .take(included)
        .map(|h| Citation {
            doc_id: h.doc_id.clone(),
            title: h.title.clone(),
        })
        .collect();

    let mut prompt = vec![Message::system(format!(
        "{}\nContext documents:\n\n{context}",
        sys.render()
    ))];
    let start = session.turns.len().saturating_sub(cfg.history_turns);
    for turn in &session.turns[start..] {
        prompt.push(match turn.role {
            TurnRole::User => Message::user(turn.text.clone()),
            TurnRole::Assistant => Message::assistant(turn.text.clone()),
        });
    }
    prompt.push(Message::user(query));

    let completion = client.complete(&prompt, &cfg.params)?;
    session.turns.push(Turn {
        role: TurnRole::User,
        text: query.to_string(),
        cited_doc_ids: Vec::new(),
    });
    session.turns.push(Turn {
        role: TurnRole::Assistant,
        text: completion.text.clone(),
        cited_doc_ids: citations.iter().map(|c| c.doc_id.clone()).collect(),
    });
    Ok(ChatAnswer {
        answer_text: completion.text,
        citations,
        prompt,
        context_chars: context.chars().count(),
    })
}
