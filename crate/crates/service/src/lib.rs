//! JSON-over-HTTP facade for the persona knowledge base: grounded chat with
//! citations, search in three modes, document upserts, persona generation
//! and generation reports.

mod error;
mod handlers;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::extract::{Request, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::{Any, CorsLayer};

use persona_rag_core::chat::{ChatConfig, ChatSession, SystemMessageConfig};
use persona_rag_core::corpus::SuccessStory;
use persona_rag_core::embedding::Embedder;
use persona_rag_core::personagen::{Clock, GenerationRecord, LlmClient, PersonaGenerator, SystemClock};
use persona_rag_core::SearchIndexF32;

pub use error::ApiError;
pub use handlers::{
    ChatRequest, ChatResponse, DocumentsRequest, GenerateRequest, SearchHit, SearchResponse,
};

/// Version of every JSON body this service returns.
pub const SCHEMA_VERSION: u32 = 1;
pub const API_KEY_HEADER: &str = "x-api-key";
/// Number of earlier turns that went into the prompt of a chat answer.
pub const HISTORY_LENGTH_HEADER: &str = "x-history-length";
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(3600);
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen_address: String,
    /// Saved after every successful document upsert when set.
    pub index_path: Option<PathBuf>,
    pub api_key: Option<String>,
    /// Allowed CORS origins; empty allows any origin.
    pub cors_origins: Vec<String>,
    pub session_ttl: Duration,
    /// Chat exchanges are appended here as JSON lines when set.
    pub transcript_log: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen_address: DEFAULT_ADDR.to_string(),
            index_path: None,
            api_key: None,
            cors_origins: Vec::new(),
            session_ttl: DEFAULT_SESSION_TTL,
            transcript_log: None,
        }
    }
}

impl ServiceConfig {
    /// Reads `PERSONA_RAG_ADDR`, `PERSONA_RAG_INDEX` and `PERSONA_RAG_API_KEY`.
    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        Self {
            listen_address: var("PERSONA_RAG_ADDR").unwrap_or_else(|| DEFAULT_ADDR.to_string()),
            index_path: var("PERSONA_RAG_INDEX").map(PathBuf::from),
            api_key: var("PERSONA_RAG_API_KEY"),
            ..Self::default()
        }
    }
}

pub(crate) struct SessionSlot {
    pub session: ChatSession,
    pub last_used: Instant,
}

/// Everything the handlers share. The index sits behind a reader–writer
/// lock; each chat session has its own lock so one session answers one
/// query at a time while distinct sessions proceed in parallel.
pub struct AppState {
    pub(crate) index: RwLock<SearchIndexF32>,
    pub(crate) embedder: Arc<dyn Embedder<f32>>,
    pub(crate) llm: Arc<dyn LlmClient>,
    pub(crate) clock: Arc<dyn Clock>,
    pub(crate) system_message: SystemMessageConfig,
    pub(crate) chat_config: ChatConfig,
    pub(crate) generator: Option<PersonaGenerator>,
    pub(crate) stories: BTreeMap<String, SuccessStory>,
    pub(crate) records: Mutex<Vec<GenerationRecord>>,
    pub(crate) sessions: Mutex<HashMap<String, Arc<Mutex<SessionSlot>>>>,
    pub(crate) config: ServiceConfig,
}

impl AppState {
    pub fn new(
        index: SearchIndexF32,
        embedder: Arc<dyn Embedder<f32>>,
        llm: Arc<dyn LlmClient>,
        config: ServiceConfig,
    ) -> Self {
        Self {
            index: RwLock::new(index),
            embedder,
            llm,
            clock: Arc::new(SystemClock::default()),
            system_message: SystemMessageConfig::bundled(),
            chat_config: ChatConfig::default(),
            generator: None,
            stories: BTreeMap::new(),
            records: Mutex::new(Vec::new()),
            sessions: Mutex::new(HashMap::new()),
            config,
        }
    }

    pub fn with_system_message(mut self, sys: SystemMessageConfig) -> Self {
        self.system_message = sys;
        self
    }

    pub fn with_chat_config(mut self, cfg: ChatConfig) -> Self {
        self.chat_config = cfg;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_generator(mut self, generator: PersonaGenerator) -> Self {
        self.generator = Some(generator);
        self
    }

    /// Stories that `/personas/generate` can refer to by id.
    pub fn with_stories(mut self, stories: impl IntoIterator<Item = SuccessStory>) -> Self {
        self.stories = stories.into_iter().map(|s| (s.story_id.clone(), s)).collect();
        self
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().map(|s| s.len()).unwrap_or(0)
    }

    /// Existing session or a new one under `id` (a fresh id when absent).
    /// Expired sessions are dropped first.
    pub(crate) fn session(&self, id: Option<&str>) -> Result<(String, Arc<Mutex<SessionSlot>>), ApiError> {
        let mut map = self.sessions.lock().map_err(|_| ApiError::internal("session store poisoned"))?;
        let ttl = self.config.session_ttl;
        map.retain(|_, slot| match slot.try_lock() {
            Ok(s) => s.last_used.elapsed() < ttl,
            // in use right now, so certainly not idle
            Err(_) => true,
        });
        let id = id
            .map(str::to_string)
            .unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        let slot = map
            .entry(id.clone())
            .or_insert_with(|| {
                Arc::new(Mutex::new(SessionSlot {
                    session: ChatSession::new(id.clone(), self.clock.now()),
                    last_used: Instant::now(),
                }))
            })
            .clone();
        Ok((id, slot))
    }

    pub(crate) fn log_transcript(&self, entry: &serde_json::Value) {
        let Some(path) = &self.config.transcript_log else {
            return;
        };
        let line = format!("{entry}\n");
        let result = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| f.write_all(line.as_bytes()));
        if let Err(e) = result {
            tracing::warn!("transcript log {}: {e}", path.display());
        }
    }
}

async fn require_api_key(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(expected) = &state.config.api_key {
        let given = req.headers().get(API_KEY_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid API key")
                .into_response();
        }
    }
    next.run(req).await
}

fn cors(origins: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any)
        .expose_headers([axum::http::HeaderName::from_static(HISTORY_LENGTH_HEADER)]);
    let parsed: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
    if parsed.is_empty() {
        layer.allow_origin(Any)
    } else {
        layer.allow_origin(parsed)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let protected = Router::new()
        .route("/chat", post(handlers::chat))
        .route("/search", get(handlers::search))
        .route("/documents", post(handlers::documents))
        .route("/personas/generate", post(handlers::generate))
        .route("/reports/generation", get(handlers::generation_report))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_api_key));
    Router::new()
        .route("/healthz", get(handlers::healthz))
        .merge(protected)
        .layer(cors(&state.config.cors_origins))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>) -> std::io::Result<()> {
    let addr: SocketAddr = state
        .config
        .listen_address
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("listen address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
