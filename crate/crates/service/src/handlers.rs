use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::{HeaderMap, HeaderValue};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::json;

use persona_rag_core::chat::{answer, Citation};
use persona_rag_core::corpus::{Segment, SuccessStory};
use persona_rag_core::evalstats::efficiency_summary;
use persona_rag_core::index::{save_index, Category, IndexError, NewDocument};
use persona_rag_core::personagen::PromptStrategy;
use persona_rag_core::retrieval::{hybrid_search, RetrievalConfig, RetrievalError};

use crate::{ApiError, AppState, HISTORY_LENGTH_HEADER, SCHEMA_VERSION};

/// Largest `k` accepted by `/search`.
const MAX_K: usize = 1000;

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request("invalid_json", e.body_text()))
}

pub async fn healthz(State(state): State<Arc<AppState>>) -> Result<Json<serde_json::Value>, ApiError> {
    let index = state.index.read().map_err(|_| ApiError::internal("index lock poisoned"))?;
    let by_category: BTreeMap<&str, usize> = index
        .count_by_category()
        .into_iter()
        .map(|(c, n)| (c.as_str(), n))
        .collect();
    Ok(Json(json!({
        "schema_version": SCHEMA_VERSION,
        "status": "ok",
        "name": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "embedder_id": index.embedder_id(),
        "documents": index.len(),
        "documents_by_category": by_category,
        "sessions": state.session_count(),
    })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(default)]
    pub session_id: Option<String>,
    pub query: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatResponse {
    pub schema_version: u32,
    pub session_id: String,
    pub answer: String,
    pub citations: Vec<Citation>,
}

pub async fn chat(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ChatRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = json_body(body)?;
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("empty_query", "query must not be empty"));
    }
    let (session_id, slot) = state.session(req.session_id.as_deref())?;
    let st = state.clone();
    let sid = session_id.clone();
    let (answered, history) = blocking(move || {
        let mut slot = slot.lock().map_err(|_| ApiError::internal("session lock poisoned"))?;
        let index = st.index.read().map_err(|_| ApiError::internal("index lock poisoned"))?;
        let history = slot.session.turns.len().min(st.chat_config.history_turns);
        let a = answer(
            &mut slot.session,
            &req.query,
            &*index,
            st.embedder.as_ref(),
            &st.chat_config,
            st.llm.as_ref(),
            &st.system_message,
        )?;
        slot.last_used = Instant::now();
        st.log_transcript(&json!({
            "session_id": sid,
            "at": st.clock.now(),
            "query": req.query,
            "answer": a.answer_text,
            "citations": a.citations,
        }));
        Ok((a, history))
    })
    .await?;

    let body = ChatResponse {
        schema_version: SCHEMA_VERSION,
        session_id,
        answer: answered.answer_text,
        citations: answered.citations,
    };
    let mut headers = HeaderMap::new();
    headers.insert(HISTORY_LENGTH_HEADER, HeaderValue::from(history));
    Ok((headers, Json(body)).into_response())
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct SearchParams {
    pub q: Option<String>,
    pub mode: Option<String>,
    pub k: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Hybrid,
    Keyword,
    Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc_id: String,
    pub title: String,
    pub category: Category,
    pub score: f64,
    pub rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyword_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub schema_version: u32,
    pub mode: SearchMode,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    pub hits: Vec<SearchHit>,
}

/// Splits `category:<name>` tokens off the query text.
fn split_category(q: &str) -> Result<(String, Option<Category>), ApiError> {
    let mut category = None;
    let mut rest = Vec::new();
    for token in q.split_whitespace() {
        match token.strip_prefix("category:") {
            Some(name) => {
                let c: Category = name
                    .parse()
                    .map_err(|_| ApiError::bad_request("invalid_category", format!("unknown category `{name}`")))?;
                category = Some(c);
            }
            None => rest.push(token),
        }
    }
    Ok((rest.join(" "), category))
}

pub async fn search(
    State(state): State<Arc<AppState>>,
    params: Result<Query<SearchParams>, QueryRejection>,
) -> Result<Json<SearchResponse>, ApiError> {
    let Query(p) = params.map_err(|e| ApiError::bad_request("invalid_query", e.body_text()))?;
    let raw = p.q.unwrap_or_default();
    let mode = match p.mode.as_deref().unwrap_or("hybrid") {
        "hybrid" => SearchMode::Hybrid,
        "keyword" => SearchMode::Keyword,
        "vector" => SearchMode::Vector,
        other => return Err(ApiError::bad_request("invalid_mode", format!("unknown mode `{other}`"))),
    };
    let k = match p.k.as_deref() {
        None => match mode {
            SearchMode::Hybrid => RetrievalConfig::default().top_k,
            _ => 10,
        },
        Some(s) => match s.trim().parse::<usize>() {
            Ok(k) if (1..=MAX_K).contains(&k) => k,
            _ => return Err(ApiError::bad_request("invalid_k", format!("k must be an integer in 1..={MAX_K}"))),
        },
    };
    let (text, category) = split_category(&raw)?;
    if text.trim().is_empty() && category.is_none() {
        return Err(ApiError::bad_request("empty_query", "q must not be empty"));
    }

    let st = state.clone();
    let query = text.clone();
    let hits = blocking(move || {
        let index = st.index.read().map_err(|_| ApiError::internal("index lock poisoned"))?;
        if query.trim().is_empty() {
            // Category listing, ordered by id.
            return Ok(index
                .documents()
                .filter(|d| Some(d.category) == category)
                .take(k)
                .enumerate()
                .map(|(i, d)| SearchHit {
                    doc_id: d.id.clone(),
                    title: d.title.clone(),
                    category: d.category,
                    score: 0.0,
                    rank: i + 1,
                    keyword_rank: None,
                    vector_rank: None,
                })
                .collect());
        }
        // With a filter, rank everything and keep the first k that match.
        let depth = if category.is_some() { index.len().max(k) } else { k };
        let mut hits: Vec<SearchHit> = match mode {
            SearchMode::Keyword => index
                .keyword_search(&query, depth)?
                .into_iter()
                .map(|h| SearchHit {
                    doc_id: h.doc_id,
                    title: h.title,
                    category: h.category,
                    score: h.score as f64,
                    rank: h.rank,
                    keyword_rank: Some(h.rank),
                    vector_rank: None,
                })
                .collect(),
            SearchMode::Vector => {
                let q = st
                    .embedder
                    .embed(&query)
                    .map_err(|e| ApiError::from(RetrievalError::Embed(e)))?;
                match index.vector_search(&q, depth) {
                    Ok(found) => found
                        .into_iter()
                        .map(|h| SearchHit {
                            doc_id: h.doc_id,
                            title: h.title,
                            category: h.category,
                            score: h.score as f64,
                            rank: h.rank,
                            keyword_rank: None,
                            vector_rank: Some(h.rank),
                        })
                        .collect(),
                    Err(IndexError::EmptyIndex) => Vec::new(),
                    Err(e) => return Err(e.into()),
                }
            }
            SearchMode::Hybrid => {
                let defaults = RetrievalConfig::default();
                let cfg = RetrievalConfig {
                    top_k: depth,
                    per_method_depth: defaults.per_method_depth.max(depth),
                    ..defaults
                };
                match hybrid_search(&*index, st.embedder.as_ref(), &query, &cfg) {
                    Ok(found) => found
                        .into_iter()
                        .enumerate()
                        .map(|(i, h)| SearchHit {
                            doc_id: h.doc_id,
                            title: h.title,
                            category: h.category,
                            score: h.fused_score as f64,
                            rank: i + 1,
                            keyword_rank: h.keyword_rank,
                            vector_rank: h.vector_rank,
                        })
                        .collect(),
                    Err(RetrievalError::EmptyIndex) => Vec::new(),
                    Err(e) => return Err(e.into()),
                }
            }
        };
        if let Some(c) = category {
            hits.retain(|h| h.category == c);
            hits.truncate(k);
            for (i, h) in hits.iter_mut().enumerate() {
                h.rank = i + 1;
            }
        }
        Ok(hits)
    })
    .await?;

    Ok(Json(SearchResponse {
        schema_version: SCHEMA_VERSION,
        mode,
        query: raw,
        category,
        hits,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentsRequest {
    pub documents: Vec<NewDocument<f32>>,
}

pub async fn documents(
    State(state): State<Arc<AppState>>,
    body: Result<Json<DocumentsRequest>, JsonRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let req = json_body(body)?;
    let st = state.clone();
    let (upserted, total) = blocking(move || {
        let mut index = st.index.write().map_err(|_| ApiError::internal("index lock poisoned"))?;
        let n = index.upsert_documents(req.documents, st.embedder.as_ref())?;
        if let Some(path) = &st.config.index_path {
            save_index(&*index, path)?;
        }
        Ok((n, index.len()))
    })
    .await?;
    Ok(Json(json!({
        "schema_version": SCHEMA_VERSION,
        "upserted": upserted,
        "documents": total,
    })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateRequest {
    #[serde(default)]
    pub story_id: Option<String>,
    #[serde(default)]
    pub story_text: Option<String>,
    /// Segment for `story_text`; defaults to aggregates.
    #[serde(default)]
    pub segment: Option<String>,
    pub strategy: String,
}

pub async fn generate(
    State(state): State<Arc<AppState>>,
    body: Result<Json<GenerateRequest>, JsonRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let req = json_body(body)?;
    let strategy: PromptStrategy = req.strategy.parse()?;
    let story = match (&req.story_id, &req.story_text) {
        (Some(id), _) => state
            .stories
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(axum::http::StatusCode::NOT_FOUND, "unknown_story", format!("no story `{id}`")))?,
        (None, Some(text)) => {
            let segment: Segment = match &req.segment {
                Some(s) => s
                    .parse()
                    .map_err(|e: persona_rag_core::corpus::CorpusError| ApiError::bad_request("invalid_segment", e.to_string()))?,
                None => Segment::Aggregates,
            };
            let paragraphs: Vec<String> = text
                .split("\n\n")
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(str::to_string)
                .collect();
            SuccessStory::new("ad-hoc", "", segment, paragraphs)
                .map_err(|_| ApiError::bad_request("empty_story", "story_text must not be empty"))?
        }
        (None, None) => {
            return Err(ApiError::bad_request("missing_story", "give story_id or story_text"));
        }
    };
    if state.generator.is_none() {
        return Err(ApiError::bad_request("generation_disabled", "persona generation is not configured"));
    }
    let st = state.clone();
    let record = blocking(move || {
        let generator = st.generator.as_ref().expect("checked above");
        let record = generator.generate_persona(&story, strategy, st.llm.as_ref(), st.clock.as_ref())?;
        st.records
            .lock()
            .map_err(|_| ApiError::internal("record store poisoned"))?
            .push(record.clone());
        Ok(record)
    })
    .await?;
    Ok(Json(json!({ "schema_version": SCHEMA_VERSION, "record": record })))
}

pub async fn generation_report(State(state): State<Arc<AppState>>) -> Result<Json<serde_json::Value>, ApiError> {
    let records = state
        .records
        .lock()
        .map_err(|_| ApiError::internal("record store poisoned"))?
        .clone();
    let efficiency = if records.is_empty() {
        Vec::new()
    } else {
        efficiency_summary(&records)?
    };
    Ok(Json(json!({
        "schema_version": SCHEMA_VERSION,
        "records": records.len(),
        "efficiency": efficiency,
    })))
}
