use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

use persona_rag_core::chat::ChatError;
use persona_rag_core::embedding::EmbedError;
use persona_rag_core::evalstats::EvalError;
use persona_rag_core::index::IndexError;
use persona_rag_core::personagen::PersonaGenError;
use persona_rag_core::retrieval::RetrievalError;

use crate::SCHEMA_VERSION;

/// An error response: `{"schema_version", "error": {"code", "message"}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "schema_version": SCHEMA_VERSION,
            "error": { "code": self.code, "message": self.message },
        });
        (self.status, Json(body)).into_response()
    }
}

fn embed_error(e: &EmbedError) -> ApiError {
    match e {
        EmbedError::RemoteUnavailable { .. } | EmbedError::BadResponse(_) => {
            ApiError::new(StatusCode::BAD_GATEWAY, "embedding_unavailable", e.to_string())
        }
        EmbedError::EmptyText => ApiError::bad_request("empty_query", e.to_string()),
        _ => ApiError::bad_request("embedding_error", e.to_string()),
    }
}

impl From<IndexError> for ApiError {
    fn from(e: IndexError) -> Self {
        match &e {
            IndexError::DuplicateId(_) => ApiError::new(StatusCode::CONFLICT, "duplicate_id", e.to_string()),
            IndexError::Embed(inner) => embed_error(inner),
            IndexError::EmptyQuery => ApiError::bad_request("empty_query", e.to_string()),
            IndexError::Io(_) | IndexError::CorruptFile(_) => ApiError::internal(e.to_string()),
            _ => ApiError::bad_request("invalid_request", e.to_string()),
        }
    }
}

impl From<RetrievalError> for ApiError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Index(inner) => inner.into(),
            RetrievalError::Embed(inner) => embed_error(&inner),
            RetrievalError::EmptyQuery => ApiError::bad_request("empty_query", e.to_string()),
            other => ApiError::bad_request("invalid_request", other.to_string()),
        }
    }
}

impl From<ChatError> for ApiError {
    fn from(e: ChatError) -> Self {
        match e {
            ChatError::EmptyQuery => ApiError::bad_request("empty_query", e.to_string()),
            ChatError::GenerationFailed(_) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "generation_failed", e.to_string())
            }
            ChatError::Retrieval(inner) => inner.into(),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<PersonaGenError> for ApiError {
    fn from(e: PersonaGenError) -> Self {
        match e {
            PersonaGenError::GenerationFailed { .. } | PersonaGenError::Client(_) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "generation_failed", e.to_string())
            }
            PersonaGenError::UnknownStrategy(_) => ApiError::bad_request("unknown_strategy", e.to_string()),
            other => ApiError::bad_request("invalid_request", other.to_string()),
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        ApiError::bad_request("invalid_request", e.to_string())
    }
}
