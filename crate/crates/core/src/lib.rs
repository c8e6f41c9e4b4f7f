//! Persona-grounded retrieval-augmented generation toolkit.
//!
//! The search and statistics code is generic over [`Scalar`] (`f32` or
//! `f64`); the aliases below fix the scalar for everyday use.

pub mod chat;
pub mod corpus;
pub mod embedding;
pub mod evalstats;
pub mod index;
pub mod personagen;
pub mod retrieval;
pub mod scalar;
pub mod sections;
pub mod text;

pub use scalar::Scalar;

/// Single-precision index, the default for services and the CLI.
pub type SearchIndexF32 = index::SearchIndex<f32>;
pub type SearchIndexF64 = index::SearchIndex<f64>;
pub type EmbeddingF32 = embedding::EmbeddingVector<f32>;
pub type EmbeddingF64 = embedding::EmbeddingVector<f64>;
