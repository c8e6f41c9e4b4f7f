//! Document store with a BM25 inverted index and an HNSW vector graph.

mod docs;
mod hnsw;
mod persist;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{embed_document, EmbedError, Embedder, EmbeddingVector};
use crate::scalar::Scalar;
use crate::text::tokenize;

pub use docs::{
    chunk_document, persona_document, story_document, GENERAL_ID_PREFIX, PERSONA_ID_PREFIX,
    STORY_ID_PREFIX,
};
pub use hnsw::{HnswGraph, HnswParams};
pub use persist::{load_index, save_index, FORMAT_VERSION, MAGIC};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty query")]
    EmptyQuery,
    #[error("index is empty")]
    EmptyIndex,
    #[error("dimension mismatch: index has {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("duplicate id `{0}` in batch")]
    DuplicateId(String),
    #[error("invalid document `{id}`: {reason}")]
    InvalidDocument { id: String, reason: String },
    #[error("invalid index config: {0}")]
    InvalidConfig(String),
    #[error("embedder `{found}` does not match index embedder `{expected}`")]
    EmbedderMismatch { expected: String, found: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("index format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { expected: u32, found: u32 },
    #[error("index file stores {found} scalars, expected {expected}")]
    ScalarMismatch { expected: String, found: String },
    #[error("corrupt index file: {0}")]
    CorruptFile(String),
    #[error("index file i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Persona,
    GeneralInformation,
    SuccessStory,
}

impl Category {
    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Persona => "persona",
            Category::GeneralInformation => "general_information",
            Category::SuccessStory => "success_story",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Category::Persona => 0,
            Category::GeneralInformation => 1,
            Category::SuccessStory => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Category::Persona),
            1 => Some(Category::GeneralInformation),
            2 => Some(Category::SuccessStory),
            _ => None,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "persona" => Ok(Category::Persona),
            "general_information" => Ok(Category::GeneralInformation),
            "success_story" => Ok(Category::SuccessStory),
            other => Err(format!("unknown category `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord<F> {
    pub id: String,
    pub title: String,
    pub category: Category,
    pub content: String,
    pub content_vector: EmbeddingVector<F>,
    /// Set when only a prefix of `content` was embedded.
    pub embedding_truncated: bool,
}

/// A document before indexing. Without a vector it is embedded on upsert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewDocument<F> {
    pub id: String,
    pub title: String,
    pub category: Category,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_vector: Option<EmbeddingVector<F>>,
}

impl<F> NewDocument<F> {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        category: Category,
        content: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            category,
            content: content.into(),
            content_vector: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub dimension: usize,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub hnsw_m: usize,
    pub hnsw_ef_construction: usize,
    pub hnsw_ef_search: usize,
    /// Seeds HNSW level assignment.
    pub seed: u64,
}

impl IndexConfig {
    pub fn with_dimension(dimension: usize) -> Self {
        Self {
            dimension,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IndexError> {
        let bad = |msg: &str| Err(IndexError::InvalidConfig(msg.to_string()));
        if self.dimension == 0 {
            return bad("dimension must be > 0");
        }
        if !(self.bm25_k1 > 0.0 && self.bm25_k1.is_finite()) {
            return bad("bm25_k1 must be positive");
        }
        if !(0.0..=1.0).contains(&self.bm25_b) {
            return bad("bm25_b must lie in [0, 1]");
        }
        if self.hnsw_m < 2 {
            return bad("hnsw_m must be at least 2");
        }
        if self.hnsw_ef_construction == 0 || self.hnsw_ef_search == 0 {
            return bad("hnsw ef parameters must be positive");
        }
        Ok(())
    }

    fn hnsw_params(&self) -> HnswParams {
        HnswParams {
            m: self.hnsw_m,
            ef_construction: self.hnsw_ef_construction,
            ef_search: self.hnsw_ef_search,
            seed: self.seed,
        }
    }
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            dimension: crate::embedding::DEFAULT_DIMENSION,
            bm25_k1: 1.2,
            bm25_b: 0.75,
            hnsw_m: 16,
            hnsw_ef_construction: 200,
            hnsw_ef_search: 100,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit<F> {
    pub doc_id: String,
    pub title: String,
    pub category: Category,
    pub score: F,
    pub rank: usize,
}

/// The search index. Slots are shared with the HNSW graph: slot `i` holds
/// the document whose vector is graph node `i`, or `None` once deleted.
#[derive(Debug, Clone)]
pub struct SearchIndex<F> {
    config: IndexConfig,
    embedder_id: String,
    slots: Vec<Option<DocumentRecord<F>>>,
    id_to_slot: BTreeMap<String, u32>,
    /// term -> doc id -> term frequency
    postings: BTreeMap<String, BTreeMap<String, u32>>,
    doc_lengths: BTreeMap<String, u32>,
    total_length: u64,
    graph: HnswGraph<F>,
}

impl<F: Scalar> SearchIndex<F> {
    pub fn new(config: IndexConfig, embedder_id: impl Into<String>) -> Result<Self, IndexError> {
        config.validate()?;
        let graph = HnswGraph::new(config.hnsw_params());
        Ok(Self {
            config,
            embedder_id: embedder_id.into(),
            slots: Vec::new(),
            id_to_slot: BTreeMap::new(),
            postings: BTreeMap::new(),
            doc_lengths: BTreeMap::new(),
            total_length: 0,
            graph,
        })
    }

    /// Empty index sized for `embedder`.
    pub fn for_embedder<E: Embedder<F> + ?Sized>(
        mut config: IndexConfig,
        embedder: &E,
    ) -> Result<Self, IndexError> {
        config.dimension = embedder.dimension();
        Self::new(config, embedder.model_id())
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn len(&self) -> usize {
        self.id_to_slot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_slot.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DocumentRecord<F>> {
        self.id_to_slot
            .get(id)
            .and_then(|s| self.slots[*s as usize].as_ref())
    }

    /// Live documents in id order.
    pub fn documents(&self) -> impl Iterator<Item = &DocumentRecord<F>> {
        self.id_to_slot
            .values()
            .filter_map(|s| self.slots[*s as usize].as_ref())
    }

    pub fn count_by_category(&self) -> BTreeMap<Category, usize> {
        let mut out = BTreeMap::new();
        for d in self.documents() {
            *out.entry(d.category).or_insert(0) += 1;
        }
        out
    }

    pub fn avg_doc_length(&self) -> f64 {
        if self.doc_lengths.is_empty() {
            0.0
        } else {
            self.total_length as f64 / self.doc_lengths.len() as f64
        }
    }

    pub fn doc_length(&self, id: &str) -> Option<u32> {
        self.doc_lengths.get(id).copied()
    }

    /// Doc ids and term frequencies for one (already lowercased) term.
    pub fn postings(&self, term: &str) -> Option<&BTreeMap<String, u32>> {
        self.postings.get(term)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    /// Number of graph nodes including tombstones.
    pub fn graph_size(&self) -> usize {
        self.graph.len()
    }

    /// Ensures the embedder matches the one the index was built with.
    pub fn check_embedder<E: Embedder<F> + ?Sized>(&self, embedder: &E) -> Result<(), IndexError> {
        if embedder.dimension() != self.dimension() {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension(),
                found: embedder.dimension(),
            });
        }
        let id = embedder.model_id();
        if id != self.embedder_id {
            return Err(IndexError::EmbedderMismatch {
                expected: self.embedder_id.clone(),
                found: id,
            });
        }
        Ok(())
    }

    /// Inserts or fully replaces documents. The batch is validated and
    /// embedded before anything is mutated, so a failing batch leaves the
    /// index untouched.
    pub fn upsert_documents<E: Embedder<F> + ?Sized>(
        &mut self,
        batch: Vec<NewDocument<F>>,
        embedder: &E,
    ) -> Result<usize, IndexError> {
        if batch.is_empty() {
            return Err(IndexError::EmptyBatch);
        }
        let mut seen = HashSet::new();
        for doc in &batch {
            if doc.id.trim().is_empty() {
                return Err(IndexError::InvalidDocument {
                    id: doc.id.clone(),
                    reason: "empty id".into(),
                });
            }
            if doc.content.trim().is_empty() {
                return Err(IndexError::InvalidDocument {
                    id: doc.id.clone(),
                    reason: "empty content".into(),
                });
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(IndexError::DuplicateId(doc.id.clone()));
            }
            if let Some(v) = &doc.content_vector {
                if v.dimension() != self.dimension() {
                    return Err(IndexError::DimensionMismatch {
                        expected: self.dimension(),
                        found: v.dimension(),
                    });
                }
                v.normalized()?;
            }
        }
        if batch.iter().any(|d| d.content_vector.is_none()) && embedder.dimension() != self.dimension() {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension(),
                found: embedder.dimension(),
            });
        }

        let mut records = Vec::with_capacity(batch.len());
        for doc in batch {
            let (vector, truncated) = match doc.content_vector {
                Some(v) => (v, false),
                None => embed_document(embedder, &doc.content)?,
            };
            if vector.dimension() != self.dimension() {
                return Err(IndexError::DimensionMismatch {
                    expected: self.dimension(),
                    found: vector.dimension(),
                });
            }
            records.push(DocumentRecord {
                id: doc.id,
                title: doc.title,
                category: doc.category,
                content: doc.content,
                content_vector: vector,
                embedding_truncated: truncated,
            });
        }

        let n = records.len();
        for record in records {
            self.insert_record(record);
        }
        Ok(n)
    }

    /// Adds an already-embedded record, replacing any document with its id.
    pub(crate) fn insert_record(&mut self, record: DocumentRecord<F>) {
        self.delete(&record.id);
        let tokens = tokenize(&record.content);
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for t in &tokens {
            *tf.entry(t.clone()).or_insert(0) += 1;
        }
        for (term, count) in tf {
            self.postings
                .entry(term)
                .or_default()
                .insert(record.id.clone(), count);
        }
        self.doc_lengths.insert(record.id.clone(), tokens.len() as u32);
        self.total_length += tokens.len() as u64;

        let unit = record
            .content_vector
            .normalized()
            .expect("validated nonzero")
            .into_inner();
        let slot = self.graph.insert(unit);
        debug_assert_eq!(slot as usize, self.slots.len());
        self.id_to_slot.insert(record.id.clone(), slot);
        self.slots.push(Some(record));
    }

    /// Removes a document. Its graph node is tombstoned and stays routable.
    pub fn delete(&mut self, id: &str) -> bool {
        let Some(slot) = self.id_to_slot.remove(id) else {
            return false;
        };
        let record = self.slots[slot as usize].take().expect("live slot");
        let mut terms: BTreeSet<String> = BTreeSet::new();
        terms.extend(tokenize(&record.content));
        for term in terms {
            if let Some(list) = self.postings.get_mut(&term) {
                list.remove(id);
                if list.is_empty() {
                    self.postings.remove(&term);
                }
            }
        }
        if let Some(len) = self.doc_lengths.remove(id) {
            self.total_length -= u64::from(len);
        }
        self.graph.mark_deleted(slot);
        true
    }

    /// Rebuilds the graph from live documents, dropping tombstones. Inserts
    /// happen in id order.
    pub fn compact(&mut self) {
        let records: Vec<DocumentRecord<F>> = self.documents().cloned().collect();
        let mut fresh = Self::new(self.config.clone(), self.embedder_id.clone())
            .expect("config already validated");
        for r in records {
            fresh.insert_record(r);
        }
        *self = fresh;
    }

    /// BM25 ranking over the unique query terms.
    ///
    /// `idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))`; only documents that
    /// contain a query term are scored. Ties go to the smaller doc id.
    pub fn keyword_search(&self, query: &str, k: usize) -> Result<Vec<ScoredHit<F>>, IndexError> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        if terms.is_empty() {
            return Err(IndexError::EmptyQuery);
        }
        let n = F::from_usize_lossy(self.len());
        let k1 = F::from_f64_lossy(self.config.bm25_k1);
        let b = F::from_f64_lossy(self.config.bm25_b);
        let avgdl = F::from_f64_lossy(self.avg_doc_length());
        let half = F::from_f64_lossy(0.5);
        let one = F::one();

        let mut scores: BTreeMap<&str, F> = BTreeMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let df = F::from_usize_lossy(list.len());
            let idf = (one + (n - df + half) / (df + half)).ln();
            for (doc_id, tf) in list {
                let tf = F::from_usize_lossy(*tf as usize);
                let len = F::from_usize_lossy(self.doc_lengths[doc_id] as usize);
                let norm = if avgdl > F::zero() { len / avgdl } else { F::zero() };
                let s = idf * tf * (k1 + one) / (tf + k1 * (one - b + b * norm));
                let acc = scores.entry(doc_id.as_str()).or_insert_with(F::zero);
                *acc = *acc + s;
            }
        }
        let scored: Vec<(String, F)> = scores.into_iter().map(|(d, s)| (d.to_string(), s)).collect();
        Ok(self.rank(scored, k))
    }

    fn unit_query(&self, query: &EmbeddingVector<F>) -> Result<Vec<F>, IndexError> {
        if query.dimension() != self.dimension() {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension(),
                found: query.dimension(),
            });
        }
        Ok(query.normalized()?.into_inner())
    }

    /// Approximate top-k by cosine similarity through the HNSW graph.
    pub fn vector_search(
        &self,
        query: &EmbeddingVector<F>,
        k: usize,
    ) -> Result<Vec<ScoredHit<F>>, IndexError> {
        let q = self.unit_query(query)?;
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        // Take the whole beam so the final cut at k is made on exact scores.
        let ef = self.config.hnsw_ef_search;
        let found = self.graph.search(&q, k.max(ef), ef);
        let scored = found
            .into_iter()
            .map(|(slot, s)| {
                let rec = self.slots[slot as usize].as_ref().expect("live node");
                (rec.id.clone(), s)
            })
            .collect();
        Ok(self.rank(scored, k))
    }

    /// Exact top-k by linear scan. Uses the same normalized vectors and dot
    /// product as the graph search, so scores agree bit for bit.
    pub fn exact_vector_search(
        &self,
        query: &EmbeddingVector<F>,
        k: usize,
    ) -> Result<Vec<ScoredHit<F>>, IndexError> {
        let q = self.unit_query(query)?;
        let scored = self
            .id_to_slot
            .iter()
            .map(|(id, slot)| {
                let v = &self.graph.nodes[*slot as usize].vector;
                (id.clone(), crate::embedding::dot(&q, v))
            })
            .collect();
        Ok(self.rank(scored, k))
    }

    /// Sorts by score descending then id ascending, truncates, assigns ranks.
    fn rank(&self, mut scored: Vec<(String, F)>, k: usize) -> Vec<ScoredHit<F>> {
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (id, score))| {
                let rec = self.get(&id).expect("scored doc exists");
                ScoredHit {
                    doc_id: id,
                    title: rec.title.clone(),
                    category: rec.category,
                    score,
                    rank: i + 1,
                }
            })
            .collect()
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (term, list) in &self.postings {
            for id in list.keys() {
                if !self.id_to_slot.contains_key(id) {
                    return Err(format!("posting for `{term}` names missing doc `{id}`"));
                }
            }
        }
        let lens: Vec<&String> = self.doc_lengths.keys().collect();
        let ids: Vec<&String> = self.id_to_slot.keys().collect();
        if lens != ids {
            return Err("doc_lengths keys differ from document ids".into());
        }
        let total: u64 = self.doc_lengths.values().map(|v| u64::from(*v)).sum();
        if total != self.total_length {
            return Err("total length out of sync".into());
        }
        if self.graph.len() != self.slots.len() {
            return Err("graph and slot counts differ".into());
        }
        for (i, slot) in self.slots.iter().enumerate() {
            if slot.is_some() == self.graph.is_deleted(i as u32) {
                return Err(format!("slot {i} liveness differs from graph"));
            }
        }
        if self.graph.live_count() != self.len() {
            return Err("graph live count differs from document count".into());
        }
        Ok(())
    }
}
