//! Hybrid retrieval: BM25 and vector rankings merged by reciprocal-rank
//! fusion.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbedError, Embedder};
use crate::index::{Category, IndexError, SearchIndex};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("empty query")]
    EmptyQuery,
    #[error("index is empty")]
    EmptyIndex,
    #[error("id `{0}` appears twice in one ranking")]
    DuplicateInList(String),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Index(IndexError),
    #[error(transparent)]
    Embed(EmbedError),
}

impl From<IndexError> for RetrievalError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::EmptyQuery => RetrievalError::EmptyQuery,
            IndexError::EmptyIndex => RetrievalError::EmptyIndex,
            other => RetrievalError::Index(other),
        }
    }
}

impl From<EmbedError> for RetrievalError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::EmptyText => RetrievalError::EmptyQuery,
            other => RetrievalError::Embed(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub top_k: usize,
    pub per_method_depth: usize,
    pub rrf_k: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            top_k: 3,
            per_method_depth: 50,
            rrf_k: 60.0,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.top_k == 0 {
            return Err(RetrievalError::InvalidConfig("top_k must be ≥ 1".into()));
        }
        if self.top_k > self.per_method_depth {
            return Err(RetrievalError::InvalidConfig(
                "top_k must not exceed per_method_depth".into(),
            ));
        }
        if !(self.rrf_k > 0.0 && self.rrf_k.is_finite()) {
            return Err(RetrievalError::InvalidConfig("rrf_k must be positive".into()));
        }
        Ok(())
    }
}

/// One id in a fused ranking, with its 1-based position in each input.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedEntry<F> {
    pub id: String,
    pub score: F,
    pub rank_a: Option<usize>,
    pub rank_b: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedHit<F> {
    pub doc_id: String,
    pub title: String,
    pub category: Category,
    pub fused_score: F,
    pub keyword_rank: Option<usize>,
    pub vector_rank: Option<usize>,
}

/// Reciprocal-rank fusion of two rankings.
///
/// Each id scores `Σ 1/(rrf_k + rank)` over the lists it appears in, with
/// the contribution from `list_a` added first. Output is sorted by score
/// descending, ties by id ascending.
pub fn fuse_rankings<F: Scalar>(
    list_a: &[String],
    list_b: &[String],
    rrf_k: F,
) -> Result<Vec<FusedEntry<F>>, RetrievalError> {
    for list in [list_a, list_b] {
        let mut seen = HashSet::with_capacity(list.len());
        for id in list {
            if !seen.insert(id.as_str()) {
                return Err(RetrievalError::DuplicateInList(id.clone()));
            }
        }
    }
    let mut ranks: BTreeMap<&str, (Option<usize>, Option<usize>)> = BTreeMap::new();
    for (i, id) in list_a.iter().enumerate() {
        ranks.entry(id).or_default().0 = Some(i + 1);
    }
    for (i, id) in list_b.iter().enumerate() {
        ranks.entry(id).or_default().1 = Some(i + 1);
    }
    let contribution = |rank: Option<usize>| {
        rank.map_or_else(F::zero, |r| F::one() / (rrf_k + F::from_usize_lossy(r)))
    };
    let mut fused: Vec<FusedEntry<F>> = ranks
        .into_iter()
        .map(|(id, (a, b))| FusedEntry {
            id: id.to_string(),
            score: contribution(a) + contribution(b),
            rank_a: a,
            rank_b: b,
        })
        .collect();
    fused.sort_by(|x, y| {
        y.score
            .partial_cmp(&x.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| x.id.cmp(&y.id))
    });
    Ok(fused)
}

/// Embeds the query, runs keyword and vector search to `per_method_depth`,
/// fuses the two rankings and returns the best `top_k`.
pub fn hybrid_search<F: Scalar, E: Embedder<F> + ?Sized>(
    index: &SearchIndex<F>,
    embedder: &E,
    query: &str,
    cfg: &RetrievalConfig,
) -> Result<Vec<FusedHit<F>>, RetrievalError> {
    cfg.validate()?;
    if query.trim().is_empty() {
        return Err(RetrievalError::EmptyQuery);
    }
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    let keyword: Vec<String> = match index.keyword_search(query, cfg.per_method_depth) {
        Ok(hits) => hits.into_iter().map(|h| h.doc_id).collect(),
        // punctuation-only queries have no terms; the embedder decides below
        Err(IndexError::EmptyQuery) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let qv = embedder.embed(query)?;
    let vector: Vec<String> = index
        .vector_search(&qv, cfg.per_method_depth)?
        .into_iter()
        .map(|h| h.doc_id)
        .collect();

    let fused = fuse_rankings(&keyword, &vector, F::from_f64_lossy(cfg.rrf_k))?;
    Ok(fused
        .into_iter()
        .take(cfg.top_k)
        .map(|e| {
            let doc = index.get(&e.id).expect("ranked ids come from the index");
            FusedHit {
                doc_id: e.id,
                title: doc.title.clone(),
                category: doc.category,
                fused_score: e.score,
                keyword_rank: e.rank_a,
                vector_rank: e.rank_b,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::MockEmbedder;
    use crate::index::{IndexConfig, NewDocument};
    use proptest::prelude::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rank_one_and_three() {
        let a = ids(&["x", "p", "q"]);
        let b = ids(&["p", "q", "x"]);
        let fused = fuse_rankings(&a, &b, 60.0f64).unwrap();
        let x = fused.iter().find(|e| e.id == "x").unwrap();
        assert!((x.score - 0.032266).abs() < 1e-6);
        assert_eq!((x.rank_a, x.rank_b), (Some(1), Some(3)));
    }

    #[test]
    fn single_list_entry() {
        let fused = fuse_rankings(&ids(&["a"]), &ids(&["b", "c"]), 60.0f64).unwrap();
        let c = fused.iter().find(|e| e.id == "c").unwrap();
        assert_eq!(c.score, 1.0 / 62.0);
        assert_eq!(c.rank_a, None);
    }

    #[test]
    fn fuse_with_empty_keeps_order() {
        let l = ids(&["c", "a", "b"]);
        let fused = fuse_rankings(&l, &[], 60.0f64).unwrap();
        let order: Vec<&str> = fused.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(order, vec!["c", "a", "b"]);
        assert_eq!(fused[0].score, 1.0 / 61.0);
    }

    #[test]
    fn fuse_with_self_doubles() {
        let l = ids(&["c", "a", "b"]);
        let single = fuse_rankings(&l, &[], 60.0f64).unwrap();
        let double = fuse_rankings(&l, &l, 60.0f64).unwrap();
        for (s, d) in single.iter().zip(&double) {
            assert_eq!(s.id, d.id);
            assert_eq!(d.score, 2.0 * s.score);
        }
    }

    #[test]
    fn duplicate_rejected() {
        assert!(matches!(
            fuse_rankings(&ids(&["a", "a"]), &[], 60.0f64),
            Err(RetrievalError::DuplicateInList(_))
        ));
    }

    fn five_ids() -> impl Strategy<Value = Vec<String>> {
        Just((0..8).map(|i| format!("d{i}")).collect::<Vec<_>>())
            .prop_shuffle()
            .prop_map(|v| v.into_iter().take(5).collect())
    }

    proptest! {
        #[test]
        fn matches_brute_force(a in five_ids(), b in five_ids()) {
            let fused = fuse_rankings(&a, &b, 60.0f64).unwrap();
            for e in &fused {
                let mut expect = 0.0;
                if let Some(p) = a.iter().position(|x| *x == e.id) { expect += 1.0 / (61.0 + p as f64); }
                if let Some(p) = b.iter().position(|x| *x == e.id) { expect += 1.0 / (61.0 + p as f64); }
                prop_assert!((e.score - expect).abs() < 1e-15);
            }
            let union: HashSet<&String> = a.iter().chain(&b).collect();
            prop_assert_eq!(fused.len(), union.len());
        }

        #[test]
        fn promotion_never_lowers_score(a in five_ids(), b in five_ids(), pos in 1usize..5) {
            let before = fuse_rankings(&a, &b, 60.0f64).unwrap();
            let mut promoted = a.clone();
            promoted.swap(pos - 1, pos);
            let moved = &a[pos];
            let after = fuse_rankings(&promoted, &b, 60.0f64).unwrap();
            let s0 = before.iter().find(|e| &e.id == moved).unwrap().score;
            let s1 = after.iter().find(|e| &e.id == moved).unwrap().score;
            prop_assert!(s1 >= s0);
        }
    }

    fn small_index() -> (SearchIndex<f64>, MockEmbedder) {
        let e = MockEmbedder::new(32, 2).unwrap();
        let mut idx = SearchIndex::for_embedder(IndexConfig::default(), &e).unwrap();
        let docs = [
            ("p1", "excavator operator quarry"),
            ("p2", "haul truck fleet manager"),
            ("p3", "crusher maintenance quarry"),
            ("p4", "fleet financing options"),
        ];
        idx.upsert_documents(
            docs.iter()
                .map(|(id, t)| NewDocument::new(*id, *id, Category::Persona, *t))
                .collect(),
            &e,
        )
        .unwrap();
        (idx, e)
    }

    #[test]
    fn dominant_doc_wins() {
        let (idx, e) = small_index();
        let hits = hybrid_search(&idx, &e, "haul truck fleet manager", &RetrievalConfig::default())
            .unwrap();
        assert_eq!(hits[0].doc_id, "p2");
        assert_eq!(hits[0].keyword_rank, Some(1));
        assert_eq!(hits[0].vector_rank, Some(1));
        assert!(hits.len() <= 3);
    }

    #[test]
    fn hybrid_errors() {
        let (idx, e) = small_index();
        let cfg = RetrievalConfig::default();
        assert!(matches!(hybrid_search(&idx, &e, "  ", &cfg), Err(RetrievalError::EmptyQuery)));
        assert!(matches!(hybrid_search(&idx, &e, "?!", &cfg), Err(RetrievalError::EmptyQuery)));
        let empty: SearchIndex<f64> = SearchIndex::for_embedder(IndexConfig::default(), &e).unwrap();
        assert!(matches!(hybrid_search(&empty, &e, "quarry", &cfg), Err(RetrievalError::EmptyIndex)));
    }

    #[test]
    fn config_rules() {
        let bad = RetrievalConfig { top_k: 60, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = RetrievalConfig { rrf_k: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
