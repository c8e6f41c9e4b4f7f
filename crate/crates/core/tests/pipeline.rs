use std::path::{Path, PathBuf};

use persona_rag_core::chat::{answer, ChatConfig, ChatSession, SystemMessageConfig, TurnRole};
use persona_rag_core::corpus::{
    ingest_stories, load_markdown_dir, load_personas_dir, load_story_urls, SuccessStory,
    DEFAULT_CONTAINER_SELECTOR, DEFAULT_MAX_CHUNK_CHARS, DEFAULT_PARAGRAPH_TAG,
};
use persona_rag_core::embedding::{Embedder, MockEmbedder};
use persona_rag_core::index::{
    chunk_document, load_index, persona_document, save_index, story_document, IndexConfig, SearchIndex,
};
use persona_rag_core::personagen::{FixedClock, PersonaGenerator, PromptStrategy, ScriptedClient};
use persona_rag_core::retrieval::{hybrid_search, RetrievalConfig};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn stories() -> Vec<SuccessStory> {
    let dir = fixtures().join("stories");
    let urls = load_story_urls(&dir.join("urls.csv")).unwrap();
    let (stories, failures) = ingest_stories(
        &urls,
        &dir.join("html"),
        Some(&dir.join("patches")),
        DEFAULT_CONTAINER_SELECTOR,
        DEFAULT_PARAGRAPH_TAG,
    );
    assert!(failures.is_empty(), "{failures:?}");
    stories
}

fn fixture_index(emb: &MockEmbedder) -> SearchIndex<f32> {
    let mut docs = Vec::new();
    for (key, p) in load_personas_dir(&fixtures().join("personas")).unwrap() {
        docs.push(persona_document(&key, &p));
    }
    for chunk in load_markdown_dir(&fixtures().join("general"), DEFAULT_MAX_CHUNK_CHARS).unwrap() {
        if !chunk.body.trim().is_empty() {
            docs.push(chunk_document(&chunk));
        }
    }
    docs.extend(stories().iter().map(story_document));
    let mut idx = SearchIndex::for_embedder(IndexConfig::default(), emb).unwrap();
    idx.upsert_documents(docs, emb).unwrap();
    idx
}

#[test]
fn ingest_keeps_every_story_and_applies_patches() {
    let stories = stories();
    assert_eq!(stories.len(), 24);
    // rows without an id fall back to the URL slug
    assert!(stories.iter().any(|s| s.story_id == "nordic-granite"));
    for s in &stories {
        assert!(!s.paragraphs.is_empty(), "{}", s.story_id);
        assert!(!s.full_text.contains('<'), "{}", s.story_id);
    }
}

#[test]
fn generated_personas_can_be_indexed_and_found() {
    let stories = stories();
    let examples = load_personas_dir(&fixtures().join("examples")).unwrap().into_iter().map(|(_, p)| p).collect();
    let generator = PersonaGenerator::with_examples(examples).unwrap();
    let clock = FixedClock { at: chrono::DateTime::UNIX_EPOCH };
    let outcome = generator.batch_generate(&stories[..4], &[PromptStrategy::Cot], &ScriptedClient::offline(), &clock, 1);
    assert_eq!(outcome.records.len(), 4);

    let emb = MockEmbedder::new(128, 3).unwrap();
    let mut idx = fixture_index(&emb);
    let before = idx.len();
    let docs = outcome
        .records
        .iter()
        .map(|r| persona_document(&format!("generated-{}", r.story_id), &r.persona))
        .collect();
    idx.upsert_documents(docs, &emb).unwrap();
    assert_eq!(idx.len(), before + 4);
    idx.check_invariants().unwrap();

    let first = &outcome.records[0];
    let hits = idx.keyword_search(&first.persona.short_story, 5).unwrap();
    assert!(hits.iter().any(|h| h.doc_id == format!("persona:generated-{}", first.story_id)));
}

#[test]
fn chat_session_over_fixture_index() {
    let emb = MockEmbedder::new(256, 42).unwrap();
    let idx = fixture_index(&emb);
    let client = ScriptedClient::offline();
    let sys = SystemMessageConfig::bundled();
    let cfg = ChatConfig::default();
    let mut session = ChatSession::new("s", chrono::DateTime::UNIX_EPOCH);

    let queries = std::fs::read_to_string(fixtures().join("queries.txt")).unwrap();
    for q in queries.lines().filter(|l| !l.trim().is_empty()) {
        let a = answer(&mut session, q, &idx, &emb, &cfg, &client, &sys).unwrap();
        let top: Vec<String> = hybrid_search(&idx, &emb, q, &cfg.retrieval).unwrap().into_iter().map(|h| h.doc_id).collect();
        let cited: Vec<String> = a.citations.iter().map(|c| c.doc_id.clone()).collect();
        assert_eq!(cited, top, "{q}");
        assert!(a.context_chars <= cfg.context_budget);
        // history sent to the model is bounded
        let history = a.prompt.len() - 2;
        assert!(history <= cfg.history_turns, "{q}: {history}");
    }
    assert!(session.is_well_formed());
    assert_eq!(session.turns.len(), 20);
    assert_eq!(session.turns[0].role, TurnRole::User);
}

#[test]
fn saved_index_answers_like_the_original() {
    let emb = MockEmbedder::new(64, 9).unwrap();
    let mut idx = fixture_index(&emb);
    idx.delete("persona:mining-ceo");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.idx");
    save_index(&idx, &path).unwrap();
    let loaded: SearchIndex<f32> = load_index(&path).unwrap();
    assert_eq!(loaded.len(), idx.len());
    assert_eq!(loaded.embedder_id(), Embedder::<f32>::model_id(&emb));
    assert!(loaded.get("persona:mining-ceo").is_none());

    let cfg = RetrievalConfig::default();
    for q in ["copper mine haul road", "winter quarry", "dealer service contract", "electric loader"] {
        assert_eq!(hybrid_search(&idx, &emb, q, &cfg).unwrap(), hybrid_search(&loaded, &emb, q, &cfg).unwrap());
    }
}

#[test]
fn wide_beam_vector_search_is_exact() {
    let emb = MockEmbedder::new(64, 5).unwrap();
    let base = fixture_index(&emb);
    let n = base.len();
    // rebuild with a beam as wide as the corpus
    let config = IndexConfig { hnsw_ef_search: n, ..IndexConfig::default() };
    let mut idx = SearchIndex::for_embedder(config, &emb).unwrap();
    let docs = base
        .documents()
        .map(|d| persona_rag_core::index::NewDocument {
            content_vector: Some(d.content_vector.clone()),
            ..persona_rag_core::index::NewDocument::new(d.id.clone(), d.title.clone(), d.category, d.content.clone())
        })
        .collect();
    idx.upsert_documents(docs, &emb).unwrap();
    for q in ["quarry owner", "fleet telematics", "contract crushing", "copper"] {
        let qv = emb.embed(q).unwrap();
        assert_eq!(idx.vector_search(&qv, n).unwrap(), idx.exact_vector_search(&qv, n).unwrap(), "{q}");
    }
}
