use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use persona_rag_core::corpus::{Persona, Provenance, Segment, SuccessStory};
use persona_rag_core::embedding::{Embedder, MockEmbedder};
use persona_rag_core::index::{load_index, persona_document, IndexConfig, SearchIndex};
use persona_rag_core::personagen::synth::{echo_context_reply, synthesize_persona_reply};
use persona_rag_core::personagen::{
    FixedClock, LlmError, PersonaGenerator, ScriptedClient, STORY_MARKER,
};
use persona_rag_service::{router, AppState, ServiceConfig, HISTORY_LENGTH_HEADER};

fn persona(name: &str, role: &str, story: &str, important: &str) -> Persona {
    Persona {
        name: name.into(),
        role: role.into(),
        number_of_employees: "40".into(),
        fleet_size: "12".into(),
        short_story: story.into(),
        what_is_important: vec![important.into()],
        challenges: vec!["weather".into()],
        expectations: vec!["dealer support".into()],
        buying_considerations: vec!["fuel cost".into()],
        provenance: Provenance::Verified,
    }
}

fn personas() -> Vec<(String, Persona)> {
    vec![
        ("granite".into(), persona("Greta", "Quarry Owner", "Runs a granite quarry.", "crusher uptime")),
        ("copper".into(), persona("Carlos", "Mine Manager", "Manages an open pit copper mine.", "haul road safety")),
        ("gravel".into(), persona("Gus", "Plant Foreman", "Operates a gravel pit.", "low fuel burn")),
        ("limestone".into(), persona("Lina", "Fleet Manager", "Leads a limestone fleet.", "telematics data")),
        ("sand".into(), persona("Sam", "Site Director", "Directs a sand dredging site.", "spare parts")),
    ]
}

fn client() -> ScriptedClient {
    ScriptedClient::new().with_fallback(|m| {
        if m.iter().any(|x| x.content.contains(STORY_MARKER)) {
            Ok(synthesize_persona_reply(m))
        } else {
            Ok(echo_context_reply(m))
        }
    })
}

fn embedder() -> Arc<MockEmbedder> {
    Arc::new(MockEmbedder::new(64, 11).unwrap())
}

fn state_with(index: SearchIndex<f32>, llm: ScriptedClient, config: ServiceConfig) -> AppState {
    let examples: Vec<Persona> = personas().into_iter().take(3).map(|(_, p)| p).collect();
    let story = SuccessStory::new(
        "northern-quarry",
        "https://example.test/northern-quarry",
        Segment::Quarrying,
        vec!["The quarry employs 35 people and runs 9 machines.".into(), "Uptime is the top priority.".into()],
    )
    .unwrap();
    AppState::new(index, embedder(), Arc::new(llm), config)
        .with_generator(PersonaGenerator::with_examples(examples).unwrap())
        .with_stories([story])
        .with_clock(Arc::new(FixedClock { at: chrono::DateTime::UNIX_EPOCH }))
}

fn empty_index() -> SearchIndex<f32> {
    SearchIndex::for_embedder(IndexConfig::default(), embedder().as_ref()).unwrap()
}

fn seeded_index() -> SearchIndex<f32> {
    let mut index = empty_index();
    let docs = personas().iter().map(|(k, p)| persona_document(k, p)).collect();
    index.upsert_documents(docs, embedder().as_ref()).unwrap();
    index
}

fn app() -> Router {
    router(Arc::new(state_with(seeded_index(), client(), ServiceConfig::default())))
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value, axum::http::HeaderMap) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body: Value = serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("non-JSON body: {bytes:?}"));
    assert_eq!(body["schema_version"], 1, "{body}");
    (status, body, headers)
}

fn post(uri: &str, body: Value) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

#[tokio::test]
async fn chat_creates_and_continues_sessions() {
    let app = app();
    let (status, first, headers) = call(&app, post("/chat", json!({"query": "granite quarry crusher uptime"}))).await;
    assert_eq!(status, StatusCode::OK);
    let sid = first["session_id"].as_str().unwrap().to_string();
    assert!(!sid.is_empty());
    assert_eq!(headers[HISTORY_LENGTH_HEADER], "0");
    assert_eq!(first["citations"][0]["doc_id"], "persona:granite");
    assert!(first["citations"].as_array().unwrap().len() <= 3);

    let (status, second, headers) =
        call(&app, post("/chat", json!({"session_id": sid, "query": "and their challenges?"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(second["session_id"], sid.as_str());
    assert_eq!(headers[HISTORY_LENGTH_HEADER], "2");
}

#[tokio::test]
async fn chat_validation_and_upstream_errors() {
    let app = app();
    let (status, body, _) = call(&app, post("/chat", json!({"query": ""}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "empty_query");
    let (status, _, _) = call(&app, post("/chat", json!({"nope": 1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let failing = ScriptedClient::new()
        .with_fallback(|_| Err(LlmError::Unavailable { message: "down".into(), retry_after: None }));
    let app = router(Arc::new(state_with(seeded_index(), failing, ServiceConfig::default())));
    let (status, body, _) = call(&app, post("/chat", json!({"query": "quarry"}))).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(body["error"]["code"], "generation_failed");
}

#[tokio::test]
async fn api_key_is_enforced() {
    let config = ServiceConfig { api_key: Some("s3cret".into()), ..ServiceConfig::default() };
    let app = router(Arc::new(state_with(seeded_index(), client(), config)));
    let (status, _, _) = call(&app, post("/chat", json!({"query": "quarry"}))).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let req = Request::post("/chat")
        .header("content-type", "application/json")
        .header("x-api-key", "s3cret")
        .body(Body::from(json!({"query": "quarry"}).to_string()))
        .unwrap();
    assert_eq!(call(&app, req).await.0, StatusCode::OK);
    assert_eq!(call(&app, get("/healthz")).await.0, StatusCode::OK);
}

#[tokio::test]
async fn search_modes() {
    let app = app();
    let (status, body, _) = call(&app, get("/search?q=copper%20mine%20safety")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["mode"], "hybrid");
    assert!(body["hits"].as_array().unwrap().len() <= 3);
    assert_eq!(body["hits"][0]["doc_id"], "persona:copper");

    // vector k=1 agrees with exact nearest neighbour
    let index = seeded_index();
    let q = "telematics data for a limestone fleet";
    let oracle = index.exact_vector_search(&embedder().embed(q).unwrap(), 1).unwrap();
    let (_, body, _) = call(&app, get(&format!("/search?mode=vector&k=1&q={}", q.replace(' ', "%20")))).await;
    assert_eq!(body["hits"].as_array().unwrap().len(), 1);
    assert_eq!(body["hits"][0]["doc_id"], oracle[0].doc_id.as_str());

    let (_, body, _) = call(&app, get("/search?mode=keyword&q=gravel")).await;
    assert_eq!(body["hits"][0]["doc_id"], "persona:gravel");

    let (_, body, _) = call(&app, get("/search?mode=keyword&q=category:persona")).await;
    assert_eq!(body["hits"].as_array().unwrap().len(), 5);

    for bad in ["/search?q=x&mode=banana", "/search?q=x&k=0", "/search?q=x&k=abc", "/search?q=", "/search?q=category:cats"] {
        let (status, body, _) = call(&app, get(bad)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}: {body}");
    }
}

#[tokio::test]
async fn documents_upsert_and_persist() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.bin");
    let config = ServiceConfig { index_path: Some(path.clone()), ..ServiceConfig::default() };
    let app = router(Arc::new(state_with(empty_index(), client(), config)));

    let (_, health, _) = call(&app, get("/healthz")).await;
    assert_eq!(health["documents"], 0);

    let docs: Vec<Value> = personas()
        .iter()
        .map(|(k, p)| serde_json::to_value(persona_document::<f32>(k, p)).unwrap())
        .collect();
    let (status, body, _) = call(&app, post("/documents", json!({"documents": docs}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let (_, health, _) = call(&app, get("/healthz")).await;
    assert_eq!(health["documents"], 5);
    assert_eq!(health["documents_by_category"]["persona"], 5);

    let dup = json!({"documents": [docs[0].clone(), docs[0].clone()]});
    let (status, _, _) = call(&app, post("/documents", dup)).await;
    assert_eq!(status, StatusCode::CONFLICT);

    // A restarted service over the saved file answers identically.
    let reloaded: SearchIndex<f32> = load_index(&path).unwrap();
    let restarted = router(Arc::new(state_with(reloaded, client(), ServiceConfig::default())));
    for q in ["/search?q=fleet%20telematics", "/search?q=sand&mode=keyword", "/search?q=mine&mode=vector&k=4"] {
        assert_eq!(call(&app, get(q)).await.1, call(&restarted, get(q)).await.1);
    }
}

#[tokio::test]
async fn persona_generation_and_report() {
    let app = app();
    let (status, body, _) =
        call(&app, post("/personas/generate", json!({"story_id": "northern-quarry", "strategy": "cot"}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let record = &body["record"];
    assert_eq!(record["strategy"], "cot");
    assert_eq!(record["persona"]["provenance"], "synthetic");
    assert_eq!(
        record["total_tokens"].as_u64().unwrap(),
        record["prompt_tokens"].as_u64().unwrap() + record["completion_tokens"].as_u64().unwrap()
    );

    let (status, _, _) = call(
        &app,
        post("/personas/generate", json!({"story_text": "A crew of 20 people.\n\nThey value uptime.", "strategy": "few_shot"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);

    let (status, body, _) =
        call(&app, post("/personas/generate", json!({"story_id": "northern-quarry", "strategy": "zero_shot"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "unknown_strategy");

    let (_, report, _) = call(&app, get("/reports/generation")).await;
    assert_eq!(report["records"], 2);
    assert_eq!(report["efficiency"].as_array().unwrap().len(), 2);
}
