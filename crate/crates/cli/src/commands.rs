use std::collections::BTreeMap;
use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use serde_json::{json, Value};

use persona_rag_core::chat::{answer, load_system_message, ChatSession, SystemMessageConfig};
use persona_rag_core::corpus::{
    ingest_stories, load_markdown_dir, load_personas_dir, load_story_urls, SuccessStory,
};
use persona_rag_core::embedding::{EmbedBackend, Embedder, EmbedderConfig, MockEmbedder};
use persona_rag_core::evalstats::{
    efficiency_csv, efficiency_summary, load_judgments, load_survey, proportion_at_least,
    records_csv, EvaluationReport, McNemarPolicy, DEFAULT_ALPHA,
};
use persona_rag_core::index::{
    chunk_document, load_index, persona_document, save_index, story_document, IndexConfig,
    NewDocument, SearchIndex,
};
use persona_rag_core::personagen::{
    build_few_shot_prompt, read_records_jsonl, write_records_jsonl, Clock, FixedClock, LlmClient,
    PersonaGenError, PersonaGenerator, PromptStrategy, PromptTemplate, RemoteLlmClient,
    ScriptedClient, SystemClock, DEFAULT_FEW_SHOT_TEMPLATE, FEW_SHOT_EXAMPLE_COUNT,
};
use persona_rag_core::SearchIndexF32;

use crate::settings::LlmBackend;
use crate::{CliError, Context};

fn emit(out: &mut dyn Write, value: &Value) -> Result<(), CliError> {
    writeln!(out, "{value}").map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read_stories(path: &Path) -> Result<Vec<SuccessStory>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                CliError::validation("invalid_stories", format!("{}:{}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

fn embedder(ctx: &Context) -> Result<Box<dyn Embedder<f32>>, CliError> {
    let s = &ctx.settings;
    let cfg = match s.embed_backend {
        EmbedBackend::Mock => EmbedderConfig::mock(s.embed_dimension, ctx.seed),
        EmbedBackend::Remote => EmbedderConfig::remote_from_env(s.embed_dimension, s.embed_cache.clone()),
    };
    Ok(cfg.build()?)
}

/// Embedder for a saved index: mock indexes carry everything needed to
/// rebuild theirs; otherwise the configured embedder must match.
fn embedder_for(ctx: &Context, index: &SearchIndexF32) -> Result<Box<dyn Embedder<f32>>, CliError> {
    if let Some(mock) = MockEmbedder::from_model_id(index.embedder_id()) {
        return Ok(Box::new(mock));
    }
    let e = embedder(ctx)?;
    index.check_embedder(e.as_ref())?;
    Ok(e)
}

fn llm(ctx: &Context) -> Result<Arc<dyn LlmClient>, CliError> {
    Ok(match ctx.settings.llm_backend {
        LlmBackend::Scripted => Arc::new(ScriptedClient::offline()),
        LlmBackend::Replay => {
            let path = ctx.settings.llm_script.as_ref().ok_or_else(|| {
                CliError::validation("missing_setting", "llm.backend = replay needs llm.script")
            })?;
            Arc::new(ScriptedClient::new().load_script(path)?)
        }
        LlmBackend::Remote => Arc::new(RemoteLlmClient::from_env()?),
    })
}

fn clock(ctx: &Context) -> Arc<dyn Clock> {
    match ctx.fixed_time {
        Some(at) => Arc::new(FixedClock { at }),
        None => Arc::new(SystemClock::default()),
    }
}

fn open_index(ctx: &Context, path: &Path) -> Result<SearchIndexF32, CliError> {
    let path = ctx.path(path);
    load_index(&path).map_err(|e| match e {
        persona_rag_core::index::IndexError::Io(io) => CliError::io(&path, io),
        other => other.into(),
    })
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// CSV with `story_id,url,segment` rows.
    #[arg(long)]
    pub urls: PathBuf,
    /// Directory holding `<story_id>.html` pages.
    #[arg(long)]
    pub html: PathBuf,
    /// Directory of `<story_id>.patch.txt` corrections.
    #[arg(long)]
    pub patches: Option<PathBuf>,
    /// Output stories, one JSON object per line.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn ingest(ctx: &Context, a: IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let urls = load_story_urls(&ctx.path(&a.urls))?;
    let patches = a.patches.as_ref().map(|p| ctx.path(p));
    let (stories, failures) = ingest_stories(
        &urls,
        &ctx.path(&a.html),
        patches.as_deref(),
        &ctx.settings.container_selector,
        &ctx.settings.paragraph_tag,
    );
    if stories.is_empty() && !urls.is_empty() {
        let first = failures.first().map(|f| f.error.to_string()).unwrap_or_default();
        return Err(CliError::validation("no_stories", format!("no story could be extracted; first error: {first}")));
    }
    let mut buf = Vec::new();
    for s in &stories {
        serde_json::to_writer(&mut buf, s).expect("story serializes");
        buf.push(b'\n');
    }
    write_file(&ctx.path(&a.out), &buf)?;
    let failures: Vec<Value> = failures
        .iter()
        .map(|f| json!({"story_id": f.story_id, "error": f.error.to_string()}))
        .collect();
    emit(out, &json!({"command": "ingest", "stories": stories.len(), "failures": failures}))
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Directory of persona JSON files.
    #[arg(long)]
    pub personas: Option<PathBuf>,
    /// Directory of Markdown segment notes.
    #[arg(long)]
    pub general: Option<PathBuf>,
    /// Stories JSONL written by `ingest`.
    #[arg(long)]
    pub stories: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn index(ctx: &Context, a: IndexArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut docs: Vec<NewDocument<f32>> = Vec::new();
    if let Some(dir) = &a.personas {
        for (key, p) in load_personas_dir(&ctx.path(dir))? {
            docs.push(persona_document(&key, &p));
        }
    }
    if let Some(dir) = &a.general {
        for chunk in load_markdown_dir(&ctx.path(dir), ctx.settings.max_chunk_chars)? {
            if !chunk.body.trim().is_empty() {
                docs.push(chunk_document(&chunk));
            }
        }
    }
    if let Some(path) = &a.stories {
        for s in read_stories(&ctx.path(path))? {
            docs.push(story_document(&s));
        }
    }
    if docs.is_empty() {
        return Err(CliError::validation("no_documents", "give --personas, --general or --stories with content"));
    }
    let emb = embedder(ctx)?;
    let config = IndexConfig { seed: ctx.seed, ..IndexConfig::default() };
    let mut idx = SearchIndex::for_embedder(config, emb.as_ref())?;
    idx.upsert_documents(docs, emb.as_ref())?;
    let path = ctx.path(&a.out);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    save_index(&idx, &path)?;
    let by_category: BTreeMap<&str, usize> =
        idx.count_by_category().into_iter().map(|(c, n)| (c.as_str(), n)).collect();
    emit(
        out,
        &json!({
            "command": "index",
            "documents": idx.len(),
            "by_category": by_category,
            "embedder_id": idx.embedder_id(),
        }),
    )
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Stories JSONL written by `ingest`.
    #[arg(long)]
    pub stories: PathBuf,
    /// Directory with exactly three example persona files (few-shot only).
    #[arg(long)]
    pub examples: Option<PathBuf>,
    /// `few_shot`, `cot` or `both`.
    #[arg(long, default_value = "both")]
    pub strategy: String,
    #[arg(long)]
    pub few_shot_template: Option<PathBuf>,
    #[arg(long)]
    pub cot_template: Option<PathBuf>,
    /// Output generation records, one JSON object per line.
    #[arg(long)]
    pub out: PathBuf,
    /// Failed stories, one JSON object per line.
    #[arg(long)]
    pub failures: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

fn strategies(s: &str) -> Result<Vec<PromptStrategy>, CliError> {
    if s == "both" {
        return Ok(PromptStrategy::ALL.to_vec());
    }
    Ok(vec![s.parse()?])
}

pub fn generate(ctx: &Context, a: GenerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let strategies = strategies(&a.strategy)?;
    let stories = read_stories(&ctx.path(&a.stories))?;
    let examples: Vec<_> = match &a.examples {
        Some(dir) => load_personas_dir(&ctx.path(dir))?.into_iter().map(|(_, p)| p).collect(),
        None => Vec::new(),
    };

    let mut few_shot = match &a.few_shot_template {
        Some(p) => PromptTemplate::load(PromptStrategy::FewShot, &ctx.path(p))?,
        None => PromptTemplate::parse(PromptStrategy::FewShot, DEFAULT_FEW_SHOT_TEMPLATE)?,
    };
    few_shot.examples = examples;
    let cot = match &a.cot_template {
        Some(p) => PromptTemplate::load(PromptStrategy::Cot, &ctx.path(p))?,
        None => PromptTemplate::default_cot(),
    };
    if strategies.contains(&PromptStrategy::FewShot) {
        // Example problems are configuration errors, not per-story failures.
        if few_shot.examples.len() != FEW_SHOT_EXAMPLE_COUNT {
            return Err(PersonaGenError::WrongExampleCount {
                expected: FEW_SHOT_EXAMPLE_COUNT,
                found: few_shot.examples.len(),
            }
            .into());
        }
        if let Some(s) = stories.first() {
            match build_few_shot_prompt(&few_shot, s, &few_shot.examples) {
                Ok(_) | Err(PersonaGenError::EmptyStory) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    let generator = PersonaGenerator::new(few_shot, cot);
    let client = llm(ctx)?;
    let clock = clock(ctx);
    let outcome = generator.batch_generate(&stories, &strategies, client.as_ref(), clock.as_ref(), a.parallel.max(1));

    let mut buf = Vec::new();
    write_records_jsonl(&mut buf, &outcome.records).map_err(|e| CliError::io(&a.out, e))?;
    write_file(&ctx.path(&a.out), &buf)?;
    if let Some(path) = &a.failures {
        let mut buf = Vec::new();
        for f in &outcome.failures {
            serde_json::to_writer(&mut buf, f).expect("failure serializes");
            buf.push(b'\n');
        }
        write_file(&ctx.path(path), &buf)?;
    }
    if outcome.records.is_empty() && !outcome.failures.is_empty() {
        return Err(CliError::generation(
            "generation_failed",
            format!("all {} generations failed; first: {}", outcome.failures.len(), outcome.failures[0].error),
        ));
    }
    emit(
        out,
        &json!({
            "command": "generate",
            "records": outcome.records.len(),
            "failures": outcome.failures.iter().map(|f| json!({"story_id": f.story_id, "strategy": f.strategy, "error": f.error})).collect::<Vec<_>>(),
        }),
    )
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// CSV with `evaluator_id,story_id,metric,method,response` rows.
    #[arg(long)]
    pub judgments: PathBuf,
    /// `auto`, `exact` or `chi_square`.
    #[arg(long, default_value = "auto")]
    pub policy: String,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// JSON report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-metric CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn policy(s: &str) -> Result<McNemarPolicy, CliError> {
    match s {
        "auto" => Ok(McNemarPolicy::Auto),
        "exact" => Ok(McNemarPolicy::Exact),
        "chi_square" | "chi-square" => Ok(McNemarPolicy::ChiSquare),
        other => Err(CliError::validation("invalid_policy", format!("unknown policy `{other}`"))),
    }
}

fn pretty(v: &impl serde::Serialize) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("report serializes");
    s.push(b'\n');
    s
}

pub fn evaluate(ctx: &Context, a: EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::validation("invalid_alpha", "alpha must lie in (0, 1)"));
    }
    let judgments = load_judgments(&ctx.path(&a.judgments))?;
    let report = EvaluationReport::from_judgments(&judgments, policy(&a.policy)?, a.alpha)?;
    if let Some(p) = &a.csv {
        write_file(&ctx.path(p), report.mcnemar_csv()?.as_bytes())?;
    }
    match &a.out {
        Some(p) => {
            write_file(&ctx.path(p), &pretty(&report))?;
            let summary: Vec<Value> = report
                .metrics
                .iter()
                .map(|m| {
                    json!({
                        "metric": m.metric,
                        "table": [m.table.a, m.table.b, m.table.c, m.table.d],
                        "variant": m.selected.as_ref().map(|r| r.variant),
                        "statistic": m.selected.as_ref().map(|r| r.statistic),
                        "p_value": m.selected.as_ref().map(|r| format!("{:.4}", r.p_value)),
                    })
                })
                .collect();
            emit(out, &json!({"command": "evaluate", "metrics": summary}))
        }
        None => out.write_all(&pretty(&report)).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

#[derive(Debug, Args)]
pub struct SurveyArgs {
    /// CSV with `evaluator_id,question_id,answer,round` rows.
    #[arg(long)]
    pub survey: PathBuf,
    /// `question=label,label,...`: report the share of answers in the set.
    #[arg(long = "positive", value_name = "QUESTION=LABELS")]
    pub positive: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn survey(ctx: &Context, a: SurveyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let responses = load_survey(&ctx.path(&a.survey))?;
    let report = EvaluationReport::from_judgments(&[], McNemarPolicy::Auto, DEFAULT_ALPHA)?.with_survey(&responses)?;
    let mut proportions = BTreeMap::new();
    for entry in &a.positive {
        let (q, labels) = entry
            .split_once('=')
            .ok_or_else(|| CliError::validation("invalid_positive", format!("expected QUESTION=LABELS, got `{entry}`")))?;
        let labels: Vec<&str> = labels.split(',').map(str::trim).filter(|l| !l.is_empty()).collect();
        let p = proportion_at_least(&responses, q, &labels)?;
        proportions.insert(q.to_string(), json!({"labels": labels, "proportion": p, "rounded": format!("{p:.4}")}));
    }
    let body = json!({
        "schema_version": report.schema_version,
        "questions": report.survey,
        "proportions": proportions,
    });
    if let Some(p) = &a.csv {
        write_file(&ctx.path(p), report.survey_csv()?.as_bytes())?;
    }
    match &a.out {
        Some(p) => {
            write_file(&ctx.path(p), &pretty(&body))?;
            emit(out, &json!({"command": "survey", "questions": report.survey.len()}))
        }
        None => out.write_all(&pretty(&body)).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// System message file with [role], [tone] and [guidelines].
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Questions, one per line; read from stdin when absent.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Transcript, one JSON object per answer.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn chat(ctx: &Context, a: ChatArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let idx = open_index(ctx, &a.index)?;
    let emb = embedder_for(ctx, &idx)?;
    let sys = match &a.system {
        Some(p) => load_system_message(&ctx.path(p))?,
        None => SystemMessageConfig::bundled(),
    };
    let client = llm(ctx)?;
    let cfg = ctx.settings.chat();
    let clock = clock(ctx);
    let mut session = ChatSession::new("cli", clock.now());

    let interactive = a.queries.is_none() && std::io::stdin().is_terminal();
    let lines: Box<dyn Iterator<Item = std::io::Result<String>>> = match &a.queries {
        Some(p) => {
            let path = ctx.path(p);
            let f = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
            Box::new(std::io::BufReader::new(f).lines())
        }
        None => Box::new(std::io::stdin().lock().lines()),
    };
    let mut transcript = Vec::new();
    if interactive {
        eprint!("> ");
    }
    for line in lines {
        let line = line.map_err(|e| CliError::io(Path::new("<input>"), e))?;
        let query = line.trim();
        if query.is_empty() {
            continue;
        }
        if interactive && (query == "/quit" || query == "/exit") {
            break;
        }
        let ans = answer(&mut session, query, &idx, emb.as_ref(), &cfg, client.as_ref(), &sys)?;
        let io = |e| CliError::io(Path::new("<stdout>"), e);
        writeln!(out, "Q: {query}").map_err(io)?;
        writeln!(out, "A: {}", ans.answer_text).map_err(io)?;
        for (i, c) in ans.citations.iter().enumerate() {
            writeln!(out, "   [{}] {} ({})", i + 1, c.title, c.doc_id).map_err(io)?;
        }
        writeln!(out).map_err(io)?;
        serde_json::to_writer(&mut transcript, &json!({"query": query, "answer": ans.answer_text, "citations": ans.citations}))
            .expect("transcript serializes");
        transcript.push(b'\n');
        if interactive {
            eprint!("> ");
        }
    }
    if let Some(p) = &a.out {
        write_file(&ctx.path(p), &transcript)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Index file; created empty with `--init` when missing.
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub init: bool,
    #[arg(long)]
    pub addr: Option<String>,
    #[arg(long)]
    pub api_key: Option<String>,
    /// Allowed CORS origin; repeatable.
    #[arg(long = "cors")]
    pub cors: Vec<String>,
    #[arg(long)]
    pub stories: Option<PathBuf>,
    #[arg(long)]
    pub examples: Option<PathBuf>,
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Append chat exchanges here as JSON lines.
    #[arg(long)]
    pub transcript_log: Option<PathBuf>,
}

pub fn serve(ctx: &Context, a: ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    use persona_rag_service::{serve, AppState, ServiceConfig};

    let path = ctx.path(&a.index);
    let (idx, emb): (SearchIndexF32, Arc<dyn Embedder<f32>>) = if !path.exists() && a.init {
        let emb = embedder(ctx)?;
        let config = IndexConfig { seed: ctx.seed, ..IndexConfig::default() };
        (SearchIndex::for_embedder(config, emb.as_ref())?, Arc::from(emb))
    } else {
        let idx = open_index(ctx, &a.index)?;
        let emb = embedder_for(ctx, &idx)?;
        (idx, Arc::from(emb))
    };
    let env = ServiceConfig::from_env();
    let config = ServiceConfig {
        listen_address: a.addr.unwrap_or(env.listen_address),
        index_path: Some(path),
        api_key: a.api_key.or(env.api_key),
        cors_origins: a.cors,
        transcript_log: a.transcript_log.map(|p| ctx.path(&p)),
        ..ServiceConfig::default()
    };
    let addr = config.listen_address.clone();
    let sys = match &a.system {
        Some(p) => load_system_message(&ctx.path(p))?,
        None => SystemMessageConfig::bundled(),
    };
    let mut state = AppState::new(idx, emb, llm(ctx)?, config)
        .with_system_message(sys)
        .with_chat_config(ctx.settings.chat())
        .with_clock(clock(ctx));
    if let Some(p) = &a.stories {
        state = state.with_stories(read_stories(&ctx.path(p))?);
    }
    if let Some(dir) = &a.examples {
        let examples = load_personas_dir(&ctx.path(dir))?.into_iter().map(|(_, p)| p).collect();
        state = state.with_generator(PersonaGenerator::with_examples(examples)?);
    }
    emit(out, &json!({"command": "serve", "addr": addr}))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io(Path::new("<runtime>"), e))?;
    runtime
        .block_on(serve(Arc::new(state)))
        .map_err(|e| CliError::io(Path::new("<listener>"), e))
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Generation records JSONL.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub judgments: Option<PathBuf>,
    #[arg(long)]
    pub survey: Option<PathBuf>,
    #[arg(long, default_value = "auto")]
    pub policy: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn report(ctx: &Context, a: ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = ctx.path(&a.out);
    let judgments = match &a.judgments {
        Some(p) => load_judgments(&ctx.path(p))?,
        None => Vec::new(),
    };
    let mut report = EvaluationReport::from_judgments(&judgments, policy(&a.policy)?, DEFAULT_ALPHA)?;
    let mut written = Vec::new();
    let put = |written: &mut Vec<String>, name: &str, bytes: &[u8]| -> Result<(), CliError> {
        write_file(&dir.join(name), bytes)?;
        written.push(name.to_string());
        Ok(())
    };
    if let Some(p) = &a.records {
        let records = read_records_jsonl(&ctx.path(p))?;
        let eff = efficiency_summary(&records)?;
        put(&mut written, "efficiency.csv", efficiency_csv(&eff)?.as_bytes())?;
        put(&mut written, "generation_records.csv", records_csv(&records)?.as_bytes())?;
        report = report.with_efficiency(eff);
    }
    if !judgments.is_empty() {
        put(&mut written, "mcnemar.csv", report.mcnemar_csv()?.as_bytes())?;
    }
    if let Some(p) = &a.survey {
        report = report.with_survey(&load_survey(&ctx.path(p))?)?;
        put(&mut written, "survey.csv", report.survey_csv()?.as_bytes())?;
    }
    if written.is_empty() {
        return Err(CliError::validation("nothing_to_report", "give --records, --judgments or --survey"));
    }
    put(&mut written, "summary.json", &pretty(&report))?;
    emit(out, &json!({"command": "report", "files": written}))
}
