use std::io::{BufRead, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::llm::{render_messages, CompletionParams, LlmClient, Message};
use super::parse::parse_persona_output;
use super::prompt::{PromptStrategy, PromptTemplate};
use super::PersonaGenError;
use crate::corpus::{Persona, SuccessStory};

/// Appended to the conversation when the first reply could not be parsed.
pub const REPAIR_INSTRUCTION: &str = "Your previous reply did not contain a valid persona. \
Reply again with only the JSON object described in the output format, with all nine keys.";

pub trait Clock: Send + Sync {
    /// Time since an arbitrary fixed origin; only differences are meaningful.
    fn monotonic(&self) -> Duration;
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn monotonic(&self) -> Duration {
        self.origin.elapsed()
    }
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Frozen clock: every call takes zero seconds and happens at `at`.
#[derive(Debug, Clone)]
pub struct FixedClock {
    pub at: DateTime<Utc>,
}

impl Clock for FixedClock {
    fn monotonic(&self) -> Duration {
        Duration::ZERO
    }
    fn now(&self) -> DateTime<Utc> {
        self.at
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub record_id: String,
    pub story_id: String,
    pub strategy: PromptStrategy,
    pub prompt_text: String,
    pub raw_response: String,
    pub persona: Persona,
    pub elapsed_seconds: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    pub model_id: String,
    pub params_hash: String,
    pub attempts: u32,
    pub created_at: DateTime<Utc>,
}

impl GenerationRecord {
    pub fn tokens_consistent(&self) -> bool {
        self.total_tokens == self.prompt_tokens + self.completion_tokens
    }
}

/// Templates for both strategies plus shared decoding parameters.
#[derive(Debug, Clone)]
pub struct PersonaGenerator {
    pub few_shot: PromptTemplate,
    pub cot: PromptTemplate,
    pub params: CompletionParams,
}

impl PersonaGenerator {
    pub fn new(few_shot: PromptTemplate, cot: PromptTemplate) -> Self {
        Self {
            few_shot,
            cot,
            params: CompletionParams::default(),
        }
    }

    /// Bundled templates with the given few-shot examples.
    pub fn with_examples(examples: Vec<Persona>) -> Result<Self, PersonaGenError> {
        Ok(Self::new(
            PromptTemplate::default_few_shot(examples)?,
            PromptTemplate::default_cot(),
        ))
    }

    pub fn template(&self, strategy: PromptStrategy) -> &PromptTemplate {
        match strategy {
            PromptStrategy::FewShot => &self.few_shot,
            PromptStrategy::Cot => &self.cot,
        }
    }

    pub fn build_prompt(
        &self,
        story: &SuccessStory,
        strategy: PromptStrategy,
    ) -> Result<Vec<Message>, PersonaGenError> {
        self.template(strategy).build(story)
    }

    /// Prompt, timed completion, parse; on a parse failure one more attempt
    /// with [`REPAIR_INSTRUCTION`] appended. Time and tokens cover every
    /// attempt.
    pub fn generate_persona(
        &self,
        story: &SuccessStory,
        strategy: PromptStrategy,
        client: &dyn LlmClient,
        clock: &dyn Clock,
    ) -> Result<GenerationRecord, PersonaGenError> {
        let messages = self.build_prompt(story, strategy)?;
        let prompt_text = render_messages(&messages);

        let mut conversation = messages;
        let mut elapsed = Duration::ZERO;
        let mut prompt_tokens = 0;
        let mut completion_tokens = 0;
        let mut last_raw = String::new();
        let mut last_error = String::new();

        for attempt in 1..=2u32 {
            let started = clock.monotonic();
            let completion = client.complete(&conversation, &self.params).map_err(|e| {
                PersonaGenError::GenerationFailed {
                    attempts: attempt,
                    reason: e.to_string(),
                    raw_response: (!last_raw.is_empty()).then(|| last_raw.clone()),
                }
            })?;
            elapsed += clock.monotonic().saturating_sub(started);
            prompt_tokens += completion.prompt_tokens;
            completion_tokens += completion.completion_tokens;

            match parse_persona_output(&completion.text) {
                Ok(persona) => {
                    return Ok(GenerationRecord {
                        record_id: format!("{}:{}", story.story_id, strategy),
                        story_id: story.story_id.clone(),
                        strategy,
                        prompt_text,
                        raw_response: completion.text,
                        persona,
                        elapsed_seconds: elapsed.as_secs_f64(),
                        prompt_tokens,
                        completion_tokens,
                        total_tokens: prompt_tokens + completion_tokens,
                        model_id: client.model_id(),
                        params_hash: self.params.hash(),
                        attempts: attempt,
                        created_at: clock.now(),
                    });
                }
                Err(e) => {
                    last_error = e.to_string();
                    conversation.push(Message::assistant(completion.text.clone()));
                    conversation.push(Message::user(REPAIR_INSTRUCTION));
                    last_raw = completion.text;
                }
            }
        }
        Err(PersonaGenError::GenerationFailed {
            attempts: 2,
            reason: last_error,
            raw_response: Some(last_raw),
        })
    }

    /// One attempt per `(story, strategy)` pair, stories outermost. Failures
    /// are collected instead of aborting. `parallelism` > 1 fans the pairs
    /// out over a thread pool; output order does not depend on it.
    pub fn batch_generate(
        &self,
        stories: &[SuccessStory],
        strategies: &[PromptStrategy],
        client: &dyn LlmClient,
        clock: &dyn Clock,
        parallelism: usize,
    ) -> BatchOutcome {
        let jobs: Vec<(&SuccessStory, PromptStrategy)> = stories
            .iter()
            .flat_map(|s| strategies.iter().map(move |st| (s, *st)))
            .collect();
        let run = |(story, strategy): &(&SuccessStory, PromptStrategy)| {
            self.generate_persona(story, *strategy, client, clock)
                .map_err(|error| BatchFailure {
                    story_id: story.story_id.clone(),
                    strategy: *strategy,
                    error: error.to_string(),
                    raw_response: match &error {
                        PersonaGenError::GenerationFailed { raw_response, .. } => raw_response.clone(),
                        _ => None,
                    },
                })
        };
        let results: Vec<Result<GenerationRecord, BatchFailure>> = if parallelism > 1 {
            match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
                Ok(pool) => pool.install(|| jobs.par_iter().map(run).collect()),
                Err(_) => jobs.iter().map(run).collect(),
            }
        } else {
            jobs.iter().map(run).collect()
        };

        let mut outcome = BatchOutcome::default();
        for r in results {
            match r {
                Ok(rec) => outcome.records.push(rec),
                Err(f) => outcome.failures.push(f),
            }
        }
        outcome
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFailure {
    pub story_id: String,
    pub strategy: PromptStrategy,
    pub error: String,
    pub raw_response: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchOutcome {
    pub records: Vec<GenerationRecord>,
    pub failures: Vec<BatchFailure>,
}

/// One JSON record per line.
pub fn write_records_jsonl<W: Write>(out: &mut W, records: &[GenerationRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<GenerationRecord>, PersonaGenError> {
    let file = std::fs::File::open(path)
        .map_err(|e| PersonaGenError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PersonaGenError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            PersonaGenError::Io(format!("{}:{}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Provenance, Segment};
    use crate::personagen::llm::{LlmError, ScriptedClient};

    fn example(i: usize) -> Persona {
        Persona {
            name: format!("Example {i}"),
            role: "Owner".into(),
            number_of_employees: "20".into(),
            fleet_size: "8".into(),
            short_story: "Family business.".into(),
            what_is_important: vec!["uptime".into()],
            challenges: vec!["weather".into()],
            expectations: vec!["support".into()],
            buying_considerations: vec!["price".into()],
            provenance: Provenance::Verified,
        }
    }

    fn generator() -> PersonaGenerator {
        PersonaGenerator::with_examples((0..3).map(example).collect()).unwrap()
    }

    fn story(id: &str) -> SuccessStory {
        SuccessStory::new(
            id,
            format!("https://x.test/{id}"),
            Segment::Mining,
            vec![
                "The mine employs 300 people and runs 40 haulers.".into(),
                "Safety is the top priority on site.".into(),
            ],
        )
        .unwrap()
    }

    fn fixed() -> FixedClock {
        FixedClock { at: DateTime::parse_from_rfc3339("2025-01-01T00:00:00Z").unwrap().into() }
    }

    #[test]
    fn accounting_with_zero_time() {
        let client = ScriptedClient::persona_synthesizer();
        let rec = generator()
            .generate_persona(&story("mine-a"), PromptStrategy::FewShot, &client, &fixed())
            .unwrap();
        assert_eq!(rec.elapsed_seconds, 0.0);
        assert!(rec.tokens_consistent());
        assert!(rec.prompt_tokens > 0 && rec.completion_tokens > 0);
        assert_eq!(rec.attempts, 1);
        assert_eq!(rec.persona.provenance, Provenance::Synthetic);
        assert_eq!(rec.record_id, "mine-a:few_shot");
    }

    #[test]
    fn prose_twice_fails_after_two_attempts() {
        let client = ScriptedClient::new().with_fallback(|_| Ok("Sorry, no persona here.".into()));
        let err = generator()
            .generate_persona(&story("s"), PromptStrategy::Cot, &client, &fixed())
            .unwrap_err();
        assert_eq!(client.calls(), 2);
        match err {
            PersonaGenError::GenerationFailed { attempts, raw_response, .. } => {
                assert_eq!(attempts, 2);
                assert_eq!(raw_response.as_deref(), Some("Sorry, no persona here."));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn repair_succeeds_on_second_attempt() {
        let client = ScriptedClient::new().with_fallback(|m| {
            if m.last().is_some_and(|x| x.content == REPAIR_INSTRUCTION) {
                Ok(crate::personagen::synth::synthesize_persona_reply(&m[..2]))
            } else {
                Ok("thinking...".into())
            }
        });
        let rec = generator()
            .generate_persona(&story("s"), PromptStrategy::FewShot, &client, &fixed())
            .unwrap();
        assert_eq!(rec.attempts, 2);
        assert!(rec.tokens_consistent());
    }

    #[test]
    fn client_error_is_wrapped() {
        let client = ScriptedClient::new()
            .with_fallback(|_| Err(LlmError::Unavailable { message: "down".into(), retry_after: None }));
        let err = generator()
            .generate_persona(&story("s"), PromptStrategy::FewShot, &client, &fixed())
            .unwrap_err();
        assert!(matches!(err, PersonaGenError::GenerationFailed { attempts: 1, .. }));
    }

    #[test]
    fn batch_isolates_failures() {
        let stories: Vec<SuccessStory> = (0..10).map(|i| story(&format!("s{i}"))).collect();
        let client = ScriptedClient::new().with_fallback(|m| {
            if m[1].content.contains("s7 (mining)") {
                Ok("no".into())
            } else {
                Ok(crate::personagen::synth::synthesize_persona_reply(m))
            }
        });
        let out = generator().batch_generate(&stories, &[PromptStrategy::FewShot], &client, &fixed(), 1);
        assert_eq!(out.records.len(), 9);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].story_id, "s7");
    }

    #[test]
    fn batch_order_and_parallel_determinism() {
        let stories: Vec<SuccessStory> = (0..6).map(|i| story(&format!("s{i}"))).collect();
        let client = ScriptedClient::persona_synthesizer();
        let g = generator();
        let serial = g.batch_generate(&stories, &PromptStrategy::ALL, &client, &fixed(), 1);
        let parallel = g.batch_generate(&stories, &PromptStrategy::ALL, &client, &fixed(), 4);
        assert_eq!(serial, parallel);
        let ids: Vec<&str> = serial.records.iter().map(|r| r.record_id.as_str()).collect();
        assert_eq!(&ids[..3], &["s0:few_shot", "s0:cot", "s1:few_shot"]);
        assert!(g.batch_generate(&stories, &[], &client, &fixed(), 1).records.is_empty());
    }

    #[test]
    fn jsonl_roundtrip() {
        let client = ScriptedClient::persona_synthesizer();
        let rec = generator()
            .generate_persona(&story("s"), PromptStrategy::Cot, &client, &fixed())
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let mut f = std::fs::File::create(&path).unwrap();
        write_records_jsonl(&mut f, &[rec.clone(), rec.clone()]).unwrap();
        drop(f);
        assert_eq!(read_records_jsonl(&path).unwrap(), vec![rec.clone(), rec]);
    }
}
