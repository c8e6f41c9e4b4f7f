use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::llm::Message;
use super::PersonaGenError;
use crate::corpus::{persona_to_json, Persona, SuccessStory, UNKNOWN};
use crate::sections::{list_lines, section_map};

pub const FEW_SHOT_EXAMPLE_COUNT: usize = 3;
pub const MIN_REASONING_STEPS: usize = 4;

/// Marker that opens each example persona in a few-shot prompt.
pub const EXAMPLE_MARKER: &str = "### Example persona";
/// Marker that opens the success story in every prompt.
pub const STORY_MARKER: &str = "### Success story";
/// Heading of the numbered reasoning list in chain-of-thought prompts.
pub const REASONING_HEADING: &str = "Reasoning steps:";

pub const DEFAULT_FEW_SHOT_TEMPLATE: &str = include_str!("../../templates/few_shot.txt");
pub const DEFAULT_COT_TEMPLATE: &str = include_str!("../../templates/cot.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    FewShot,
    Cot,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 2] = [PromptStrategy::FewShot, PromptStrategy::Cot];

    pub fn as_str(&self) -> &'static str {
        match self {
            PromptStrategy::FewShot => "few_shot",
            PromptStrategy::Cot => "cot",
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptStrategy {
    type Err = PersonaGenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "few_shot" | "fewshot" => Ok(PromptStrategy::FewShot),
            "cot" | "chain_of_thought" => Ok(PromptStrategy::Cot),
            other => Err(PersonaGenError::UnknownStrategy(other.to_string())),
        }
    }
}

/// A prompt recipe loaded from a template file.
///
/// The file has `[system_instructions]`, `[task_definition]`,
/// `[output_format]` and `[user]` sections, plus `[reasoning_steps]` (one per
/// line) for chain-of-thought. Sections may use the placeholders
/// `{{story}}`, `{{examples}}` and `{{output_format}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub kind: PromptStrategy,
    pub system_instructions: String,
    pub task_definition: String,
    pub output_format: String,
    pub user_template: String,
    pub examples: Vec<Persona>,
    pub reasoning_steps: Vec<String>,
}

impl PromptTemplate {
    pub fn parse(kind: PromptStrategy, text: &str) -> Result<Self, PersonaGenError> {
        let sections = section_map(text);
        let take = |name: &str| -> Result<String, PersonaGenError> {
            sections
                .get(name)
                .filter(|s| !s.is_empty())
                .cloned()
                .ok_or_else(|| PersonaGenError::Template(format!("missing [{name}] section")))
        };
        let reasoning_steps = match kind {
            PromptStrategy::Cot => list_lines(&take("reasoning_steps")?),
            PromptStrategy::FewShot => Vec::new(),
        };
        let template = Self {
            kind,
            system_instructions: take("system_instructions")?,
            task_definition: take("task_definition")?,
            output_format: take("output_format")?,
            user_template: take("user")?,
            examples: Vec::new(),
            reasoning_steps,
        };
        if kind == PromptStrategy::Cot && template.reasoning_steps.len() < MIN_REASONING_STEPS {
            return Err(PersonaGenError::Template(format!(
                "chain-of-thought templates need at least {MIN_REASONING_STEPS} reasoning steps"
            )));
        }
        Ok(template)
    }

    pub fn load(kind: PromptStrategy, path: &Path) -> Result<Self, PersonaGenError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PersonaGenError::Template(format!("{}: {e}", path.display())))?;
        Self::parse(kind, &text)
    }

    pub fn default_few_shot(examples: Vec<Persona>) -> Result<Self, PersonaGenError> {
        let mut t = Self::parse(PromptStrategy::FewShot, DEFAULT_FEW_SHOT_TEMPLATE)?;
        t.examples = examples;
        Ok(t)
    }

    pub fn default_cot() -> Self {
        Self::parse(PromptStrategy::Cot, DEFAULT_COT_TEMPLATE).expect("bundled template is valid")
    }

    /// Builds the message sequence for one story.
    pub fn build(&self, story: &SuccessStory) -> Result<Vec<Message>, PersonaGenError> {
        match self.kind {
            PromptStrategy::FewShot => build_few_shot_prompt(self, story, &self.examples),
            PromptStrategy::Cot => build_cot_prompt(self, story),
        }
    }
}

fn render(template: &str, vars: &[(&str, &str)]) -> Result<String, PersonaGenError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| PersonaGenError::Template("unterminated `{{` placeholder".into()))?;
        let name = after[..end].trim();
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| PersonaGenError::Template(format!("unknown placeholder `{{{{{name}}}}}`")))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn story_block(story: &SuccessStory) -> String {
    format!(
        "{STORY_MARKER}: {} ({})\n{}",
        story.story_id, story.segment, story.full_text
    )
}

fn examples_block(examples: &[Persona]) -> String {
    examples
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{EXAMPLE_MARKER} {}\n```json\n{}\n```", i + 1, persona_to_json(p)))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn incomplete_attributes(p: &Persona) -> Vec<&'static str> {
    let scalars = [
        ("name", &p.name),
        ("role", &p.role),
        ("number_of_employees", &p.number_of_employees),
        ("fleet_size", &p.fleet_size),
        ("short_story", &p.short_story),
    ];
    let lists = [
        ("what_is_important", &p.what_is_important),
        ("challenges", &p.challenges),
        ("expectations", &p.expectations),
        ("buying_considerations", &p.buying_considerations),
    ];
    let mut out: Vec<&'static str> = scalars
        .iter()
        .filter(|(_, v)| v.trim().is_empty() || v.as_str() == UNKNOWN)
        .map(|(k, _)| *k)
        .collect();
    out.extend(
        lists
            .iter()
            .filter(|(_, v)| v.is_empty() || v.iter().all(|s| s == UNKNOWN))
            .map(|(k, _)| *k),
    );
    out
}

fn system_message(t: &PromptTemplate, vars: &[(&str, &str)]) -> Result<String, PersonaGenError> {
    let mut parts = vec![
        render(&t.system_instructions, vars)?,
        render(&t.task_definition, vars)?,
    ];
    if t.kind == PromptStrategy::Cot {
        let steps = t
            .reasoning_steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {s}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        parts.push(format!("{REASONING_HEADING}\n{steps}"));
    }
    parts.push(format!("Output format:\n{}", render(&t.output_format, vars)?));
    Ok(parts.join("\n\n"))
}

/// System message with instructions, task and output format; user message
/// with the three serialized examples followed by the story.
pub fn build_few_shot_prompt(
    template: &PromptTemplate,
    story: &SuccessStory,
    examples: &[Persona],
) -> Result<Vec<Message>, PersonaGenError> {
    if examples.len() != FEW_SHOT_EXAMPLE_COUNT {
        return Err(PersonaGenError::WrongExampleCount {
            expected: FEW_SHOT_EXAMPLE_COUNT,
            found: examples.len(),
        });
    }
    for (i, ex) in examples.iter().enumerate() {
        let missing = incomplete_attributes(ex);
        if !missing.is_empty() {
            return Err(PersonaGenError::IncompleteExample {
                index: i,
                attributes: missing.iter().map(|s| s.to_string()).collect(),
            });
        }
    }
    if story.full_text.trim().is_empty() {
        return Err(PersonaGenError::EmptyStory);
    }
    let story_text = story_block(story);
    let examples_text = examples_block(examples);
    let vars = [
        ("story", story_text.as_str()),
        ("examples", examples_text.as_str()),
        ("output_format", template.output_format.as_str()),
    ];
    let mut user = render(&template.user_template, &vars)?;
    if !template.user_template.contains("{{examples}}") {
        user = format!("{examples_text}\n\n{user}");
    }
    if !template.user_template.contains("{{story}}") {
        user = format!("{user}\n\n{story_text}");
    }
    Ok(vec![
        Message::system(system_message(template, &vars)?),
        Message::user(user),
    ])
}

/// System message with instructions, the numbered reasoning steps and then
/// the output format; user message with the story. No examples.
pub fn build_cot_prompt(
    template: &PromptTemplate,
    story: &SuccessStory,
) -> Result<Vec<Message>, PersonaGenError> {
    if story.full_text.trim().is_empty() {
        return Err(PersonaGenError::EmptyStory);
    }
    if template.reasoning_steps.len() < MIN_REASONING_STEPS {
        return Err(PersonaGenError::Template(format!(
            "chain-of-thought templates need at least {MIN_REASONING_STEPS} reasoning steps"
        )));
    }
    let story_text = story_block(story);
    let vars = [
        ("story", story_text.as_str()),
        ("examples", ""),
        ("output_format", template.output_format.as_str()),
    ];
    let mut user = render(&template.user_template, &vars)?;
    if !template.user_template.contains("{{story}}") {
        user = format!("{user}\n\n{story_text}");
    }
    Ok(vec![
        Message::system(system_message(template, &vars)?),
        Message::user(user),
    ])
}
