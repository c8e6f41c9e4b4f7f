//! Conversions from corpus items to index documents, with stable id
//! prefixes per category.

use super::{Category, NewDocument};
use crate::corpus::{Chunk, Persona, SuccessStory};

pub const PERSONA_ID_PREFIX: &str = "persona:";
pub const GENERAL_ID_PREFIX: &str = "general:";
pub const STORY_ID_PREFIX: &str = "story:";

/// Persona document; `key` is usually the file stem. Titled with the
/// persona's name and its role.
pub fn persona_document<F>(key: &str, persona: &Persona) -> NewDocument<F> {
    let p = persona.clone().normalized();
    NewDocument::new(
        format!("{PERSONA_ID_PREFIX}{key}"),
        format!("{} ({})", p.name, p.role),
        Category::Persona,
        p.to_index_text(),
    )
}

/// Segment-knowledge chunk; the heading line, if any, is kept in the text.
pub fn chunk_document<F>(chunk: &Chunk) -> NewDocument<F> {
    let content = match &chunk.heading_line {
        Some(h) => format!("{h}\n{}", chunk.body),
        None => chunk.body.clone(),
    };
    NewDocument::new(
        format!("{GENERAL_ID_PREFIX}{}", chunk.chunk_id),
        chunk.title(),
        Category::GeneralInformation,
        content,
    )
}

pub fn story_document<F>(story: &SuccessStory) -> NewDocument<F> {
    NewDocument::new(
        format!("{STORY_ID_PREFIX}{}", story.story_id),
        format!("Success story: {} ({})", story.story_id, story.segment),
        Category::SuccessStory,
        story.full_text.clone(),
    )
}
