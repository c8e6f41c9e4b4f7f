//! Deterministic stand-ins for a language model, used by the scripted client
//! in tests and offline runs.

use std::sync::OnceLock;

use regex::Regex;

use super::llm::{Message, Role};
use super::prompt::{REASONING_HEADING, STORY_MARKER};
use crate::corpus::{persona_to_json, Persona, Provenance, UNKNOWN};

/// Prefix of the context blocks the chat prompt builder emits.
pub const SOURCE_MARKER: &str = "### Source";
pub const INSUFFICIENT_INFORMATION: &str =
    "There is not enough information in the knowledge base to answer that question.";

fn sentences(text: &str) -> Vec<String> {
    static SPLIT: OnceLock<Regex> = OnceLock::new();
    let re = SPLIT.get_or_init(|| Regex::new(r"[.!?]+(\s+|$)").expect("valid regex"));
    re.split(text)
        .map(|s| s.trim())
        .filter(|s| s.split_whitespace().count() >= 3)
        .map(|s| format!("{s}."))
        .collect()
}

fn title_case(slug: &str) -> String {
    slug.split(['-', '_'])
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect::<String>(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn first_capture(pattern: &str, text: &str) -> Option<String> {
    Regex::new(pattern)
        .expect("valid regex")
        .captures(text)
        .and_then(|c| c.get(1))
        .map(|m| m.as_str().to_string())
}

fn matching(sentences: &[String], keywords: &[&str], limit: usize) -> Vec<String> {
    sentences
        .iter()
        .filter(|s| {
            let lower = s.to_lowercase();
            keywords.iter().any(|k| lower.contains(k))
        })
        .take(limit)
        .cloned()
        .collect()
}

fn or_unknown(v: Vec<String>) -> Vec<String> {
    if v.is_empty() {
        vec![UNKNOWN.to_string()]
    } else {
        v
    }
}

/// Builds a persona from a story with fixed keyword rules.
pub fn persona_from_story(story_id: &str, text: &str) -> Persona {
    let sents = sentences(text);
    let role = first_capture(
        r"(?i)\b((?:managing |operations |site |quarry |fleet |general |technical )?(?:owner|director|manager|ceo|founder|foreman|superintendent|supervisor))\b",
        text,
    )
    .map(|r| title_case(&r.to_lowercase().replace(' ', "-")))
    .unwrap_or_else(|| UNKNOWN.to_string());
    Persona {
        name: format!("{} representative", title_case(story_id)),
        role,
        number_of_employees: first_capture(r"(?i)(\d[\d,]*)\s+(?:employees|people|staff|workers)", text)
            .unwrap_or_else(|| UNKNOWN.to_string()),
        fleet_size: first_capture(
            r"(?i)(\d+\s+(?:machines|units|excavators|haulers|trucks|loaders|articulated haulers|wheel loaders))",
            text,
        )
        .unwrap_or_else(|| UNKNOWN.to_string()),
        short_story: sents.first().cloned().unwrap_or_else(|| UNKNOWN.to_string()),
        what_is_important: or_unknown(matching(
            &sents,
            &["important", "priority", "value", "reliab", "uptime", "safety"],
            3,
        )),
        challenges: or_unknown(matching(
            &sents,
            &["challenge", "problem", "difficult", "issue", "harsh", "tough"],
            3,
        )),
        expectations: or_unknown(matching(&sents, &["expect", "support", "service", "dealer"], 3)),
        buying_considerations: or_unknown(matching(
            &sents,
            &["cost", "price", "fuel", "financ", "invest", "productiv"],
            3,
        )),
        provenance: Provenance::Synthetic,
    }
    .normalized()
}

/// Reply for a persona-generation prompt: fenced persona JSON, preceded by
/// numbered reasoning notes when the system prompt asks for reasoning steps.
pub fn synthesize_persona_reply(messages: &[Message]) -> String {
    let user = messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User && m.content.contains(STORY_MARKER))
        .map(|m| m.content.as_str())
        .unwrap_or("");
    let Some(start) = user.find(STORY_MARKER) else {
        return "I could not find a success story in the request.".to_string();
    };
    let block = &user[start + STORY_MARKER.len()..];
    let (header, body) = block.split_once('\n').unwrap_or((block, ""));
    let story_id = header
        .trim_start_matches(':')
        .split_whitespace()
        .next()
        .unwrap_or("customer");
    let persona = persona_from_story(story_id, body);
    let json = format!("```json\n{}\n```", persona_to_json(&persona));

    let wants_reasoning = messages
        .iter()
        .any(|m| m.role == Role::System && m.content.contains(REASONING_HEADING));
    if !wants_reasoning {
        return json;
    }
    format!(
        "1. Key details: the story features {} in {} sentences.\n\
         2. Background: {}\n\
         3. Challenges, expectations and buying considerations were taken from the sentences that mention them.\n\
         4. Structured persona:\n{json}",
        title_case(story_id),
        sentences(body).len(),
        persona.short_story,
    )
}

/// Reply for a chat prompt: names every context source title, or declines
/// when the prompt carries no sources.
pub fn echo_context_reply(messages: &[Message]) -> String {
    let titles: Vec<String> = messages
        .iter()
        .filter(|m| m.role == Role::System)
        .flat_map(|m| m.content.lines())
        .filter_map(|l| l.strip_prefix(SOURCE_MARKER))
        .filter_map(|rest| rest.split_once(':').map(|(_, t)| t.trim().to_string()))
        .collect();
    if titles.is_empty() {
        INSUFFICIENT_INFORMATION.to_string()
    } else {
        format!("According to {}.", titles.join("; "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "Nordic Stone is a family quarry with 45 employees. \
        The site manager runs 12 machines on two benches. \
        Uptime is the top priority for the crew. \
        The biggest challenge is the harsh winter. \
        They expect fast dealer support. \
        Fuel cost drives every purchase.";

    #[test]
    fn rules_extract_attributes() {
        let p = persona_from_story("nordic-stone", TEXT);
        assert_eq!(p.name, "Nordic Stone representative");
        assert_eq!(p.role, "Site Manager");
        assert_eq!(p.number_of_employees, "45");
        assert_eq!(p.fleet_size, "12 machines");
        assert_eq!(p.challenges, vec!["The biggest challenge is the harsh winter."]);
        assert_eq!(p.buying_considerations, vec!["Fuel cost drives every purchase."]);
    }

    #[test]
    fn no_story_is_prose() {
        let reply = synthesize_persona_reply(&[Message::user("hello")]);
        assert!(!reply.contains('{'));
    }

    #[test]
    fn echo_lists_titles() {
        let sys = Message::system(format!(
            "rules\n{SOURCE_MARKER} 1: Quarry Owner\ntext\n{SOURCE_MARKER} 2: Mining Segment\n"
        ));
        assert_eq!(
            echo_context_reply(&[sys, Message::user("q")]),
            "According to Quarry Owner; Mining Segment."
        );
        assert_eq!(echo_context_reply(&[Message::user("q")]), INSUFFICIENT_INFORMATION);
    }
}
