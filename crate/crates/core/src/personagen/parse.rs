use serde_json::{Map, Value};

use super::PersonaGenError;
use crate::corpus::{persona_from_object, Persona, Provenance, PERSONA_KEYS};

/// Top-level JSON objects found anywhere in `raw`, in order of appearance.
/// Braces that do not start a well-formed object are skipped.
fn json_objects(raw: &str) -> Vec<Map<String, Value>> {
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some(offset) = raw[pos..].find('{') {
        let start = pos + offset;
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(obj))) => {
                out.push(obj);
                pos = start + stream.byte_offset();
            }
            _ => pos = start + 1,
        }
    }
    out
}

/// Extracts a persona from model output.
///
/// Accepts bare JSON, JSON inside a Markdown fence, and JSON preceded by
/// reasoning prose. The last well-formed object wins; an object that wraps
/// the persona under a single key (e.g. `{"persona": {...}}`) is unwrapped.
/// A scalar where a list is expected becomes a one-element list.
pub fn parse_persona_output(raw: &str) -> Result<Persona, PersonaGenError> {
    if raw.trim().is_empty() {
        return Err(PersonaGenError::NoJsonFound);
    }
    let mut obj = json_objects(raw).pop().ok_or(PersonaGenError::NoJsonFound)?;
    if !PERSONA_KEYS.iter().any(|k| obj.contains_key(*k)) && obj.len() == 1 {
        if let Some(Value::Object(inner)) = obj.values().next() {
            obj = inner.clone();
        }
    }
    let missing: Vec<String> = PERSONA_KEYS
        .iter()
        .filter(|k| !obj.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(PersonaGenError::MissingAttribute(missing));
    }
    let mut persona = persona_from_object(&obj, true, Provenance::Synthetic)
        .map_err(|e| PersonaGenError::Template(e.to_string()))?;
    persona.provenance = Provenance::Synthetic;
    Ok(persona)
}
