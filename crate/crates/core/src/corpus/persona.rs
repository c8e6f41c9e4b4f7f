use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::CorpusError;

/// Placeholder for an attribute the source material does not mention.
pub const UNKNOWN: &str = "unknown";

/// Attribute keys in their canonical serialization order.
pub const PERSONA_KEYS: [&str; 9] = [
    "name",
    "role",
    "number_of_employees",
    "fleet_size",
    "short_story",
    "what_is_important",
    "challenges",
    "expectations",
    "buying_considerations",
];

const LIST_KEYS: [&str; 4] = [
    "what_is_important",
    "challenges",
    "expectations",
    "buying_considerations",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Verified,
    Synthetic,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Verified => "verified",
            Provenance::Synthetic => "synthetic",
        })
    }
}

/// A customer persona: nine textual attributes plus a provenance tag.
///
/// Field order matches [`PERSONA_KEYS`]; serde keeps that order on output so
/// fixture files are byte-stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub role: String,
    pub number_of_employees: String,
    pub fleet_size: String,
    pub short_story: String,
    pub what_is_important: Vec<String>,
    pub challenges: Vec<String>,
    pub expectations: Vec<String>,
    pub buying_considerations: Vec<String>,
    pub provenance: Provenance,
}

impl Persona {
    /// Applies the sentinel rules: blank scalars become `"unknown"`, empty
    /// list entries are dropped and an empty list becomes `["unknown"]`.
    pub fn normalized(mut self) -> Self {
        for s in [
            &mut self.name,
            &mut self.role,
            &mut self.number_of_employees,
            &mut self.fleet_size,
            &mut self.short_story,
        ] {
            let t = s.trim();
            *s = if t.is_empty() { UNKNOWN.to_string() } else { t.to_string() };
        }
        for list in [
            &mut self.what_is_important,
            &mut self.challenges,
            &mut self.expectations,
            &mut self.buying_considerations,
        ] {
            list.retain(|s| !s.trim().is_empty());
            for s in list.iter_mut() {
                *s = s.trim().to_string();
            }
            if list.is_empty() {
                list.push(UNKNOWN.to_string());
            }
        }
        self
    }

    /// `"key: value"` lines in attribute order; list values joined by `"; "`.
    /// This is the text that gets embedded and keyword-indexed.
    pub fn to_index_text(&self) -> String {
        let scalar = [
            ("name", &self.name),
            ("role", &self.role),
            ("number_of_employees", &self.number_of_employees),
            ("fleet_size", &self.fleet_size),
            ("short_story", &self.short_story),
        ];
        let lists = [
            ("what_is_important", &self.what_is_important),
            ("challenges", &self.challenges),
            ("expectations", &self.expectations),
            ("buying_considerations", &self.buying_considerations),
        ];
        let mut out = String::new();
        for (k, v) in scalar {
            out.push_str(k);
            out.push_str(": ");
            out.push_str(v);
            out.push('\n');
        }
        for (k, v) in lists {
            out.push_str(k);
            out.push_str(": ");
            out.push_str(&v.join("; "));
            out.push('\n');
        }
        out
    }
}

pub fn persona_to_json(p: &Persona) -> String {
    serde_json::to_string_pretty(p).expect("persona serialization cannot fail")
}

/// Parses a persona file. `provenance` is optional and defaults to verified,
/// since hand-maintained persona files are the verified set.
pub fn parse_persona_json(text: &str) -> Result<Persona, CorpusError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| CorpusError::InvalidJson(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| CorpusError::InvalidJson("expected a JSON object".into()))?;
    let missing: Vec<String> = PERSONA_KEYS
        .iter()
        .filter(|k| !obj.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CorpusError::MissingAttribute(missing));
    }
    persona_from_object(obj, false, Provenance::Verified)
}

/// Builds a persona from a JSON object that is known to carry all nine keys.
///
/// With `coerce` set, a scalar where a list is expected becomes a one-element
/// list and a list where a scalar is expected is joined with `"; "`.
pub(crate) fn persona_from_object(
    obj: &Map<String, Value>,
    coerce: bool,
    default_provenance: Provenance,
) -> Result<Persona, CorpusError> {
    let scalar = |key: &str| -> Result<String, CorpusError> {
        match &obj[key] {
            Value::String(s) => Ok(s.clone()),
            Value::Null => Ok(String::new()),
            Value::Number(n) => Ok(n.to_string()),
            Value::Array(items) if coerce => Ok(items
                .iter()
                .map(value_to_text)
                .collect::<Vec<_>>()
                .join("; ")),
            _ => Err(CorpusError::TypeMismatch {
                key: key.to_string(),
                expected: "string",
            }),
        }
    };
    let list = |key: &str| -> Result<Vec<String>, CorpusError> {
        match &obj[key] {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    Value::Number(n) => Ok(n.to_string()),
                    _ if coerce => Ok(value_to_text(v)),
                    _ => Err(CorpusError::TypeMismatch {
                        key: key.to_string(),
                        expected: "array of strings",
                    }),
                })
                .collect(),
            Value::Null if coerce => Ok(Vec::new()),
            Value::String(s) if coerce => Ok(vec![s.clone()]),
            Value::Number(n) if coerce => Ok(vec![n.to_string()]),
            _ => Err(CorpusError::TypeMismatch {
                key: key.to_string(),
                expected: "array",
            }),
        }
    };
    let provenance = match obj.get("provenance") {
        None | Some(Value::Null) => default_provenance,
        Some(v) => serde_json::from_value(v.clone()).map_err(|_| CorpusError::TypeMismatch {
            key: "provenance".into(),
            expected: "\"verified\" or \"synthetic\"",
        })?,
    };
    debug_assert!(LIST_KEYS.iter().all(|k| PERSONA_KEYS.contains(k)));
    Ok(Persona {
        name: scalar("name")?,
        role: scalar("role")?,
        number_of_employees: scalar("number_of_employees")?,
        fleet_size: scalar("fleet_size")?,
        short_story: scalar("short_story")?,
        what_is_important: list("what_is_important")?,
        challenges: list("challenges")?,
        expectations: list("expectations")?,
        buying_considerations: list("buying_considerations")?,
        provenance,
    }
    .normalized())
}

fn value_to_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
