use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Separator placed between paragraphs in [`SuccessStory::full_text`].
pub const PARAGRAPH_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Quarrying,
    Mining,
    Aggregates,
}

impl FromStr for Segment {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "quarrying" => Ok(Segment::Quarrying),
            "mining" => Ok(Segment::Mining),
            "aggregates" => Ok(Segment::Aggregates),
            other => Err(CorpusError::UnknownSegment(other.to_string())),
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Segment::Quarrying => "quarrying",
            Segment::Mining => "mining",
            Segment::Aggregates => "aggregates",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessStory {
    pub story_id: String,
    pub source_url: String,
    pub segment: Segment,
    pub paragraphs: Vec<String>,
    pub full_text: String,
}

impl SuccessStory {
    pub fn new(
        story_id: impl Into<String>,
        source_url: impl Into<String>,
        segment: Segment,
        paragraphs: Vec<String>,
    ) -> Result<Self, CorpusError> {
        if paragraphs.is_empty() {
            return Err(CorpusError::EmptyExtraction);
        }
        let full_text = paragraphs.join(PARAGRAPH_SEPARATOR);
        Ok(Self {
            story_id: story_id.into(),
            source_url: source_url.into(),
            segment,
            paragraphs,
            full_text,
        })
    }

    /// Appends a manual correction. Each blank-line separated block of the
    /// patch becomes one more paragraph.
    pub fn apply_patch(&mut self, patch: &str) {
        let extra = patch
            .split("\n\n")
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::to_string);
        self.paragraphs.extend(extra);
        self.full_text = self.paragraphs.join(PARAGRAPH_SEPARATOR);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoryUrl {
    pub story_id: String,
    pub url: String,
    pub segment: Segment,
}

/// Last non-empty path segment of a URL, lowercased, with anything other than
/// ASCII alphanumerics collapsed to `-`. A trailing `.html` is dropped.
pub fn slug_from_url(url: &str) -> String {
    let without_query = url.split(['?', '#']).next().unwrap_or("");
    let last = without_query
        .trim_end_matches('/')
        .rsplit('/')
        .next()
        .unwrap_or("");
    let last = last
        .strip_suffix(".html")
        .or_else(|| last.strip_suffix(".htm"))
        .unwrap_or(last);
    let mut slug = String::with_capacity(last.len());
    for ch in last.chars() {
        if ch.is_ascii_alphanumeric() {
            slug.push(ch.to_ascii_lowercase());
        } else if !slug.ends_with('-') {
            slug.push('-');
        }
    }
    slug.trim_matches('-').to_string()
}

/// Reads a `story_id,url,segment` CSV. An empty `story_id` cell is filled in
/// from the URL slug.
pub fn load_story_urls(path: &Path) -> Result<Vec<StoryUrl>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_story_urls(&text)
}

pub fn parse_story_urls(text: &str) -> Result<Vec<StoryUrl>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Csv(e.to_string()))?
        .clone();
    let expected = ["story_id", "url", "segment"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(CorpusError::BadHeader {
            expected: expected.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CorpusError::Csv(e.to_string()))?;
        let line = i + 2;
        if record.len() != 3 {
            return Err(CorpusError::MalformedRow {
                line,
                reason: format!("expected 3 columns, found {}", record.len()),
            });
        }
        let url = record[1].to_string();
        let story_id = if record[0].is_empty() {
            slug_from_url(&url)
        } else {
            record[0].to_string()
        };
        if story_id.is_empty() {
            return Err(CorpusError::MalformedRow {
                line,
                reason: "empty story_id".into(),
            });
        }
        let segment: Segment = record[2].parse()?;
        if !seen.insert(story_id.clone()) {
            return Err(CorpusError::DuplicateId(story_id));
        }
        out.push(StoryUrl {
            story_id,
            url,
            segment,
        });
    }
    Ok(out)
}
