use serde::{Deserialize, Serialize};

/// Default upper bound on a chunk body, in characters.
pub const DEFAULT_MAX_CHUNK_CHARS: usize = 4000;

/// Deepest heading level that opens a new chunk.
const SPLIT_LEVEL: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub source_id: String,
    pub heading_path: Vec<String>,
    /// The raw heading line that opened this chunk. Only the first piece of
    /// a section that had to be split carries it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading_line: Option<String>,
    pub body: String,
    pub order_index: usize,
}

impl Chunk {
    /// Title used when the chunk is indexed: the heading path joined with
    /// `" / "`, or the source id when the chunk precedes every heading.
    pub fn title(&self) -> String {
        if self.heading_path.is_empty() {
            self.source_id.clone()
        } else {
            self.heading_path.join(" / ")
        }
    }
}

struct Section {
    heading_line: Option<String>,
    path: Vec<String>,
    lines: Vec<String>,
}

fn heading_level(line: &str) -> Option<(usize, String)> {
    let hashes = line.bytes().take_while(|b| *b == b'#').count();
    if hashes == 0 || hashes > 6 {
        return None;
    }
    let rest = &line[hashes..];
    if !(rest.is_empty() || rest.starts_with(' ') || rest.starts_with('\t')) {
        return None;
    }
    let text = rest.trim().trim_end_matches('#').trim().to_string();
    Some((hashes, text))
}

/// Splits Markdown into topical chunks.
///
/// Headings of level 1 and 2 open a new chunk; deeper headings stay inside
/// the body. Headings inside fenced code blocks are ignored. Bodies longer
/// than `max_chunk_chars` are split on blank-line paragraph boundaries, then
/// on line boundaries; a single line longer than the cap is kept whole.
pub fn chunk_markdown(doc_text: &str, source_id: &str, max_chunk_chars: usize) -> Vec<Chunk> {
    let max_chunk_chars = max_chunk_chars.max(1);
    let mut sections: Vec<Section> = vec![Section {
        heading_line: None,
        path: Vec::new(),
        lines: Vec::new(),
    }];
    let mut stack: Vec<(usize, String)> = Vec::new();
    let mut in_fence = false;

    for line in doc_text.lines() {
        let trimmed = line.trim_start();
        if trimmed.starts_with("```") || trimmed.starts_with("~~~") {
            in_fence = !in_fence;
        }
        let heading = if in_fence { None } else { heading_level(line) };
        match heading {
            Some((level, text)) if level <= SPLIT_LEVEL => {
                while stack.last().is_some_and(|(l, _)| *l >= level) {
                    stack.pop();
                }
                stack.push((level, text));
                sections.push(Section {
                    heading_line: Some(line.to_string()),
                    path: stack.iter().map(|(_, t)| t.clone()).collect(),
                    lines: Vec::new(),
                });
            }
            _ => sections
                .last_mut()
                .expect("sections never empty")
                .lines
                .push(line.to_string()),
        }
    }

    let mut chunks = Vec::new();
    for (i, section) in sections.into_iter().enumerate() {
        let body = trim_blank_lines(&section.lines);
        if i == 0 && body.trim().is_empty() {
            continue;
        }
        let pieces = split_body(&body, max_chunk_chars);
        for (j, piece) in pieces.into_iter().enumerate() {
            let order_index = chunks.len();
            chunks.push(Chunk {
                chunk_id: format!("{source_id}#{order_index}"),
                source_id: source_id.to_string(),
                heading_path: section.path.clone(),
                heading_line: if j == 0 { section.heading_line.clone() } else { None },
                body: piece,
                order_index,
            });
        }
    }
    chunks
}

/// Rebuilds the document text from its chunks (heading lines included).
/// The result has exactly the non-blank lines of the chunked source.
pub fn reconstruct(chunks: &[Chunk]) -> String {
    let mut ordered: Vec<&Chunk> = chunks.iter().collect();
    ordered.sort_by_key(|c| c.order_index);
    let mut parts = Vec::new();
    for c in ordered {
        if let Some(h) = &c.heading_line {
            parts.push(h.clone());
        }
        if !c.body.is_empty() {
            parts.push(c.body.clone());
        }
    }
    parts.join("\n")
}

fn trim_blank_lines(lines: &[String]) -> String {
    let start = lines.iter().position(|l| !l.trim().is_empty());
    let end = lines.iter().rposition(|l| !l.trim().is_empty());
    match (start, end) {
        (Some(s), Some(e)) => lines[s..=e].join("\n"),
        _ => String::new(),
    }
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

fn split_body(body: &str, max: usize) -> Vec<String> {
    if char_len(body) <= max {
        return vec![body.to_string()];
    }
    let paragraphs = split_paragraphs(body);
    let mut units: Vec<String> = Vec::new();
    for p in paragraphs {
        if char_len(&p) <= max {
            units.push(p);
        } else {
            // one oversized paragraph: fall back to its lines
            units.extend(pack(p.lines().map(str::to_string).collect(), "\n", max));
        }
    }
    pack(units, "\n\n", max)
}

fn split_paragraphs(body: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in body.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n"));
    }
    out
}

/// Greedy packing of units into pieces no longer than `max` (unless a single
/// unit already exceeds it).
fn pack(units: Vec<String>, sep: &str, max: usize) -> Vec<String> {
    let sep_len = char_len(sep);
    let mut out = Vec::new();
    let mut current = String::new();
    let mut current_len = 0;
    for unit in units {
        let unit_len = char_len(&unit);
        if current_len > 0 && current_len + sep_len + unit_len > max {
            out.push(std::mem::take(&mut current));
            current_len = 0;
        }
        if current_len > 0 {
            current.push_str(sep);
            current_len += sep_len;
        }
        current.push_str(&unit);
        current_len += unit_len;
    }
    if current_len > 0 || out.is_empty() {
        out.push(current);
    }
    out
}
