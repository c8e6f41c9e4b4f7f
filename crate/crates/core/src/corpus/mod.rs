//! Ingestion of success stories, persona files and segment knowledge.

mod chunk;
mod html;
mod persona;
mod story;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use chunk::{chunk_markdown, reconstruct, Chunk, DEFAULT_MAX_CHUNK_CHARS};
pub use html::{
    collapse_whitespace, extract_story_text, DEFAULT_CONTAINER_SELECTOR, DEFAULT_PARAGRAPH_TAG,
};
pub(crate) use persona::persona_from_object;
pub use persona::{
    parse_persona_json, persona_to_json, Persona, Provenance, PERSONA_KEYS, UNKNOWN,
};
pub use story::{
    load_story_urls, parse_story_urls, slug_from_url, Segment, StoryUrl, SuccessStory,
    PARAGRAPH_SEPARATOR,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no element matches container selector `{0}`")]
    NoContainerFound(String),
    #[error("container holds no paragraph text")]
    EmptyExtraction,
    #[error("invalid selector {0}")]
    InvalidSelector(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate story id `{0}`")]
    DuplicateId(String),
    #[error("bad CSV header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("unknown segment `{0}`")]
    UnknownSegment(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("invalid persona JSON: {0}")]
    InvalidJson(String),
    #[error("missing persona attribute(s): {}", .0.join(", "))]
    MissingAttribute(Vec<String>),
    #[error("attribute `{key}` must be {expected}")]
    TypeMismatch { key: String, expected: &'static str },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, CorpusError::Io { .. })
    }
}

/// A story page that failed to ingest, with the reason.
#[derive(Debug)]
pub struct IngestFailure {
    pub story_id: String,
    pub error: CorpusError,
}

/// Builds stories from local HTML files named `<story_id>.html` under
/// `html_dir`. When `patch_dir` is given, `<story_id>.patch.txt` files found
/// there are appended after extraction.
pub fn ingest_stories(
    urls: &[StoryUrl],
    html_dir: &Path,
    patch_dir: Option<&Path>,
    container_selector: &str,
    paragraph_tag: &str,
) -> (Vec<SuccessStory>, Vec<IngestFailure>) {
    let mut stories = Vec::new();
    let mut failures = Vec::new();
    for entry in urls {
        let result = (|| {
            let path = html_dir.join(format!("{}.html", entry.story_id));
            let html = std::fs::read_to_string(&path).map_err(|e| CorpusError::io(&path, e))?;
            let paragraphs = extract_story_text(&html, container_selector, paragraph_tag)?;
            let mut story =
                SuccessStory::new(&entry.story_id, &entry.url, entry.segment, paragraphs)?;
            if let Some(dir) = patch_dir {
                let patch_path = dir.join(format!("{}.patch.txt", entry.story_id));
                if patch_path.exists() {
                    let patch = std::fs::read_to_string(&patch_path)
                        .map_err(|e| CorpusError::io(&patch_path, e))?;
                    story.apply_patch(&patch);
                }
            }
            Ok(story)
        })();
        match result {
            Ok(s) => stories.push(s),
            Err(error) => failures.push(IngestFailure {
                story_id: entry.story_id.clone(),
                error,
            }),
        }
    }
    (stories, failures)
}

/// Files in `dir` with the given extension, sorted by file name.
pub fn list_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>, CorpusError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CorpusError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == extension))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads every `*.json` persona in `dir`, returning `(file stem, persona)`.
pub fn load_personas_dir(dir: &Path) -> Result<Vec<(String, Persona)>, CorpusError> {
    list_files(dir, "json")?
        .into_iter()
        .map(|path| {
            let text = std::fs::read_to_string(&path).map_err(|e| CorpusError::io(&path, e))?;
            let persona = parse_persona_json(&text)?;
            Ok((file_stem(&path), persona))
        })
        .collect()
}

/// Loads and chunks every `*.md` file in `dir`; the file stem is the source id.
pub fn load_markdown_dir(dir: &Path, max_chunk_chars: usize) -> Result<Vec<Chunk>, CorpusError> {
    let mut chunks = Vec::new();
    for path in list_files(dir, "md")? {
        let text = std::fs::read_to_string(&path).map_err(|e| CorpusError::io(&path, e))?;
        chunks.extend(chunk_markdown(&text, &file_stem(&path), max_chunk_chars));
    }
    Ok(chunks)
}

pub(crate) fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
