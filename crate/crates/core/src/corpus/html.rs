use scraper::{ElementRef, Html, Selector};

use super::CorpusError;

/// Selector for the article body container on the story pages.
pub const DEFAULT_CONTAINER_SELECTOR: &str = r#"div[class="newsArticle-2023"]"#;
pub const DEFAULT_PARAGRAPH_TAG: &str = "p";

/// Collapses every run of whitespace to one space and trims the ends.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Returns the cleaned text of every paragraph element inside the first
/// container matching `container_selector`, in document order.
///
/// Headings, captions and figures are skipped because only `paragraph_tag`
/// elements are visited. Paragraphs that are empty after whitespace collapse
/// are dropped.
pub fn extract_story_text(
    html: &str,
    container_selector: &str,
    paragraph_tag: &str,
) -> Result<Vec<String>, CorpusError> {
    let container_sel = Selector::parse(container_selector)
        .map_err(|e| CorpusError::InvalidSelector(format!("{container_selector}: {e}")))?;
    let para_sel = Selector::parse(paragraph_tag)
        .map_err(|e| CorpusError::InvalidSelector(format!("{paragraph_tag}: {e}")))?;

    let doc = Html::parse_document(html);
    let container = doc
        .select(&container_sel)
        .next()
        .ok_or_else(|| CorpusError::NoContainerFound(container_selector.to_string()))?;

    let paragraphs: Vec<String> = container
        .select(&para_sel)
        .map(paragraph_text)
        .filter(|t| !t.is_empty())
        .collect();
    if paragraphs.is_empty() {
        return Err(CorpusError::EmptyExtraction);
    }
    Ok(paragraphs)
}

fn paragraph_text(el: ElementRef<'_>) -> String {
    collapse_whitespace(&el.text().collect::<String>())
}
