/// Lowercased alphanumeric runs. No stemming and no stop-word list.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// First `max_chars` characters of `text`, and whether anything was cut.
pub fn truncate_chars(text: &str, max_chars: usize) -> (&str, bool) {
    match text.char_indices().nth(max_chars) {
        Some((byte_idx, _)) => (&text[..byte_idx], true),
        None => (text, false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation() {
        assert_eq!(
            tokenize("Haul-truck, EXCAVATOR!  l120h"),
            vec!["haul", "truck", "excavator", "l120h"]
        );
        assert!(tokenize(" -- ").is_empty());
    }

    #[test]
    fn truncation_is_char_based() {
        assert_eq!(truncate_chars("åäö", 2), ("åä", true));
        assert_eq!(truncate_chars("abc", 3), ("abc", false));
    }
}
