//! Parser for the plain-text template files: `[name]` header lines split the
//! file into named sections.

use std::collections::BTreeMap;

/// Named sections in file order. Text before the first header is returned
/// under the empty name when it is not blank. Section bodies are trimmed.
pub fn parse_sections(text: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, Vec<&str>)> = vec![(String::new(), Vec::new())];
    for line in text.lines() {
        let t = line.trim();
        let header = t
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .filter(|name| {
                !name.is_empty()
                    && name
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            });
        match header {
            Some(name) => out.push((name.to_ascii_lowercase(), Vec::new())),
            None => out.last_mut().expect("non-empty").1.push(line),
        }
    }
    out.into_iter()
        .map(|(name, lines)| (name, lines.join("\n").trim().to_string()))
        .filter(|(name, body)| !(name.is_empty() && body.is_empty()))
        .collect()
}

pub fn section_map(text: &str) -> BTreeMap<String, String> {
    parse_sections(text).into_iter().collect()
}

/// Non-empty lines of a list section, with leading `-`, `*` or `N.` markers
/// removed.
pub fn list_lines(body: &str) -> Vec<String> {
    body.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let l = l.trim_start_matches(['-', '*']).trim_start();
            let digits = l.chars().take_while(|c| c.is_ascii_digit()).count();
            if digits > 0 && l[digits..].starts_with(['.', ')']) {
                l[digits + 1..].trim_start().to_string()
            } else {
                l.to_string()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_sections() {
        let text = "\n[Role]\nYou help.\n\n[tone]\nCalm\n[guidelines]\n- one\n2. two\n";
        let s = parse_sections(text);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], ("role".to_string(), "You help.".to_string()));
        assert_eq!(list_lines(&s[2].1), vec!["one", "two"]);
    }

    #[test]
    fn brackets_in_text_are_not_headers() {
        let s = section_map("[a]\nsee [the docs] here\n[not a header]\n");
        assert_eq!(s["a"], "see [the docs] here\n[not a header]");
    }
}
