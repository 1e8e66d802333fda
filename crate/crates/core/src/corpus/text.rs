use unicode_normalization::UnicodeNormalization;

/// NFC-normalizes `text`, drops control characters and collapses whitespace.
///
/// Case is preserved: abbreviations such as `WAF` and `VCN` are significant.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    // Controls go before composition so removal cannot expose new pairs.
    let visible = text
        .chars()
        .filter(|&c| c.is_whitespace() || !(c.is_control() || is_format_char(c)));
    for c in visible.nfc() {
        if c.is_whitespace() {
            pending_space = true;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        }
    }
    out
}

// zero-width and BOM characters that survive `is_control`
fn is_format_char(c: char) -> bool {
    matches!(c, '\u{200b}' | '\u{200c}' | '\u{200d}' | '\u{2060}' | '\u{feff}')
}

/// Splits on whitespace and strips non-alphanumeric characters from token
/// edges. Empty tokens are dropped.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Number of tokens `tokenize` produces for `text`.
pub fn word_count(text: &str) -> usize {
    tokenize(text).len()
}

/// Keeps the first `max_words` whitespace-separated words of `text`.
pub fn truncate_words(text: &str, max_words: usize) -> String {
    text.split_whitespace().take(max_words).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn collapses_whitespace() {
        assert_eq!(normalize_text("  a\t b "), "a b");
    }

    #[test]
    fn preserves_case() {
        assert_eq!(normalize_text("VCN"), "VCN");
    }

    #[test]
    fn removes_control_characters() {
        assert_eq!(normalize_text("a\u{0000}b"), "ab");
        assert_eq!(normalize_text("a\u{0007}\u{feff}b\u{7f}"), "ab");
    }

    #[test]
    fn composes_to_nfc() {
        assert_eq!(normalize_text("e\u{0301}"), "\u{e9}");
    }

    #[test]
    fn tokenize_whitespace_split() {
        assert_eq!(
            tokenize("upgrade my mount targets"),
            vec!["upgrade", "my", "mount", "targets"]
        );
    }

    #[test]
    fn tokenize_strips_edge_punctuation() {
        assert_eq!(tokenize("file-systems."), vec!["file-systems"]);
        assert_eq!(tokenize("(VCN), -- ok!"), vec!["VCN", "ok"]);
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn truncation_keeps_prefix() {
        assert_eq!(truncate_words("a b c d", 2), "a b");
        assert_eq!(truncate_words("a b", 5), "a b");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,64}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once.clone());
            prop_assert_eq!(once.trim(), once.as_str());
            prop_assert!(!once.contains("  "));
        }
    }
}
