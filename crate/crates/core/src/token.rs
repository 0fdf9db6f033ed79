//! Token normalization shared by the embedding lookup, tf-idf and statement parsing.

/// Lowercases and strips leading/trailing non-alphanumeric characters.
///
/// Interior punctuation survives, so `"don't"` and `"coca-cola"` stay intact.
/// Returns an empty string when nothing alphanumeric remains.
pub fn normalize(raw: &str) -> String {
    raw.trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Splits on whitespace and normalizes, dropping tokens that normalize to nothing.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize_all(text.split_whitespace())
}

pub fn normalize_all<I, S>(tokens: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    tokens
        .into_iter()
        .map(|t| normalize(t.as_ref()))
        .filter(|t| !t.is_empty())
        .collect()
}
