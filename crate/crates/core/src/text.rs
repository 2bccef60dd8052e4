//! Small text utilities shared by the estimators, parsers and templates.

use std::collections::BTreeSet;

/// Whitespace token count, the unit of every reported token metric.
pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

const NUMBER_WORDS: [&str; 21] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
    "twenty",
];

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "have", "i", "in", "is",
    "it", "its", "of", "on", "or", "s", "that", "the", "there", "this", "to", "was", "were",
    "with", "you", "your",
];

/// Lowercased alphanumeric tokens with number words folded to digits and
/// stopwords removed.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| {
            let lower = t.to_lowercase();
            match NUMBER_WORDS.iter().position(|w| *w == lower) {
                Some(n) => n.to_string(),
                None => lower,
            }
        })
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// "a" or "an" for the following noun phrase.
pub fn article(noun: &str) -> &'static str {
    match noun.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}
