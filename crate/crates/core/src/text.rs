//! Text normalization shared by similarity, blocking, NERD and the live index.

use unicode_normalization::UnicodeNormalization;

/// NFC, lowercase, whitespace collapsed and trimmed.
pub fn normalize(s: &str) -> String {
    let lowered: String = s.nfc().flat_map(char::to_lowercase).collect();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Like [`normalize`] but strips diacritics and anything that is not
/// alphanumeric, so "Beyoncé" and "beyonce!" produce the same key.
pub fn fold(s: &str) -> String {
    let stripped: String =
        s.nfd().filter(|c| !is_combining_mark(*c)).map(|c| if c.is_alphanumeric() { c } else { ' ' }).collect();
    normalize(&stripped)
}

fn is_combining_mark(c: char) -> bool {
    matches!(c as u32, 0x0300..=0x036F | 0x1AB0..=0x1AFF | 0x1DC0..=0x1DFF | 0x20D0..=0x20FF | 0xFE20..=0xFE2F)
}

/// A folded token with its byte span in the original text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits on non-alphanumeric characters; tokens are folded.
pub fn tokenize(s: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        if c.is_alphanumeric() {
            start.get_or_insert(i);
        } else if let Some(st) = start.take() {
            out.push(Token { text: fold(&s[st..i]), start: st, end: i });
        }
    }
    if let Some(st) = start {
        out.push(Token { text: fold(&s[st..]), start: st, end: s.len() });
    }
    out.retain(|t| !t.text.is_empty());
    out
}

/// Folded tokens only.
pub fn words(s: &str) -> Vec<String> {
    tokenize(s).into_iter().map(|t| t.text).collect()
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "have", "he", "her", "his", "i",
    "in", "is", "it", "its", "of", "on", "or", "she", "that", "the", "their", "they", "this", "to", "was", "we",
    "were", "with", "you",
];

pub fn is_stopword(w: &str) -> bool {
    STOPWORDS.binary_search(&w).is_ok()
}
