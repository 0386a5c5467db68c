//! Text normalization for lexical scoring: strip everything but ASCII letters
//! and digits, lowercase, drop stopwords, Porter-stem.

use std::collections::HashSet;
use std::sync::OnceLock;

/// Vendored English stopword list (337 words, one per line).
pub const STOPWORDS_TXT: &str = include_str!("stopwords.txt");

/// SHA-256 of [`STOPWORDS_TXT`]. Changing the list changes every BM25 score.
pub const STOPWORDS_SHA256: &str = "72a3c8342ea2697862ccc54548083a6b448c6addbea7456fabb2493b3d19362a";

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS_TXT.lines().filter(|l| !l.is_empty()).collect())
}

pub fn is_stopword(word: &str) -> bool {
    stopwords().contains(word)
}

/// Normalizes raw text into stemmed terms.
pub fn normalize_text(raw: &str) -> Vec<String> {
    let cleaned: String = raw
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|w| !is_stopword(w))
        .map(porter_stemmer::stem)
        .collect()
}

/// Normalizes pre-tokenized text (tokens are joined with spaces first).
pub fn normalize_tokens<'a, I: IntoIterator<Item = &'a str>>(tokens: I) -> Vec<String> {
    let joined: Vec<&str> = tokens.into_iter().collect();
    normalize_text(&joined.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    #[test]
    fn stopword_list_is_pinned() {
        let digest = hex::encode(Sha256::digest(STOPWORDS_TXT.as_bytes()));
        assert_eq!(digest, STOPWORDS_SHA256);
        assert_eq!(stopwords().len(), 337);
    }

    #[test]
    fn pipeline_examples() {
        assert_eq!(normalize_text("The Pink Floyd!"), ["pink", "floyd"]);
        assert!(normalize_text("").is_empty());
        assert_eq!(normalize_text("running RUNNING"), ["run", "run"]);
    }

    #[test]
    fn non_alphanumerics_split_words() {
        // "s" is not in the vendored list
        assert_eq!(normalize_text("rock-and-roll's"), ["rock", "roll", "s"]);
        assert_eq!(normalize_text("Café 1967"), ["caf", "1967"]);
        assert!(normalize_text("the of and ... !!").is_empty());
    }

    #[test]
    fn classic_porter_outputs() {
        assert_eq!(
            normalize_text("caresses ponies relational"),
            ["caress", "poni", "relat"]
        );
    }
}
