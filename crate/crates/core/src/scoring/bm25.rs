//! Okapi BM25 over normalized passage terms.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::text::normalize_tokens;
use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.5, b: 0.75 }
    }
}

#[derive(Debug, Clone)]
struct PassageStats {
    tf: HashMap<String, u32>,
    len: usize,
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    passages: HashMap<String, PassageStats>,
    df: HashMap<String, usize>,
    avg_len: f64,
}

impl Bm25Index {
    /// Builds the index from already-normalized term lists.
    pub fn from_terms<I, S>(params: Bm25Params, passages: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<String>)>,
        S: Into<String>,
    {
        let mut stats = HashMap::new();
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut total_len = 0usize;
        for (id, terms) in passages {
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &terms {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for t in tf.keys() {
                *df.entry(t.clone()).or_default() += 1;
            }
            total_len += terms.len();
            stats.insert(id.into(), PassageStats { tf, len: terms.len() });
        }
        let avg_len = if stats.is_empty() {
            0.0
        } else {
            total_len as f64 / stats.len() as f64
        };
        Bm25Index {
            params,
            passages: stats,
            df,
            avg_len,
        }
    }

    /// Indexes every passage of the corpus.
    pub fn from_corpus(corpus: &Corpus, params: Bm25Params) -> Self {
        Self::from_terms(
            params,
            corpus.passages().map(|p| {
                (
                    p.id.clone(),
                    normalize_tokens(p.sentences.iter().flatten().map(String::as_str)),
                )
            }),
        )
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.passages.len() as f64;
        let df = self.doc_freq(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Sum over query terms (repeats count again) of idf times the saturated,
    /// length-normalized term frequency.
    pub fn score(&self, query_terms: &[String], passage_id: &str) -> Result<f64> {
        let stats = self
            .passages
            .get(passage_id)
            .ok_or_else(|| Error::UnknownPassage(passage_id.to_string()))?;
        let Bm25Params { k1, b } = self.params;
        let norm = k1 * (1.0 - b + b * stats.len as f64 / self.avg_len);
        let mut score = 0.0;
        for term in query_terms {
            let Some(&tf) = stats.tf.get(term) else {
                continue;
            };
            let tf = tf as f64;
            score += self.idf(term) * tf * (k1 + 1.0) / (tf + norm);
        }
        Ok(score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn terms(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn single_passage_hand_value() {
        let index = Bm25Index::from_terms(Bm25Params::default(), [("p", terms("alpha"))]);
        let score = index.score(&terms("alpha"), "p").unwrap();
        // idf = ln((1 - 1 + 0.5) / 1.5 + 1) = ln(4/3); tf part = 2.5 / 2.5
        assert!((score - (4.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((score - 0.28768).abs() < 1e-5);
    }

    #[test]
    fn absent_term_scores_zero() {
        let index = Bm25Index::from_terms(
            Bm25Params::default(),
            [("p1", terms("alpha beta")), ("p2", terms("gamma"))],
        );
        assert_eq!(index.score(&terms("delta"), "p1").unwrap(), 0.0);
        assert_eq!(index.score(&terms("gamma"), "p1").unwrap(), 0.0);
        assert!(index.score(&terms("gamma"), "p2").unwrap() > 0.0);
    }

    #[test]
    fn unknown_passage_is_an_error() {
        let index = Bm25Index::from_terms(Bm25Params::default(), [("p", terms("a"))]);
        assert!(matches!(index.score(&terms("a"), "q"), Err(Error::UnknownPassage(_))));
    }

    #[test]
    fn vanishing_b_removes_length_normalization() {
        let docs = [("short", terms("x y")), ("long", terms("x y z w v u t s"))];
        let tiny_b = Bm25Index::from_terms(Bm25Params { k1: 1.5, b: 1e-9 }, docs.clone());
        let q = terms("x");
        let short = tiny_b.score(&q, "short").unwrap();
        let long = tiny_b.score(&q, "long").unwrap();
        // with no length normalization both look like len == avglen
        let idf = tiny_b.idf("x");
        let at_avg = idf * 2.5 / (1.0 + 1.5);
        assert!((short - at_avg).abs() < 1e-6);
        assert!((long - at_avg).abs() < 1e-6);
    }
}
