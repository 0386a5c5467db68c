//! Inner-product path scoring over precomputed embeddings.

use super::embeddings::EmbeddingTable;
use super::query::{augment_with_passage, Query};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::mining::EvidencePath;

/// Inner product, accumulated in f64.
pub fn sim(query_vec: &[f32], passage_vec: &[f32]) -> Result<f64> {
    if query_vec.len() != passage_vec.len() {
        return Err(Error::DimensionMismatch {
            expected: query_vec.len(),
            actual: passage_vec.len(),
        });
    }
    Ok(query_vec
        .iter()
        .zip(passage_vec)
        .map(|(&a, &b)| a as f64 * b as f64)
        .sum())
}

fn passage_vec<'a>(emb: &'a EmbeddingTable, id: &str) -> Result<&'a [f32]> {
    emb.passage_vector(id)
        .ok_or_else(|| Error::MissingPassageVector(id.to_string()))
}

fn plain_query_vec<'a>(emb: &'a EmbeddingTable, query: &Query) -> Result<&'a [f32]> {
    emb.query_vector(&query.text)
        .ok_or_else(|| Error::MissingQueryVector(query.text.clone()))
}

/// Mean similarity between the plain query and every passage of the path.
pub fn pair_score(query: &Query, path: &EvidencePath, emb: &EmbeddingTable) -> Result<f64> {
    if path.passages.is_empty() {
        return Err(Error::InvalidQuery("cannot score an empty path".into()));
    }
    let q = plain_query_vec(emb, query)?;
    let mut total = 0.0;
    for id in &path.passages {
        total += sim(q, passage_vec(emb, id)?)?;
    }
    Ok(total / path.passages.len() as f64)
}

/// Mean of sim(q, p1) and sim(q ⊕ p(i-1), p(i)) for the remaining hops, where
/// q ⊕ p is the query text followed by the previous passage's text.
pub fn sequential_score(query: &Query, path: &EvidencePath, emb: &EmbeddingTable, corpus: &Corpus) -> Result<f64> {
    let Some(first) = path.passages.first() else {
        return Err(Error::InvalidQuery("cannot score an empty path".into()));
    };
    let mut total = sim(plain_query_vec(emb, query)?, passage_vec(emb, first)?)?;
    for pair in path.passages.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let prev_passage = corpus
            .passage(prev)
            .ok_or_else(|| Error::UnknownPassage(prev.clone()))?;
        let key = augment_with_passage(&query.text, prev_passage);
        let q = emb.query_vector(&key).ok_or_else(|| Error::MissingAugmentedVector {
            query: query.text.clone(),
            passage: prev.clone(),
        })?;
        total += sim(q, passage_vec(emb, next)?)?;
    }
    Ok(total / path.passages.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Entity;
    use crate::scoring::embeddings::{Provenance, VectorKind};
    use crate::scoring::query::render_query;
    use crate::testutil::corpus_from;

    fn path(ids: &[&str]) -> EvidencePath {
        EvidencePath {
            passages: ids.iter().map(|s| s.to_string()).collect(),
            bridges: vec![],
            doc_span: vec![],
            redemption: false,
        }
    }

    fn query() -> Query {
        let e = |n: &str| Entity {
            id: n.into(),
            canonical_name: n.into(),
        };
        render_query(&e("h"), &e("t")).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        assert_eq!(sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(sim(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert!(matches!(sim(&[1.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn pair_score_is_mean_similarity() {
        let q = query();
        let mut emb = EmbeddingTable::new(1, Provenance::File);
        emb.insert(VectorKind::Query, q.text.clone(), vec![1.0]).unwrap();
        for (id, v) in [("a", 0.2f32), ("b", 0.4), ("c", 0.6)] {
            emb.insert(VectorKind::Passage, id, vec![v]).unwrap();
        }
        let s = pair_score(&q, &path(&["a", "b", "c"]), &emb).unwrap();
        assert!((s - 0.4).abs() < 1e-7);
        let single = pair_score(&q, &path(&["b"]), &emb).unwrap();
        assert_eq!(single, 0.4f32 as f64);
    }

    #[test]
    fn missing_vectors_are_named() {
        let q = query();
        let mut emb = EmbeddingTable::new(1, Provenance::File);
        emb.insert(VectorKind::Query, q.text.clone(), vec![1.0]).unwrap();
        emb.insert(VectorKind::Passage, "a", vec![1.0]).unwrap();
        match pair_score(&q, &path(&["a", "zz"]), &emb) {
            Err(Error::MissingPassageVector(id)) => assert_eq!(id, "zz"),
            other => panic!("unexpected {other:?}"),
        }
        emb.insert(VectorKind::Passage, "zz", vec![1.0]).unwrap();
        let corpus = corpus_from(&[("D", &[("a", &["h"]), ("zz", &["t"])])]);
        match sequential_score(&q, &path(&["a", "zz"]), &emb, &corpus) {
            Err(Error::MissingAugmentedVector { passage, .. }) => assert_eq!(passage, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
