//! Path scorers and ranking.

pub mod bm25;
pub mod dense;
pub mod embeddings;
pub mod query;
pub mod text;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use bm25::{Bm25Index, Bm25Params};
pub use embeddings::{EmbeddingService, EmbeddingTable, Provenance, ServiceConfig, VectorKind};
pub use query::{augment_query, augment_with_passage, render_query, Query};
pub use text::normalize_text;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::mining::EvidencePath;

/// Default number of ranked paths kept per query.
pub const DEFAULT_TOP_K: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Bm25,
    DensePair,
    DenseSequential,
    Random,
}

impl ScorerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::Bm25 => "bm25",
            ScorerKind::DensePair => "dense_pair",
            ScorerKind::DenseSequential => "dense_sequential",
            ScorerKind::Random => "random",
        }
    }

    pub fn needs_embeddings(self) -> bool {
        matches!(self, ScorerKind::DensePair | ScorerKind::DenseSequential)
    }
}

impl std::str::FromStr for ScorerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bm25" => Ok(ScorerKind::Bm25),
            "dense_pair" => Ok(ScorerKind::DensePair),
            "dense_sequential" => Ok(ScorerKind::DenseSequential),
            "random" => Ok(ScorerKind::Random),
            other => Err(format!(
                "unknown scorer `{other}` (expected bm25, dense_pair, dense_sequential, random)"
            )),
        }
    }
}

/// Scores one path for one query. Implementations are pure: the score depends
/// only on (query, path), never on call order.
pub trait PathScorer: Sync {
    fn id(&self) -> &str;
    fn score(&self, query: &Query, path: &EvidencePath) -> Result<f64>;
}

/// Mean BM25 score of the path's passages against the normalized query.
pub struct Bm25Scorer<'a> {
    pub index: &'a Bm25Index,
}

impl PathScorer for Bm25Scorer<'_> {
    fn id(&self) -> &str {
        ScorerKind::Bm25.as_str()
    }

    fn score(&self, query: &Query, path: &EvidencePath) -> Result<f64> {
        if path.passages.is_empty() {
            return Err(Error::InvalidQuery("cannot score an empty path".into()));
        }
        let terms = normalize_text(&query.text);
        let mut total = 0.0;
        for id in &path.passages {
            total += self.index.score(&terms, id)?;
        }
        Ok(total / path.passages.len() as f64)
    }
}

pub struct PairScorer<'a> {
    pub embeddings: &'a EmbeddingTable,
}

impl PathScorer for PairScorer<'_> {
    fn id(&self) -> &str {
        ScorerKind::DensePair.as_str()
    }

    fn score(&self, query: &Query, path: &EvidencePath) -> Result<f64> {
        dense::pair_score(query, path, self.embeddings)
    }
}

pub struct SequentialScorer<'a> {
    pub embeddings: &'a EmbeddingTable,
    pub corpus: &'a Corpus,
}

impl PathScorer for SequentialScorer<'_> {
    fn id(&self) -> &str {
        ScorerKind::DenseSequential.as_str()
    }

    fn score(&self, query: &Query, path: &EvidencePath) -> Result<f64> {
        dense::sequential_score(query, path, self.embeddings, self.corpus)
    }
}

/// Seeded random baseline. Each path gets a uniform draw in [0, 1) derived
/// from (seed, query, passage sequence), so ranking with it is a seeded
/// shuffle that does not depend on input order.
pub struct RandomScorer {
    pub seed: u64,
}

impl PathScorer for RandomScorer {
    fn id(&self) -> &str {
        ScorerKind::Random.as_str()
    }

    fn score(&self, query: &Query, path: &EvidencePath) -> Result<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(query.text.as_bytes());
        for p in &path.passages {
            h.update([0u8]);
            h.update(p.as_bytes());
        }
        let digest = h.finalize();
        let bits = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        Ok((bits >> 11) as f64 / (1u64 << 53) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPath {
    pub path: EvidencePath,
    pub score: f64,
    pub scorer_id: String,
}

/// One line of the ranked-output JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRecord {
    pub rank: usize,
    pub score: f64,
    pub passages: Vec<String>,
    pub bridges: Vec<String>,
    pub scorer: String,
}

impl ScoredPath {
    pub fn to_record(&self, rank: usize) -> RankedRecord {
        RankedRecord {
            rank,
            score: self.score,
            passages: self.path.passages.clone(),
            bridges: self.path.bridges.clone(),
            scorer: self.scorer_id.clone(),
        }
    }
}

/// Scores a path by mean plain-query similarity.
pub fn score_path_pair(query: &Query, path: &EvidencePath, emb: &EmbeddingTable) -> Result<ScoredPath> {
    Ok(ScoredPath {
        path: path.clone(),
        score: dense::pair_score(query, path, emb)?,
        scorer_id: ScorerKind::DensePair.as_str().to_string(),
    })
}

/// Scores a path hop by hop against queries augmented with the previous passage.
pub fn score_path_sequential(
    query: &Query,
    path: &EvidencePath,
    emb: &EmbeddingTable,
    corpus: &Corpus,
) -> Result<ScoredPath> {
    Ok(ScoredPath {
        path: path.clone(),
        score: dense::sequential_score(query, path, emb, corpus)?,
        scorer_id: ScorerKind::DenseSequential.as_str().to_string(),
    })
}

/// Ranking order: higher score first, then fewer passages, then passage ids
/// lexicographically, then bridges.
pub fn ranking_order(a: &ScoredPath, b: &ScoredPath) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.path.hop_count().cmp(&b.path.hop_count()))
        .then_with(|| a.path.passages.cmp(&b.path.passages))
        .then_with(|| a.path.bridges.cmp(&b.path.bridges))
}

/// Scores every path and keeps the best `top_k`.
pub fn rank_paths(
    paths: &[EvidencePath],
    query: &Query,
    scorer: &dyn PathScorer,
    top_k: usize,
) -> Result<Vec<ScoredPath>> {
    if top_k == 0 {
        return Err(Error::InvalidQuery("top_k must be at least 1".into()));
    }
    let mut scored = Vec::with_capacity(paths.len());
    for path in paths {
        let score = scorer.score(query, path)?;
        if !score.is_finite() {
            return Err(Error::InvalidQuery(format!(
                "non-finite score {score} for path {:?}",
                path.passages
            )));
        }
        scored.push(ScoredPath {
            path: path.clone(),
            score,
            scorer_id: scorer.id().to_string(),
        });
    }
    scored.sort_by(ranking_order);
    scored.truncate(top_k);
    Ok(scored)
}
