//! Multi-hop evidence retrieval for cross-document relation extraction.
//!
//! A corpus of passages with entity mentions is indexed once. For each
//! (head, tail) entity pair the engine builds a passage graph, mines
//! bridge-entity paths from head passages to tail passages, ranks them with a
//! lexical, dense, or random scorer, and packs each kept path into a
//! token-budgeted context for a downstream relation classifier.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod graph;
pub mod mining;
pub mod pipeline;
pub mod prep;
pub mod scoring;
pub mod train;

#[cfg(test)]
mod testutil;

pub use config::PipelineConfig;
pub use corpus::{ingest_corpus, Corpus, Document, Entity, IngestOptions, Mention, Passage};
pub use error::{Error, Result};
pub use graph::{build_graph, PassageGraph};
pub use mining::{mine_paths, mine_with_redemption, redeem, EvidencePath, MiningReport};
pub use pipeline::{run_retrieve, PairRequest, Retriever};
pub use prep::{prepare_input, validate_context, PreparedContext};
pub use scoring::{rank_paths, render_query, Query, ScoredPath, ScorerKind};
