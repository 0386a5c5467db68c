//! Pipeline configuration: one JSON file, overridden field by field from the
//! command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{BucketRule, DEFAULT_BUCKET_BOUNDARY};
use crate::graph::DEFAULT_DOC_CAP;
use crate::prep::DEFAULT_BUDGET;
use crate::scoring::{Bm25Params, ScorerKind, ServiceConfig, DEFAULT_TOP_K};

pub const DEFAULT_MAX_HOPS: usize = 4;

/// Where dense scorers get their vectors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSource {
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub service: Option<ServiceConfig>,
}

impl EmbeddingSource {
    pub fn is_configured(&self) -> bool {
        self.file.is_some() || self.service.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Persistent corpus store directory.
    pub store: Option<PathBuf>,
    /// Corpus JSONL files read by `ingest`.
    pub corpus: Vec<PathBuf>,
    /// Entity vocabulary JSONL read by `ingest`.
    pub entities: Option<PathBuf>,
    pub reject_unknown_entities: bool,
    pub max_hops: usize,
    pub top_k: usize,
    pub budget: usize,
    pub doc_cap: usize,
    pub scorer: ScorerKind,
    pub bm25: Bm25Params,
    pub embeddings: EmbeddingSource,
    pub bucket_rule: BucketRule,
    pub bucket_boundary: usize,
    pub seed: u64,
    /// Worker threads for pair-level parallelism; 0 picks the core count.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            store: None,
            corpus: Vec::new(),
            entities: None,
            reject_unknown_entities: false,
            max_hops: DEFAULT_MAX_HOPS,
            top_k: DEFAULT_TOP_K,
            budget: DEFAULT_BUDGET,
            doc_cap: DEFAULT_DOC_CAP,
            scorer: ScorerKind::Bm25,
            bm25: Bm25Params::default(),
            embeddings: EmbeddingSource::default(),
            bucket_rule: BucketRule::default(),
            bucket_boundary: DEFAULT_BUCKET_BOUNDARY,
            seed: 0,
            workers: 0,
        }
    }
}

impl PipelineConfig {
    /// Reads a config file. Relative paths inside it are resolved against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut config: PipelineConfig = serde_path_to_error::deserialize(de)
            .map_err(|err| Error::Config(vec![format!("{}: {}: {}", path.display(), err.path(), err.inner())]))?;
        if let Some(base) = path.parent() {
            config.resolve_relative(base);
        }
        Ok(config)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.store.as_mut() {
            fix(p);
        }
        self.corpus.iter_mut().for_each(fix);
        if let Some(p) = self.entities.as_mut() {
            fix(p);
        }
        if let Some(p) = self.embeddings.file.as_mut() {
            fix(p);
        }
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        self.validate_with_source(self.embeddings.is_configured())
    }

    /// As [`validate`](Self::validate), with the embedding source supplied
    /// by the caller rather than named in the configuration.
    pub fn validate_with_source(&self, has_embedding_source: bool) -> Result<()> {
        let mut problems = Vec::new();
        if self.max_hops == 0 {
            problems.push("max_hops must be at least 1".to_string());
        }
        if self.top_k == 0 {
            problems.push("top_k must be at least 1".to_string());
        }
        if self.budget == 0 {
            problems.push("budget must be at least 1".to_string());
        }
        if self.doc_cap == 0 {
            problems.push("doc_cap must be at least 1".to_string());
        }
        if self.bucket_boundary == 0 {
            problems.push("bucket_boundary must be at least 1".to_string());
        }
        if !(self.bm25.k1.is_finite() && self.bm25.k1 >= 0.0) {
            problems.push(format!("bm25.k1 must be a non-negative number, got {}", self.bm25.k1));
        }
        if !(self.bm25.b.is_finite() && (0.0..=1.0).contains(&self.bm25.b)) {
            problems.push(format!("bm25.b must lie in [0, 1], got {}", self.bm25.b));
        }
        if self.scorer.needs_embeddings() && !has_embedding_source {
            problems.push(format!(
                "scorer {} needs an embedding source (embeddings.file or embeddings.service)",
                self.scorer.as_str()
            ));
        }
        if self.embeddings.file.is_some() && self.embeddings.service.is_some() {
            problems.push("embeddings.file and embeddings.service are mutually exclusive".to_string());
        }
        if let Some(service) = &self.embeddings.service {
            if service.endpoint.trim().is_empty() {
                problems.push("embeddings.service.endpoint is empty".to_string());
            }
            if service.max_attempts == 0 {
                problems.push("embeddings.service.max_attempts must be at least 1".to_string());
            }
            if service.batch_size == 0 {
                problems.push("embeddings.service.batch_size must be at least 1".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn store_dir(&self) -> Result<&Path> {
        self.store
            .as_deref()
            .ok_or_else(|| Error::Config(vec!["no store directory configured (store / --store)".into()]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = PipelineConfig::default();
        assert_eq!((c.max_hops, c.top_k, c.budget, c.doc_cap), (4, 16, 512, 50));
        c.validate().unwrap();
    }

    #[test]
    fn all_problems_reported_together() {
        let c = PipelineConfig {
            max_hops: 0,
            top_k: 0,
            scorer: ScorerKind::DenseSequential,
            ..PipelineConfig::default()
        };
        match c.validate() {
            Err(Error::Config(problems)) => {
                assert_eq!(problems.len(), 3, "{problems:?}");
                assert!(problems[2].contains("dense_sequential"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn file_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"store": "store", "scorer": "dense_pair", "embeddings": {"file": "/abs/emb.jsonl"}, "max_hops": 3}"#,
        )
        .unwrap();
        let c = PipelineConfig::from_file(&path).unwrap();
        assert_eq!(c.store.as_deref(), Some(dir.path().join("store").as_path()));
        assert_eq!(c.embeddings.file.as_deref(), Some(Path::new("/abs/emb.jsonl")));
        assert_eq!(c.max_hops, 3);
        assert_eq!(c.top_k, 16);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"max_hop": 3}"#).unwrap();
        assert!(matches!(PipelineConfig::from_file(&path), Err(Error::Config(_))));
    }
}
