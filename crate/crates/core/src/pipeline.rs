//! End-to-end retrieval per entity pair and the on-disk run layout.
//!
//! A retrieve run writes, under its output directory:
//!
//! - `ranked/<key>.jsonl`: ranked paths, one JSON object per line
//! - `contexts/<key>.jsonl`: the prepared context of each ranked path, same order
//! - `summary/<key>.json`: graph and mining statistics for the pair
//! - `pairs.jsonl`: one line per input pair, in input order, with its key and status
//!
//! `<key>` is the zero-padded position of the pair in the input file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::eval::{bucketed_report, EvidenceRecord, GoldEvidence, PairResult, RecallReport};
use crate::graph::build_graph;
use crate::mining::{mine_with_redemption, MiningReport, Redemption};
use crate::prep::{inspect_context, prepare_input, PreparedContext};
use crate::scoring::{
    augment_with_passage, rank_paths, render_query, Bm25Index, Bm25Scorer, EmbeddingService, EmbeddingTable,
    PairScorer, Query, RandomScorer, RankedRecord, ScoredPath, ScorerKind, SequentialScorer,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRequest {
    pub head: String,
    pub tail: String,
}

pub fn read_pairs_jsonl<R: BufRead>(reader: R) -> Result<Vec<PairRequest>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("reading pairs", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(&line);
        out.push(serde_path_to_error::deserialize(de).map_err(|err| Error::Malformed {
            line: i + 1,
            path: err.path().to_string(),
            message: err.into_inner().to_string(),
        })?);
    }
    Ok(out)
}

pub enum EmbeddingProvider {
    Table(EmbeddingTable),
    Service(EmbeddingService),
}

/// Everything produced for one pair.
#[derive(Debug, Clone)]
pub struct PairRetrieval {
    pub query: Query,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub mining: MiningReport,
    pub ranked: Vec<ScoredPath>,
    pub contexts: Vec<PreparedContext>,
}

/// Per-pair metadata written next to the ranked output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub head: String,
    pub tail: String,
    pub query: String,
    pub scorer: String,
    pub seed: u64,
    pub max_hops: usize,
    pub top_k: usize,
    pub budget: usize,
    pub doc_cap: usize,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub nodes_visited: u64,
    pub paths_mined: usize,
    pub failed: bool,
    pub redemption_used: Redemption,
    pub ranked: usize,
    /// Ranks of kept paths touching more than two documents.
    pub extra_document_paths: Vec<usize>,
    /// Ranks of kept paths whose context had to be cut mid-sentence.
    pub truncated_contexts: Vec<usize>,
    /// Ranks of kept paths whose context lacks a head or tail mention.
    pub contexts_missing_query_entity: Vec<usize>,
    /// Per rank: bridge entities still mentioned in the context / bridges.
    pub bridge_coverage: Vec<(usize, usize)>,
}

pub struct Retriever<'a> {
    corpus: &'a Corpus,
    config: PipelineConfig,
    bm25: Option<Bm25Index>,
    embeddings: Option<EmbeddingProvider>,
}

impl<'a> Retriever<'a> {
    /// Validates the configuration and loads the configured embedding source.
    pub fn new(corpus: &'a Corpus, config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        let embeddings = if let Some(path) = &config.embeddings.file {
            Some(EmbeddingProvider::Table(EmbeddingTable::load(path)?))
        } else {
            config
                .embeddings
                .service
                .clone()
                .map(|s| EmbeddingProvider::Service(EmbeddingService::new(s)))
        };
        Self::with_embeddings(corpus, config, embeddings)
    }

    pub fn with_embeddings(
        corpus: &'a Corpus,
        config: &PipelineConfig,
        embeddings: Option<EmbeddingProvider>,
    ) -> Result<Self> {
        config.validate_with_source(embeddings.is_some())?;
        let config = config.clone();
        let bm25 = (config.scorer == ScorerKind::Bm25).then(|| Bm25Index::from_corpus(corpus, config.bm25));
        Ok(Retriever {
            corpus,
            config,
            bm25,
            embeddings,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn retrieve(&self, pair: &PairRequest) -> Result<PairRetrieval> {
        let c = &self.config;
        let head = self
            .corpus
            .entity(&pair.head)
            .ok_or_else(|| Error::UnknownEntity(pair.head.clone()))?;
        let tail = self
            .corpus
            .entity(&pair.tail)
            .ok_or_else(|| Error::UnknownEntity(pair.tail.clone()))?;
        let query = render_query(head, tail)?;
        let graph = build_graph(self.corpus, &pair.head, &pair.tail, c.doc_cap)?;
        let mining = mine_with_redemption(&graph, c.max_hops);
        let ranked = self.rank(&query, &mining)?;
        let contexts = ranked
            .iter()
            .map(|s| prepare_input(&s.path, self.corpus, c.budget, &pair.head, &pair.tail))
            .collect::<Result<Vec<_>>>()?;
        Ok(PairRetrieval {
            query,
            graph_nodes: graph.node_count(),
            graph_edges: graph.edge_count(),
            mining,
            ranked,
            contexts,
        })
    }

    fn rank(&self, query: &Query, mining: &MiningReport) -> Result<Vec<ScoredPath>> {
        let c = &self.config;
        let paths = &mining.paths;
        match c.scorer {
            ScorerKind::Bm25 => {
                let index = self.bm25.as_ref().expect("bm25 index built for bm25 scorer");
                rank_paths(paths, query, &Bm25Scorer { index }, c.top_k)
            }
            ScorerKind::Random => rank_paths(paths, query, &RandomScorer { seed: c.seed }, c.top_k),
            ScorerKind::DensePair | ScorerKind::DenseSequential => {
                let fetched;
                let table = match self.embeddings.as_ref().expect("validated") {
                    EmbeddingProvider::Table(t) => t,
                    EmbeddingProvider::Service(service) => {
                        fetched = self.fetch_vectors(service, query, mining)?;
                        &fetched
                    }
                };
                if c.scorer == ScorerKind::DensePair {
                    rank_paths(paths, query, &PairScorer { embeddings: table }, c.top_k)
                } else {
                    let scorer = SequentialScorer {
                        embeddings: table,
                        corpus: self.corpus,
                    };
                    rank_paths(paths, query, &scorer, c.top_k)
                }
            }
        }
    }

    /// Requests exactly the vectors needed to score this pair's paths.
    fn fetch_vectors(
        &self,
        service: &EmbeddingService,
        query: &Query,
        mining: &MiningReport,
    ) -> Result<EmbeddingTable> {
        if mining.paths.is_empty() {
            return Ok(EmbeddingTable::new(1, crate::scoring::Provenance::Service));
        }
        let mut queries = BTreeSet::from([query.text.clone()]);
        let mut passages = BTreeSet::new();
        for path in &mining.paths {
            passages.extend(path.passages.iter().cloned());
            if self.config.scorer == ScorerKind::DenseSequential {
                for prev in &path.passages[..path.passages.len() - 1] {
                    let p = self
                        .corpus
                        .passage(prev)
                        .ok_or_else(|| Error::UnknownPassage(prev.clone()))?;
                    queries.insert(augment_with_passage(&query.text, p));
                }
            }
        }
        let passages: Vec<(String, String)> = passages
            .into_iter()
            .map(|id| {
                let text = self
                    .corpus
                    .passage(&id)
                    .ok_or_else(|| Error::UnknownPassage(id.clone()))?
                    .text();
                Ok((id, text))
            })
            .collect::<Result<_>>()?;
        service.build_table(&queries.into_iter().collect::<Vec<_>>(), &passages)
    }

    pub fn summarize(&self, pair: &PairRequest, r: &PairRetrieval) -> PairSummary {
        let c = &self.config;
        let ranks = |pred: &dyn Fn(usize) -> bool| (0..r.ranked.len()).filter(|&i| pred(i)).map(|i| i + 1).collect();
        let checks: Vec<_> = r
            .contexts
            .iter()
            .map(|ctx| inspect_context(ctx, &pair.head, &pair.tail))
            .collect();
        PairSummary {
            head: pair.head.clone(),
            tail: pair.tail.clone(),
            query: r.query.text.clone(),
            scorer: c.scorer.as_str().to_string(),
            seed: c.seed,
            max_hops: c.max_hops,
            top_k: c.top_k,
            budget: c.budget,
            doc_cap: c.doc_cap,
            graph_nodes: r.graph_nodes,
            graph_edges: r.graph_edges,
            nodes_visited: r.mining.stats.nodes_visited,
            paths_mined: r.mining.paths.len(),
            failed: r.mining.failed,
            redemption_used: r.mining.redemption_used,
            ranked: r.ranked.len(),
            extra_document_paths: ranks(&|i| r.ranked[i].path.spans_extra_documents()),
            truncated_contexts: ranks(&|i| r.contexts[i].truncated),
            contexts_missing_query_entity: ranks(&|i| !(checks[i].has_head && checks[i].has_tail)),
            bridge_coverage: checks.iter().map(|k| (k.bridges_present, k.bridges_total)).collect(),
        }
    }
}

/// One line of `pairs.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub key: String,
    pub head: String,
    pub tail: String,
    pub status: PairStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub entries: Vec<ManifestEntry>,
}

impl RunOutcome {
    pub fn failed(&self) -> usize {
        self.entries.iter().filter(|e| e.status == PairStatus::Error).count()
    }
}

pub const RANKED_DIR: &str = "ranked";
pub const CONTEXTS_DIR: &str = "contexts";
pub const SUMMARY_DIR: &str = "summary";
pub const MANIFEST_FILE: &str = "pairs.jsonl";

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let ctx = || path.display().to_string();
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(ctx(), e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(ctx(), e))?;
    tmp.persist(path).map_err(|e| Error::io(ctx(), e.error))?;
    Ok(())
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn write_pair(
    out_dir: &Path,
    key: &str,
    retriever: &Retriever<'_>,
    pair: &PairRequest,
    r: &PairRetrieval,
) -> Result<()> {
    let ranked: Vec<RankedRecord> = r.ranked.iter().enumerate().map(|(i, s)| s.to_record(i + 1)).collect();
    write_atomic(&out_dir.join(RANKED_DIR).join(format!("{key}.jsonl")), &jsonl(&ranked)?)?;
    write_atomic(
        &out_dir.join(CONTEXTS_DIR).join(format!("{key}.jsonl")),
        &jsonl(r.contexts.iter().map(PreparedContext::to_record))?,
    )?;
    let mut summary = serde_json::to_vec(&retriever.summarize(pair, r))?;
    summary.push(b'\n');
    write_atomic(&out_dir.join(SUMMARY_DIR).join(format!("{key}.json")), &summary)
}

fn remove_pair_files(out_dir: &Path, key: &str) {
    for (dir, ext) in [(RANKED_DIR, "jsonl"), (CONTEXTS_DIR, "jsonl"), (SUMMARY_DIR, "json")] {
        let _ = fs::remove_file(out_dir.join(dir).join(format!("{key}.{ext}")));
    }
}

/// Retrieves every pair and writes the run layout. A failing pair is recorded
/// in the manifest and does not stop the others.
pub fn run_retrieve(retriever: &Retriever<'_>, pairs: &[PairRequest], out_dir: &Path) -> Result<RunOutcome> {
    for sub in [RANKED_DIR, CONTEXTS_DIR, SUMMARY_DIR] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    let width = pairs.len().saturating_sub(1).to_string().len().max(6);
    let process = |(i, pair): (usize, &PairRequest)| {
        let key = format!("{i:0width$}");
        let result = retriever
            .retrieve(pair)
            .and_then(|r| write_pair(out_dir, &key, retriever, pair, &r));
        let (status, error) = match result {
            Ok(()) => (PairStatus::Ok, None),
            Err(e) => {
                log::warn!("pair {key} ({} -> {}): {e}", pair.head, pair.tail);
                remove_pair_files(out_dir, &key);
                (PairStatus::Error, Some(e.to_string()))
            }
        };
        ManifestEntry {
            key,
            head: pair.head.clone(),
            tail: pair.tail.clone(),
            status,
            error,
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(retriever.config().workers)
        .build()
        .map_err(|e| Error::Config(vec![format!("cannot start worker pool: {e}")]))?;
    let entries: Vec<ManifestEntry> = pool.install(|| pairs.par_iter().enumerate().map(process).collect());
    write_atomic(&out_dir.join(MANIFEST_FILE), &jsonl(&entries)?)?;
    Ok(RunOutcome { entries })
}

/// Ranked passage sequences per (head, tail) pair.
pub type RunPaths = BTreeMap<(String, String), Vec<Vec<String>>>;

/// Reads the ranked passage sequences of a finished run, keyed by pair.
/// Pairs that failed contribute no paths.
pub fn load_run(out_dir: &Path) -> Result<RunPaths> {
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let file = fs::File::open(&manifest_path).map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let mut out = RunPaths::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            path: manifest_path.display().to_string(),
            message: e.to_string(),
        })?;
        let paths = out.entry((entry.head.clone(), entry.tail.clone())).or_default();
        if entry.status != PairStatus::Ok {
            continue;
        }
        let ranked_path = out_dir.join(RANKED_DIR).join(format!("{}.jsonl", entry.key));
        let ranked = fs::File::open(&ranked_path).map_err(|e| Error::io(ranked_path.display().to_string(), e))?;
        for (j, line) in BufReader::new(ranked).lines().enumerate() {
            let line = line.map_err(|e| Error::io(ranked_path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: RankedRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                line: j + 1,
                path: ranked_path.display().to_string(),
                message: e.to_string(),
            })?;
            paths.push(record.passages);
        }
    }
    Ok(out)
}

/// Scores a finished run against gold annotations. Gold pairs absent from the
/// run count as retrieving nothing.
pub fn evaluate_run(out_dir: &Path, gold: &[EvidenceRecord], config: &PipelineConfig) -> Result<RecallReport> {
    let run = load_run(out_dir)?;
    let results: Vec<PairResult> = gold
        .iter()
        .map(|g| PairResult {
            gold: GoldEvidence::from(g),
            retrieved: run.get(&(g.head.clone(), g.tail.clone())).cloned().unwrap_or_default(),
        })
        .collect();
    Ok(bucketed_report(&results, config.bucket_boundary, config.bucket_rule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{Provenance, VectorKind};
    use crate::testutil::corpus_from;

    fn chain() -> Corpus {
        corpus_from(&[
            // the bridge passage must sit in a head- or tail-bearing document
            ("A", &[("p1", &["h", "x"]), ("p2", &["x", "y"])]),
            ("C", &[("p3", &["y", "t"])]),
        ])
    }

    fn pair(h: &str, t: &str) -> PairRequest {
        PairRequest {
            head: h.into(),
            tail: t.into(),
        }
    }

    #[test]
    fn chain_smoke_with_bm25() {
        let corpus = chain();
        let r = Retriever::new(&corpus, &PipelineConfig::default()).unwrap();
        let out = r.retrieve(&pair("h", "t")).unwrap();
        assert_eq!(out.ranked.len(), 1);
        assert_eq!(out.ranked[0].path.passages, ["p1", "p2", "p3"]);
        assert_eq!(out.contexts.len(), 1);
        assert!(!out.mining.failed);
    }

    #[test]
    fn dense_scorer_without_source_fails_before_work() {
        let corpus = chain();
        let config = PipelineConfig {
            scorer: ScorerKind::DenseSequential,
            ..PipelineConfig::default()
        };
        assert!(matches!(Retriever::new(&corpus, &config), Err(Error::Config(_))));
    }

    #[test]
    fn failing_pairs_are_isolated() {
        let corpus = chain();
        let dir = tempfile::tempdir().unwrap();
        let r = Retriever::new(&corpus, &PipelineConfig::default()).unwrap();
        let outcome = run_retrieve(&r, &[pair("h", "t"), pair("h", "nobody"), pair("h", "h")], dir.path()).unwrap();
        assert_eq!(outcome.failed(), 2);
        assert_eq!(outcome.entries[0].status, PairStatus::Ok);
        assert!(dir.path().join("ranked/000000.jsonl").exists());
        assert!(!dir.path().join("ranked/000001.jsonl").exists());
        let run = load_run(dir.path()).unwrap();
        assert_eq!(run[&("h".to_string(), "t".to_string())], vec![vec!["p1", "p2", "p3"]]);
        assert!(run[&("h".to_string(), "nobody".to_string())].is_empty());
    }

    #[test]
    fn missing_vectors_fail_only_that_pair() {
        let corpus = chain();
        let config = PipelineConfig {
            scorer: ScorerKind::DensePair,
            ..PipelineConfig::default()
        };
        let table = EmbeddingTable::new(2, Provenance::File);
        let r = Retriever::with_embeddings(&corpus, &config, Some(EmbeddingProvider::Table(table))).unwrap();
        let err = r.retrieve(&pair("h", "t")).unwrap_err();
        assert!(matches!(err, Error::MissingQueryVector(_)));

        let mut table = EmbeddingTable::new(1, Provenance::File);
        table
            .insert(VectorKind::Query, "What is the relation between h and t?", vec![1.0])
            .unwrap();
        for p in ["p1", "p2", "p3"] {
            table.insert(VectorKind::Passage, p, vec![0.5]).unwrap();
        }
        let r = Retriever::with_embeddings(&corpus, &config, Some(EmbeddingProvider::Table(table))).unwrap();
        let out = r.retrieve(&pair("h", "t")).unwrap();
        assert_eq!(out.ranked[0].score, 0.5);
    }

    #[test]
    fn evaluation_reads_the_run_back() {
        let corpus = chain();
        let dir = tempfile::tempdir().unwrap();
        let r = Retriever::new(&corpus, &PipelineConfig::default()).unwrap();
        run_retrieve(&r, &[pair("h", "t")], dir.path()).unwrap();
        let gold = vec![EvidenceRecord {
            head: "h".into(),
            tail: "t".into(),
            evidence_passages: vec!["p1".into(), "p2".into(), "p3".into()],
            evidence_paths: vec![vec!["p1".into(), "p2".into(), "p3".into()]],
            negatives: vec![],
        }];
        let report = evaluate_run(dir.path(), &gold, &PipelineConfig::default()).unwrap();
        assert_eq!(report.path_recall, Some(1.0));
        assert_eq!(report.passage_recall, Some(1.0));
        assert!(evaluate_run(&dir.path().join("missing"), &gold, &PipelineConfig::default()).is_err());
    }
}
