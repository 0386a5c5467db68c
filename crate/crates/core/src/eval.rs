//! Path-level and passage-level evidence recall, with a hop-count breakdown.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of the gold evidence JSONL (also the input of training export).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub head: String,
    pub tail: String,
    #[serde(default)]
    pub evidence_passages: Vec<String>,
    #[serde(default)]
    pub evidence_paths: Vec<Vec<String>>,
    /// Negative passages for training export. Not used by evaluation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub negatives: Vec<String>,
}

impl EvidenceRecord {
    /// Evidence passages followed by any path members not already listed.
    pub fn gold_passages(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.evidence_passages
            .iter()
            .chain(self.evidence_paths.iter().flatten())
            .filter(|p| seen.insert(p.as_str()))
            .cloned()
            .collect()
    }
}

pub fn read_evidence_jsonl<R: BufRead>(reader: R) -> Result<Vec<EvidenceRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("reading evidence annotations", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(&line);
        let record: EvidenceRecord = serde_path_to_error::deserialize(de).map_err(|err| Error::Malformed {
            line: i + 1,
            path: err.path().to_string(),
            message: err.into_inner().to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldEvidence {
    pub head: String,
    pub tail: String,
    /// Distinct gold passage sequences, in annotation order.
    pub gold_paths: Vec<Vec<String>>,
    pub gold_passages: BTreeSet<String>,
}

impl GoldEvidence {
    pub fn gold_hops(&self) -> Vec<usize> {
        self.gold_paths.iter().map(Vec::len).collect()
    }
}

impl From<&EvidenceRecord> for GoldEvidence {
    fn from(r: &EvidenceRecord) -> Self {
        let mut seen = HashSet::new();
        let gold_paths: Vec<Vec<String>> = r
            .evidence_paths
            .iter()
            .filter(|p| !p.is_empty() && seen.insert((*p).clone()))
            .cloned()
            .collect();
        GoldEvidence {
            head: r.head.clone(),
            tail: r.tail.clone(),
            gold_paths,
            gold_passages: r.gold_passages().into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub hits: usize,
    pub total: usize,
}

impl Counts {
    pub fn recall(self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }

    fn add(&mut self, other: Counts) {
        self.hits += other.hits;
        self.total += other.total;
    }
}

fn path_counts(retrieved: &[Vec<String>], gold: &GoldEvidence) -> Counts {
    let found: HashSet<&[String]> = retrieved.iter().map(Vec::as_slice).collect();
    Counts {
        hits: gold.gold_paths.iter().filter(|g| found.contains(g.as_slice())).count(),
        total: gold.gold_paths.len(),
    }
}

fn retrieved_passages(retrieved: &[Vec<String>]) -> HashSet<&str> {
    retrieved.iter().flatten().map(String::as_str).collect()
}

fn passage_counts(retrieved: &[Vec<String>], gold: &GoldEvidence) -> Counts {
    let found = retrieved_passages(retrieved);
    Counts {
        hits: gold.gold_passages.iter().filter(|p| found.contains(p.as_str())).count(),
        total: gold.gold_passages.len(),
    }
}

/// Fraction of gold paths that some retrieved path reproduces exactly, in
/// order. `None` when there are no gold paths.
pub fn path_recall(retrieved: &[Vec<String>], gold: &GoldEvidence) -> Option<f64> {
    path_counts(retrieved, gold).recall()
}

/// Fraction of gold passages present in any retrieved path. `None` when
/// there are no gold passages.
pub fn passage_recall(retrieved: &[Vec<String>], gold: &GoldEvidence) -> Option<f64> {
    passage_counts(retrieved, gold).recall()
}

/// Which side of the boundary a gold path with exactly `boundary` passages
/// falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketRule {
    /// short: hops < boundary; long: hops ≥ boundary.
    #[default]
    ShortBelow,
    /// short: hops ≤ boundary; long: hops > boundary.
    ShortAtOrBelow,
}

impl BucketRule {
    pub fn is_short(self, hops: usize, boundary: usize) -> bool {
        match self {
            BucketRule::ShortBelow => hops < boundary,
            BucketRule::ShortAtOrBelow => hops <= boundary,
        }
    }
}

impl std::str::FromStr for BucketRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "short_below" | "lt" => Ok(BucketRule::ShortBelow),
            "short_at_or_below" | "le" => Ok(BucketRule::ShortAtOrBelow),
            other => Err(format!("unknown bucket rule `{other}` (expected lt or le)")),
        }
    }
}

pub const DEFAULT_BUCKET_BOUNDARY: usize = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    /// Gold paths in the bucket fully retrieved.
    pub paths: Counts,
    /// Passage occurrences of the bucket's gold paths that were retrieved.
    pub passages: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub counts: BucketCounts,
    pub path_recall: Option<f64>,
    pub passage_recall: Option<f64>,
}

impl From<BucketCounts> for Bucket {
    fn from(counts: BucketCounts) -> Self {
        Bucket {
            counts,
            path_recall: counts.paths.recall(),
            passage_recall: counts.passages.recall(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub boundary: usize,
    pub rule: BucketRule,
    pub pairs: usize,
    /// Pairs with at least one gold path; the others are excluded from the
    /// path-level aggregates.
    pub pairs_with_gold_paths: usize,
    pub pairs_with_gold_passages: usize,
    pub paths: Counts,
    pub passages: Counts,
    /// Micro averages over gold paths / gold passages.
    pub path_recall: Option<f64>,
    pub passage_recall: Option<f64>,
    /// Mean of per-pair recalls over pairs where the recall is defined.
    pub macro_path_recall: Option<f64>,
    pub macro_passage_recall: Option<f64>,
    /// Passage occurrences across all gold paths (the bucket passage counts sum
    /// to this).
    pub path_passages: Counts,
    pub short: Bucket,
    pub long: Bucket,
}

/// Retrieved passage sequences for one gold pair.
#[derive(Debug, Clone)]
pub struct PairResult {
    pub gold: GoldEvidence,
    pub retrieved: Vec<Vec<String>>,
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn bucketed_report(results: &[PairResult], boundary: usize, rule: BucketRule) -> RecallReport {
    let mut paths = Counts::default();
    let mut passages = Counts::default();
    let mut path_passages = Counts::default();
    let mut short = BucketCounts::default();
    let mut long = BucketCounts::default();
    let mut per_pair_path = Vec::new();
    let mut per_pair_passage = Vec::new();

    for r in results {
        let pc = path_counts(&r.retrieved, &r.gold);
        let sc = passage_counts(&r.retrieved, &r.gold);
        paths.add(pc);
        passages.add(sc);
        per_pair_path.extend(pc.recall());
        per_pair_passage.extend(sc.recall());

        let found_paths: HashSet<&[String]> = r.retrieved.iter().map(Vec::as_slice).collect();
        let found_passages = retrieved_passages(&r.retrieved);
        for g in &r.gold.gold_paths {
            let bucket = if rule.is_short(g.len(), boundary) {
                &mut short
            } else {
                &mut long
            };
            let hit = found_paths.contains(g.as_slice());
            let occ = Counts {
                hits: g.iter().filter(|p| found_passages.contains(p.as_str())).count(),
                total: g.len(),
            };
            bucket.paths.add(Counts {
                hits: hit as usize,
                total: 1,
            });
            bucket.passages.add(occ);
            path_passages.add(occ);
        }
    }

    RecallReport {
        boundary,
        rule,
        pairs: results.len(),
        pairs_with_gold_paths: per_pair_path.len(),
        pairs_with_gold_passages: per_pair_passage.len(),
        paths,
        passages,
        path_recall: paths.recall(),
        passage_recall: passages.recall(),
        macro_path_recall: mean(&per_pair_path),
        macro_passage_recall: mean(&per_pair_passage),
        path_passages,
        short: short.into(),
        long: long.into(),
    }
}

fn fmt_recall(r: Option<f64>) -> String {
    r.map(|v| format!("{:.4}", v)).unwrap_or_else(|| "undefined".into())
}

impl RecallReport {
    /// Aligned plain-text table.
    pub fn render_table(&self) -> String {
        let (lo, hi) = match self.rule {
            BucketRule::ShortBelow => (format!("H_T<{}", self.boundary), format!("H_T>={}", self.boundary)),
            BucketRule::ShortAtOrBelow => (format!("H_T<={}", self.boundary), format!("H_T>{}", self.boundary)),
        };
        let rows = [
            ("all", self.path_recall, self.passage_recall, self.paths, self.passages),
            (
                lo.as_str(),
                self.short.path_recall,
                self.short.passage_recall,
                self.short.counts.paths,
                self.short.counts.passages,
            ),
            (
                hi.as_str(),
                self.long.path_recall,
                self.long.passage_recall,
                self.long.counts.paths,
                self.long.counts.passages,
            ),
        ];
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>11} {:>11} {:>13} {:>13}",
            "bucket", "path_recall", "psg_recall", "paths", "passages"
        );
        for (name, pr, sr, pc, sc) in rows {
            let _ = writeln!(
                out,
                "{:<10} {:>11} {:>11} {:>13} {:>13}",
                name,
                fmt_recall(pr),
                fmt_recall(sr),
                format!("{}/{}", pc.hits, pc.total),
                format!("{}/{}", sc.hits, sc.total)
            );
        }
        let _ = writeln!(
            out,
            "pairs: {} ({} with gold paths); macro path recall {}, macro passage recall {}",
            self.pairs,
            self.pairs_with_gold_paths,
            fmt_recall(self.macro_path_recall),
            fmt_recall(self.macro_passage_recall)
        );
        out
    }
}
