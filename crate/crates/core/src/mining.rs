//! Constrained depth-first evidence path mining.
//!
//! A path starts at a head passage, follows shared-entity edges, and stops at
//! the first tail passage it reaches. Along the way no passage and no bridge
//! entity may repeat, the head and tail entities are never bridges, and the
//! path holds at most `max_hops` passages. Neighbors are expanded in sorted
//! order, so emission order is reproducible.

use std::collections::{BTreeSet, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::graph::{EntityRef, NodeId, PassageGraph};

/// An ordered chain of passages joined by bridge entities.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EvidencePath {
    pub passages: Vec<String>,
    /// `bridges[i]` links `passages[i]` and `passages[i + 1]`. Empty for
    /// redemption paths.
    pub bridges: Vec<String>,
    /// Documents touched, ascending.
    pub doc_span: Vec<String>,
    pub redemption: bool,
}

impl EvidencePath {
    pub fn hop_count(&self) -> usize {
        self.passages.len()
    }

    /// Whether the path touches more than two documents.
    pub fn spans_extra_documents(&self) -> bool {
        self.doc_span.len() > 2
    }

    pub fn to_record(&self) -> PathRecord {
        PathRecord {
            passages: self.passages.clone(),
            bridges: self.bridges.clone(),
            redemption: self.redemption,
        }
    }
}

/// One line of the path dump JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRecord {
    pub passages: Vec<String>,
    pub bridges: Vec<String>,
    pub redemption: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Redemption {
    None,
    HeadTailPassages,
}

#[derive(Debug, Clone, Default)]
pub struct MiningStats {
    pub nodes_visited: u64,
    pub paths_emitted: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct MiningReport {
    pub paths: Vec<EvidencePath>,
    /// True iff the depth-first search found no path.
    pub failed: bool,
    pub redemption_used: Redemption,
    pub stats: MiningStats,
}

struct Search<'g> {
    graph: &'g PassageGraph,
    max_hops: usize,
    nodes: Vec<NodeId>,
    bridges: Vec<EntityRef>,
    on_path: Vec<bool>,
    bridge_used: HashSet<EntityRef>,
    seen: HashSet<Vec<NodeId>>,
    paths: Vec<EvidencePath>,
    visited: u64,
}

impl<'g> Search<'g> {
    fn emit(&mut self) {
        if !self.seen.insert(self.nodes.clone()) {
            return;
        }
        let g = self.graph;
        let docs: BTreeSet<&str> = self.nodes.iter().map(|&n| g.doc_id(n)).collect();
        self.paths.push(EvidencePath {
            passages: self.nodes.iter().map(|&n| g.passage_id(n).to_string()).collect(),
            bridges: self.bridges.iter().map(|&e| g.entity_name(e).to_string()).collect(),
            doc_span: docs.into_iter().map(str::to_string).collect(),
            redemption: false,
        });
    }

    fn extend(&mut self, current: NodeId) {
        let g = self.graph;
        for &(next, entity) in g.adjacency(current) {
            if self.on_path[next.0 as usize] || g.is_query_entity(entity) || self.bridge_used.contains(&entity) {
                continue;
            }
            self.visited += 1;
            self.nodes.push(next);
            self.bridges.push(entity);
            self.on_path[next.0 as usize] = true;
            self.bridge_used.insert(entity);

            if g.is_tail_node(next) {
                self.emit();
            } else if self.nodes.len() < self.max_hops {
                self.extend(next);
            }

            self.bridge_used.remove(&entity);
            self.on_path[next.0 as usize] = false;
            self.bridges.pop();
            self.nodes.pop();
        }
    }
}

/// Enumerates every evidence path of at most `max_hops` passages. When several
/// bridge assignments realize the same passage sequence, the path is emitted
/// once, with the lexicographically smallest assignment.
pub fn mine_paths(graph: &PassageGraph, max_hops: usize) -> MiningReport {
    assert!(max_hops >= 1, "max_hops must be at least 1");
    let started = Instant::now();
    let mut search = Search {
        graph,
        max_hops,
        nodes: Vec::with_capacity(max_hops),
        bridges: Vec::with_capacity(max_hops),
        on_path: vec![false; graph.node_count()],
        bridge_used: HashSet::new(),
        seen: HashSet::new(),
        paths: Vec::new(),
        visited: 0,
    };

    for start in graph.node_ids().filter(|&n| graph.is_head_node(n)) {
        search.visited += 1;
        search.nodes.push(start);
        search.on_path[start.0 as usize] = true;
        if graph.is_tail_node(start) {
            search.emit();
        } else if max_hops > 1 {
            search.extend(start);
        }
        search.on_path[start.0 as usize] = false;
        search.nodes.pop();
    }

    let paths = search.paths;
    MiningReport {
        failed: paths.is_empty(),
        redemption_used: Redemption::None,
        stats: MiningStats {
            nodes_visited: search.visited,
            paths_emitted: paths.len(),
            elapsed: started.elapsed(),
        },
        paths,
    }
}

/// Fallback evidence when mining finds nothing: every (head passage, tail
/// passage) pair becomes a two-passage path without bridges, and a passage
/// holding both entities becomes a one-passage path.
pub fn redeem(graph: &PassageGraph) -> Vec<EvidencePath> {
    let heads: Vec<NodeId> = graph.node_ids().filter(|&n| graph.is_head_node(n)).collect();
    let tails: Vec<NodeId> = graph.node_ids().filter(|&n| graph.is_tail_node(n)).collect();
    let mut out = Vec::new();
    for &h in &heads {
        for &t in &tails {
            let nodes = if h == t { vec![h] } else { vec![h, t] };
            let docs: BTreeSet<&str> = nodes.iter().map(|&n| graph.doc_id(n)).collect();
            out.push(EvidencePath {
                passages: nodes.iter().map(|&n| graph.passage_id(n).to_string()).collect(),
                bridges: Vec::new(),
                doc_span: docs.into_iter().map(str::to_string).collect(),
                redemption: true,
            });
        }
    }
    out
}

/// Mines paths and falls back to [`redeem`] when the search comes up empty.
pub fn mine_with_redemption(graph: &PassageGraph, max_hops: usize) -> MiningReport {
    let mut report = mine_paths(graph, max_hops);
    if report.failed {
        let redeemed = redeem(graph);
        if !redeemed.is_empty() {
            report.redemption_used = Redemption::HeadTailPassages;
            report.paths = redeemed;
        }
    }
    report
}

/// Reasons a path fails the evidence-path constraints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathViolation {
    Empty,
    TooLong { hops: usize, max: usize },
    UnknownPassage(String),
    FirstNotHead,
    LastNotTail,
    TailBeforeEnd(usize),
    RepeatedPassage(String),
    RepeatedBridge(String),
    QueryEntityBridge(String),
    BridgeCountMismatch,
    BridgeNotShared { position: usize, entity: String },
}

/// Checks a path against the corpus alone, without consulting any graph.
/// Redemption paths are checked only for their endpoints and length.
pub fn validate_path(
    corpus: &Corpus,
    head: &str,
    tail: &str,
    path: &EvidencePath,
    max_hops: usize,
) -> Result<(), PathViolation> {
    if path.passages.is_empty() {
        return Err(PathViolation::Empty);
    }
    if path.passages.len() > max_hops.max(if path.redemption { 2 } else { 0 }) {
        return Err(PathViolation::TooLong {
            hops: path.passages.len(),
            max: max_hops,
        });
    }
    let mut passages = Vec::with_capacity(path.passages.len());
    for id in &path.passages {
        passages.push(
            corpus
                .passage(id)
                .ok_or_else(|| PathViolation::UnknownPassage(id.clone()))?,
        );
    }
    if !passages[0].mentions_entity(head) {
        return Err(PathViolation::FirstNotHead);
    }
    if !passages.last().unwrap().mentions_entity(tail) {
        return Err(PathViolation::LastNotTail);
    }
    let mut seen = HashSet::new();
    for id in &path.passages {
        if !seen.insert(id) {
            return Err(PathViolation::RepeatedPassage(id.clone()));
        }
    }
    if path.redemption {
        return if path.bridges.is_empty() {
            Ok(())
        } else {
            Err(PathViolation::BridgeCountMismatch)
        };
    }
    for (i, p) in passages[..passages.len() - 1].iter().enumerate() {
        if p.mentions_entity(tail) {
            return Err(PathViolation::TailBeforeEnd(i));
        }
    }
    if path.bridges.len() + 1 != path.passages.len() {
        return Err(PathViolation::BridgeCountMismatch);
    }
    let mut seen = HashSet::new();
    for (i, bridge) in path.bridges.iter().enumerate() {
        if bridge == head || bridge == tail {
            return Err(PathViolation::QueryEntityBridge(bridge.clone()));
        }
        if !seen.insert(bridge) {
            return Err(PathViolation::RepeatedBridge(bridge.clone()));
        }
        if !passages[i].mentions_entity(bridge) || !passages[i + 1].mentions_entity(bridge) {
            return Err(PathViolation::BridgeNotShared {
                position: i,
                entity: bridge.clone(),
            });
        }
    }
    Ok(())
}
