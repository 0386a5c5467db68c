//! Per-query passage graph over head- and tail-bearing documents.
//!
//! Nodes are the passages of every document that mentions the head or the
//! tail entity (after the per-entity document cap). Two passages are joined
//! by one edge per entity they both mention. Edges labeled with the head or
//! tail entity are built like any other; the path miner refuses to use them
//! as bridges.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Default per-entity document cap applied before graph construction.
pub const DEFAULT_DOC_CAP: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRole {
    Head,
    Tail,
    HeadAndTail,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityRef(pub u32);

#[derive(Debug, Clone)]
pub struct PassageGraph {
    head: String,
    tail: String,
    /// Passage ids, ascending. `NodeId(i)` names `nodes[i]`.
    nodes: Vec<String>,
    node_docs: Vec<String>,
    roles: Vec<NodeRole>,
    /// Entity ids, ascending. `EntityRef(i)` names `entities[i]`.
    entities: Vec<String>,
    /// Sorted by (neighbor, entity); ids are assigned in string order so this
    /// is also (neighbor passage id, entity id) order.
    adjacency: Vec<Vec<(NodeId, EntityRef)>>,
    head_entity: Option<EntityRef>,
    tail_entity: Option<EntityRef>,
}

/// Builds the passage graph for one (head, tail) query.
pub fn build_graph(corpus: &Corpus, head: &str, tail: &str, doc_cap: usize) -> Result<PassageGraph> {
    if head == tail {
        return Err(Error::InvalidQuery(format!(
            "head and tail are the same entity `{head}`"
        )));
    }
    if doc_cap == 0 {
        return Err(Error::InvalidQuery("document cap must be at least 1".into()));
    }
    for entity in [head, tail] {
        if corpus.entity(entity).is_none() {
            return Err(Error::UnknownEntity(entity.to_string()));
        }
    }

    let mut docs: BTreeSet<String> = corpus.documents_with_entity(head, doc_cap).into_iter().collect();
    docs.extend(corpus.documents_with_entity(tail, doc_cap));

    // passage id -> (doc id, entity set)
    let mut passages: BTreeMap<&str, (&str, BTreeSet<&str>)> = BTreeMap::new();
    for doc_id in &docs {
        let doc = corpus.document(doc_id).expect("indexed document exists");
        for p in &doc.passages {
            passages.insert(&p.id, (&doc.id, p.entity_set()));
        }
    }

    let nodes: Vec<String> = passages.keys().map(|s| s.to_string()).collect();
    let node_docs: Vec<String> = passages.values().map(|(d, _)| d.to_string()).collect();
    let entity_names: BTreeSet<&str> = passages.values().flat_map(|(_, es)| es.iter().copied()).collect();
    let entities: Vec<String> = entity_names.iter().map(|s| s.to_string()).collect();
    let entity_ref = |name: &str| {
        entities
            .binary_search_by(|e| e.as_str().cmp(name))
            .ok()
            .map(|i| EntityRef(i as u32))
    };

    let mut roles = Vec::with_capacity(nodes.len());
    let mut by_entity: Vec<Vec<NodeId>> = vec![Vec::new(); entities.len()];
    for (i, (_, ents)) in passages.values().enumerate() {
        let has_head = ents.contains(head);
        let has_tail = ents.contains(tail);
        roles.push(match (has_head, has_tail) {
            (true, true) => NodeRole::HeadAndTail,
            (true, false) => NodeRole::Head,
            (false, true) => NodeRole::Tail,
            (false, false) => NodeRole::Other,
        });
        for e in ents {
            let r = entity_ref(e).expect("entity collected above");
            by_entity[r.0 as usize].push(NodeId(i as u32));
        }
    }

    let mut adjacency: Vec<Vec<(NodeId, EntityRef)>> = vec![Vec::new(); nodes.len()];
    for (e, members) in by_entity.iter().enumerate() {
        for &a in members {
            for &b in members {
                if a != b {
                    adjacency[a.0 as usize].push((b, EntityRef(e as u32)));
                }
            }
        }
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
    }

    Ok(PassageGraph {
        head: head.to_string(),
        tail: tail.to_string(),
        head_entity: entity_ref(head),
        tail_entity: entity_ref(tail),
        nodes,
        node_docs,
        roles,
        entities,
        adjacency,
    })
}

impl PassageGraph {
    pub fn head(&self) -> &str {
        &self.head
    }

    pub fn tail(&self) -> &str {
        &self.tail
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn node_id(&self, passage_id: &str) -> Option<NodeId> {
        self.nodes
            .binary_search_by(|p| p.as_str().cmp(passage_id))
            .ok()
            .map(|i| NodeId(i as u32))
    }

    pub fn passage_id(&self, node: NodeId) -> &str {
        &self.nodes[node.0 as usize]
    }

    pub fn doc_id(&self, node: NodeId) -> &str {
        &self.node_docs[node.0 as usize]
    }

    pub fn role(&self, node: NodeId) -> NodeRole {
        self.roles[node.0 as usize]
    }

    pub fn entity_name(&self, entity: EntityRef) -> &str {
        &self.entities[entity.0 as usize]
    }

    pub fn is_head_node(&self, node: NodeId) -> bool {
        matches!(self.role(node), NodeRole::Head | NodeRole::HeadAndTail)
    }

    pub fn is_tail_node(&self, node: NodeId) -> bool {
        matches!(self.role(node), NodeRole::Tail | NodeRole::HeadAndTail)
    }

    /// Whether `entity` is the query's head or tail entity.
    pub fn is_query_entity(&self, entity: EntityRef) -> bool {
        Some(entity) == self.head_entity || Some(entity) == self.tail_entity
    }

    /// Passage ids with a head mention (the head set), ascending.
    pub fn head_set(&self) -> Vec<&str> {
        self.node_ids()
            .filter(|&n| self.is_head_node(n))
            .map(|n| self.passage_id(n))
            .collect()
    }

    /// Passage ids with a tail mention (the tail set), ascending.
    pub fn tail_set(&self) -> Vec<&str> {
        self.node_ids()
            .filter(|&n| self.is_tail_node(n))
            .map(|n| self.passage_id(n))
            .collect()
    }

    pub(crate) fn adjacency(&self, node: NodeId) -> &[(NodeId, EntityRef)] {
        &self.adjacency[node.0 as usize]
    }

    /// Neighbors of a passage as (neighbor passage id, shared entity id),
    /// sorted by neighbor id then entity id.
    pub fn neighbors(&self, passage_id: &str) -> Result<Vec<(&str, &str)>> {
        let node = self
            .node_id(passage_id)
            .ok_or_else(|| Error::UnknownNode(passage_id.to_string()))?;
        Ok(self
            .adjacency(node)
            .iter()
            .map(|&(n, e)| (self.passage_id(n), self.entity_name(e)))
            .collect())
    }

    /// All edges as (passage, passage, entity) with the first passage id
    /// smaller than the second, in sorted order.
    pub fn edges(&self) -> Vec<(&str, &str, &str)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for a in self.node_ids() {
            for &(b, e) in self.adjacency(a) {
                if a < b {
                    out.push((self.passage_id(a), self.passage_id(b), self.entity_name(e)));
                }
            }
        }
        out
    }

    /// Tab-separated edge list, one undirected edge per line.
    pub fn dump_edges(&self) -> String {
        let mut out = String::new();
        for (a, b, e) in self.edges() {
            let _ = writeln!(out, "{a}\t{b}\t{e}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{corpus_from, corpus_with_vocab};

    #[test]
    fn minimal_bridge_between_two_documents() {
        let corpus = corpus_from(&[("A", &[("a1", &["h", "x"])]), ("B", &[("b1", &["x", "t"])])]);
        let g = build_graph(&corpus, "h", "t", DEFAULT_DOC_CAP).unwrap();
        assert_eq!(g.edges(), vec![("a1", "b1", "x")]);
        assert_eq!(g.head_set(), ["a1"]);
        assert_eq!(g.tail_set(), ["b1"]);
    }

    #[test]
    fn one_sided_graph_when_head_absent() {
        let corpus = corpus_with_vocab(
            &[("A", &[("a1", &["y"])]), ("B", &[("b1", &["t"]), ("b2", &["z"])])],
            &["h"],
        );
        let g = build_graph(&corpus, "h", "t", DEFAULT_DOC_CAP).unwrap();
        assert!(g.head_set().is_empty());
        assert_eq!(g.tail_set(), ["b1"]);
        assert_eq!(g.node_count(), 2);
    }

    #[test]
    fn head_equals_tail_is_invalid() {
        let corpus = corpus_from(&[("A", &[("a1", &["h"])])]);
        assert!(matches!(
            build_graph(&corpus, "h", "h", 50),
            Err(Error::InvalidQuery(_))
        ));
    }

    #[test]
    fn neighbor_order_and_multi_edges() {
        let corpus = corpus_from(&[(
            "A",
            &[
                ("p1", &["h", "x", "y"]),
                ("p2", &["x", "y"]),
                ("p3", &["y", "t"]),
                ("p4", &["h"]),
            ],
        )]);
        let g = build_graph(&corpus, "h", "t", 50).unwrap();
        assert_eq!(
            g.neighbors("p1").unwrap(),
            vec![("p2", "x"), ("p2", "y"), ("p3", "y"), ("p4", "h")]
        );
        assert!(g.neighbors("nope").is_err());
    }

    #[test]
    fn isolated_node_has_no_neighbors() {
        let corpus = corpus_from(&[("A", &[("p1", &["h"]), ("p2", &["q"])]), ("B", &[("p3", &["t"])])]);
        let g = build_graph(&corpus, "h", "t", 50).unwrap();
        assert!(g.neighbors("p2").unwrap().is_empty());
        assert_eq!(g.dump_edges(), "");
    }
}
