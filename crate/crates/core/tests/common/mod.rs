//! Fixture builders and independent reference implementations shared by the
//! integration tests. The reference implementations deliberately avoid the
//! library's graph, index, and ranking code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use hopchain::corpus::{ingest_corpus, Corpus, IngestOptions};
use rand::seq::SliceRandom;
use rand::Rng;

pub const HEAD: &str = "e0";
pub const TAIL: &str = "e1";

#[derive(Debug, Clone)]
pub struct PassageSpec {
    pub id: String,
    pub sentences: Vec<Vec<String>>,
    /// (entity, sentence, start, end)
    pub mentions: Vec<(String, usize, usize, usize)>,
}

impl PassageSpec {
    pub fn entities(&self) -> BTreeSet<String> {
        self.mentions.iter().map(|m| m.0.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct DocSpec {
    pub id: String,
    pub passages: Vec<PassageSpec>,
}

pub fn to_jsonl(docs: &[DocSpec]) -> String {
    let mut out = String::new();
    for d in docs {
        let passages: Vec<serde_json::Value> = d
            .passages
            .iter()
            .map(|p| {
                let mentions: Vec<serde_json::Value> = p
                    .mentions
                    .iter()
                    .map(|(e, s, a, b)| serde_json::json!({"entity": e, "sentence": s, "start": a, "end": b}))
                    .collect();
                serde_json::json!({"id": p.id, "sentences": p.sentences, "mentions": mentions})
            })
            .collect();
        out.push_str(&serde_json::json!({"id": d.id, "title": d.id, "passages": passages}).to_string());
        out.push('\n');
    }
    out
}

/// Ingests `docs` with e0..e5 registered up front, so the query entities
/// exist even when no passage mentions them.
pub fn ingest(docs: &[DocSpec]) -> Corpus {
    let entities: String = (0..6)
        .map(|i| format!("{{\"id\": \"e{i}\", \"name\": \"entity {i}\"}}\n"))
        .collect();
    ingest_corpus(
        to_jsonl(docs).as_bytes(),
        Some(entities.as_bytes()),
        IngestOptions::default(),
    )
    .expect("fixture ingests")
}

/// A passage with one `w <entity>` sentence per entity.
pub fn entity_passage(id: &str, entities: &[String]) -> PassageSpec {
    if entities.is_empty() {
        return PassageSpec {
            id: id.to_string(),
            sentences: vec![vec!["w".into()]],
            mentions: vec![],
        };
    }
    PassageSpec {
        id: id.to_string(),
        sentences: entities.iter().map(|e| vec!["w".to_string(), e.clone()]).collect(),
        mentions: entities.iter().enumerate().map(|(i, e)| (e.clone(), i, 1, 2)).collect(),
    }
}

/// Random corpus of at most `max_passages` passages over entities e0..e{n-1},
/// spread over 1-4 documents. Each entity lands in a passage with probability
/// `density`.
pub fn random_entity_corpus<R: Rng>(rng: &mut R, max_passages: usize, n_entities: usize, density: f64) -> Vec<DocSpec> {
    let n_passages = rng.gen_range(1..=max_passages);
    let n_docs = rng.gen_range(1..=4usize.min(n_passages));
    let mut docs: Vec<DocSpec> = (0..n_docs)
        .map(|d| DocSpec {
            id: format!("d{d}"),
            passages: vec![],
        })
        .collect();
    for p in 0..n_passages {
        let ents: Vec<String> = (0..n_entities)
            .filter(|_| rng.gen_bool(density))
            .map(|e| format!("e{e}"))
            .collect();
        let d = rng.gen_range(0..n_docs);
        let id = format!("p{p:02}");
        docs[d].passages.push(entity_passage(&id, &ents));
    }
    docs.retain(|d| !d.passages.is_empty());
    docs
}

/// Passage id -> (doc id, entity set) as a flat table.
pub fn passage_table(docs: &[DocSpec]) -> BTreeMap<String, (String, BTreeSet<String>)> {
    docs.iter()
        .flat_map(|d| {
            d.passages
                .iter()
                .map(move |p| (p.id.clone(), (d.id.clone(), p.entities())))
        })
        .collect()
}

/// Every path between head and tail passages, found by enumerating all
/// sequences of distinct candidate passages of length 1..=max_hops and
/// keeping those that satisfy the evidence-path constraints. For each
/// passage sequence the lexicographically smallest valid bridge list is
/// reported. Assumes no document cap applies.
pub fn oracle_paths(docs: &[DocSpec], head: &str, tail: &str, max_hops: usize) -> BTreeSet<(Vec<String>, Vec<String>)> {
    let table = passage_table(docs);
    let kept_docs: BTreeSet<&String> = table
        .values()
        .filter(|(_, ents)| ents.contains(head) || ents.contains(tail))
        .map(|(d, _)| d)
        .collect();
    let nodes: Vec<(&String, &BTreeSet<String>)> = table
        .iter()
        .filter(|(_, (d, _))| kept_docs.contains(d))
        .map(|(id, (_, ents))| (id, ents))
        .collect();

    let mut out = BTreeSet::new();
    let mut seq: Vec<usize> = Vec::new();
    fn extend(
        nodes: &[(&String, &BTreeSet<String>)],
        seq: &mut Vec<usize>,
        max_hops: usize,
        head: &str,
        tail: &str,
        out: &mut BTreeSet<(Vec<String>, Vec<String>)>,
    ) {
        if !seq.is_empty() {
            if let Some(bridges) = check(nodes, seq, head, tail) {
                out.insert((seq.iter().map(|&i| nodes[i].0.clone()).collect(), bridges));
            }
        }
        if seq.len() == max_hops {
            return;
        }
        for i in 0..nodes.len() {
            if !seq.contains(&i) {
                seq.push(i);
                extend(nodes, seq, max_hops, head, tail, out);
                seq.pop();
            }
        }
    }
    fn check(nodes: &[(&String, &BTreeSet<String>)], seq: &[usize], head: &str, tail: &str) -> Option<Vec<String>> {
        let ents = |k: usize| nodes[seq[k]].1;
        if !ents(0).contains(head) || !ents(seq.len() - 1).contains(tail) {
            return None;
        }
        if (0..seq.len() - 1).any(|k| ents(k).contains(tail)) {
            return None;
        }
        let options: Vec<Vec<&String>> = (0..seq.len() - 1)
            .map(|k| {
                ents(k)
                    .intersection(ents(k + 1))
                    .filter(|e| *e != head && *e != tail)
                    .collect()
            })
            .collect();
        // all assignments, smallest valid one wins
        let mut best: Option<Vec<String>> = None;
        let mut pick: Vec<&String> = Vec::new();
        fn assign<'a>(options: &[Vec<&'a String>], pick: &mut Vec<&'a String>, best: &mut Option<Vec<String>>) {
            if pick.len() == options.len() {
                let distinct: BTreeSet<&&String> = pick.iter().collect();
                if distinct.len() == pick.len() {
                    let cand: Vec<String> = pick.iter().map(|s| s.to_string()).collect();
                    if best.as_ref().is_none_or(|b| cand < *b) {
                        *best = Some(cand);
                    }
                }
                return;
            }
            for &o in &options[pick.len()] {
                pick.push(o);
                assign(options, pick, best);
                pick.pop();
            }
        }
        assign(&options, &mut pick, &mut best);
        best
    }
    extend(&nodes, &mut seq, max_hops, head, tail, &mut out);
    out
}

/// Straight-line Okapi BM25 over pre-normalized passages.
pub fn bm25_reference(passages: &[Vec<String>], query: &[String], target: usize, k1: f64, b: f64) -> f64 {
    let n = passages.len() as f64;
    let avg = passages.iter().map(|p| p.len() as f64).sum::<f64>() / n;
    let len = passages[target].len() as f64;
    let mut score = 0.0;
    for term in query {
        let df = passages.iter().filter(|p| p.contains(term)).count() as f64;
        let tf = passages[target].iter().filter(|t| *t == term).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        let norm = if avg > 0.0 { len / avg } else { 0.0 };
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
    }
    score
}

/// Random words for text fixtures; none is a stopword and none changes under
/// stemming.
pub const LEXICON: &[&str] = &[
    "orchard", "harbour", "glass", "violin", "granite", "lantern", "meadow", "cobalt", "falcon", "saddle", "thunder",
    "velvet", "quartz", "ember", "willow", "tundra", "copper", "marble", "canyon", "pepper",
];

pub fn random_words<R: Rng>(rng: &mut R, n: usize) -> Vec<String> {
    (0..n).map(|_| LEXICON.choose(rng).unwrap().to_string()).collect()
}

/// Gold/retrieved fixture for recall checks: returns (gold paths, gold
/// passages, retrieved paths).
pub fn random_eval_fixture<R: Rng>(rng: &mut R) -> (Vec<Vec<String>>, BTreeSet<String>, Vec<Vec<String>>) {
    let pool: Vec<String> = (0..12).map(|i| format!("q{i}")).collect();
    let random_path = |rng: &mut R| {
        let len = rng.gen_range(1..=5);
        let mut p = pool.clone();
        p.shuffle(rng);
        p.truncate(len);
        p
    };
    let n_gold = rng.gen_range(0..=5);
    let gold: Vec<Vec<String>> = (0..n_gold).map(|_| random_path(rng)).collect();
    let mut passages: BTreeSet<String> = gold.iter().flatten().cloned().collect();
    for p in &pool {
        if rng.gen_bool(0.1) {
            passages.insert(p.clone());
        }
    }
    let mut retrieved: Vec<Vec<String>> = (0..rng.gen_range(0..=8)).map(|_| random_path(rng)).collect();
    for g in &gold {
        if rng.gen_bool(0.5) {
            retrieved.push(g.clone());
        }
    }
    retrieved.shuffle(rng);
    (gold, passages, retrieved)
}

/// Distinct gold paths, first occurrence order.
pub fn distinct(paths: &[Vec<String>]) -> Vec<Vec<String>> {
    let mut seen = BTreeSet::new();
    paths.iter().filter(|p| seen.insert((*p).clone())).cloned().collect()
}

pub fn passage_counts(paths: &[Vec<String>]) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for p in paths.iter().flatten() {
        *m.entry(p.clone()).or_insert(0) += 1;
    }
    m
}
