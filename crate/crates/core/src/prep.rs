//! Turns an evidence path into a token sequence of at most `L` corpus tokens.
//!
//! Over budget: sentences without a head or tail mention are dropped, fewest
//! entity mentions first (ties: the latest sentence of the latest passage),
//! until the path fits. If only protected sentences remain and it still does
//! not fit, trailing tokens are cut, skipping the tokens of one head mention
//! and one tail mention, and `truncated` is set.
//!
//! Under budget: each passage grows by whole sentences taken alternately from
//! the text before and after it in its document, one sentence per passage per
//! round, until the budget is met or every document boundary is reached. The
//! last sentence added may be cut to land exactly on `L`.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Passage};
use crate::error::{Error, Result};
use crate::mining::EvidencePath;

pub const DEFAULT_BUDGET: usize = 512;

/// A mention inside a prepared context, as a half-open token range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextMention {
    pub entity_id: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedContext {
    pub tokens: Vec<String>,
    /// Source (passage id, sentence index) of every token.
    pub source_map: Vec<(String, usize)>,
    pub mentions: Vec<ContextMention>,
    pub path: Vec<String>,
    pub bridges: Vec<String>,
    pub dropped_sentences: Vec<(String, usize)>,
    /// Context sentences added around path passages.
    pub augmented_spans: Vec<(String, usize)>,
    pub truncated: bool,
    pub budget: usize,
}

impl PreparedContext {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn to_record(&self) -> ContextRecord {
        ContextRecord {
            tokens: self.tokens.clone(),
            path: self.path.clone(),
            dropped: self.dropped_sentences.clone(),
            truncated: self.truncated,
        }
    }

    /// Removes every token that came from the given sentence.
    pub fn remove_sentence(&mut self, passage_id: &str, sentence_idx: usize) {
        let keep: Vec<bool> = self
            .source_map
            .iter()
            .map(|(p, s)| !(p == passage_id && *s == sentence_idx))
            .collect();
        let mut new_index = Vec::with_capacity(keep.len());
        let mut next = 0;
        for &k in &keep {
            new_index.push(next);
            if k {
                next += 1;
            }
        }
        self.mentions.retain(|m| keep[m.start..m.end].iter().all(|&k| k));
        for m in &mut self.mentions {
            let len = m.end - m.start;
            m.start = new_index[m.start];
            m.end = m.start + len;
        }
        let mut i = 0;
        self.tokens.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        let mut i = 0;
        self.source_map.retain(|_| {
            i += 1;
            keep[i - 1]
        });
    }
}

/// One line of the prepared-context JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub tokens: Vec<String>,
    pub path: Vec<String>,
    pub dropped: Vec<(String, usize)>,
    pub truncated: bool,
}

#[derive(Debug, Clone)]
struct Sentence {
    passage_id: String,
    sentence_idx: usize,
    tokens: Vec<String>,
    /// (entity, start, end) relative to `tokens`
    mentions: Vec<(String, usize, usize)>,
}

impl Sentence {
    fn from_passage(p: &Passage, idx: usize) -> Self {
        Sentence {
            passage_id: p.id.clone(),
            sentence_idx: idx,
            tokens: p.sentences[idx].clone(),
            mentions: p
                .mentions
                .iter()
                .filter(|m| m.sentence_idx == idx)
                .map(|m| (m.entity_id.clone(), m.start, m.end))
                .collect(),
        }
    }

    fn mentions_any(&self, entities: &[&str]) -> bool {
        self.mentions.iter().any(|(e, _, _)| entities.contains(&e.as_str()))
    }

    /// Keeps the first `n` tokens.
    fn keep_head(&mut self, n: usize) {
        self.tokens.truncate(n);
        self.mentions.retain(|&(_, _, end)| end <= n);
    }

    /// Keeps the last `n` tokens.
    fn keep_tail(&mut self, n: usize) {
        let cut = self.tokens.len() - n;
        self.tokens.drain(..cut);
        self.mentions.retain(|&(_, start, _)| start >= cut);
        for m in &mut self.mentions {
            m.1 -= cut;
            m.2 -= cut;
        }
    }
}

/// Walks sentences of one document outward from a passage.
struct Cursor {
    /// (passage index in doc, sentence index) of the next sentence to take
    next: Option<(usize, usize)>,
    forward: bool,
}

impl Cursor {
    fn before(passage: &Passage, doc_passages: &[Passage]) -> Self {
        Cursor {
            next: step_back(doc_passages, passage.index_in_doc, 0),
            forward: false,
        }
    }

    fn after(passage: &Passage, doc_passages: &[Passage]) -> Self {
        let last = passage.sentences.len();
        Cursor {
            next: step_forward(doc_passages, passage.index_in_doc, last),
            forward: true,
        }
    }

    /// Next sentence that is not already used; a used sentence ends the walk.
    fn take(&mut self, doc_passages: &[Passage], used: &mut HashSet<(String, usize)>) -> Option<Sentence> {
        let (p, s) = self.next?;
        let passage = &doc_passages[p];
        if !used.insert((passage.id.clone(), s)) {
            self.next = None;
            return None;
        }
        self.next = if self.forward {
            step_forward(doc_passages, p, s + 1)
        } else {
            step_back(doc_passages, p, s)
        };
        Some(Sentence::from_passage(passage, s))
    }
}

/// The sentence before (passage `p`, sentence `s`).
fn step_back(doc: &[Passage], mut p: usize, mut s: usize) -> Option<(usize, usize)> {
    loop {
        if s > 0 {
            return Some((p, s - 1));
        }
        if p == 0 {
            return None;
        }
        p -= 1;
        s = doc[p].sentences.len();
    }
}

/// The first sentence at or after (passage `p`, sentence `s`).
fn step_forward(doc: &[Passage], mut p: usize, mut s: usize) -> Option<(usize, usize)> {
    loop {
        if s < doc[p].sentences.len() {
            return Some((p, s));
        }
        p += 1;
        s = 0;
        if p >= doc.len() {
            return None;
        }
    }
}

pub fn prepare_input(
    path: &EvidencePath,
    corpus: &Corpus,
    budget: usize,
    head: &str,
    tail: &str,
) -> Result<PreparedContext> {
    if budget == 0 {
        return Err(Error::InvalidQuery("token budget must be at least 1".into()));
    }
    let passages: Vec<&Passage> = path
        .passages
        .iter()
        .map(|id| corpus.passage(id).ok_or_else(|| Error::UnknownPassage(id.clone())))
        .collect::<Result<_>>()?;

    // Core sentences per path position; None marks a dropped sentence.
    let mut core: Vec<Vec<Option<Sentence>>> = passages
        .iter()
        .map(|p| {
            (0..p.sentences.len())
                .map(|s| Some(Sentence::from_passage(p, s)))
                .collect()
        })
        .collect();
    let mut total: usize = passages.iter().map(|p| p.token_count()).sum();
    let mut dropped = Vec::new();
    let mut pre: Vec<Vec<Sentence>> = vec![Vec::new(); passages.len()];
    let mut post: Vec<Vec<Sentence>> = vec![Vec::new(); passages.len()];
    let mut augmented = Vec::new();

    if total > budget {
        let query = [head, tail];
        while total > budget {
            let victim = core
                .iter()
                .enumerate()
                .flat_map(|(i, ss)| ss.iter().enumerate().map(move |(s, sent)| (i, s, sent)))
                .filter_map(|(i, s, sent)| sent.as_ref().map(|sent| (i, s, sent)))
                .filter(|(_, _, sent)| !sent.tokens.is_empty() && !sent.mentions_any(&query))
                .min_by(|a, b| {
                    a.2.mentions
                        .len()
                        .cmp(&b.2.mentions.len())
                        .then_with(|| (b.0, b.1).cmp(&(a.0, a.1)))
                })
                .map(|(i, s, _)| (i, s));
            let Some((i, s)) = victim else { break };
            let sentence = core[i][s].take().expect("victim is present");
            total -= sentence.tokens.len();
            dropped.push((sentence.passage_id, sentence.sentence_idx));
        }
    } else if total < budget {
        let mut used: HashSet<(String, usize)> = passages
            .iter()
            .flat_map(|p| (0..p.sentences.len()).map(move |s| (p.id.clone(), s)))
            .collect();
        let docs: Vec<&[Passage]> = passages
            .iter()
            .map(|p| {
                corpus
                    .document(&p.doc_id)
                    .expect("passage document exists")
                    .passages
                    .as_slice()
            })
            .collect();
        let mut cursors: Vec<[Cursor; 2]> = passages
            .iter()
            .zip(&docs)
            .map(|(p, d)| [Cursor::before(p, d), Cursor::after(p, d)])
            .collect();
        // side to try next for each passage: 0 = before, 1 = after
        let mut side = vec![0usize; passages.len()];

        'rounds: loop {
            let mut progressed = false;
            for i in 0..passages.len() {
                if total >= budget {
                    break 'rounds;
                }
                let first = side[i];
                let mut got = None;
                for attempt in [first, 1 - first] {
                    if let Some(sentence) = cursors[i][attempt].take(docs[i], &mut used) {
                        got = Some((attempt, sentence));
                        break;
                    }
                }
                let Some((taken_side, mut sentence)) = got else {
                    continue;
                };
                side[i] = 1 - taken_side;
                progressed = true;
                let room = budget - total;
                if sentence.tokens.len() > room {
                    if taken_side == 0 {
                        sentence.keep_tail(room);
                    } else {
                        sentence.keep_head(room);
                    }
                }
                total += sentence.tokens.len();
                augmented.push((sentence.passage_id.clone(), sentence.sentence_idx));
                if taken_side == 0 {
                    pre[i].push(sentence);
                } else {
                    post[i].push(sentence);
                }
            }
            if !progressed {
                break;
            }
        }
    }

    let mut ctx = PreparedContext {
        tokens: Vec::with_capacity(total),
        source_map: Vec::with_capacity(total),
        mentions: Vec::new(),
        path: path.passages.clone(),
        bridges: path.bridges.clone(),
        dropped_sentences: dropped,
        augmented_spans: augmented,
        truncated: false,
        budget,
    };
    for i in 0..passages.len() {
        let ordered = pre[i]
            .iter()
            .rev()
            .chain(core[i].iter().flatten())
            .chain(post[i].iter());
        for sentence in ordered {
            let offset = ctx.tokens.len();
            for (e, s, t) in &sentence.mentions {
                ctx.mentions.push(ContextMention {
                    entity_id: e.clone(),
                    start: offset + s,
                    end: offset + t,
                });
            }
            for token in &sentence.tokens {
                ctx.tokens.push(token.clone());
                ctx.source_map
                    .push((sentence.passage_id.clone(), sentence.sentence_idx));
            }
        }
    }

    if ctx.tokens.len() > budget {
        truncate_anchored(&mut ctx, head, tail);
    }
    Ok(ctx)
}

/// Cuts tokens from the end until the budget holds, skipping the tokens of
/// the first head mention and the first tail mention. If those alone exceed
/// the budget they are cut too.
fn truncate_anchored(ctx: &mut PreparedContext, head: &str, tail: &str) {
    let budget = ctx.budget;
    let mut protected = vec![false; ctx.tokens.len()];
    for entity in [head, tail] {
        if let Some(m) = ctx.mentions.iter().find(|m| m.entity_id == entity) {
            protected[m.start..m.end].iter_mut().for_each(|p| *p = true);
        }
    }
    let mut keep = vec![true; ctx.tokens.len()];
    let mut excess = ctx.tokens.len() - budget;
    for pass_protected in [false, true] {
        for i in (0..keep.len()).rev() {
            if excess == 0 {
                break;
            }
            if keep[i] && (pass_protected || !protected[i]) {
                keep[i] = false;
                excess -= 1;
            }
        }
    }

    let mut new_index = Vec::with_capacity(keep.len());
    let mut next = 0;
    for &k in &keep {
        new_index.push(next);
        if k {
            next += 1;
        }
    }
    ctx.mentions.retain(|m| {
        keep[m.start..m.end].iter().all(|&k| k) && {
            // a surviving mention must still be contiguous
            true
        }
    });
    for m in &mut ctx.mentions {
        let len = m.end - m.start;
        m.start = new_index[m.start];
        m.end = m.start + len;
    }
    let mut i = 0;
    ctx.tokens.retain(|_| {
        i += 1;
        keep[i - 1]
    });
    let mut i = 0;
    ctx.source_map.retain(|_| {
        i += 1;
        keep[i - 1]
    });
    ctx.truncated = true;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextCheck {
    pub has_head: bool,
    pub has_tail: bool,
    pub within_budget: bool,
    /// Bridge entities of the path that still have a mention in the context.
    pub bridges_present: usize,
    pub bridges_total: usize,
}

impl ContextCheck {
    pub fn is_valid(&self) -> bool {
        self.has_head && self.has_tail && self.within_budget
    }
}

pub fn inspect_context(ctx: &PreparedContext, head: &str, tail: &str) -> ContextCheck {
    let present: BTreeSet<&str> = ctx.mentions.iter().map(|m| m.entity_id.as_str()).collect();
    let bridges: BTreeSet<&str> = ctx.bridges.iter().map(String::as_str).collect();
    ContextCheck {
        has_head: present.contains(head),
        has_tail: present.contains(tail),
        within_budget: ctx.tokens.len() <= ctx.budget,
        bridges_present: bridges.iter().filter(|b| present.contains(*b)).count(),
        bridges_total: bridges.len(),
    }
}

/// True iff the context still mentions both query entities and fits its budget.
pub fn validate_context(ctx: &PreparedContext, head: &str, tail: &str) -> bool {
    inspect_context(ctx, head, tail).is_valid()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest_corpus, IngestOptions};

    fn path(ids: &[&str]) -> EvidencePath {
        EvidencePath {
            passages: ids.iter().map(|s| s.to_string()).collect(),
            bridges: vec![],
            doc_span: vec![],
            redemption: false,
        }
    }

    fn words(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn corpus(json_lines: &[serde_json::Value]) -> Corpus {
        let text: Vec<String> = json_lines.iter().map(|v| v.to_string()).collect();
        ingest_corpus(text.join("\n").as_bytes(), None::<&[u8]>, IngestOptions::default()).unwrap()
    }

    /// p1: [h-sentence 4 tokens][filler 5 tokens, no mentions]
    /// p2: [x-sentence 2 tokens][t-sentence 3 tokens]
    fn drop_fixture() -> Corpus {
        corpus(&[
            serde_json::json!({"id": "A", "title": "", "passages": [
                {"id": "p1", "sentences": [words("a", 4), words("f", 5)],
                 "mentions": [{"entity": "h", "sentence": 0, "start": 0, "end": 1}]}]}),
            serde_json::json!({"id": "B", "title": "", "passages": [
                {"id": "p2", "sentences": [words("b", 2), words("c", 3)],
                 "mentions": [{"entity": "x", "sentence": 0, "start": 0, "end": 1},
                              {"entity": "t", "sentence": 1, "start": 0, "end": 2}]}]}),
        ])
    }

    #[test]
    fn drops_the_mention_free_sentence() {
        let c = drop_fixture();
        let ctx = prepare_input(&path(&["p1", "p2"]), &c, 10, "h", "t").unwrap();
        assert_eq!(ctx.len(), 9);
        assert_eq!(ctx.dropped_sentences, vec![("p1".to_string(), 1)]);
        assert!(!ctx.truncated);
        assert!(validate_context(&ctx, "h", "t"));
        assert_eq!(ctx.tokens[..4], words("a", 4)[..]);
    }

    #[test]
    fn exact_budget_is_identity() {
        let c = drop_fixture();
        let ctx = prepare_input(&path(&["p1", "p2"]), &c, 14, "h", "t").unwrap();
        assert_eq!(ctx.len(), 14);
        assert!(ctx.dropped_sentences.is_empty() && ctx.augmented_spans.is_empty());
        let expected: Vec<String> = [words("a", 4), words("f", 5), words("b", 2), words("c", 3)].concat();
        assert_eq!(ctx.tokens, expected);
    }

    #[test]
    fn truncation_keeps_query_mentions() {
        let c = drop_fixture();
        // drop loop removes f* (5) and b* (2) leaving 7 > 5
        let ctx = prepare_input(&path(&["p1", "p2"]), &c, 5, "h", "t").unwrap();
        assert!(ctx.truncated);
        assert_eq!(ctx.len(), 5);
        assert!(validate_context(&ctx, "h", "t"));
        assert_eq!(ctx.tokens, ["a0", "a1", "a2", "c0", "c1"]);
    }

    /// Two documents of three passages, each passage a single 2-token
    /// sentence, except the path passages which hold 3 tokens.
    fn augment_fixture() -> Corpus {
        let doc = |d: &str, mid_entity: &str| {
            serde_json::json!({"id": d, "title": "", "passages": [
                {"id": format!("{d}0"), "sentences": [words(&format!("{d}pre"), 2)]},
                {"id": format!("{d}1"), "sentences": [words(&format!("{d}mid"), 3)],
                 "mentions": [{"entity": mid_entity, "sentence": 0, "start": 0, "end": 1}]},
                {"id": format!("{d}2"), "sentences": [words(&format!("{d}post"), 2)]},
            ]})
        };
        corpus(&[doc("A", "h"), doc("B", "t")])
    }

    #[test]
    fn round_robin_augmentation() {
        let c = augment_fixture();
        let ctx = prepare_input(&path(&["A1", "B1"]), &c, 10, "h", "t").unwrap();
        assert_eq!(ctx.len(), 10);
        // round one: A takes its preceding sentence, B takes its preceding one
        assert_eq!(ctx.augmented_spans, vec![("A0".to_string(), 0), ("B0".to_string(), 0)]);
        let expected: Vec<String> = [words("Apre", 2), words("Amid", 3), words("Bpre", 2), words("Bmid", 3)].concat();
        assert_eq!(ctx.tokens, expected);

        let ctx = prepare_input(&path(&["A1", "B1"]), &c, 13, "h", "t").unwrap();
        // round two: A takes its succeeding sentence (2), B gets the last token
        assert_eq!(ctx.len(), 13);
        assert_eq!(ctx.tokens[5..7], words("Apost", 2)[..]);
        assert_eq!(ctx.tokens.last().unwrap(), "Bpost0");

        let ctx = prepare_input(&path(&["A1", "B1"]), &c, 100, "h", "t").unwrap();
        assert_eq!(ctx.len(), 14);
        assert!(validate_context(&ctx, "h", "t"));
    }

    #[test]
    fn augmentation_does_not_duplicate_path_passages() {
        let c = augment_fixture();
        let ctx = prepare_input(&path(&["A0", "A1"]), &c, 100, "h", "t").unwrap();
        let ids: Vec<&str> = ctx.source_map.iter().map(|(p, _)| p.as_str()).collect();
        assert_eq!(ids.iter().filter(|p| **p == "A1").count(), 3);
        assert_eq!(ctx.len(), 7);
    }

    #[test]
    fn validation_failures() {
        let c = drop_fixture();
        let mut ctx = prepare_input(&path(&["p1", "p2"]), &c, 14, "h", "t").unwrap();
        assert!(validate_context(&ctx, "h", "t"));
        let mut over = ctx.clone();
        over.budget = 13;
        assert!(!validate_context(&over, "h", "t"));
        ctx.remove_sentence("p1", 0);
        assert!(!validate_context(&ctx, "h", "t"));
        assert_eq!(ctx.len(), 10);
    }

    #[test]
    fn unknown_passage_is_an_error() {
        let c = drop_fixture();
        assert!(matches!(
            prepare_input(&path(&["p1", "zz"]), &c, 10, "h", "t"),
            Err(Error::UnknownPassage(_))
        ));
    }
}
