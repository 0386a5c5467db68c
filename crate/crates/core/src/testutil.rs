//! Small corpus fixtures for unit tests.

use crate::corpus::{Corpus, CorpusBuilder, Entity, IngestOptions};

type DocSpec<'a> = (&'a str, &'a [(&'a str, &'a [&'a str])]);

/// Builds a corpus where each passage holds one two-token sentence per listed
/// entity (`w <entity>`, mention on the second token).
pub fn corpus_from(docs: &[DocSpec<'_>]) -> Corpus {
    corpus_with_vocab(docs, &[])
}

pub fn corpus_with_vocab(docs: &[DocSpec<'_>], extra_entities: &[&str]) -> Corpus {
    let mut builder = CorpusBuilder::new(IngestOptions::default());
    for e in extra_entities {
        builder
            .add_entity(Entity {
                id: e.to_string(),
                canonical_name: e.to_string(),
            })
            .unwrap();
    }
    let mut lines = String::new();
    for (doc, passages) in docs {
        let ps: Vec<serde_json::Value> = passages
            .iter()
            .map(|(pid, ents)| {
                let sentences: Vec<Vec<String>> = ents.iter().map(|e| vec!["w".to_string(), e.to_string()]).collect();
                let mentions: Vec<serde_json::Value> = ents
                    .iter()
                    .enumerate()
                    .map(|(i, e)| serde_json::json!({"entity": e, "sentence": i, "start": 1, "end": 2}))
                    .collect();
                let sentences = if sentences.is_empty() {
                    vec![vec!["w".to_string()]]
                } else {
                    sentences
                };
                serde_json::json!({"id": pid, "sentences": sentences, "mentions": mentions})
            })
            .collect();
        lines.push_str(&serde_json::json!({"id": doc, "title": doc, "passages": ps}).to_string());
        lines.push('\n');
    }
    builder.read_documents(lines.as_bytes()).unwrap();
    builder.finish()
}
