//! Entity-annotated document corpus: ingestion, validation, the entity
//! index, and the on-disk store.
//!
//! Sentences arrive pre-tokenized and are never re-tokenized here, so mention
//! offsets from the input stay valid for the lifetime of the corpus.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// On-disk store layout version. Bumped on any incompatible change.
pub const STORE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    #[serde(rename = "name")]
    pub canonical_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    #[serde(rename = "entity")]
    pub entity_id: String,
    #[serde(rename = "sentence")]
    pub sentence_idx: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub id: String,
    pub doc_id: String,
    pub index_in_doc: usize,
    pub sentences: Vec<Vec<String>>,
    pub mentions: Vec<Mention>,
}

impl Passage {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Sentences joined by single spaces, tokens joined by single spaces.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for token in self.sentences.iter().flatten() {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(token);
        }
        out
    }

    pub fn entity_set(&self) -> BTreeSet<&str> {
        self.mentions.iter().map(|m| m.entity_id.as_str()).collect()
    }

    pub fn mentions_entity(&self, entity_id: &str) -> bool {
        self.mentions.iter().any(|m| m.entity_id == entity_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub passages: Vec<Passage>,
}

/// entity → passages and entity → per-document mention counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityIndex {
    /// entity id → set of (doc id, passage id)
    pub postings: BTreeMap<String, BTreeSet<(String, String)>>,
    /// entity id → doc id → number of mentions
    pub doc_mentions: BTreeMap<String, BTreeMap<String, usize>>,
}

impl EntityIndex {
    pub fn build(documents: &[Document]) -> Self {
        let mut index = EntityIndex::default();
        for doc in documents {
            for passage in &doc.passages {
                for mention in &passage.mentions {
                    index
                        .postings
                        .entry(mention.entity_id.clone())
                        .or_default()
                        .insert((doc.id.clone(), passage.id.clone()));
                    *index
                        .doc_mentions
                        .entry(mention.entity_id.clone())
                        .or_default()
                        .entry(doc.id.clone())
                        .or_default() += 1;
                }
            }
        }
        index
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownEntityPolicy {
    Reject,
    #[default]
    AutoRegister,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    pub unknown_entities: UnknownEntityPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub documents: usize,
    pub passages: usize,
    pub mentions: usize,
    pub entities: usize,
}

#[derive(Deserialize, Serialize)]
struct MentionRecord {
    entity: String,
    sentence: usize,
    start: usize,
    end: usize,
}

#[derive(Deserialize, Serialize)]
struct PassageRecord {
    id: String,
    sentences: Vec<Vec<String>>,
    #[serde(default)]
    mentions: Vec<MentionRecord>,
}

#[derive(Deserialize, Serialize)]
struct DocumentRecord {
    id: String,
    title: String,
    passages: Vec<PassageRecord>,
}

fn parse_line<T: serde::de::DeserializeOwned>(line_no: usize, line: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(line);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        Error::Malformed {
            line: line_no,
            path: if path.is_empty() { ".".into() } else { path },
            message: err.into_inner().to_string(),
        }
    })
}

/// Incremental, single-writer corpus construction. Entities should be added
/// before documents so that canonical names are known when mentions arrive.
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    options: IngestOptions,
    entities: BTreeMap<String, Entity>,
    documents: Vec<Document>,
    doc_ids: HashMap<String, usize>,
    passage_ids: HashMap<String, (usize, usize)>,
}

impl CorpusBuilder {
    pub fn new(options: IngestOptions) -> Self {
        CorpusBuilder {
            options,
            ..Default::default()
        }
    }

    pub fn add_entity(&mut self, entity: Entity) -> Result<()> {
        self.add_entity_at(0, entity)
    }

    fn add_entity_at(&mut self, line: usize, entity: Entity) -> Result<()> {
        if entity.id.is_empty() {
            return Err(Error::Malformed {
                line,
                path: "id".into(),
                message: "entity id must be non-empty".into(),
            });
        }
        if self.entities.contains_key(&entity.id) {
            return Err(Error::DuplicateEntity { line, id: entity.id });
        }
        self.entities.insert(entity.id.clone(), entity);
        Ok(())
    }

    /// Reads an entity vocabulary, one `{"id", "name"}` object per line.
    pub fn read_entities<R: BufRead>(&mut self, reader: R) -> Result<()> {
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("reading entity vocabulary", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entity: Entity = parse_line(i + 1, &line)?;
            self.add_entity_at(i + 1, entity)?;
        }
        Ok(())
    }

    /// Reads corpus JSONL, one document per line.
    pub fn read_documents<R: BufRead>(&mut self, reader: R) -> Result<()> {
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("reading corpus", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: DocumentRecord = parse_line(i + 1, &line)?;
            self.add_record(i + 1, record)?;
        }
        Ok(())
    }

    fn add_record(&mut self, line: usize, record: DocumentRecord) -> Result<()> {
        let malformed = |path: String, message: String| Error::Malformed { line, path, message };
        if record.id.is_empty() {
            return Err(malformed("id".into(), "document id must be non-empty".into()));
        }
        if self.doc_ids.contains_key(&record.id) {
            return Err(Error::DuplicateDocument { line, id: record.id });
        }

        let doc_pos = self.documents.len();
        let mut passages = Vec::with_capacity(record.passages.len());
        let mut seen_here = BTreeSet::new();
        for (p_idx, raw) in record.passages.into_iter().enumerate() {
            let p_path = format!("passages[{p_idx}]");
            if raw.id.is_empty() {
                return Err(malformed(format!("{p_path}.id"), "passage id must be non-empty".into()));
            }
            if self.passage_ids.contains_key(&raw.id) || !seen_here.insert(raw.id.clone()) {
                return Err(Error::DuplicatePassage { line, id: raw.id });
            }
            let mut mentions = Vec::with_capacity(raw.mentions.len());
            for (m_idx, m) in raw.mentions.into_iter().enumerate() {
                let m_path = format!("{p_path}.mentions[{m_idx}]");
                if m.start >= m.end {
                    return Err(malformed(
                        m_path,
                        format!("empty or inverted span [{}, {})", m.start, m.end),
                    ));
                }
                let Some(sentence) = raw.sentences.get(m.sentence) else {
                    return Err(malformed(
                        m_path,
                        format!(
                            "sentence {} out of range ({} sentences)",
                            m.sentence,
                            raw.sentences.len()
                        ),
                    ));
                };
                if m.end > sentence.len() {
                    return Err(malformed(
                        m_path,
                        format!(
                            "span [{}, {}) exceeds sentence length {}",
                            m.start,
                            m.end,
                            sentence.len()
                        ),
                    ));
                }
                if m.entity.is_empty() {
                    return Err(malformed(m_path, "entity id must be non-empty".into()));
                }
                if !self.entities.contains_key(&m.entity) {
                    match self.options.unknown_entities {
                        UnknownEntityPolicy::Reject => {
                            return Err(Error::UnknownMentionEntity {
                                line,
                                path: m_path,
                                entity: m.entity,
                            })
                        }
                        UnknownEntityPolicy::AutoRegister => {
                            warn!("line {line}: {m_path}: auto-registering entity `{}`", m.entity);
                            self.entities.insert(
                                m.entity.clone(),
                                Entity {
                                    id: m.entity.clone(),
                                    canonical_name: m.entity.clone(),
                                },
                            );
                        }
                    }
                }
                mentions.push(Mention {
                    entity_id: m.entity,
                    sentence_idx: m.sentence,
                    start: m.start,
                    end: m.end,
                });
            }
            passages.push(Passage {
                id: raw.id,
                doc_id: record.id.clone(),
                index_in_doc: p_idx,
                sentences: raw.sentences,
                mentions,
            });
        }

        for (p_idx, p) in passages.iter().enumerate() {
            self.passage_ids.insert(p.id.clone(), (doc_pos, p_idx));
        }
        self.doc_ids.insert(record.id.clone(), doc_pos);
        self.documents.push(Document {
            id: record.id,
            title: record.title,
            passages,
        });
        Ok(())
    }

    pub fn finish(self) -> Corpus {
        let index = EntityIndex::build(&self.documents);
        Corpus {
            entities: self.entities,
            documents: self.documents,
            doc_ids: self.doc_ids,
            passage_ids: self.passage_ids,
            index,
        }
    }
}

/// Ingests a corpus stream (and optionally an entity vocabulary) in one go.
pub fn ingest_corpus<R: BufRead, E: BufRead>(
    documents: R,
    entities: Option<E>,
    options: IngestOptions,
) -> Result<Corpus> {
    let mut builder = CorpusBuilder::new(options);
    if let Some(entities) = entities {
        builder.read_entities(entities)?;
    }
    builder.read_documents(documents)?;
    Ok(builder.finish())
}

/// An ingested corpus. Immutable once built; share it behind `&` or `Arc`.
#[derive(Debug, Clone)]
pub struct Corpus {
    entities: BTreeMap<String, Entity>,
    documents: Vec<Document>,
    doc_ids: HashMap<String, usize>,
    passage_ids: HashMap<String, (usize, usize)>,
    index: EntityIndex,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities && self.documents == other.documents && self.index == other.index
    }
}

impl Corpus {
    pub fn counts(&self) -> CorpusCounts {
        CorpusCounts {
            documents: self.documents.len(),
            passages: self.passage_ids.len(),
            mentions: self
                .documents
                .iter()
                .flat_map(|d| &d.passages)
                .map(|p| p.mentions.len())
                .sum(),
            entities: self.entities.len(),
        }
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.doc_ids.get(id).map(|&i| &self.documents[i])
    }

    pub fn passage(&self, id: &str) -> Option<&Passage> {
        self.passage_ids.get(id).map(|&(d, p)| &self.documents[d].passages[p])
    }

    pub fn passages(&self) -> impl Iterator<Item = &Passage> {
        self.documents.iter().flat_map(|d| d.passages.iter())
    }

    pub fn index(&self) -> &EntityIndex {
        &self.index
    }

    /// Passages containing at least one mention of `entity_id`. Unknown
    /// entities yield an empty set.
    pub fn passages_with_entity(&self, entity_id: &str) -> BTreeSet<String> {
        self.index
            .postings
            .get(entity_id)
            .map(|set| set.iter().map(|(_, p)| p.clone()).collect())
            .unwrap_or_default()
    }

    /// Documents mentioning `entity_id`, at most `cap` of them: highest
    /// mention count first, ties by ascending document id.
    pub fn documents_with_entity(&self, entity_id: &str, cap: usize) -> Vec<String> {
        let Some(counts) = self.index.doc_mentions.get(entity_id) else {
            return Vec::new();
        };
        let mut docs: Vec<(&String, usize)> = counts.iter().map(|(d, &c)| (d, c)).collect();
        docs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        docs.truncate(cap);
        docs.into_iter().map(|(d, _)| d.clone()).collect()
    }

    /// Writes the corpus as a store directory: `manifest.json`,
    /// `entities.jsonl`, `docs/NNNNNN.json`, and `entity_index.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let store_err = |message: String| Error::Store {
            path: dir.to_path_buf(),
            message,
        };
        fs::create_dir_all(dir.join("docs")).map_err(|e| Error::io(dir.display().to_string(), e))?;

        let mut doc_files = Vec::with_capacity(self.documents.len());
        for (i, doc) in self.documents.iter().enumerate() {
            let name = format!("docs/{i:06}.json");
            let record = DocumentRecord {
                id: doc.id.clone(),
                title: doc.title.clone(),
                passages: doc
                    .passages
                    .iter()
                    .map(|p| PassageRecord {
                        id: p.id.clone(),
                        sentences: p.sentences.clone(),
                        mentions: p
                            .mentions
                            .iter()
                            .map(|m| MentionRecord {
                                entity: m.entity_id.clone(),
                                sentence: m.sentence_idx,
                                start: m.start,
                                end: m.end,
                            })
                            .collect(),
                    })
                    .collect(),
            };
            write_json(&dir.join(&name), &record)?;
            doc_files.push(name);
        }

        let entities_path = dir.join("entities.jsonl");
        let file = fs::File::create(&entities_path).map_err(|e| Error::io(entities_path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        for entity in self.entities.values() {
            serde_json::to_writer(&mut w, entity)?;
            w.write_all(b"\n")
                .map_err(|e| Error::io(entities_path.display().to_string(), e))?;
        }
        w.flush()
            .map_err(|e| Error::io(entities_path.display().to_string(), e))?;

        write_json(&dir.join("entity_index.json"), &self.index)?;

        let manifest = Manifest {
            format_version: STORE_FORMAT_VERSION,
            counts: self.counts(),
            documents: doc_files,
        };
        write_json(&dir.join("manifest.json"), &manifest).map_err(|e| store_err(e.to_string()))
    }

    /// Loads a store written by [`Corpus::save`]. The serialized entity index
    /// is checked against one rebuilt from the documents.
    pub fn load(dir: &Path) -> Result<Corpus> {
        let store_err = |message: String| Error::Store {
            path: dir.to_path_buf(),
            message,
        };
        let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
        if manifest.format_version != STORE_FORMAT_VERSION {
            return Err(store_err(format!(
                "unsupported format version {} (expected {STORE_FORMAT_VERSION})",
                manifest.format_version
            )));
        }

        let mut builder = CorpusBuilder::new(IngestOptions {
            unknown_entities: UnknownEntityPolicy::Reject,
        });
        let entities_path = dir.join("entities.jsonl");
        let file = fs::File::open(&entities_path).map_err(|e| Error::io(entities_path.display().to_string(), e))?;
        builder.read_entities(std::io::BufReader::new(file))?;
        for (i, name) in manifest.documents.iter().enumerate() {
            let record: DocumentRecord = read_json(&dir.join(name))?;
            builder.add_record(i + 1, record)?;
        }
        let corpus = builder.finish();

        let stored: EntityIndex = read_json(&dir.join("entity_index.json"))?;
        if stored != corpus.index {
            return Err(store_err("entity index does not match documents".into()));
        }
        if corpus.counts() != manifest.counts {
            return Err(store_err(format!(
                "manifest counts {:?} do not match contents {:?}",
                manifest.counts,
                corpus.counts()
            )));
        }
        Ok(corpus)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    counts: CorpusCounts,
    documents: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, value)?;
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Store {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
