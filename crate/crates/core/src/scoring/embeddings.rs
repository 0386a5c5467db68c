//! Query and passage vectors, loaded from a file or fetched from an HTTP
//! embedding service.
//!
//! File format: a `dim=<int>` header line followed by JSONL records
//! `{"key": str, "kind": "query"|"passage", "vec": [float, ...]}`. Query keys
//! are query texts (plain or augmented); passage keys are passage ids.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorKind {
    Query,
    Passage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    File,
    Service,
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    query_vectors: HashMap<String, Vec<f32>>,
    passage_vectors: HashMap<String, Vec<f32>>,
    provenance: Provenance,
}

impl EmbeddingTable {
    pub fn new(dim: usize, provenance: Provenance) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        EmbeddingTable {
            dim,
            query_vectors: HashMap::new(),
            passage_vectors: HashMap::new(),
            provenance,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.query_vectors.len() + self.passage_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&mut self, kind: VectorKind, key: impl Into<String>, vec: Vec<f32>) -> Result<()> {
        if vec.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vec.len(),
            });
        }
        match kind {
            VectorKind::Query => self.query_vectors.insert(key.into(), vec),
            VectorKind::Passage => self.passage_vectors.insert(key.into(), vec),
        };
        Ok(())
    }

    pub fn query_vector(&self, key: &str) -> Option<&[f32]> {
        self.query_vectors.get(key).map(Vec::as_slice)
    }

    pub fn passage_vector(&self, passage_id: &str) -> Option<&[f32]> {
        self.passage_vectors.get(passage_id).map(Vec::as_slice)
    }

    /// Multiplies every passage vector by `factor`.
    pub fn scale_passages(&mut self, factor: f32) {
        for v in self.passage_vectors.values_mut() {
            for x in v.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = loop {
            match lines.next() {
                Some(line) => {
                    let line = line.map_err(|e| Error::io("reading embeddings", e))?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => {
                    return Err(Error::EmbeddingRecord {
                        index: 0,
                        message: "missing `dim=<int>` header".into(),
                    })
                }
            }
        };
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.trim().parse().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::EmbeddingRecord {
                index: 0,
                message: format!("bad header `{header}`, expected `dim=<positive int>`"),
            })?;

        #[derive(Deserialize)]
        struct Record {
            key: String,
            kind: VectorKind,
            vec: Vec<f32>,
        }

        let mut table = EmbeddingTable::new(dim, Provenance::File);
        let mut index = 0usize;
        for line in lines {
            let line = line.map_err(|e| Error::io("reading embeddings", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line).map_err(|e| Error::EmbeddingRecord {
                index,
                message: e.to_string(),
            })?;
            if record.vec.len() != dim {
                return Err(Error::EmbeddingRecord {
                    index,
                    message: format!("vector has dimension {}, header says {dim}", record.vec.len()),
                });
            }
            let existing = match record.kind {
                VectorKind::Query => table.query_vectors.contains_key(&record.key),
                VectorKind::Passage => table.passage_vectors.contains_key(&record.key),
            };
            if existing {
                return Err(Error::EmbeddingRecord {
                    index,
                    message: format!("duplicate key `{}`", record.key),
                });
            }
            table.insert(record.kind, record.key, record.vec)?;
            index += 1;
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::read(BufReader::new(file))
    }

    /// Writes the table in the file format, records sorted by (kind, key).
    pub fn write<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("writing embeddings", e);
        writeln!(w, "dim={}", self.dim).map_err(io)?;
        for (kind, map) in [
            (VectorKind::Query, &self.query_vectors),
            (VectorKind::Passage, &self.passage_vectors),
        ] {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for key in keys {
                let record = serde_json::json!({"key": key, "kind": kind, "vec": map[key]});
                writeln!(w, "{record}").map_err(io)?;
            }
        }
        Ok(())
    }
}

/// Sends one request body to an endpoint and returns the response body.
/// Non-2xx statuses and timeouts are errors.
pub trait Transport: Send + Sync {
    fn post(&self, endpoint: &str, body: &str) -> std::result::Result<String, String>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
        HttpTransport { agent: config.into() }
    }
}

impl Transport for HttpTransport {
    fn post(&self, endpoint: &str, body: &str) -> std::result::Result<String, String> {
        let mut response = self
            .agent
            .post(endpoint)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| e.to_string())?;
        response.body_mut().read_to_string().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub endpoint: String,
    /// Endpoint for passage texts; the query endpoint when absent.
    #[serde(default)]
    pub passage_endpoint: Option<String>,
    #[serde(default = "ServiceConfig::default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "ServiceConfig::default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "ServiceConfig::default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "ServiceConfig::default_backoff_ms")]
    pub backoff_ms: u64,
}

impl ServiceConfig {
    fn default_timeout_ms() -> u64 {
        30_000
    }
    fn default_max_attempts() -> u32 {
        4
    }
    fn default_batch_size() -> usize {
        32
    }
    fn default_backoff_ms() -> u64 {
        200
    }

    pub fn new(endpoint: impl Into<String>) -> Self {
        ServiceConfig {
            endpoint: endpoint.into(),
            passage_endpoint: None,
            timeout_ms: Self::default_timeout_ms(),
            max_attempts: Self::default_max_attempts(),
            batch_size: Self::default_batch_size(),
            backoff_ms: Self::default_backoff_ms(),
        }
    }
}

type CacheKey = (VectorKind, [u8; 32]);

/// Embedding service client. Responses are cached by (kind, SHA-256 of text);
/// a text is sent at most once per client.
pub struct EmbeddingService {
    config: ServiceConfig,
    transport: Box<dyn Transport>,
    cache: RwLock<HashMap<CacheKey, Vec<f32>>>,
    dim: RwLock<Option<usize>>,
    calls: AtomicU64,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

impl EmbeddingService {
    pub fn new(config: ServiceConfig) -> Self {
        let transport = HttpTransport::new(Duration::from_millis(config.timeout_ms));
        Self::with_transport(config, Box::new(transport))
    }

    pub fn with_transport(config: ServiceConfig, transport: Box<dyn Transport>) -> Self {
        EmbeddingService {
            config,
            transport,
            cache: RwLock::new(HashMap::new()),
            dim: RwLock::new(None),
            calls: AtomicU64::new(0),
        }
    }

    /// Number of outbound requests made so far (retries included).
    pub fn outbound_calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn key(kind: VectorKind, text: &str) -> CacheKey {
        (kind, Sha256::digest(text.as_bytes()).into())
    }

    fn endpoint(&self, kind: VectorKind) -> &str {
        match kind {
            VectorKind::Query => &self.config.endpoint,
            VectorKind::Passage => self.config.passage_endpoint.as_deref().unwrap_or(&self.config.endpoint),
        }
    }

    fn request(&self, kind: VectorKind, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let body = serde_json::to_string(&EmbedRequest { texts })?;
        let attempts = self.config.max_attempts.max(1);
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            self.calls.fetch_add(1, Ordering::Relaxed);
            match self.transport.post(self.endpoint(kind), &body) {
                Ok(text) => {
                    let response: EmbedResponse =
                        serde_json::from_str(&text).map_err(|e| Error::Service(format!("bad response body: {e}")))?;
                    if response.vectors.len() != texts.len() {
                        return Err(Error::Service(format!(
                            "sent {} texts, received {} vectors",
                            texts.len(),
                            response.vectors.len()
                        )));
                    }
                    return Ok(response.vectors);
                }
                Err(e) => {
                    warn!("embedding request attempt {attempt}/{attempts} failed: {e}");
                    last_error = e;
                    if attempt < attempts {
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                }
            }
        }
        Err(Error::Service(format!(
            "giving up after {attempts} attempts: {last_error}"
        )))
    }

    /// Embeds `texts`, serving repeats from the cache.
    pub fn embed(&self, kind: VectorKind, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let keys: Vec<CacheKey> = texts.iter().map(|t| Self::key(kind, t)).collect();
        let mut missing: Vec<(CacheKey, &str)> = Vec::new();
        {
            let cache = self.cache.read().expect("cache lock poisoned");
            let mut queued = std::collections::HashSet::new();
            for (key, text) in keys.iter().zip(texts) {
                if !cache.contains_key(key) && queued.insert(*key) {
                    missing.push((*key, text));
                }
            }
        }

        for batch in missing.chunks(self.config.batch_size.max(1)) {
            let batch_texts: Vec<&str> = batch.iter().map(|(_, t)| *t).collect();
            debug!("embedding {} {:?} texts", batch_texts.len(), kind);
            let vectors = self.request(kind, &batch_texts)?;
            let mut dim = self.dim.write().expect("dim lock poisoned");
            let mut cache = self.cache.write().expect("cache lock poisoned");
            for ((key, _), vec) in batch.iter().zip(vectors) {
                let expected = *dim.get_or_insert(vec.len());
                if vec.len() != expected || expected == 0 {
                    return Err(Error::DimensionMismatch {
                        expected,
                        actual: vec.len(),
                    });
                }
                cache.insert(*key, vec);
            }
        }

        let cache = self.cache.read().expect("cache lock poisoned");
        Ok(keys.iter().map(|k| cache[k].clone()).collect())
    }

    /// Materializes a table holding the given query texts and passages
    /// (passage id, passage text).
    pub fn build_table(&self, queries: &[String], passages: &[(String, String)]) -> Result<EmbeddingTable> {
        let query_refs: Vec<&str> = queries.iter().map(String::as_str).collect();
        let passage_refs: Vec<&str> = passages.iter().map(|(_, t)| t.as_str()).collect();
        let query_vecs = self.embed(VectorKind::Query, &query_refs)?;
        let passage_vecs = self.embed(VectorKind::Passage, &passage_refs)?;
        let dim = self
            .dim
            .read()
            .expect("dim lock poisoned")
            .ok_or_else(|| Error::Service("no vectors were requested".into()))?;
        let mut table = EmbeddingTable::new(dim, Provenance::Service);
        for (text, vec) in queries.iter().zip(query_vecs) {
            table.insert(VectorKind::Query, text.clone(), vec)?;
        }
        for ((id, _), vec) in passages.iter().zip(passage_vecs) {
            table.insert(VectorKind::Passage, id.clone(), vec)?;
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::{Arc, Mutex};

    #[test]
    fn parses_file_format() {
        let text = "dim=4\n\
            {\"key\":\"q\",\"kind\":\"query\",\"vec\":[1,0,0,0]}\n\
            {\"key\":\"p1\",\"kind\":\"passage\",\"vec\":[0,1,0,0]}\n\
            {\"key\":\"p2\",\"kind\":\"passage\",\"vec\":[0,0,1,0.5]}\n";
        let table = EmbeddingTable::read(text.as_bytes()).unwrap();
        assert_eq!(table.dim(), 4);
        assert_eq!(table.len(), 3);
        assert_eq!(table.passage_vector("p2").unwrap(), &[0.0, 0.0, 1.0, 0.5]);
        assert!(table.query_vector("p1").is_none());
    }

    #[test]
    fn wrong_dimension_names_record() {
        let text = "dim=4\n\
            {\"key\":\"a\",\"kind\":\"passage\",\"vec\":[1,0,0,0]}\n\
            {\"key\":\"b\",\"kind\":\"passage\",\"vec\":[1,0,0]}\n";
        match EmbeddingTable::read(text.as_bytes()) {
            Err(Error::EmbeddingRecord { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_header_is_an_error() {
        let text = "{\"key\":\"a\",\"kind\":\"passage\",\"vec\":[1]}\n";
        assert!(EmbeddingTable::read(text.as_bytes()).is_err());
    }

    #[test]
    fn write_then_read_preserves_vectors() {
        let mut t = EmbeddingTable::new(2, Provenance::File);
        t.insert(VectorKind::Query, "what?", vec![0.25, -1.5]).unwrap();
        t.insert(VectorKind::Passage, "p", vec![3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let back = EmbeddingTable::read(buf.as_slice()).unwrap();
        assert_eq!(back.query_vector("what?").unwrap(), &[0.25, -1.5]);
        assert_eq!(back.passage_vector("p").unwrap(), &[3.0, 4.0]);
    }

    /// Embeds each text as [len, 1.0] and records every request body.
    struct FakeTransport {
        requests: Arc<Mutex<Vec<String>>>,
        fail_first: Mutex<u32>,
    }

    impl Transport for FakeTransport {
        fn post(&self, _endpoint: &str, body: &str) -> std::result::Result<String, String> {
            self.requests.lock().unwrap().push(body.to_string());
            let mut fail = self.fail_first.lock().unwrap();
            if *fail > 0 {
                *fail -= 1;
                return Err("status 503".into());
            }
            let req: serde_json::Value = serde_json::from_str(body).unwrap();
            let vectors: Vec<Vec<f32>> = req["texts"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| vec![t.as_str().unwrap().len() as f32, 1.0])
                .collect();
            Ok(serde_json::json!({ "vectors": vectors }).to_string())
        }
    }

    fn service(fail_first: u32, max_attempts: u32) -> (EmbeddingService, Arc<Mutex<Vec<String>>>) {
        let requests = Arc::new(Mutex::new(Vec::new()));
        let transport = FakeTransport {
            requests: requests.clone(),
            fail_first: Mutex::new(fail_first),
        };
        let mut config = ServiceConfig::new("http://unused");
        config.backoff_ms = 1;
        config.max_attempts = max_attempts;
        config.batch_size = 2;
        (EmbeddingService::with_transport(config, Box::new(transport)), requests)
    }

    #[test]
    fn repeated_text_is_fetched_once() {
        let (svc, requests) = service(0, 3);
        let a = svc.embed(VectorKind::Query, &["same text"]).unwrap();
        let b = svc.embed(VectorKind::Query, &["same text"]).unwrap();
        assert_eq!(a, b);
        assert_eq!(svc.outbound_calls(), 1);
        assert_eq!(requests.lock().unwrap().len(), 1);
    }

    #[test]
    fn batches_and_preserves_order() {
        let (svc, requests) = service(0, 3);
        let out = svc
            .embed(VectorKind::Passage, &["a", "bbb", "a", "cc", "dddd"])
            .unwrap();
        let lens: Vec<f32> = out.iter().map(|v| v[0]).collect();
        assert_eq!(lens, [1.0, 3.0, 1.0, 2.0, 4.0]);
        // four distinct texts in batches of two
        assert_eq!(requests.lock().unwrap().len(), 2);
    }

    #[test]
    fn retries_then_succeeds() {
        let (svc, _) = service(2, 3);
        svc.embed(VectorKind::Query, &["x"]).unwrap();
        assert_eq!(svc.outbound_calls(), 3);
    }

    #[test]
    fn gives_up_after_attempt_cap() {
        let (svc, _) = service(5, 3);
        assert!(matches!(svc.embed(VectorKind::Query, &["x"]), Err(Error::Service(_))));
        assert_eq!(svc.outbound_calls(), 3);
    }

    #[test]
    fn build_table_keys_queries_by_text_and_passages_by_id() {
        let (svc, _) = service(0, 1);
        let table = svc
            .build_table(&["Q?".to_string()], &[("p1".to_string(), "abc".to_string())])
            .unwrap();
        assert_eq!(table.provenance(), Provenance::Service);
        assert_eq!(table.query_vector("Q?").unwrap(), &[2.0, 1.0]);
        assert_eq!(table.passage_vector("p1").unwrap(), &[3.0, 1.0]);
    }
}
