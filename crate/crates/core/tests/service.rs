//! The HTTP embedding client against a minimal local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use hopchain::scoring::{EmbeddingService, ServiceConfig, VectorKind};
use sha2::{Digest, Sha256};

/// Deterministic 8-dimensional vector for a text.
fn vector_for(text: &str) -> Vec<f32> {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(8)
        .map(|&b| b as f32 / 255.0 - 0.5)
        .collect()
}

struct Server {
    url: String,
    requests: Arc<AtomicUsize>,
}

/// Serves `{"texts": [...]}` → `{"vectors": [...]}`; the first `failures`
/// requests get a 503 instead.
fn serve(failures: usize) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/embed", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = requests.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0u8; length];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            let (status, payload) = if n < failures {
                ("503 Service Unavailable", "{}".to_string())
            } else {
                let request: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let vectors: Vec<Vec<f32>> = request["texts"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|t| vector_for(t.as_str().unwrap()))
                    .collect();
                ("200 OK", serde_json::json!({ "vectors": vectors }).to_string())
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    Server { url, requests }
}

fn config(url: &str) -> ServiceConfig {
    ServiceConfig {
        max_attempts: 3,
        backoff_ms: 1,
        timeout_ms: 5_000,
        ..ServiceConfig::new(url)
    }
}

#[test]
fn embeds_batches_and_caches() {
    let server = serve(0);
    let mut cfg = config(&server.url);
    cfg.batch_size = 2;
    let service = EmbeddingService::new(cfg);
    let texts = ["alpha", "beta", "gamma", "alpha"];
    let vectors = service.embed(VectorKind::Passage, &texts).unwrap();
    assert_eq!(vectors.len(), 4);
    assert_eq!(vectors[0], vector_for("alpha"));
    assert_eq!(vectors[3], vectors[0]);
    // three distinct texts in batches of two
    assert_eq!(service.outbound_calls(), 2);
    service.embed(VectorKind::Passage, &["beta", "gamma"]).unwrap();
    assert_eq!(service.outbound_calls(), 2);
    // same text, other kind: not shared
    service.embed(VectorKind::Query, &["alpha"]).unwrap();
    assert_eq!(service.outbound_calls(), 3);
    assert_eq!(server.requests.load(Ordering::SeqCst), 3);
}

#[test]
fn retries_transient_failures() {
    let server = serve(2);
    let service = EmbeddingService::new(config(&server.url));
    let v = service.embed(VectorKind::Query, &["q"]).unwrap();
    assert_eq!(v[0], vector_for("q"));
    assert_eq!(service.outbound_calls(), 3);
}

#[test]
fn gives_up_after_max_attempts() {
    let server = serve(usize::MAX);
    let service = EmbeddingService::new(config(&server.url));
    let err = service.embed(VectorKind::Query, &["q"]).unwrap_err();
    assert!(err.to_string().contains("3 attempts"), "{err}");
    assert_eq!(server.requests.load(Ordering::SeqCst), 3);
}

#[test]
fn retrieve_uses_the_endpoint_from_the_environment() {
    let server = serve(0);
    let dir = tempfile::tempdir().unwrap();
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/demo");
    let bin = env!("CARGO_BIN_EXE_hopchain");
    let store = dir.path().join("store");
    let status = Command::new(bin)
        .args(["ingest", "--store"])
        .arg(&store)
        .arg("--corpus")
        .arg(demo.join("corpus.jsonl"))
        .arg("--entities")
        .arg(demo.join("entities.jsonl"))
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let out = dir.path().join("run");
    let o = Command::new(bin)
        .args(["retrieve", "--scorer", "dense_sequential", "--store"])
        .arg(&store)
        .arg("--pairs")
        .arg(demo.join("pairs.jsonl"))
        .arg("--out")
        .arg(&out)
        .env("HOPCHAIN_EMBED_ENDPOINT", &server.url)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(server.requests.load(Ordering::SeqCst) > 0);
    let ranked = std::fs::read_to_string(out.join("ranked/000000.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(ranked.lines().next().unwrap()).unwrap();
    assert_eq!(first["scorer"], "dense_sequential");
}
