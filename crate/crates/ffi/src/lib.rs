//! C ABI over the hopchain engine.
//!
//! Conventions:
//! - every fallible function returns an `HcStatus`; results go through out
//!   pointers and are written only on success
//! - strings in are NUL-terminated UTF-8; strings out are heap strings that
//!   the caller releases with `hc_string_free`
//! - structured results are JSON documents
//! - after a failure, `hc_last_error_message` describes it (per thread)

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hopchain::config::PipelineConfig;
use hopchain::corpus::{ingest_corpus, Corpus, Entity, IngestOptions};
use hopchain::pipeline::{PairRequest, Retriever};
use hopchain::scoring::{normalize_text, render_query, RankedRecord};
use hopchain::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    MalformedInput = 4,
    NotFound = 5,
    InvalidQuery = 6,
    InvalidConfig = 7,
    Embedding = 8,
    Panic = 9,
}

/// Opaque corpus handle.
pub struct HcCorpus {
    corpus: Corpus,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HcCounts {
    pub documents: u64,
    pub passages: u64,
    pub mentions: u64,
    pub entities: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', "\\0")).expect("interior NULs replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HcStatus {
    match e {
        Error::Malformed { .. }
        | Error::DuplicateDocument { .. }
        | Error::DuplicatePassage { .. }
        | Error::DuplicateEntity { .. }
        | Error::UnknownMentionEntity { .. }
        | Error::Json(_)
        | Error::Store { .. }
        | Error::InvalidSample(_) => HcStatus::MalformedInput,
        Error::UnknownEntity(_) | Error::UnknownPassage(_) | Error::UnknownNode(_) => HcStatus::NotFound,
        Error::InvalidQuery(_) => HcStatus::InvalidQuery,
        Error::Config(_) => HcStatus::InvalidConfig,
        Error::DimensionMismatch { .. }
        | Error::EmbeddingRecord { .. }
        | Error::MissingPassageVector(_)
        | Error::MissingQueryVector(_)
        | Error::MissingAugmentedVector { .. }
        | Error::MissingSimilarity(_)
        | Error::Service(_) => HcStatus::Embedding,
        Error::Io { .. } => HcStatus::Io,
    }
}

/// Internal failure carrying its status.
struct Fail(HcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, turning errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HcStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal error: {message}"));
            HcStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn arg_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(HcStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(HcStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

fn out_ptr<T>(p: *mut T, name: &str) -> Result<*mut T, Fail> {
    if p.is_null() {
        Err(Fail(HcStatus::NullArgument, format!("`{name}` is null")))
    } else {
        Ok(p)
    }
}

fn handle<'a>(p: *const HcCorpus) -> Result<&'a HcCorpus, Fail> {
    if p.is_null() {
        return Err(Fail(HcStatus::NullArgument, "`corpus` is null".into()));
    }
    // SAFETY: non-null handles come from hc_corpus_open / hc_corpus_ingest
    Ok(unsafe { &*p })
}

fn into_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(HcStatus::MalformedInput, "result contains a NUL byte".into()))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<*mut c_char, Fail> {
    into_c_string(serde_json::to_string(value).map_err(Error::from)?)
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn hc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn hc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opens a store directory written by `hopchain ingest`.
///
/// # Safety
/// `store_dir` is a NUL-terminated string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hc_corpus_open(store_dir: *const c_char, out: *mut *mut HcCorpus) -> HcStatus {
    guard(|| {
        let dir = arg_str(store_dir, "store_dir")?;
        let out = out_ptr(out, "out")?;
        let corpus = Corpus::load(Path::new(dir))?;
        *out = Box::into_raw(Box::new(HcCorpus { corpus }));
        Ok(())
    })
}

/// Ingests a corpus JSONL file (and optional entity JSONL, may be null)
/// into memory without writing a store.
///
/// # Safety
/// String arguments are NUL-terminated or null where allowed; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn hc_corpus_ingest(
    corpus_jsonl: *const c_char,
    entities_jsonl: *const c_char,
    out: *mut *mut HcCorpus,
) -> HcStatus {
    guard(|| {
        let docs_path = arg_str(corpus_jsonl, "corpus_jsonl")?;
        let out = out_ptr(out, "out")?;
        let open = |p: &str| {
            File::open(p).map(BufReader::new).map_err(|e| Error::Io {
                context: p.to_string(),
                source: e,
            })
        };
        let entities = if entities_jsonl.is_null() {
            None
        } else {
            Some(open(arg_str(entities_jsonl, "entities_jsonl")?)?)
        };
        let corpus = ingest_corpus(open(docs_path)?, entities, IngestOptions::default())?;
        *out = Box::into_raw(Box::new(HcCorpus { corpus }));
        Ok(())
    })
}

/// Releases a corpus handle. Null is ignored.
///
/// # Safety
/// `corpus` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn hc_corpus_free(corpus: *mut HcCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// # Safety
/// `corpus` is a live handle; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn hc_corpus_counts(corpus: *const HcCorpus, out: *mut HcCounts) -> HcStatus {
    guard(|| {
        let c = handle(corpus)?.corpus.counts();
        *out_ptr(out, "out")? = HcCounts {
            documents: c.documents as u64,
            passages: c.passages as u64,
            mentions: c.mentions as u64,
            entities: c.entities as u64,
        };
        Ok(())
    })
}

/// Sorted passage ids mentioning `entity_id`, as a JSON array.
///
/// # Safety
/// `corpus` is a live handle; `entity_id` is NUL-terminated; `out_json` is valid.
#[no_mangle]
pub unsafe extern "C" fn hc_passages_with_entity(
    corpus: *const HcCorpus,
    entity_id: *const c_char,
    out_json: *mut *mut c_char,
) -> HcStatus {
    guard(|| {
        let corpus = &handle(corpus)?.corpus;
        let entity = arg_str(entity_id, "entity_id")?;
        let out = out_ptr(out_json, "out_json")?;
        *out = to_json(&corpus.passages_with_entity(entity))?;
        Ok(())
    })
}

/// Relation query text for two entity names.
///
/// # Safety
/// Names are NUL-terminated; `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn hc_render_query(
    head_name: *const c_char,
    tail_name: *const c_char,
    out: *mut *mut c_char,
) -> HcStatus {
    guard(|| {
        let entity = |name: &str| Entity {
            id: name.to_string(),
            canonical_name: name.to_string(),
        };
        let head = entity(arg_str(head_name, "head_name")?);
        let tail = entity(arg_str(tail_name, "tail_name")?);
        let out = out_ptr(out, "out")?;
        *out = into_c_string(render_query(&head, &tail)?.text)?;
        Ok(())
    })
}

/// Normalized BM25 terms of `text`, as a JSON array.
///
/// # Safety
/// `text` is NUL-terminated; `out_json` is valid.
#[no_mangle]
pub unsafe extern "C" fn hc_normalize_text(text: *const c_char, out_json: *mut *mut c_char) -> HcStatus {
    guard(|| {
        let terms = normalize_text(arg_str(text, "text")?);
        *out_ptr(out_json, "out_json")? = to_json(&terms)?;
        Ok(())
    })
}

#[derive(serde::Serialize)]
struct PairOutput {
    query: String,
    failed: bool,
    ranked: Vec<RankedRecord>,
    contexts: Vec<hopchain::prep::ContextRecord>,
}

/// Retrieves evidence for one pair. `config_json` is a pipeline configuration
/// object (null for defaults). The result is a JSON object with `query`,
/// `failed`, `ranked` (ranked-output records), and `contexts`.
///
/// # Safety
/// `corpus` is a live handle; strings are NUL-terminated or null where
/// allowed; `out_json` is valid.
#[no_mangle]
pub unsafe extern "C" fn hc_retrieve_pair(
    corpus: *const HcCorpus,
    config_json: *const c_char,
    head: *const c_char,
    tail: *const c_char,
    out_json: *mut *mut c_char,
) -> HcStatus {
    guard(|| {
        let corpus = &handle(corpus)?.corpus;
        let config: PipelineConfig = if config_json.is_null() {
            PipelineConfig::default()
        } else {
            serde_json::from_str(arg_str(config_json, "config_json")?)
                .map_err(|e| Fail(HcStatus::InvalidConfig, format!("config_json: {e}")))?
        };
        let pair = PairRequest {
            head: arg_str(head, "head")?.to_string(),
            tail: arg_str(tail, "tail")?.to_string(),
        };
        let out = out_ptr(out_json, "out_json")?;
        let retriever = Retriever::new(corpus, &config)?;
        let r = retriever.retrieve(&pair)?;
        *out = to_json(&PairOutput {
            query: r.query.text.clone(),
            failed: r.mining.failed,
            ranked: r.ranked.iter().enumerate().map(|(i, s)| s.to_record(i + 1)).collect(),
            contexts: r.contexts.iter().map(|c| c.to_record()).collect(),
        })?;
        Ok(())
    })
}
