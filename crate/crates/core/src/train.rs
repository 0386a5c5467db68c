//! Training-side helpers for an external dense-retriever trainer: the
//! multi-positive contrastive loss, query augmentation with positive
//! passages, and JSONL export.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::eval::EvidenceRecord;
use crate::scoring::{augment_query, render_query};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    #[serde(rename = "query")]
    pub query_text: String,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

impl TrainingSample {
    pub fn validate(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::InvalidSample(format!(
                "sample `{}` has no positives",
                self.query_text
            )));
        }
        let pos: BTreeSet<&String> = self.positives.iter().collect();
        if let Some(both) = self.negatives.iter().find(|n| pos.contains(n)) {
            return Err(Error::InvalidSample(format!(
                "passage `{both}` is both positive and negative"
            )));
        }
        Ok(())
    }
}

/// Sum over positives of -ln softmax(positive | positive + all negatives).
///
/// Each term is evaluated as `M + ln(e^-M + Σ e^(d_j - M))` with
/// `d_j = s⁻_j - s⁺_k` and `M = max(0, max d_j)`, so no exponent is positive.
pub fn contrastive_loss(sample: &TrainingSample, sims: &HashMap<String, f64>) -> Result<f64> {
    sample.validate()?;
    let lookup = |id: &String| {
        sims.get(id)
            .copied()
            .ok_or_else(|| Error::MissingSimilarity(id.clone()))
    };
    let negatives: Vec<f64> = sample.negatives.iter().map(lookup).collect::<Result<_>>()?;
    let mut loss = 0.0;
    for id in &sample.positives {
        let pos = lookup(id)?;
        let shift = negatives.iter().map(|&n| n - pos).fold(0.0f64, f64::max);
        let term = if shift == 0.0 {
            negatives.iter().map(|&n| (n - pos).exp()).sum::<f64>().ln_1p()
        } else {
            let inner = (-shift).exp() + negatives.iter().map(|&n| (n - pos - shift).exp()).sum::<f64>();
            shift + inner.ln()
        };
        loss += term;
    }
    Ok(loss)
}

/// Adds, for every sample and every positive, a sample whose query is the
/// original query followed by that positive's text and whose positives are
/// the remaining ones. Augmented samples left without positives are dropped.
/// Output order: each original followed by its augmentations.
pub fn augment_training_set(
    samples: &[TrainingSample],
    passage_text: impl Fn(&str) -> Option<String>,
) -> Result<Vec<TrainingSample>> {
    let mut out = Vec::with_capacity(samples.len() * 2);
    for sample in samples {
        out.push(sample.clone());
        if sample.positives.len() < 2 {
            continue;
        }
        for (l, promoted) in sample.positives.iter().enumerate() {
            let text = passage_text(promoted).ok_or_else(|| Error::UnknownPassage(promoted.clone()))?;
            out.push(TrainingSample {
                query_text: augment_query(&sample.query_text, &text),
                positives: sample
                    .positives
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != l)
                    .map(|(_, p)| p.clone())
                    .collect(),
                negatives: sample.negatives.clone(),
            });
        }
    }
    Ok(out)
}

/// One sample per evidence record: the rendered relation query, the record's
/// evidence passages as positives, and its negatives as given.
pub fn samples_from_evidence(corpus: &Corpus, records: &[EvidenceRecord]) -> Result<Vec<TrainingSample>> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let head = corpus
            .entity(&r.head)
            .ok_or_else(|| Error::UnknownEntity(r.head.clone()))?;
        let tail = corpus
            .entity(&r.tail)
            .ok_or_else(|| Error::UnknownEntity(r.tail.clone()))?;
        let query = render_query(head, tail)?;
        let mut seen = BTreeSet::new();
        let positives: Vec<String> = r
            .gold_passages()
            .into_iter()
            .filter(|p| seen.insert(p.clone()))
            .collect();
        if positives.is_empty() {
            continue;
        }
        let sample = TrainingSample {
            query_text: query.text,
            positives,
            negatives: r.negatives.clone(),
        };
        sample.validate()?;
        out.push(sample);
    }
    Ok(out)
}

/// Writes one JSON object per sample. The file appears only once it is
/// complete; on error nothing is left at `destination`.
pub fn export_training_jsonl(samples: &[TrainingSample], destination: &Path) -> Result<usize> {
    let dir = match destination.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let ctx = || destination.display().to_string();
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(ctx(), e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        for s in samples {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n").map_err(|e| Error::io(ctx(), e))?;
        }
        w.flush().map_err(|e| Error::io(ctx(), e))?;
    }
    tmp.persist(destination).map_err(|e| Error::io(ctx(), e.error))?;
    Ok(samples.len())
}

pub fn read_training_jsonl<R: std::io::BufRead>(reader: R) -> Result<Vec<TrainingSample>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("reading training samples", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: TrainingSample = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            path: ".".into(),
            message: e.to_string(),
        })?;
        out.push(sample);
    }
    Ok(out)
}
