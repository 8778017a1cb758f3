//! Entity linking: turning document text into topic annotations.
//!
//! Two annotators produce [`EntityAnnotation`]s. [`Gazetteer`] is an
//! offline, deterministic longest-match dictionary tagger.
//! [`RemoteAnnotator`] talks to a TAGME-compatible HTTP endpoint. Either
//! output is then cleaned with a [`Blacklist`] of noise entities such as
//! publisher names picked up from copyright notices.

mod gazetteer;
mod remote;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gazetteer::{Gazetteer, GazetteerEntry};
pub use remote::{
    annotate_remote, AnnotatorConfig, HttpReply, HttpTransport, RemoteAnnotator, RemoteOutcome,
    ReqwestTransport, TOKEN_ENV_VAR,
};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("authentication rejected (HTTP {0})")]
    AuthError(u16),
    #[error("no API token; set {TOKEN_ENV_VAR}")]
    MissingToken,
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected HTTP status {0}")]
    HttpStatus(u16),
    #[error("malformed annotator response: {0}")]
    MalformedResponse(String),
    #[error("invalid annotator configuration: {0}")]
    InvalidConfig(String),
    #[error("gazetteer line {line}: {message}")]
    Gazetteer { line: usize, message: String },
    #[error("annotations line {line}: {message}")]
    MalformedAnnotations { line: usize, message: String },
    #[error("document {doc_id}: {source}")]
    Document {
        doc_id: String,
        #[source]
        source: Box<AnnotateError>,
    },
}

/// A linked mention in one document.
///
/// `start` and `end` are half-open character offsets (Unicode scalar
/// values, not bytes) into the annotated text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityAnnotation {
    pub doc_id: String,
    pub entity_id: String,
    pub entity_title: String,
    pub mention: String,
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

impl EntityAnnotation {
    fn overlaps(&self, other: &EntityAnnotation) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Entity titles to drop after annotation, compared case-insensitively.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blacklist {
    titles: BTreeSet<String>,
}

impl Blacklist {
    pub fn new<I>(titles: I) -> Self
    where
        I: IntoIterator,
        I::Item: AsRef<str>,
    {
        Blacklist {
            titles: titles
                .into_iter()
                .map(|t| t.as_ref().trim().to_lowercase())
                .filter(|t| !t.is_empty())
                .collect(),
        }
    }

    /// One title per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        Blacklist::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn contains(&self, title: &str) -> bool {
        self.titles.contains(&title.trim().to_lowercase())
    }

    pub fn is_empty(&self) -> bool {
        self.titles.is_empty()
    }

    pub fn len(&self) -> usize {
        self.titles.len()
    }
}

pub fn apply_blacklist(annos: Vec<EntityAnnotation>, blacklist: &Blacklist) -> Vec<EntityAnnotation> {
    if blacklist.is_empty() {
        return annos;
    }
    annos
        .into_iter()
        .filter(|a| !blacklist.contains(&a.entity_title))
        .collect()
}

/// Keep a non-overlapping subset of `candidates`, preferring higher scores,
/// then earlier starts, then longer spans. The result is sorted by start.
pub(crate) fn resolve_overlaps(mut candidates: Vec<EntityAnnotation>) -> Vec<EntityAnnotation> {
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.start.cmp(&b.start))
            .then((b.end - b.start).cmp(&(a.end - a.start)))
    });
    let mut kept: Vec<EntityAnnotation> = Vec::with_capacity(candidates.len());
    for c in candidates {
        if kept.iter().all(|k| !k.overlaps(&c)) {
            kept.push(c);
        }
    }
    kept.sort_by_key(|a| a.start);
    kept
}

pub fn write_annotations_jsonl(annos: &[EntityAnnotation]) -> String {
    let mut out = String::new();
    for a in annos {
        out.push_str(&serde_json::to_string(a).expect("annotations always serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_annotations_jsonl(text: &str) -> Result<Vec<EntityAnnotation>, AnnotateError> {
    let mut out = Vec::new();
    for (idx, l) in text.lines().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        let a: EntityAnnotation =
            serde_json::from_str(l).map_err(|e| AnnotateError::MalformedAnnotations {
                line: idx + 1,
                message: e.to_string(),
            })?;
        if a.start >= a.end {
            return Err(AnnotateError::MalformedAnnotations {
                line: idx + 1,
                message: format!("empty span [{}, {})", a.start, a.end),
            });
        }
        out.push(a);
    }
    Ok(out)
}

/// Sort annotations by document id, then by start offset. Stable for
/// identical keys, so per-document order from the annotator is kept.
pub fn sort_for_persistence(annos: &mut [EntityAnnotation]) {
    annos.sort_by(|a, b| a.doc_id.cmp(&b.doc_id).then(a.start.cmp(&b.start)));
}

/// Distinct entity titles, in sorted order.
pub fn distinct_titles(annos: &[EntityAnnotation]) -> BTreeSet<&str> {
    annos.iter().map(|a| a.entity_title.as_str()).collect()
}
