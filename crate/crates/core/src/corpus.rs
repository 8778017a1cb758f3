//! Bibliographic record ingestion.
//!
//! Two input formats are understood: the tab-delimited export produced by
//! Web of Science (a header row of two-letter field tags followed by one
//! record per line) and a canonical JSON-lines format, one [`Document`] per
//! line, which is also what every downstream stage writes.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Earliest and latest calendar years accepted in a record.
pub const YEAR_RANGE: std::ops::RangeInclusive<i32> = 1900..=2100;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    MalformedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: bad publication year {value:?}")]
    BadYear { line: usize, value: String },
    #[error("line {line}: empty record id")]
    EmptyId { line: usize },
    #[error("line {line}: malformed JSON record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: duplicate record id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("year_min {year_min} exceeds year_max {year_max}")]
    InvalidFilter { year_min: i32, year_max: i32 },
}

/// One bibliographic record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub year: Option<i32>,
    pub doc_type: String,
    pub language: String,
}

impl Document {
    /// The text handed to an annotator: title and abstract joined as two
    /// sentences.
    pub fn merged_text(&self) -> String {
        merge_text(&self.title, &self.abstract_text)
    }
}

/// Join a title and an abstract with `". "`, skipping the period when the
/// title already ends a sentence and dropping the separator entirely when
/// there is no abstract.
pub fn merge_text(title: &str, abstract_text: &str) -> String {
    let title = title.trim_end();
    let abstract_text = abstract_text.trim();
    if abstract_text.is_empty() {
        return title.to_string();
    }
    if title.is_empty() {
        return abstract_text.to_string();
    }
    let sep = if title.ends_with(['.', '?', '!']) { " " } else { ". " };
    let mut out = String::with_capacity(title.len() + sep.len() + abstract_text.len());
    out.push_str(title);
    out.push_str(sep);
    out.push_str(abstract_text);
    out
}

fn parse_year(raw: &str, line: usize) -> Result<Option<i32>, CorpusError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    let bad = || CorpusError::BadYear {
        line,
        value: raw.to_string(),
    };
    if raw.len() != 4 || !raw.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let year: i32 = raw.parse().map_err(|_| bad())?;
    if !YEAR_RANGE.contains(&year) {
        return Err(bad());
    }
    Ok(Some(year))
}

fn decode(raw: &[u8]) -> Result<&str, CorpusError> {
    let text = std::str::from_utf8(raw).map_err(|_| CorpusError::NotUtf8)?;
    Ok(text.strip_prefix('\u{feff}').unwrap_or(text))
}

struct Columns {
    width: usize,
    id: usize,
    year: usize,
    title: Option<usize>,
    abstract_text: Option<usize>,
    doc_type: Option<usize>,
    language: Option<usize>,
}

impl Columns {
    fn from_header(header: &str) -> Result<Self, CorpusError> {
        let tags: Vec<&str> = header.split('\t').map(str::trim).collect();
        let find = |tag: &str| tags.iter().position(|t| *t == tag);
        let id = find("UT").ok_or_else(|| CorpusError::MalformedHeader("missing UT tag".into()))?;
        let year = find("PY").ok_or_else(|| CorpusError::MalformedHeader("missing PY tag".into()))?;
        Ok(Columns {
            width: tags.len(),
            id,
            year,
            title: find("TI"),
            abstract_text: find("AB"),
            doc_type: find("DT"),
            language: find("LA"),
        })
    }
}

/// Parse a Web of Science tab-delimited export.
///
/// Column order follows the header; unknown tags are ignored. Missing `TI`,
/// `AB`, `DT` or `LA` columns yield empty strings, but `UT` and `PY` are
/// mandatory. An empty `PY` cell becomes a record without a year.
pub fn parse_wos_export(raw: &[u8]) -> Result<Vec<Document>, CorpusError> {
    let text = decode(raw)?;
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l,
            None => return Err(CorpusError::MalformedHeader("empty input".into())),
        }
    };
    let cols = Columns::from_header(header)?;
    let cell = |fields: &[&str], idx: Option<usize>| {
        idx.map(|i| fields[i].trim().to_string()).unwrap_or_default()
    };

    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, l) in lines {
        let line = idx + 1;
        if l.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != cols.width {
            return Err(CorpusError::MalformedRow {
                line,
                expected: cols.width,
                found: fields.len(),
            });
        }
        let id = fields[cols.id].trim().to_string();
        if id.is_empty() {
            return Err(CorpusError::EmptyId { line });
        }
        let year = parse_year(fields[cols.year], line)?;
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId { line, id });
        }
        docs.push(Document {
            id,
            title: cell(&fields, cols.title),
            abstract_text: cell(&fields, cols.abstract_text),
            year,
            doc_type: cell(&fields, cols.doc_type),
            language: cell(&fields, cols.language),
        });
    }
    Ok(docs)
}

/// Parse canonical JSON-lines. Blank lines are skipped.
pub fn parse_canonical_jsonl(raw: &[u8]) -> Result<Vec<Document>, CorpusError> {
    let text = decode(raw)?;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, l) in text.lines().enumerate() {
        let line = idx + 1;
        if l.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(l).map_err(|e| CorpusError::MalformedLine {
            line,
            message: e.to_string(),
        })?;
        if doc.id.is_empty() {
            return Err(CorpusError::EmptyId { line });
        }
        if let Some(y) = doc.year {
            if !YEAR_RANGE.contains(&y) {
                return Err(CorpusError::BadYear {
                    line,
                    value: y.to_string(),
                });
            }
        }
        if !seen.insert(doc.id.clone()) {
            return Err(CorpusError::DuplicateId { line, id: doc.id });
        }
        docs.push(doc);
    }
    Ok(docs)
}

/// Write documents as canonical JSON-lines (trailing newline after every
/// record).
pub fn write_canonical_jsonl(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        out.push_str(&serde_json::to_string(doc).expect("documents always serialize"));
        out.push('\n');
    }
    out
}

/// Year, document-type and language refinements applied to a corpus.
///
/// Matching of types and languages is case-insensitive after trimming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFilter")]
pub struct CorpusFilter {
    year_min: i32,
    year_max: i32,
    allowed_doc_types: BTreeSet<String>,
    allowed_languages: BTreeSet<String>,
}

#[derive(Deserialize)]
struct RawFilter {
    year_min: i32,
    year_max: i32,
    allowed_doc_types: BTreeSet<String>,
    allowed_languages: BTreeSet<String>,
}

impl TryFrom<RawFilter> for CorpusFilter {
    type Error = CorpusError;

    fn try_from(raw: RawFilter) -> Result<Self, Self::Error> {
        CorpusFilter::new(
            raw.year_min,
            raw.year_max,
            raw.allowed_doc_types,
            raw.allowed_languages,
        )
    }
}

fn fold(s: &str) -> String {
    s.trim().to_lowercase()
}

impl CorpusFilter {
    pub fn new<T, L>(
        year_min: i32,
        year_max: i32,
        doc_types: T,
        languages: L,
    ) -> Result<Self, CorpusError>
    where
        T: IntoIterator,
        T::Item: AsRef<str>,
        L: IntoIterator,
        L::Item: AsRef<str>,
    {
        if year_min > year_max {
            return Err(CorpusError::InvalidFilter { year_min, year_max });
        }
        Ok(CorpusFilter {
            year_min,
            year_max,
            allowed_doc_types: doc_types.into_iter().map(|s| fold(s.as_ref())).collect(),
            allowed_languages: languages.into_iter().map(|s| fold(s.as_ref())).collect(),
        })
    }

    pub fn year_min(&self) -> i32 {
        self.year_min
    }

    pub fn year_max(&self) -> i32 {
        self.year_max
    }

    pub fn with_years(mut self, year_min: i32, year_max: i32) -> Result<Self, CorpusError> {
        if year_min > year_max {
            return Err(CorpusError::InvalidFilter { year_min, year_max });
        }
        self.year_min = year_min;
        self.year_max = year_max;
        Ok(self)
    }

    /// Web of Science reports multi-valued types as `"Article; Proceedings
    /// Paper"`; a record passes if any listed type is allowed.
    fn type_allowed(&self, doc_type: &str) -> bool {
        doc_type
            .split(';')
            .any(|t| self.allowed_doc_types.contains(&fold(t)))
    }

    pub fn accepts(&self, doc: &Document) -> bool {
        let Some(year) = doc.year else { return false };
        (self.year_min..=self.year_max).contains(&year)
            && self.type_allowed(&doc.doc_type)
            && self.allowed_languages.contains(&fold(&doc.language))
    }
}

impl Default for CorpusFilter {
    /// 2004-2021, articles and proceedings papers, English only.
    fn default() -> Self {
        CorpusFilter::new(2004, 2021, ["Article", "Proceedings Paper"], ["English"])
            .expect("default filter is valid")
    }
}

/// Keep the documents accepted by `filter`, in input order.
pub fn filter_corpus(docs: &[Document], filter: &CorpusFilter) -> Vec<Document> {
    docs.iter().filter(|d| filter.accepts(d)).cloned().collect()
}
