//! Per-topic annual count series.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::EntityAnnotation;
use crate::corpus::Document;

/// Default minimum number of documents a topic needs across all years.
pub const DEFAULT_MIN_DOCS: u64 = 20;

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("annotation refers to unknown document {0:?}")]
    DanglingAnnotation(String),
    #[error("annotated document {0:?} has no publication year")]
    MissingYear(String),
    #[error("no dated documents to build a year axis from")]
    EmptyCorpus,
    #[error("inconsistent series file: {0}")]
    Inconsistent(String),
}

/// Number of documents per year over a contiguous axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusYearTotals {
    pub year_min: i32,
    pub year_max: i32,
    pub totals: Vec<u64>,
}

impl CorpusYearTotals {
    pub fn len(&self) -> usize {
        self.totals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.totals.is_empty()
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.year_min..=self.year_max
    }

    pub fn year_at(&self, index: usize) -> i32 {
        self.year_min + index as i32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicYearSeries {
    pub topic: String,
    /// Documents mentioning the topic at least once, per year.
    pub counts: Vec<u64>,
    /// Total mentions of the topic, per year.
    pub occurrences: Vec<u64>,
}

impl TopicYearSeries {
    pub fn total_docs(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    pub fn cumulative_counts(&self) -> Vec<u64> {
        self.counts
            .iter()
            .scan(0, |acc, &c| {
                *acc += c;
                Some(*acc)
            })
            .collect()
    }
}

/// Corpus totals plus one series per retained topic, sorted by topic name.
/// This is also the on-disk series file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesSet {
    #[serde(flatten)]
    pub totals: CorpusYearTotals,
    pub topics: Vec<TopicYearSeries>,
}

impl SeriesSet {
    /// Check array lengths and the count invariants after loading from disk.
    pub fn validate(&self) -> Result<(), SeriesError> {
        let t = &self.totals;
        if t.year_min > t.year_max || t.len() != (t.year_max - t.year_min + 1) as usize {
            return Err(SeriesError::Inconsistent(format!(
                "axis {}..={} does not match {} totals",
                t.year_min,
                t.year_max,
                t.len()
            )));
        }
        for s in &self.topics {
            if s.counts.len() != t.len() || s.occurrences.len() != t.len() {
                return Err(SeriesError::Inconsistent(format!(
                    "topic {:?} arrays do not match the year axis",
                    s.topic
                )));
            }
            let ok = (0..t.len()).all(|i| s.counts[i] <= t.totals[i] && s.counts[i] <= s.occurrences[i]);
            if !ok {
                return Err(SeriesError::Inconsistent(format!(
                    "topic {:?} has more documents than the corpus or than its mentions",
                    s.topic
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, topic: &str) -> Option<&TopicYearSeries> {
        self.topics
            .binary_search_by(|s| s.topic.as_str().cmp(topic))
            .ok()
            .map(|i| &self.topics[i])
    }
}

/// Aggregate annotations into per-topic annual series.
///
/// The year axis runs from the earliest to the latest dated document, with
/// zero-filled gaps. Topics mentioned in fewer than `min_docs` distinct
/// documents are dropped.
pub fn build_series(
    docs: &[Document],
    annos: &[EntityAnnotation],
    min_docs: u64,
) -> Result<SeriesSet, SeriesError> {
    let (year_min, year_max) = docs
        .iter()
        .filter_map(|d| d.year)
        .fold(None, |acc: Option<(i32, i32)>, y| match acc {
            None => Some((y, y)),
            Some((lo, hi)) => Some((lo.min(y), hi.max(y))),
        })
        .ok_or(SeriesError::EmptyCorpus)?;
    let width = (year_max - year_min + 1) as usize;

    let mut totals = vec![0u64; width];
    let mut doc_year: HashMap<&str, Option<usize>> = HashMap::with_capacity(docs.len());
    for d in docs {
        let slot = d.year.map(|y| (y - year_min) as usize);
        if let Some(i) = slot {
            totals[i] += 1;
        }
        doc_year.insert(d.id.as_str(), slot);
    }

    struct Acc<'a> {
        counts: Vec<u64>,
        occurrences: Vec<u64>,
        docs: HashSet<&'a str>,
    }
    let mut by_topic: BTreeMap<&str, Acc> = BTreeMap::new();
    for a in annos {
        let slot = *doc_year
            .get(a.doc_id.as_str())
            .ok_or_else(|| SeriesError::DanglingAnnotation(a.doc_id.clone()))?;
        let i = slot.ok_or_else(|| SeriesError::MissingYear(a.doc_id.clone()))?;
        let acc = by_topic.entry(a.entity_title.as_str()).or_insert_with(|| Acc {
            counts: vec![0; width],
            occurrences: vec![0; width],
            docs: HashSet::new(),
        });
        acc.occurrences[i] += 1;
        if acc.docs.insert(a.doc_id.as_str()) {
            acc.counts[i] += 1;
        }
    }

    let topics = by_topic
        .into_iter()
        .filter(|(_, acc)| acc.docs.len() as u64 >= min_docs)
        .map(|(topic, acc)| TopicYearSeries {
            topic: topic.to_string(),
            counts: acc.counts,
            occurrences: acc.occurrences,
        })
        .collect();

    Ok(SeriesSet {
        totals: CorpusYearTotals {
            year_min,
            year_max,
            totals,
        },
        topics,
    })
}
