//! Seeded synthetic corpora with planted trends and bursts.
//!
//! Used by the test suites and the `synth` CLI command. Background topics
//! are pseudo-word pairs spread uniformly over documents; planted topics
//! follow a prescribed per-year document frequency. A share of records is
//! built to fail the default corpus filter, and some abstracts end with a
//! publisher copyright notice that the generated blacklist removes.

use std::io;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::annotate::Gazetteer;
use crate::corpus::{write_canonical_jsonl, Document};

/// A topic whose yearly document frequency grows linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTrend {
    pub name: String,
    /// Expected documents in the first year.
    pub start: f64,
    /// Expected documents in the last year.
    pub end: f64,
    /// Standard deviation of the Gaussian noise added to each year.
    pub noise_sd: f64,
}

/// A topic with a low base rate and a raised rate for a few years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBurst {
    pub name: String,
    pub start_year: i32,
    pub years: u32,
    /// Poisson mean outside the window.
    pub base: f64,
    /// Poisson mean inside the window.
    pub peak: f64,
}

impl PlantedBurst {
    pub fn end_year(&self) -> i32 {
        self.start_year + self.years as i32 - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Records that pass the default filter.
    pub docs: usize,
    pub year_min: i32,
    pub year_max: i32,
    pub background_topics: usize,
    pub topics_per_doc: usize,
    pub trends: Vec<PlantedTrend>,
    pub bursts: Vec<PlantedBurst>,
    /// Extra records with an out-of-range year, an excluded type or a
    /// non-English language.
    pub excluded_docs: usize,
    /// Fraction of abstracts ending with a publisher copyright line.
    pub notice_share: f64,
}

impl SyntheticSpec {
    /// 2,000 documents over 2004-2021 with one fast trend (2 to 40
    /// documents a year), one slow trend and one three-year burst.
    pub fn standard(seed: u64) -> Self {
        SyntheticSpec {
            seed,
            docs: 2000,
            year_min: 2004,
            year_max: 2021,
            background_topics: 40,
            topics_per_doc: 3,
            trends: vec![
                PlantedTrend {
                    name: "Serverless computing".into(),
                    start: 2.0,
                    end: 40.0,
                    noise_sd: 3.0,
                },
                PlantedTrend {
                    name: "Cloud storage".into(),
                    start: 2.0,
                    end: 10.0,
                    noise_sd: 1.5,
                },
            ],
            bursts: vec![PlantedBurst {
                name: "Grid computing".into(),
                start_year: 2009,
                years: 3,
                base: 2.5,
                peak: 20.0,
            }],
            excluded_docs: 100,
            notice_share: 0.3,
        }
    }

    /// Large corpus for throughput checks: `docs` records and `topics`
    /// background topics, plus the standard planted topics.
    pub fn scaled(seed: u64, docs: usize, topics: usize) -> Self {
        SyntheticSpec {
            docs,
            background_topics: topics,
            excluded_docs: docs / 20,
            ..Self::standard(seed)
        }
    }
}

/// Titles the generated blacklist removes.
pub const PUBLISHER_TITLES: [&str; 3] = ["Elsevier", "Springer Nature", "Copyright"];

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub docs: Vec<Document>,
    pub gazetteer: Gazetteer,
    pub blacklist: Vec<String>,
}

/// Files written by [`SyntheticCorpus::write_inputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticInputs {
    pub corpus: PathBuf,
    pub gazetteer: PathBuf,
    pub blacklist: PathBuf,
}

impl SyntheticCorpus {
    /// Write `corpus.jsonl`, `gazetteer.tsv` and `blacklist.txt` into `dir`.
    pub fn write_inputs(&self, dir: &Path) -> io::Result<SyntheticInputs> {
        std::fs::create_dir_all(dir)?;
        let inputs = SyntheticInputs {
            corpus: dir.join("corpus.jsonl"),
            gazetteer: dir.join("gazetteer.tsv"),
            blacklist: dir.join("blacklist.txt"),
        };
        std::fs::write(&inputs.corpus, write_canonical_jsonl(&self.docs))?;
        std::fs::write(&inputs.gazetteer, self.gazetteer.to_tsv())?;
        let mut bl = self.blacklist.join("\n");
        bl.push('\n');
        std::fs::write(&inputs.blacklist, bl)?;
        Ok(inputs)
    }
}

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "da", "fe", "gi", "ho", "ju", "ki", "le", "mo",
    "nu", "pa", "xi",
];

/// Unique two-word pseudo name for background topic `i`.
pub fn background_topic_name(i: usize) -> String {
    let a = SYLLABLES[i % 20];
    let b = SYLLABLES[(i / 20) % 20];
    let c = SYLLABLES[(i / 400) % 20];
    let d = SYLLABLES[(i * 7 + 3) % 20];
    let mut first = format!("{a}{b}n");
    first[..1].make_ascii_uppercase();
    format!("{first} {c}{d}ral")
}

const FILLER: [&str; 16] = [
    "large systems",
    "practical settings",
    "recent benchmarks",
    "industrial case studies",
    "distributed workloads",
    "heterogeneous platforms",
    "measured traces",
    "scheduling policies",
    "open datasets",
    "network conditions",
    "user studies",
    "energy budgets",
    "latency targets",
    "design tradeoffs",
    "prior surveys",
    "controlled experiments",
];

const OPENERS: [&str; 6] = [
    "We study",
    "This paper revisits",
    "We propose a method for",
    "Our analysis covers",
    "We evaluate",
    "The work extends",
];

fn mention_sentence(rng: &mut ChaCha8Rng, surface: &str) -> String {
    let opener = OPENERS[rng.gen_range(0..OPENERS.len())];
    let filler = FILLER[rng.gen_range(0..FILLER.len())];
    format!("{opener} {surface} across {filler}.")
}

fn filler_sentence(rng: &mut ChaCha8Rng) -> String {
    let a = FILLER[rng.gen_range(0..FILLER.len())];
    let b = FILLER[rng.gen_range(0..FILLER.len())];
    format!("Results on {a} are compared with {b}.")
}

struct Slot {
    year: i32,
    mentions: Vec<String>,
}

fn docs_per_year(total: usize, years: usize) -> Vec<usize> {
    (0..years)
        .map(|i| total / years + usize::from(i < total % years))
        .collect()
}

/// Generate a corpus from `spec`. The same spec always yields the same
/// corpus.
pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let years = (spec.year_max - spec.year_min + 1).max(1) as usize;
    let per_year = docs_per_year(spec.docs, years);

    let mut slots: Vec<Slot> = Vec::with_capacity(spec.docs);
    let mut year_start = Vec::with_capacity(years);
    for (yi, &n) in per_year.iter().enumerate() {
        year_start.push(slots.len());
        for _ in 0..n {
            slots.push(Slot {
                year: spec.year_min + yi as i32,
                mentions: Vec::new(),
            });
        }
    }

    let background: Vec<String> = (0..spec.background_topics).map(background_topic_name).collect();
    if !background.is_empty() {
        for slot in &mut slots {
            let k = spec.topics_per_doc.min(background.len());
            for t in index::sample(&mut rng, background.len(), k) {
                slot.mentions.push(background[t].clone());
            }
        }
    }

    let mut plant = |rng: &mut ChaCha8Rng, name: &str, yi: usize, k: usize| {
        let n = per_year[yi];
        let k = k.min(n);
        for j in index::sample(rng, n, k) {
            let slot = &mut slots[year_start[yi] + j];
            slot.mentions.push(name.to_string());
            if rng.gen_bool(0.3) {
                slot.mentions.push(name.to_string());
            }
        }
    };
    for t in &spec.trends {
        let noise = Normal::new(0.0, t.noise_sd.max(0.0)).expect("finite noise");
        for yi in 0..years {
            let frac = if years > 1 { yi as f64 / (years - 1) as f64 } else { 0.0 };
            let mean = t.start + (t.end - t.start) * frac;
            let k = (mean + noise.sample(&mut rng)).round().max(0.0) as usize;
            plant(&mut rng, &t.name, yi, k);
        }
    }
    for b in &spec.bursts {
        for yi in 0..years {
            let year = spec.year_min + yi as i32;
            let inside = (b.start_year..=b.end_year()).contains(&year);
            let lambda = if inside { b.peak } else { b.base };
            let k = if lambda > 0.0 {
                Poisson::new(lambda).expect("positive mean").sample(&mut rng) as usize
            } else {
                0
            };
            plant(&mut rng, &b.name, yi, k);
        }
    }

    let mut docs = Vec::with_capacity(slots.len() + spec.excluded_docs);
    for (i, slot) in slots.iter_mut().enumerate() {
        use rand::seq::SliceRandom;
        slot.mentions.shuffle(&mut rng);
        docs.push(render_doc(&mut rng, spec, i, slot, "Article", "English"));
    }
    let burst_name = spec.bursts.first().map(|b| b.name.clone());
    for i in 0..spec.excluded_docs {
        let (year, doc_type, language) = match i % 3 {
            0 => (spec.year_min - 1, "Article", "English"),
            1 => (rng.gen_range(spec.year_min..=spec.year_max), "Review", "English"),
            _ => (rng.gen_range(spec.year_min..=spec.year_max), "Proceedings Paper", "German"),
        };
        let mut mentions: Vec<String> = burst_name.iter().cloned().collect();
        if !background.is_empty() {
            mentions.push(background[rng.gen_range(0..background.len())].clone());
        }
        let slot = Slot { year, mentions };
        docs.push(render_doc(&mut rng, spec, spec.docs + i, &slot, doc_type, language));
    }
    // Alternate document types among kept records so the filter's type
    // matching is exercised.
    for (i, d) in docs.iter_mut().take(spec.docs).enumerate() {
        if i % 4 == 1 {
            d.doc_type = "Proceedings Paper".into();
        } else if i % 9 == 2 {
            d.doc_type = "Article; Proceedings Paper".into();
        }
    }

    let mut gazetteer = Gazetteer::new();
    let planted = spec
        .trends
        .iter()
        .map(|t| &t.name)
        .chain(spec.bursts.iter().map(|b| &b.name));
    for name in background.iter().chain(planted) {
        gazetteer
            .insert(&name.to_lowercase(), name, 0.5)
            .expect("generated names are valid");
    }
    gazetteer.insert("elsevier", "Elsevier", 0.4).expect("valid");
    gazetteer.insert("springer nature", "Springer Nature", 0.4).expect("valid");
    gazetteer.insert("all rights reserved", "Copyright", 0.2).expect("valid");

    SyntheticCorpus {
        docs,
        gazetteer,
        blacklist: PUBLISHER_TITLES.iter().map(|s| s.to_string()).collect(),
    }
}

fn render_doc(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    i: usize,
    slot: &Slot,
    doc_type: &str,
    language: &str,
) -> Document {
    let title = match slot.mentions.first() {
        Some(m) => format!("Notes on {} for {}", m.to_lowercase(), FILLER[rng.gen_range(0..FILLER.len())]),
        None => format!("Notes on {}", FILLER[rng.gen_range(0..FILLER.len())]),
    };
    let mut sentences: Vec<String> = slot
        .mentions
        .iter()
        .skip(1)
        .map(|m| mention_sentence(rng, &m.to_lowercase()))
        .collect();
    sentences.push(filler_sentence(rng));
    if rng.gen_bool(spec.notice_share.clamp(0.0, 1.0)) {
        let publisher = if rng.gen_bool(0.7) {
            "Elsevier Ltd"
        } else {
            "Springer Nature"
        };
        sentences.push(format!("(c) {} {publisher}. All rights reserved.", slot.year));
    }
    Document {
        id: format!("SYN{:04}-{i:06}", spec.seed % 10_000),
        title,
        abstract_text: sentences.join(" "),
        year: Some(slot.year),
        doc_type: doc_type.into(),
        language: language.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{filter_corpus, CorpusFilter};
    use std::collections::HashSet;

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&SyntheticSpec::standard(7));
        let b = generate(&SyntheticSpec::standard(7));
        let c = generate(&SyntheticSpec::standard(8));
        assert_eq!(a.docs, b.docs);
        assert_ne!(a.docs, c.docs);
    }

    #[test]
    fn background_names_are_unique() {
        let names: HashSet<_> = (0..5000).map(background_topic_name).collect();
        assert_eq!(names.len(), 5000);
    }

    #[test]
    fn filter_removes_exactly_the_excluded_records() {
        let spec = SyntheticSpec::standard(1);
        let corpus = generate(&spec);
        assert_eq!(corpus.docs.len(), spec.docs + spec.excluded_docs);
        let kept = filter_corpus(&corpus.docs, &CorpusFilter::default());
        assert_eq!(kept.len(), spec.docs);
    }

    #[test]
    fn planted_trend_grows() {
        let spec = SyntheticSpec::standard(3);
        let corpus = generate(&spec);
        let name = spec.trends[0].name.to_lowercase();
        let count = |year: i32| {
            corpus
                .docs
                .iter()
                .filter(|d| d.year == Some(year) && d.language == "English" && d.doc_type != "Review")
                .filter(|d| d.merged_text().contains(&name))
                .count()
        };
        assert!(count(2004) < 10);
        assert!(count(2021) > 25);
    }

    #[test]
    fn gazetteer_finds_planted_mentions() {
        let corpus = generate(&SyntheticSpec::standard(5));
        let hits: usize = corpus
            .docs
            .iter()
            .map(|d| {
                corpus
                    .gazetteer
                    .annotate(&d.id, &d.merged_text(), 0.0)
                    .iter()
                    .filter(|a| a.entity_title == "Grid computing")
                    .count()
            })
            .sum();
        assert!(hits > 50);
    }
}
