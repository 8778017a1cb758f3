//! Topic trend and burst analytics over bibliographic corpora.
//!
//! The pipeline reads a corpus, links each record's text to knowledge-base
//! entities, turns the links into per-topic annual counts, and then asks two
//! questions of every topic: is it growing monotonically (Mann-Kendall with
//! an autocorrelation-aware variance, plus a Theil-Sen slope), and did it
//! have a short period of unusually high activity (a two-state burst
//! automaton)?

pub mod annotate;
pub mod burst;
pub mod corpus;
pub mod fixtures;
pub mod pipeline;
pub mod report;
pub mod series;
pub mod synth;
pub mod trend;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/annotation.md")]
    mod annotation {}
    #[doc = include_str!("../../../book/src/series.md")]
    mod series {}
    #[doc = include_str!("../../../book/src/trends.md")]
    mod trends {}
    #[doc = include_str!("../../../book/src/bursts.md")]
    mod bursts {}
    #[doc = include_str!("../../../book/src/reports.md")]
    mod reports {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
