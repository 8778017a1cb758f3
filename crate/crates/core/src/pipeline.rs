//! End-to-end runs: corpus files in, report directory out.
//!
//! Each stage is also exposed on its own so the CLI can run them one at a
//! time against intermediate files.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotate::{
    apply_blacklist, parse_annotations_jsonl, sort_for_persistence, write_annotations_jsonl, AnnotateError,
    AnnotatorConfig, Blacklist, EntityAnnotation, Gazetteer, RemoteAnnotator,
};
use crate::burst::{burst_table, BurstError, BurstInterval, BurstParams, DEFAULT_TOP_N};
use crate::corpus::{filter_corpus, parse_canonical_jsonl, parse_wos_export, CorpusError, CorpusFilter, Document};
use crate::report::{
    burst_rows, render_burst_csv, render_burst_json, render_series_svg, render_timeline_svg, render_trend_json,
    render_trend_table, TimelineLayout, TrendReport,
};
use crate::series::{build_series, SeriesError, SeriesSet, DEFAULT_MIN_DOCS};
use crate::trend::{classify_and_rank, test_topics, TopicTrends, TrendConfig, TrendError, TrendReportRow};

pub const DEFAULT_TOP_K: usize = 20;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {path}: {source}")]
    Io {
        stage: &'static str,
        path: PathBuf,
        source: io::Error,
    },
    #[error("ingest: {path}: {source}")]
    Ingest { path: PathBuf, source: CorpusError },
    #[error("ingest: record id {0:?} appears in more than one input file")]
    DuplicateAcrossFiles(String),
    #[error("filter: no documents left out of {read} read")]
    EmptyCorpus { read: usize },
    #[error("annotate: {0}")]
    Annotate(#[from] AnnotateError),
    #[error("series: {0}")]
    Series(#[from] SeriesError),
    #[error("trends: {0}")]
    Trends(#[from] TrendError),
    #[error("bursts: {0}")]
    Bursts(#[from] BurstError),
}

impl PipelineError {
    /// Name of the stage that failed.
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Io { stage, .. } => stage,
            PipelineError::Ingest { .. } | PipelineError::DuplicateAcrossFiles(_) => "ingest",
            PipelineError::EmptyCorpus { .. } => "filter",
            PipelineError::Annotate(_) => "annotate",
            PipelineError::Series(_) => "series",
            PipelineError::Trends(_) => "trends",
            PipelineError::Bursts(_) => "bursts",
        }
    }
}

fn read_file(stage: &'static str, path: &Path) -> Result<Vec<u8>, PipelineError> {
    fs::read(path).map_err(|source| PipelineError::Io {
        stage,
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(stage: &'static str, path: &Path) -> Result<String, PipelineError> {
    String::from_utf8(read_file(stage, path)?).map_err(|_| PipelineError::Io {
        stage,
        path: path.to_path_buf(),
        source: io::Error::new(io::ErrorKind::InvalidData, "not valid UTF-8"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    /// `.jsonl`/`.json` files and files starting with `{` are JSON lines;
    /// anything else is a tab-delimited export.
    #[default]
    Auto,
    Wos,
    Jsonl,
}

impl CorpusFormat {
    fn resolve(self, path: &Path, raw: &[u8]) -> CorpusFormat {
        match self {
            CorpusFormat::Auto => {
                let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
                let starts_with_brace = raw
                    .strip_prefix(b"\xEF\xBB\xBF")
                    .unwrap_or(raw)
                    .iter()
                    .find(|b| !b.is_ascii_whitespace())
                    == Some(&b'{');
                if ext.eq_ignore_ascii_case("jsonl") || ext.eq_ignore_ascii_case("json") || starts_with_brace {
                    CorpusFormat::Jsonl
                } else {
                    CorpusFormat::Wos
                }
            }
            other => other,
        }
    }
}

/// Where annotations come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AnnotationSource {
    /// Offline dictionary tagging.
    Gazetteer {
        path: PathBuf,
        #[serde(default)]
        min_link_probability: f64,
    },
    /// A TAGME-compatible web service; the token comes from the
    /// environment.
    Remote(AnnotatorConfig),
    /// Annotations computed earlier, as JSON lines.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    pub timeline: TimelineLayout,
    /// Number of top-ranked topics drawn in the series chart.
    pub series_topics: usize,
    /// Plot cumulative instead of annual counts in the series chart.
    pub cumulative: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            timeline: TimelineLayout::default(),
            series_topics: 10,
            cumulative: false,
        }
    }
}

fn default_min_docs() -> u64 {
    DEFAULT_MIN_DOCS
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn default_burst_top_n() -> Option<usize> {
    Some(DEFAULT_TOP_N)
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a pipeline run needs. Loadable from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: Vec<PathBuf>,
    #[serde(default)]
    pub corpus_format: CorpusFormat,
    #[serde(default)]
    pub filter: CorpusFilter,
    pub annotation: AnnotationSource,
    /// File of entity titles to drop, one per line.
    #[serde(default)]
    pub blacklist: Option<PathBuf>,
    /// Extra titles to drop, in addition to the file.
    #[serde(default)]
    pub blacklist_titles: Vec<String>,
    #[serde(default = "default_min_docs")]
    pub min_docs: u64,
    #[serde(default)]
    pub trend: TrendConfig,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub burst: BurstParams,
    /// Keep bursts of this many topics, ranked by total weight; `None`
    /// keeps all.
    #[serde(default = "default_burst_top_n")]
    pub burst_top_n: Option<usize>,
    #[serde(default)]
    pub render: RenderOptions,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    /// A configuration with defaults for everything but the inputs.
    pub fn new(corpus: Vec<PathBuf>, annotation: AnnotationSource, out_dir: PathBuf) -> Self {
        PipelineConfig {
            corpus,
            corpus_format: CorpusFormat::Auto,
            filter: CorpusFilter::default(),
            annotation,
            blacklist: None,
            blacklist_titles: Vec::new(),
            min_docs: DEFAULT_MIN_DOCS,
            trend: TrendConfig::default(),
            top_k: DEFAULT_TOP_K,
            burst: BurstParams::default(),
            burst_top_n: Some(DEFAULT_TOP_N),
            render: RenderOptions::default(),
            out_dir,
        }
    }

    /// Parse a `.json` file as JSON and anything else as TOML. Relative
    /// paths inside the file are taken relative to the file's directory.
    pub fn from_path(path: &Path) -> Result<Self, PipelineError> {
        let text = read_text("config", path)?;
        let is_json = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg: PipelineConfig = if is_json {
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        };
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.corpus.iter_mut().for_each(fix);
        if let Some(b) = self.blacklist.as_mut() {
            fix(b);
        }
        match &mut self.annotation {
            AnnotationSource::Gazetteer { path, .. } | AnnotationSource::File { path } => fix(path),
            AnnotationSource::Remote(_) => {}
        }
        fix(&mut self.out_dir);
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.corpus.is_empty() {
            return Err(PipelineError::Config("no corpus files given".into()));
        }
        if self.top_k == 0 {
            return Err(PipelineError::Config("top_k must be at least 1".into()));
        }
        self.trend.validate()?;
        self.burst.validate()?;
        if let AnnotationSource::Remote(r) = &self.annotation {
            r.validate()?;
        }
        Ok(())
    }
}

/// SHA-256 of an input or output file, recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

fn digest(path: impl Into<String>, bytes: &[u8]) -> FileDigest {
    FileDigest {
        path: path.into(),
        sha256: hex::encode(Sha256::digest(bytes)),
    }
}

/// Read and parse corpus files, rejecting ids repeated across files.
pub fn load_corpus(paths: &[PathBuf], format: CorpusFormat) -> Result<(Vec<Document>, Vec<FileDigest>), PipelineError> {
    let mut docs = Vec::new();
    let mut digests = Vec::new();
    let mut seen = HashSet::new();
    for path in paths {
        let raw = read_file("ingest", path)?;
        digests.push(digest(path.display().to_string(), &raw));
        let parsed = match format.resolve(path, &raw) {
            CorpusFormat::Jsonl => parse_canonical_jsonl(&raw),
            _ => parse_wos_export(&raw),
        }
        .map_err(|source| PipelineError::Ingest {
            path: path.clone(),
            source,
        })?;
        for d in parsed {
            if !seen.insert(d.id.clone()) {
                return Err(PipelineError::DuplicateAcrossFiles(d.id));
            }
            docs.push(d);
        }
    }
    log::info!("ingest: {} records from {} file(s)", docs.len(), paths.len());
    Ok((docs, digests))
}

/// Apply `filter`, failing when nothing is left.
pub fn filter_stage(docs: &[Document], filter: &CorpusFilter) -> Result<Vec<Document>, PipelineError> {
    let kept = filter_corpus(docs, filter);
    log::info!("filter: kept {} of {} records", kept.len(), docs.len());
    if kept.is_empty() {
        return Err(PipelineError::EmptyCorpus { read: docs.len() });
    }
    Ok(kept)
}

/// Tag every document with the gazetteer, in parallel. Output is sorted by
/// document id, then offset.
pub fn annotate_with_gazetteer(docs: &[Document], gazetteer: &Gazetteer, min_link_probability: f64) -> Vec<EntityAnnotation> {
    let per_doc: Vec<Vec<EntityAnnotation>> = docs
        .par_iter()
        .map(|d| gazetteer.annotate(&d.id, &d.merged_text(), min_link_probability))
        .collect();
    let mut out: Vec<EntityAnnotation> = per_doc.into_iter().flatten().collect();
    sort_for_persistence(&mut out);
    out
}

/// Produce annotations for `docs` from `source`. Returns digests of any
/// files read.
pub fn annotate_stage(
    docs: &[Document],
    source: &AnnotationSource,
) -> Result<(Vec<EntityAnnotation>, Vec<FileDigest>), PipelineError> {
    match source {
        AnnotationSource::Gazetteer {
            path,
            min_link_probability,
        } => {
            let text = read_text("annotate", path)?;
            let g = Gazetteer::parse_tsv(&text)?;
            Ok((
                annotate_with_gazetteer(docs, &g, *min_link_probability),
                vec![digest(path.display().to_string(), text.as_bytes())],
            ))
        }
        AnnotationSource::Remote(cfg) => {
            let annotator = RemoteAnnotator::new(cfg.clone().with_token_from_env())?;
            let pairs: Vec<(String, String)> = docs.iter().map(|d| (d.id.clone(), d.merged_text())).collect();
            Ok((annotator.annotate_documents(&pairs)?, Vec::new()))
        }
        AnnotationSource::File { path } => {
            let text = read_text("annotate", path)?;
            let ids: HashSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
            let mut annos: Vec<EntityAnnotation> = parse_annotations_jsonl(&text)?
                .into_iter()
                .filter(|a| ids.contains(a.doc_id.as_str()))
                .collect();
            sort_for_persistence(&mut annos);
            Ok((annos, vec![digest(path.display().to_string(), text.as_bytes())]))
        }
    }
}

/// Build the blacklist from an optional file plus inline titles.
pub fn load_blacklist(path: Option<&Path>, titles: &[String]) -> Result<(Blacklist, Vec<FileDigest>), PipelineError> {
    let mut all: Vec<String> = titles.to_vec();
    let mut digests = Vec::new();
    if let Some(p) = path {
        let text = read_text("blacklist", p)?;
        digests.push(digest(p.display().to_string(), text.as_bytes()));
        all.extend(text.lines().map(str::to_string));
    }
    let joined = all.join("\n");
    Ok((Blacklist::parse(&joined), digests))
}

/// Rank trend results and compute bursts from a series set.
pub fn analyze(
    series: &SeriesSet,
    trend: &TrendConfig,
    top_k: usize,
    burst: &BurstParams,
    burst_top_n: Option<usize>,
) -> Result<(TopicTrends, Vec<TrendReportRow>, Vec<BurstInterval>), PipelineError> {
    let trends = test_topics(&series.topics, trend)?;
    let ranked = classify_and_rank(trends.results.clone(), top_k);
    let bursts = burst_table(series, burst, burst_top_n)?;
    Ok((trends, ranked, bursts))
}

/// In-memory results of a run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub documents_read: usize,
    pub documents_kept: usize,
    pub annotations: usize,
    pub series: SeriesSet,
    pub trends: TopicTrends,
    pub ranked: Vec<TrendReportRow>,
    pub bursts: Vec<BurstInterval>,
    /// Output files, in the order they were written.
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Counts {
    documents_read: usize,
    documents_kept: usize,
    annotations: usize,
    topics: usize,
    untestable_topics: usize,
    ranked_topics: usize,
    burst_intervals: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a PipelineConfig,
    inputs: Vec<FileDigest>,
    counts: Counts,
    outputs: Vec<FileDigest>,
}

/// Write `files` into `dir` so that each file appears whole or not at all:
/// everything is first written to a staging directory inside `dir`, then
/// renamed into place.
pub fn write_outputs_atomically(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>, PipelineError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PipelineError::Io {
            stage: "write",
            path,
            source,
        }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let staging = tempfile::Builder::new()
        .prefix(".staging-")
        .tempdir_in(dir)
        .map_err(io_err(dir))?;
    for (name, bytes) in files {
        let p = staging.path().join(name);
        fs::write(&p, bytes).map_err(io_err(&p))?;
    }
    let mut out = Vec::with_capacity(files.len());
    for (name, _) in files {
        let target = dir.join(name);
        fs::rename(staging.path().join(name), &target).map_err(io_err(&target))?;
        out.push(target);
    }
    Ok(out)
}

/// Run every stage and write the report directory.
///
/// Outputs: `annotations.jsonl`, `series.json`, `trends.csv`,
/// `trends.json`, `bursts.csv`, `bursts.json`, `timeline.svg`,
/// `series.svg` and `manifest.json`. Identical inputs and configuration
/// give byte-identical files.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun, PipelineError> {
    cfg.validate()?;
    let (docs, mut inputs) = load_corpus(&cfg.corpus, cfg.corpus_format)?;
    let kept = filter_stage(&docs, &cfg.filter)?;
    let (annos, digests) = annotate_stage(&kept, &cfg.annotation)?;
    inputs.extend(digests);
    let (blacklist, digests) = load_blacklist(cfg.blacklist.as_deref(), &cfg.blacklist_titles)?;
    inputs.extend(digests);
    let before = annos.len();
    let annos = apply_blacklist(annos, &blacklist);
    log::info!("annotate: {} annotations ({} blacklisted)", annos.len(), before - annos.len());

    let series = build_series(&kept, &annos, cfg.min_docs)?;
    log::info!("series: {} topics over {} years", series.topics.len(), series.totals.len());
    let (trends, ranked, bursts) = analyze(&series, &cfg.trend, cfg.top_k, &cfg.burst, cfg.burst_top_n)?;
    log::info!(
        "trends: {} ranked, {} untestable; bursts: {} intervals",
        ranked.len(),
        trends.untestable.len(),
        bursts.len()
    );

    let mut layout = cfg.render.timeline.clone();
    layout.year_min.get_or_insert(series.totals.year_min);
    layout.year_max.get_or_insert(series.totals.year_max);
    let chart_topics: Vec<&str> = ranked
        .iter()
        .take(cfg.render.series_topics)
        .map(|r| r.topic.as_str())
        .collect();
    let trend_report = TrendReport {
        rows: ranked.clone(),
        untestable: trends.untestable.clone(),
    };
    let mut series_json = serde_json::to_vec(&series).expect("series serialize");
    series_json.push(b'\n');
    let mut files: Vec<(String, Vec<u8>)> = vec![
        ("annotations.jsonl".into(), write_annotations_jsonl(&annos).into_bytes()),
        ("series.json".into(), series_json),
        ("trends.csv".into(), render_trend_table(&ranked)),
        ("trends.json".into(), render_trend_json(&trend_report)),
        ("bursts.csv".into(), render_burst_csv(&bursts)),
        ("bursts.json".into(), render_burst_json(&burst_rows(&bursts, &series))),
        ("timeline.svg".into(), render_timeline_svg(&bursts, &layout).into_bytes()),
        (
            "series.svg".into(),
            render_series_svg(&series, &chart_topics, cfg.render.cumulative, 900.0, 480.0).into_bytes(),
        ),
    ];
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        inputs,
        counts: Counts {
            documents_read: docs.len(),
            documents_kept: kept.len(),
            annotations: annos.len(),
            topics: series.topics.len(),
            untestable_topics: trends.untestable.len(),
            ranked_topics: ranked.len(),
            burst_intervals: bursts.len(),
        },
        outputs: files.iter().map(|(name, bytes)| digest(name.clone(), bytes)).collect(),
    };
    let mut manifest_json = serde_json::to_vec_pretty(&manifest).expect("manifest serialize");
    manifest_json.push(b'\n');
    files.push(("manifest.json".into(), manifest_json));

    let outputs = write_outputs_atomically(&cfg.out_dir, &files)?;
    Ok(PipelineRun {
        documents_read: docs.len(),
        documents_kept: kept.len(),
        annotations: annos.len(),
        series,
        trends,
        ranked,
        bursts,
        outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_config_with_defaults() {
        let cfg: PipelineConfig = toml::from_str(
            r#"
            corpus = ["a.txt"]
            [annotation]
            mode = "gazetteer"
            path = "g.tsv"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.min_docs, 20);
        assert_eq!(cfg.top_k, 20);
        assert_eq!(cfg.burst_top_n, Some(100));
        assert_eq!(cfg.trend, TrendConfig::default());
        assert_eq!(cfg.filter, CorpusFilter::default());
        assert_eq!(
            cfg.annotation,
            AnnotationSource::Gazetteer {
                path: "g.tsv".into(),
                min_link_probability: 0.0
            }
        );
    }

    #[test]
    fn remote_section_and_unknown_keys() {
        let cfg: PipelineConfig = toml::from_str(
            r#"
            corpus = ["a.txt"]
            [annotation]
            mode = "remote"
            rho_threshold = 0.2
            "#,
        )
        .unwrap();
        match cfg.annotation {
            AnnotationSource::Remote(r) => {
                assert_eq!(r.rho_threshold, 0.2);
                assert_eq!(r.epsilon, 0.427);
            }
            other => panic!("unexpected {other:?}"),
        }
        let typo = toml::from_str::<PipelineConfig>(
            r#"
            corpus = ["a.txt"]
            top_kk = 3
            [annotation]
            mode = "file"
            path = "a.jsonl"
            "#,
        );
        assert!(typo.is_err());
    }

    #[test]
    fn config_paths_are_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "corpus = [\"c.jsonl\"]\nblacklist = \"/abs/bl.txt\"\n[annotation]\nmode = \"file\"\npath = \"a.jsonl\"\n",
        )
        .unwrap();
        let cfg = PipelineConfig::from_path(&path).unwrap();
        assert_eq!(cfg.corpus, [dir.path().join("c.jsonl")]);
        assert_eq!(cfg.blacklist, Some(PathBuf::from("/abs/bl.txt")));
        assert_eq!(cfg.out_dir, dir.path().join("out"));
    }

    #[test]
    fn format_detection() {
        let p = Path::new("x.txt");
        assert_eq!(CorpusFormat::Auto.resolve(p, b"\n {\"id\":1}"), CorpusFormat::Jsonl);
        assert_eq!(CorpusFormat::Auto.resolve(p, b"PT\tUT"), CorpusFormat::Wos);
        assert_eq!(CorpusFormat::Auto.resolve(Path::new("x.JSONL"), b""), CorpusFormat::Jsonl);
        assert_eq!(CorpusFormat::Wos.resolve(Path::new("x.jsonl"), b"{"), CorpusFormat::Wos);
    }

    #[test]
    fn atomic_write_replaces_files() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        write_outputs_atomically(&out, &[("a.txt".into(), b"one".to_vec())]).unwrap();
        write_outputs_atomically(&out, &[("a.txt".into(), b"two".to_vec())]).unwrap();
        assert_eq!(fs::read(out.join("a.txt")).unwrap(), b"two");
        let leftovers: Vec<_> = fs::read_dir(&out).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn blacklist_merges_file_and_inline() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bl.txt");
        fs::write(&p, "# publishers\nElsevier\n").unwrap();
        let (bl, digests) = load_blacklist(Some(&p), &["Budapest".into()]).unwrap();
        assert!(bl.contains("elsevier") && bl.contains("Budapest"));
        assert_eq!(digests.len(), 1);
    }
}
