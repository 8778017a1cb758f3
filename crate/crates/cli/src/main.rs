use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use topictrend::annotate::{apply_blacklist, write_annotations_jsonl, AnnotatorConfig};
use topictrend::burst::{burst_table, BurstInterval, BurstParams};
use topictrend::corpus::{parse_canonical_jsonl, write_canonical_jsonl, CorpusFilter};
use topictrend::pipeline::{
    annotate_stage, filter_stage, load_blacklist, load_corpus, run_pipeline, write_outputs_atomically,
    AnnotationSource, CorpusFormat, PipelineConfig,
};
use topictrend::report::{
    burst_rows, render_burst_csv, render_burst_json, render_series_svg, render_timeline_svg, render_trend_json,
    render_trend_table, BurstReportRow, RowOrder, TimelineLayout, TrendReport,
};
use topictrend::series::{build_series, SeriesSet};
use topictrend::synth::{generate, SyntheticSpec};
use topictrend::trend::{classify_and_rank, test_topics, Correction, TrendConfig};

#[derive(Parser)]
#[command(name = "topictrend", version, about = "Topic trend and burst reports from bibliographic corpora")]
struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and filter corpus files into canonical JSON lines.
    Ingest(IngestArgs),
    /// Link document text to entities.
    Annotate(AnnotateArgs),
    /// Build per-topic annual series.
    Series(SeriesArgs),
    /// Test every topic for a monotonic trend and rank the risers.
    Trends(TrendsArgs),
    /// Detect bursts in every topic.
    Bursts(BurstsArgs),
    /// Draw the burst timeline and the series chart.
    Render(RenderArgs),
    /// Run every stage from a configuration file.
    Pipeline(PipelineArgs),
    /// Write a synthetic corpus, gazetteer, blacklist and config.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Auto,
    Wos,
    Jsonl,
}

impl From<FormatArg> for CorpusFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Auto => CorpusFormat::Auto,
            FormatArg::Wos => CorpusFormat::Wos,
            FormatArg::Jsonl => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CorrectionArg {
    None,
    HamedRaoAllLags,
    HamedRaoSignificantLags,
}

impl From<CorrectionArg> for Correction {
    fn from(c: CorrectionArg) -> Self {
        match c {
            CorrectionArg::None => Correction::None,
            CorrectionArg::HamedRaoAllLags => Correction::HamedRaoAllLags,
            CorrectionArg::HamedRaoSignificantLags => Correction::HamedRaoSignificantLags,
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Tab-delimited exports or JSON-lines files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    format: FormatArg,
    #[arg(long, default_value_t = 2004)]
    year_min: i32,
    #[arg(long, default_value_t = 2021)]
    year_max: i32,
    /// Accepted document types (repeatable).
    #[arg(long = "doc-type", default_values = ["Article", "Proceedings Paper"])]
    doc_types: Vec<String>,
    /// Accepted languages (repeatable).
    #[arg(long = "language", default_values = ["English"])]
    languages: Vec<String>,
    /// Keep every record.
    #[arg(long)]
    no_filter: bool,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnnotateArgs {
    /// Canonical JSON-lines corpus.
    #[arg(long)]
    corpus: PathBuf,
    /// Gazetteer TSV (surface, title, link probability).
    #[arg(long, conflicts_with = "remote")]
    gazetteer: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    min_link_probability: f64,
    /// Use the remote annotation service; the token is read from
    /// ANNOTATOR_API_TOKEN.
    #[arg(long)]
    remote: bool,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    rho_threshold: Option<f64>,
    #[arg(long)]
    blacklist: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SeriesArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, default_value_t = 20)]
    min_docs: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrendsArgs {
    #[arg(long)]
    series: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "hamed-rao-significant-lags")]
    correction: CorrectionArg,
    #[arg(long, default_value_t = 20)]
    top_k: usize,
    /// Directory for trends.csv and trends.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BurstsArgs {
    #[arg(long)]
    series: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    s: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Keep bursts of this many topics by total weight; 0 keeps all.
    #[arg(long, default_value_t = 100)]
    burst_top_n: usize,
    /// Directory for bursts.csv and bursts.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// bursts.json from the bursts command.
    #[arg(long)]
    bursts: PathBuf,
    /// series.json; sets the axis and enables the series chart.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Topics for the series chart (repeatable).
    #[arg(long = "topic")]
    topics: Vec<String>,
    #[arg(long)]
    cumulative: bool,
    /// Order timeline rows by burst weight instead of start year.
    #[arg(long)]
    sort_by_weight: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML or JSON configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    min_docs: Option<u64>,
    #[arg(long)]
    top_k: Option<usize>,
    /// 0 keeps all bursting topics.
    #[arg(long)]
    burst_top_n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    docs: usize,
    #[arg(long, default_value_t = 40)]
    topics: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_series(path: &Path) -> Result<SeriesSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let set: SeriesSet = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    set.validate()?;
    Ok(set)
}

fn read_corpus(path: &Path) -> Result<Vec<topictrend::corpus::Document>> {
    let raw = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_canonical_jsonl(&raw).with_context(|| format!("parsing {}", path.display()))
}

fn ingest(a: IngestArgs) -> Result<()> {
    let (docs, _) = load_corpus(&a.inputs, a.format.into())?;
    let kept = if a.no_filter {
        docs
    } else {
        let filter = CorpusFilter::new(a.year_min, a.year_max, &a.doc_types, &a.languages)?;
        filter_stage(&docs, &filter)?
    };
    write(&a.out, write_canonical_jsonl(&kept))?;
    eprintln!("{} records written to {}", kept.len(), a.out.display());
    Ok(())
}

fn annotate(a: AnnotateArgs) -> Result<()> {
    let docs = read_corpus(&a.corpus)?;
    let source = match (a.gazetteer, a.remote) {
        (Some(path), false) => AnnotationSource::Gazetteer {
            path,
            min_link_probability: a.min_link_probability,
        },
        (None, true) => {
            let mut cfg = AnnotatorConfig::default();
            if let Some(url) = a.endpoint {
                cfg.endpoint_url = url;
            }
            if let Some(rho) = a.rho_threshold {
                cfg.rho_threshold = rho;
            }
            AnnotationSource::Remote(cfg)
        }
        _ => bail!("choose one of --gazetteer <file> or --remote"),
    };
    let (annos, _) = annotate_stage(&docs, &source)?;
    let (blacklist, _) = load_blacklist(a.blacklist.as_deref(), &[])?;
    let annos = apply_blacklist(annos, &blacklist);
    write(&a.out, write_annotations_jsonl(&annos))?;
    eprintln!("{} annotations written to {}", annos.len(), a.out.display());
    Ok(())
}

fn series(a: SeriesArgs) -> Result<()> {
    let docs = read_corpus(&a.corpus)?;
    let text = fs::read_to_string(&a.annotations).with_context(|| format!("reading {}", a.annotations.display()))?;
    let annos = topictrend::annotate::parse_annotations_jsonl(&text)?;
    let set = build_series(&docs, &annos, a.min_docs)?;
    let mut json = serde_json::to_vec(&set)?;
    json.push(b'\n');
    write(&a.out, json)?;
    eprintln!("{} topics written to {}", set.topics.len(), a.out.display());
    Ok(())
}

fn trends(a: TrendsArgs) -> Result<()> {
    let set = read_series(&a.series)?;
    let cfg = TrendConfig {
        correction: a.correction.into(),
        alpha: a.alpha,
        ..TrendConfig::default()
    };
    if a.top_k == 0 {
        bail!("--top-k must be at least 1");
    }
    let tested = test_topics(&set.topics, &cfg)?;
    let rows = classify_and_rank(tested.results, a.top_k);
    let report = TrendReport {
        rows,
        untestable: tested.untestable,
    };
    write_outputs_atomically(
        &a.out_dir,
        &[
            ("trends.csv".into(), render_trend_table(&report.rows)),
            ("trends.json".into(), render_trend_json(&report)),
        ],
    )?;
    eprintln!("{} ranked topics written to {}", report.rows.len(), a.out_dir.display());
    Ok(())
}

fn bursts(a: BurstsArgs) -> Result<()> {
    let set = read_series(&a.series)?;
    let params = BurstParams {
        s: a.s,
        gamma: a.gamma,
        ..BurstParams::default()
    };
    let top_n = (a.burst_top_n > 0).then_some(a.burst_top_n);
    let intervals = burst_table(&set, &params, top_n)?;
    write_outputs_atomically(
        &a.out_dir,
        &[
            ("bursts.csv".into(), render_burst_csv(&intervals)),
            ("bursts.json".into(), render_burst_json(&burst_rows(&intervals, &set))),
        ],
    )?;
    eprintln!("{} burst intervals written to {}", intervals.len(), a.out_dir.display());
    Ok(())
}

fn render(a: RenderArgs) -> Result<()> {
    let text = fs::read_to_string(&a.bursts).with_context(|| format!("reading {}", a.bursts.display()))?;
    let rows: Vec<BurstReportRow> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.bursts.display()))?;
    let intervals: Vec<BurstInterval> = rows.into_iter().map(|r| r.interval).collect();
    let set = a.series.as_deref().map(read_series).transpose()?;
    let mut layout = TimelineLayout::default();
    if a.sort_by_weight {
        layout.order = RowOrder::Weight;
    }
    if let Some(set) = &set {
        layout.year_min = Some(set.totals.year_min);
        layout.year_max = Some(set.totals.year_max);
    }
    let mut files = vec![("timeline.svg".to_string(), render_timeline_svg(&intervals, &layout).into_bytes())];
    if let Some(set) = &set {
        let topics: Vec<&str> = a.topics.iter().map(String::as_str).collect();
        files.push((
            "series.svg".into(),
            render_series_svg(set, &topics, a.cumulative, 900.0, 480.0).into_bytes(),
        ));
    }
    write_outputs_atomically(&a.out_dir, &files)?;
    eprintln!("rendered {} file(s) into {}", files.len(), a.out_dir.display());
    Ok(())
}

/// Apply command-line overrides on top of a loaded configuration.
fn apply_overrides(cfg: &mut PipelineConfig, a: &PipelineArgs) {
    if let Some(alpha) = a.alpha {
        cfg.trend.alpha = alpha;
    }
    if let Some(gamma) = a.gamma {
        cfg.burst.gamma = gamma;
    }
    if let Some(s) = a.s {
        cfg.burst.s = s;
    }
    if let Some(m) = a.min_docs {
        cfg.min_docs = m;
    }
    if let Some(k) = a.top_k {
        cfg.top_k = k;
    }
    if let Some(n) = a.burst_top_n {
        cfg.burst_top_n = (n > 0).then_some(n);
    }
    if let Some(out) = &a.out {
        cfg.out_dir = out.clone();
    }
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg = PipelineConfig::from_path(&a.config)?;
    apply_overrides(&mut cfg, &a);
    let run = run_pipeline(&cfg)?;
    println!(
        "{} of {} records kept, {} annotations, {} topics, {} ranked, {} burst intervals",
        run.documents_kept,
        run.documents_read,
        run.annotations,
        run.series.topics.len(),
        run.ranked.len(),
        run.bursts.len()
    );
    for p in &run.outputs {
        println!("{}", p.display());
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec::scaled(a.seed, a.docs, a.topics);
    let corpus = generate(&spec);
    let inputs = corpus.write_inputs(&a.out_dir)?;
    let name = |p: &Path| p.file_name().map(PathBuf::from).unwrap_or_default();
    let mut cfg = PipelineConfig::new(
        vec![name(&inputs.corpus)],
        AnnotationSource::Gazetteer {
            path: name(&inputs.gazetteer),
            min_link_probability: 0.0,
        },
        PathBuf::from("report"),
    );
    cfg.blacklist = Some(name(&inputs.blacklist));
    let config_path = a.out_dir.join("pipeline.json");
    let mut json = serde_json::to_vec_pretty(&cfg)?;
    json.push(b'\n');
    write(&config_path, json)?;
    println!("{}", config_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Annotate(a) => annotate(a),
        Command::Series(a) => series(a),
        Command::Trends(a) => trends(a),
        Command::Bursts(a) => bursts(a),
        Command::Render(a) => render(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
