use std::fs;
use std::path::Path;

use topictrend::annotate::parse_annotations_jsonl;
use topictrend::corpus::CorpusFilter;
use topictrend::pipeline::{run_pipeline, AnnotationSource, PipelineConfig, PipelineError};
use topictrend::report::parse_trend_table;
use topictrend::synth::{generate, SyntheticSpec, PUBLISHER_TITLES};
use topictrend::trend::TrendClass;

fn synthetic_config(dir: &Path, seed: u64) -> PipelineConfig {
    let corpus = generate(&SyntheticSpec::standard(seed));
    let inputs = corpus.write_inputs(&dir.join("in")).unwrap();
    let mut cfg = PipelineConfig::new(
        vec![inputs.corpus],
        AnnotationSource::Gazetteer {
            path: inputs.gazetteer,
            min_link_probability: 0.0,
        },
        dir.join("out"),
    );
    cfg.blacklist = Some(inputs.blacklist);
    cfg
}

#[test]
fn synthetic_run_finds_planted_signals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path(), 11);
    let run = run_pipeline(&cfg).unwrap();
    assert_eq!(run.documents_kept, 2000);
    assert_eq!(run.documents_read, 2100);
    assert_eq!((run.series.totals.year_min, run.series.totals.year_max), (2004, 2021));

    let top = &run.ranked[0];
    assert_eq!(top.topic, "Serverless computing");
    assert_eq!(top.result.trend_class, TrendClass::Increasing);
    assert!(top.hot);

    assert!(run
        .bursts
        .iter()
        .any(|b| b.topic == "Grid computing" && b.start_year <= 2012 && b.end_year >= 2008));

    let annos = parse_annotations_jsonl(&fs::read_to_string(dir.path().join("out/annotations.jsonl")).unwrap()).unwrap();
    assert!(!annos.is_empty());
    for title in PUBLISHER_TITLES {
        assert!(annos.iter().all(|a| a.entity_title != title), "{title} survived the blacklist");
    }

    let table = parse_trend_table(&fs::read(dir.path().join("out/trends.csv")).unwrap()).unwrap();
    assert_eq!(table.len(), run.ranked.len());
    assert_eq!(table[0].topic, top.topic);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path(), 4);
    let first = run_pipeline(&cfg).unwrap();
    let snapshot: Vec<(std::path::PathBuf, Vec<u8>)> =
        first.outputs.iter().map(|p| (p.clone(), fs::read(p).unwrap())).collect();
    let second = run_pipeline(&cfg).unwrap();
    assert_eq!(first.outputs, second.outputs);
    for (p, bytes) in snapshot {
        assert_eq!(fs::read(&p).unwrap(), bytes, "{} changed", p.display());
    }
    let names: Vec<String> = fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().all(|n| !n.starts_with(".staging")));
}

#[test]
fn manifest_records_hashes_but_no_token() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path(), 2);
    run_pipeline(&cfg).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 8);
    for o in outputs {
        assert_eq!(o["sha256"].as_str().unwrap().len(), 64);
    }
    assert_eq!(manifest["config"]["min_docs"], 20);
    assert!(!manifest.to_string().contains("token"));
}

#[test]
fn filter_that_removes_everything_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synthetic_config(dir.path(), 3);
    cfg.filter = CorpusFilter::default().with_years(1990, 1991).unwrap();
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, PipelineError::EmptyCorpus { read: 2100 }));
    assert_eq!(err.stage(), "filter");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_input_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synthetic_config(dir.path(), 3);
    cfg.corpus = vec![dir.path().join("nope.txt")];
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage(), "ingest");
    assert!(err.to_string().contains("nope.txt"));
}

#[test]
fn tab_delimited_export_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut wos = String::from("PT\tTI\tAB\tPY\tDT\tLA\tUT\n");
    for i in 0..60 {
        let year = 2004 + (i % 6);
        let topic = if i < 30 { "grid computing" } else { "edge computing" };
        wos.push_str(&format!(
            "J\tPaper {i}\tWe discuss {topic} here.\t{year}\tArticle\tEnglish\tWOS:{i:06}\n"
        ));
    }
    let corpus = dir.path().join("export.txt");
    fs::write(&corpus, wos).unwrap();
    let gaz = dir.path().join("g.tsv");
    fs::write(&gaz, "grid computing\tGrid computing\t0.7\nedge computing\tEdge computing\t0.7\n").unwrap();
    let mut cfg = PipelineConfig::new(
        vec![corpus],
        AnnotationSource::Gazetteer {
            path: gaz,
            min_link_probability: 0.0,
        },
        dir.path().join("out"),
    );
    cfg.min_docs = 10;
    let run = run_pipeline(&cfg).unwrap();
    assert_eq!(run.documents_kept, 60);
    assert_eq!(run.series.topics.len(), 2);
    assert_eq!((run.series.totals.year_min, run.series.totals.year_max), (2004, 2009));
}
