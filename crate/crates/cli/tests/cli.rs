use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn topictrend(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topictrend"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ANNOTATOR_API_TOKEN")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn synth_then_pipeline_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(topictrend(&["synth", "--seed", "3", "--out-dir", "data"], d));
    let stdout = ok(topictrend(
        &["pipeline", "--config", "data/pipeline.json", "--top-k", "1", "--out", "report"],
        d,
    ));
    assert!(stdout.contains("2000 of 2100 records kept"));
    for f in ["trends.csv", "trends.json", "bursts.csv", "bursts.json", "timeline.svg", "manifest.json"] {
        assert!(d.join("report").join(f).exists(), "{f} missing");
    }
    let csv = fs::read_to_string(d.join("report/trends.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("Serverless computing,18,"));
    let manifest = fs::read_to_string(d.join("report/manifest.json")).unwrap();
    assert!(manifest.contains("\"top_k\": 1"));
}

#[test]
fn staged_commands_match_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(topictrend(&["synth", "--seed", "8", "--out-dir", "data"], d));
    ok(topictrend(&["pipeline", "--config", "data/pipeline.json"], d));

    ok(topictrend(&["ingest", "data/corpus.jsonl", "--out", "staged/corpus.jsonl"], d));
    ok(topictrend(
        &[
            "annotate",
            "--corpus",
            "staged/corpus.jsonl",
            "--gazetteer",
            "data/gazetteer.tsv",
            "--blacklist",
            "data/blacklist.txt",
            "--out",
            "staged/annotations.jsonl",
        ],
        d,
    ));
    ok(topictrend(
        &[
            "series",
            "--corpus",
            "staged/corpus.jsonl",
            "--annotations",
            "staged/annotations.jsonl",
            "--out",
            "staged/series.json",
        ],
        d,
    ));
    ok(topictrend(&["trends", "--series", "staged/series.json", "--out-dir", "staged"], d));
    ok(topictrend(&["bursts", "--series", "staged/series.json", "--out-dir", "staged"], d));
    ok(topictrend(
        &[
            "render",
            "--bursts",
            "staged/bursts.json",
            "--series",
            "staged/series.json",
            "--topic",
            "Serverless computing",
            "--out-dir",
            "staged",
        ],
        d,
    ));

    for f in ["annotations.jsonl", "series.json", "trends.csv", "trends.json", "bursts.csv", "bursts.json", "timeline.svg"] {
        assert_eq!(
            fs::read(d.join("staged").join(f)).unwrap(),
            fs::read(d.join("data/report").join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn remote_without_token_fails_clearly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(topictrend(&["synth", "--docs", "50", "--topics", "3", "--out-dir", "data"], d));
    let out = topictrend(
        &[
            "annotate",
            "--corpus",
            "data/corpus.jsonl",
            "--remote",
            "--endpoint",
            "http://127.0.0.1:9/tag",
            "--out",
            "a.jsonl",
        ],
        d,
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ANNOTATOR_API_TOKEN"), "{err}");
    assert!(!d.join("a.jsonl").exists());
}

#[test]
fn config_errors_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "corpus = []\n[annotation]\nmode = \"file\"\npath = \"x\"\n").unwrap();
    let out = topictrend(&["pipeline", "--config", "bad.toml"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config: no corpus files"));

    let out = topictrend(&["pipeline", "--config", "missing.toml"], d);
    assert!(String::from_utf8_lossy(&out.stderr).contains("config: "));
}

#[test]
fn empty_filter_result_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(topictrend(&["synth", "--docs", "50", "--topics", "3", "--out-dir", "data"], d));
    let out = topictrend(
        &["ingest", "data/corpus.jsonl", "--year-min", "1950", "--year-max", "1951", "--out", "c.jsonl"],
        d,
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("filter: no documents left"));
}
