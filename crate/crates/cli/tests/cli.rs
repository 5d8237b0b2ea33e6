use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "seed = 5\n\n[simulation]\nn_users = 200\nn_articles_per_day = 12\nn_days = 4\n\n[analysis]\nn_perm = 99\n";

fn newsrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_newsrank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("experiment.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn default_config_simulates_a_non_empty_log() {
    let dir = tempfile::tempdir().unwrap();
    let o = newsrank(&["simulate", "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let events = fs::read_to_string(dir.path().join("events.ndjson")).unwrap();
    assert!(events.lines().count() > 10_000);
    assert!(dir.path().join("ground_truth.json").is_file());
}

#[test]
fn same_config_twice_gives_identical_events() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert!(newsrank(&["simulate", "--config", &cfg, "--out", s(out)])
            .status
            .success());
    }
    assert_eq!(
        fs::read(a.join("events.ndjson")).unwrap(),
        fs::read(b.join("events.ndjson")).unwrap()
    );
    let c = dir.path().join("c");
    assert!(
        newsrank(&["simulate", "--config", &cfg, "--seed", "6", "--out", s(&c)])
            .status
            .success()
    );
    assert_ne!(
        fs::read(a.join("events.ndjson")).unwrap(),
        fs::read(c.join("events.ndjson")).unwrap()
    );
}

#[test]
fn zero_weights_fail_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[simulation.weights.treatment]\npopularity = 0.0\nrecency = 0.0\nperformance = 0.0\npersonalization = 0.0\n",
    );
    let o = newsrank(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("weights.treatment"), "{}", stderr(&o));
}

#[test]
fn missing_files_are_user_errors() {
    let dir = tempfile::tempdir().unwrap();
    let absent = dir.path().join("absent");
    assert_eq!(
        newsrank(&["simulate", "--config", s(&absent)])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        newsrank(&["clean", s(&absent), "--out", s(dir.path())])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(newsrank(&["report", s(&absent)]).status.code(), Some(1));
    assert_eq!(newsrank(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(newsrank(&["--help"]).status.code(), Some(0));
}

#[test]
fn pipeline_through_files_and_report_markers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let run = |args: &[&str]| {
        let o = newsrank(args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        o
    };
    run(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        s(&out),
        "--score-trace",
    ]);
    assert!(out.join("score_trace.csv").is_file());
    run(&[
        "clean",
        s(&out.join("events.ndjson")),
        "--config",
        &cfg,
        "--out",
        s(&out),
    ]);
    let cleaned = out.join("clean").join("events.ndjson");
    run(&["analyze", s(&cleaned), "--config", &cfg, "--out", s(&out)]);
    let report = out.join("report.json");
    let o = run(&["report", s(&report)]);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("daily.ctr.welch"));

    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let comparisons = v["comparisons"].as_array_mut().unwrap();
    let ctr = comparisons
        .iter_mut()
        .find(|c| c["id"] == "daily.ctr.welch")
        .unwrap();
    ctr["result"]["p_value"] = 0.004.into();
    let edited = dir.path().join("edited.json");
    fs::write(&edited, v.to_string()).unwrap();
    let table = String::from_utf8(run(&["report", s(&edited)]).stdout).unwrap();
    let line = table
        .lines()
        .find(|l| l.trim_start().starts_with("daily.ctr.welch "))
        .unwrap();
    assert!(line.trim_end().ends_with(" **"), "{line}");

    v["schema_version"] = "2.0.0".into();
    fs::write(&edited, v.to_string()).unwrap();
    let o = newsrank(&["report", s(&edited)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("schema"));
}

#[test]
fn unparseable_log_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    assert!(newsrank(&["simulate", "--config", &cfg, "--out", s(&out)])
        .status
        .success());
    let events = out.join("events.ndjson");
    let mut text: Vec<String> = fs::read_to_string(&events)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    text[2] = "{not json".into();
    fs::write(&events, text.join("\n")).unwrap();
    let o = newsrank(&["clean", s(&events), "--config", &cfg, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
}
