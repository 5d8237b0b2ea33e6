//! File-to-file pipeline stages. Each stage reads only the artifacts of
//! the previous one, so they compose through a directory of files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::cleaning::{clean, CleaningReport};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::io::{load_event_log, save_event_log, write_atomic, write_json, EVENTS_FILE};
use crate::report::{analyze, render_table, ExperimentReport};
use crate::simulator::{run_experiment_traced, ScoreTraceRow};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const SCORE_TRACE_FILE: &str = "score_trace.csv";
pub const CLEAN_DIR: &str = "clean";
pub const CLEANING_REPORT_FILE: &str = "cleaning_report.json";
pub const REPORT_FILE: &str = "report.json";
pub const DAILY_FILE: &str = "daily.csv";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn trace_csv(rows: &[ScoreTraceRow]) -> String {
    let mut out = String::from("at,arm,user_id,rank,article_id,s1,s2,s3,s4,cs\n");
    for r in rows {
        let user = r.user_id.as_ref().map(|u| u.as_str()).unwrap_or("");
        let s4 = r.s4.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.at, r.arm, user, r.rank, r.article_id, r.s1, r.s2, r.s3, s4, r.cs
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct SimulateSummary {
    pub events: usize,
    pub users: usize,
    pub articles: usize,
    pub trace_rows: Option<usize>,
    pub dir: PathBuf,
}

/// Runs the simulator and writes the log with its catalogs and ground
/// truth into `out`, plus the ranker score trace when asked.
pub fn simulate(cfg: &ExperimentConfig, out: &Path, score_trace: bool) -> Result<SimulateSummary> {
    cfg.validate()?;
    let mut trace = score_trace.then(Vec::new);
    let sim = run_experiment_traced(&cfg.sim_config(), trace.as_mut())?;
    ensure_dir(out)?;
    save_event_log(&sim.log, out)?;
    write_json(&out.join(GROUND_TRUTH_FILE), &sim.truth)?;
    if let Some(rows) = &trace {
        write_atomic(&out.join(SCORE_TRACE_FILE), trace_csv(rows).as_bytes())?;
    }
    Ok(SimulateSummary {
        events: sim.log.len(),
        users: sim.log.catalog.users.len(),
        articles: sim.log.catalog.articles.len(),
        trace_rows: trace.map(|t| t.len()),
        dir: out.to_owned(),
    })
}

/// Cleans the log at `events` into `out/clean/`, with the cleaning report
/// in `out`. Records rejected while loading are counted in the report.
pub fn clean_log(cfg: &ExperimentConfig, events: &Path, out: &Path) -> Result<CleaningReport> {
    cfg.validate()?;
    let loaded = load_event_log(events)?;
    let (cleaned, mut report) = clean(&loaded.log, &cfg.cleaning)?;
    report.rejected_at_load = loaded.rejected.len();
    let dir = out.join(CLEAN_DIR);
    save_event_log(&cleaned, &dir)?;
    write_json(&out.join(CLEANING_REPORT_FILE), &report)?;
    Ok(report)
}

/// The cleaned log written by [`clean_log`].
pub fn cleaned_events_path(out: &Path) -> PathBuf {
    out.join(CLEAN_DIR).join(EVENTS_FILE)
}

/// Analyzes the log at `events` and writes `report.json` and `daily.csv`
/// into `out`.
pub fn analyze_log(cfg: &ExperimentConfig, events: &Path, out: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let loaded = load_event_log(events)?;
    let report = analyze(&loaded.log, &cfg.metrics, &cfg.analysis, cfg.seed)?;
    ensure_dir(out)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    write_atomic(&out.join(DAILY_FILE), report.daily_csv().as_bytes())?;
    Ok(report)
}

/// Loads a report file and renders it as text.
pub fn render_report(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report = ExperimentReport::from_json(&text).map_err(|e| match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok(render_table(&report))
}

/// All four stages in `out`: the raw log at the top, the cleaned log in
/// `clean/`, the report next to the raw log.
pub fn run_all(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    simulate(cfg, out, false)?;
    clean_log(cfg, &out.join(EVENTS_FILE), out)?;
    analyze_log(cfg, &cleaned_events_path(out), out)
}
