//! The experiment report: per-arm summaries, daily series, activity
//! segments and the battery of arm comparisons, with JSON, CSV and text
//! renderings.
//!
//! Every comparison is oriented as personalization relative to control, so
//! a positive effect size means the personalized arm scored higher.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::{AnalysisOptions, PermutationUnit};
use crate::error::{Error, Result};
use crate::metrics::{
    engagement, journalistic, split_by_day, DailyPoint, EngagementSummary, JournalisticSummary,
    Metric, MetricOptions,
};
use crate::model::{
    partition_by_arm, Arm, EventKind, EventLog, InteractionEvent, UserId, SECS_PER_DAY,
};
use crate::simulator::derive_seed;
use crate::stats::{
    activity_clusters_with, chi_squared, compare, mann_whitney_u, permutation_test_jsd,
    permutation_test_jsd_units, significance_marker, t_test, ClusterScore, TVariant, TestResult,
    TestSelection,
};

/// Bumped on any change to the serialized shape.
pub const SCHEMA_VERSION: &str = "1.0.0";

const TAG_PERM_IMPRESSIONS: u64 = 101;
const TAG_PERM_CLICKS: u64 = 102;
const TAG_SEGMENTS: u64 = 103;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSettings {
    pub seed: u64,
    pub alpha: f64,
    pub n_perm: usize,
    pub permutation_unit: PermutationUnit,
    pub include_editorial: bool,
    pub utc_offset_hours: i32,
    pub metrics: MetricOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSummary {
    pub events: usize,
    pub impressions: usize,
    pub clicks: usize,
    pub users: usize,
    pub articles_shown: usize,
    /// Events on editorially pinned articles left out of the analysis.
    pub editorial_events_excluded: usize,
    /// Events of users without an arm.
    pub unassigned_events_excluded: usize,
    pub first_day: Option<String>,
    pub last_day: Option<String>,
    pub days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSummary {
    pub arm: Arm,
    pub users: usize,
    /// Pooled over the whole period.
    pub engagement: EngagementSummary,
    pub journalistic: JournalisticSummary,
    /// Means of the daily values, the quantity the daily tests compare.
    pub daily_means: BTreeMap<Metric, Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleUnit {
    Day,
    User,
    Click,
    Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Welch's t-test regardless of the normality screen.
    Welch,
    /// The test chosen by the normality and variance-ratio screen.
    Protocol,
    MannWhitney,
    ChiSquared,
    PermutationJsd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub id: String,
    pub metric: String,
    pub unit: SampleUnit,
    pub method: Method,
    /// Sample means; absent for distribution tests.
    pub personalization: Option<f64>,
    pub control: Option<f64>,
    pub selection: Option<TestSelection>,
    pub result: Option<TestResult>,
    /// Why `result` is missing.
    pub note: Option<String>,
}

impl Comparison {
    pub fn p_value(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.p_value)
    }

    pub fn effect(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.effect_size.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentArm {
    pub arm: Arm,
    pub users: usize,
    pub engagement: EngagementSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub index: usize,
    pub label: String,
    pub users: usize,
    pub min_clicks: u64,
    pub max_clicks: u64,
    pub arms: Vec<SegmentArm>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentAnalysis {
    pub k: usize,
    /// Calinski-Harabasz optimum over the candidate counts.
    pub best_k: Option<usize>,
    pub scan: Vec<ClusterScore>,
    pub segments: Vec<Segment>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DailyRow {
    pub date: String,
    pub metric: Metric,
    pub arm: Arm,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub schema_version: String,
    pub settings: ReportSettings,
    pub input: InputSummary,
    pub arms: Vec<ArmSummary>,
    pub comparisons: Vec<Comparison>,
    pub segments: SegmentAnalysis,
    pub daily: Vec<DailyRow>,
}

/// ISO date of a day index.
pub fn iso_date(day: i64) -> String {
    chrono::DateTime::from_timestamp(day * SECS_PER_DAY, 0)
        .map(|t| t.date_naive().to_string())
        .unwrap_or_else(|| format!("day{day}"))
}

fn mean(x: &[f64]) -> Option<f64> {
    (!x.is_empty()).then(|| x.iter().sum::<f64>() / x.len() as f64)
}

type Daily = BTreeMap<Metric, Vec<DailyPoint>>;

fn daily_metrics(log: &EventLog, tz: i64, opts: &MetricOptions) -> Daily {
    let days = split_by_day(log, tz);
    Metric::ALL
        .iter()
        .map(|&m| {
            let pts = days
                .iter()
                .map(|(&day, sub)| DailyPoint {
                    day,
                    value: m.evaluate(sub, opts),
                })
                .collect();
            (m, pts)
        })
        .collect()
}

fn values(points: &[DailyPoint]) -> Vec<f64> {
    points.iter().filter_map(|p| p.value).collect()
}

fn two_sample(
    id: String,
    metric: &str,
    unit: SampleUnit,
    method: Method,
    a: &[f64],
    b: &[f64],
    alpha: f64,
) -> Comparison {
    let (selection, outcome) = match method {
        Method::Welch => (None, t_test(a, b, TVariant::Welch)),
        Method::Protocol => match compare(a, b, alpha) {
            Ok((s, r)) => (Some(s), Ok(r)),
            Err(e) => (None, Err(e)),
        },
        Method::MannWhitney if a.is_empty() || b.is_empty() => (
            None,
            Err(Error::Degenerate("an arm has no observations".into())),
        ),
        Method::MannWhitney => (None, Ok(mann_whitney_u(a, b))),
        Method::ChiSquared | Method::PermutationJsd => {
            unreachable!("distribution tests take counts")
        }
    };
    let (result, note) = match outcome {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Comparison {
        id,
        metric: metric.to_owned(),
        unit,
        method,
        personalization: mean(a),
        control: mean(b),
        selection,
        result,
        note,
    }
}

fn distribution(
    id: String,
    metric: &str,
    method: Method,
    outcome: Result<TestResult>,
) -> Comparison {
    let (result, note) = match outcome {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Comparison {
        id,
        metric: metric.to_owned(),
        unit: SampleUnit::Event,
        method,
        personalization: None,
        control: None,
        selection: None,
        result,
        note,
    }
}

fn per_user_counts(events: &[InteractionEvent]) -> (Vec<f64>, Vec<f64>) {
    let mut by_user: BTreeMap<&UserId, (u64, u64)> = BTreeMap::new();
    for e in events {
        let slot = by_user.entry(&e.user_id).or_default();
        match e.kind {
            EventKind::Impression => slot.0 += 1,
            EventKind::Click => slot.1 += 1,
        }
    }
    by_user.values().map(|&(i, c)| (i as f64, c as f64)).unzip()
}

fn per_click(
    events: &[InteractionEvent],
    f: impl Fn(&InteractionEvent) -> Option<f64>,
) -> Vec<f64> {
    events
        .iter()
        .filter(|e| e.is_click())
        .filter_map(f)
        .collect()
}

/// Per-user event counts of `kind` over `sections`.
fn section_vectors(
    log: &EventLog,
    kind: EventKind,
    sections: &BTreeMap<String, usize>,
) -> Vec<Vec<u64>> {
    let mut users: BTreeMap<&UserId, Vec<u64>> = BTreeMap::new();
    for e in log.events.iter().filter(|e| e.kind == kind) {
        if let Some(a) = log.article(&e.article_id) {
            users
                .entry(&e.user_id)
                .or_insert_with(|| vec![0; sections.len()])[sections[&a.section]] += 1;
        }
    }
    users.into_values().collect()
}

fn column_sums(units: &[Vec<u64>], width: usize) -> Vec<u64> {
    let mut out = vec![0u64; width];
    for u in units {
        for (o, x) in out.iter_mut().zip(u) {
            *o += x;
        }
    }
    out
}

/// Daily tests for `metrics`, treatment against control.
fn daily_comparisons(
    prefix: &str,
    metrics: &[Metric],
    treat: &Daily,
    ctrl: &Daily,
    alpha: f64,
) -> Vec<Comparison> {
    let mut out = Vec::new();
    for &m in metrics {
        let (a, b) = (values(&treat[&m]), values(&ctrl[&m]));
        for (method, tag) in [
            (Method::Welch, "welch"),
            (Method::MannWhitney, "mann_whitney"),
            (Method::Protocol, "protocol"),
        ] {
            out.push(two_sample(
                format!("{prefix}daily.{}.{tag}", m.name()),
                m.name(),
                SampleUnit::Day,
                method,
                &a,
                &b,
                alpha,
            ));
        }
    }
    out
}

fn user_comparisons(
    prefix: &str,
    treat: &EventLog,
    ctrl: &EventLog,
    alpha: f64,
) -> Vec<Comparison> {
    let (ti, tc) = per_user_counts(&treat.events);
    let (ci, cc) = per_user_counts(&ctrl.events);
    vec![
        two_sample(
            format!("{prefix}user.ipu.mann_whitney"),
            "ipu",
            SampleUnit::User,
            Method::MannWhitney,
            &ti,
            &ci,
            alpha,
        ),
        two_sample(
            format!("{prefix}user.cpu.mann_whitney"),
            "cpu",
            SampleUnit::User,
            Method::MannWhitney,
            &tc,
            &cc,
            alpha,
        ),
    ]
}

struct Analysis<'a> {
    log: &'a EventLog,
    opts: &'a AnalysisOptions,
    metric_opts: &'a MetricOptions,
    seed: u64,
}

impl Analysis<'_> {
    fn section_tests(&self, treat: &EventLog, ctrl: &EventLog) -> Vec<Comparison> {
        let sections: BTreeMap<String, usize> = self
            .log
            .catalog
            .sections()
            .into_iter()
            .enumerate()
            .map(|(i, s)| (s, i))
            .collect();
        let width = sections.len();
        let mut out = Vec::new();
        for (kind, name, tag) in [
            (
                EventKind::Impression,
                "section_impressions",
                TAG_PERM_IMPRESSIONS,
            ),
            (EventKind::Click, "section_clicks", TAG_PERM_CLICKS),
        ] {
            let (tu, cu) = (
                section_vectors(treat, kind, &sections),
                section_vectors(ctrl, kind, &sections),
            );
            let (ts, cs) = (column_sums(&tu, width), column_sums(&cu, width));
            // Sections nobody saw carry no information and would zero a marginal.
            let keep: Vec<usize> = (0..width).filter(|&i| ts[i] + cs[i] > 0).collect();
            let pick = |v: &[u64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
            out.push(distribution(
                format!("{name}.chi_squared"),
                name,
                Method::ChiSquared,
                chi_squared(&pick(&ts), &pick(&cs)),
            ));
            let seed = derive_seed(self.seed, tag);
            let perm = match self.opts.permutation_unit {
                PermutationUnit::Events => permutation_test_jsd(&ts, &cs, self.opts.n_perm, seed),
                PermutationUnit::Users => {
                    permutation_test_jsd_units(&tu, &cu, self.opts.n_perm, seed)
                }
            };
            let mut c = distribution(
                format!("{name}.permutation_jsd"),
                name,
                Method::PermutationJsd,
                perm,
            );
            if self.opts.permutation_unit == PermutationUnit::Users {
                c.unit = SampleUnit::User;
            }
            out.push(c);
        }
        out
    }

    fn segments(&self) -> SegmentAnalysis {
        let mut clicks: BTreeMap<&UserId, u64> = BTreeMap::new();
        for e in &self.log.events {
            *clicks.entry(&e.user_id).or_default() += u64::from(e.is_click());
        }
        let users: Vec<&UserId> = clicks.keys().copied().collect();
        let counts: Vec<u64> = clicks.values().copied().collect();
        let seed = derive_seed(self.seed, TAG_SEGMENTS);
        let restarts = self.opts.kmeans_restarts;
        let k = self.opts.segments;
        let mut out = SegmentAnalysis {
            k,
            best_k: None,
            scan: Vec::new(),
            segments: Vec::new(),
            note: None,
        };
        if let Ok(scan) =
            activity_clusters_with(&counts, &self.opts.segment_candidates, restarts, seed)
        {
            out.best_k = Some(scan.k);
            out.scan = scan.scores;
        }
        let fit = match activity_clusters_with(&counts, &[k], restarts, seed) {
            Ok(f) if f.k == k => f,
            Ok(f) => {
                out.note = Some(format!(
                    "only {} distinct activity levels for {k} segments",
                    f.k
                ));
                return out;
            }
            Err(e) => {
                out.note = Some(e.to_string());
                return out;
            }
        };
        let labels: BTreeMap<UserId, usize> = users
            .iter()
            .map(|u| (*u).clone())
            .zip(fit.labels.iter().copied())
            .collect();
        let names: Vec<String> = if k == 3 {
            ["low", "medium", "high"].map(String::from).to_vec()
        } else {
            (1..=k).map(|i| format!("segment_{i}")).collect()
        };
        let tz = self.opts.utc_offset_secs();
        for (index, name) in names.into_iter().enumerate() {
            let members: BTreeSet<&UserId> = labels
                .iter()
                .filter(|(_, &l)| l == index)
                .map(|(u, _)| u)
                .collect();
            let member_clicks: Vec<u64> = members.iter().map(|u| clicks[u]).collect();
            let sub = self.log.filter(|e| members.contains(&e.user_id));
            let parts = partition_by_arm(&sub);
            let arms = Arm::BOTH
                .iter()
                .map(|&arm| {
                    let l = parts.arm(arm);
                    SegmentArm {
                        arm,
                        users: l.active_users().len(),
                        engagement: engagement(&l.events, self.metric_opts),
                    }
                })
                .collect();
            let prefix = format!("segment.{name}.");
            let treat = daily_metrics(&parts.treatment, tz, self.metric_opts);
            let ctrl = daily_metrics(&parts.control, tz, self.metric_opts);
            let mut comparisons =
                daily_comparisons(&prefix, &[Metric::Ctr], &treat, &ctrl, self.opts.alpha);
            comparisons.extend(user_comparisons(
                &prefix,
                &parts.treatment,
                &parts.control,
                self.opts.alpha,
            ));
            out.segments.push(Segment {
                index,
                label: name,
                users: members.len(),
                min_clicks: member_clicks.iter().copied().min().unwrap_or(0),
                max_clicks: member_clicks.iter().copied().max().unwrap_or(0),
                arms,
                comparisons,
            });
        }
        out
    }
}

/// Builds the report for a cleaned log. Fails when either arm has no users.
pub fn analyze(
    log: &EventLog,
    metric_opts: &MetricOptions,
    opts: &AnalysisOptions,
    seed: u64,
) -> Result<ExperimentReport> {
    metric_opts.validate()?;
    opts.validate()?;
    let kept = if opts.include_editorial {
        log.clone()
    } else {
        log.filter(|e| {
            log.article(&e.article_id)
                .is_none_or(|a| !a.editorial_pinned)
        })
    };
    let editorial_events_excluded = log.len() - kept.len();
    let parts = partition_by_arm(&kept);
    for arm in Arm::BOTH {
        if parts.arm(arm).is_empty() {
            return Err(Error::InvalidInput(format!(
                "the {arm} arm has no users in the log"
            )));
        }
    }
    let assigned = kept.filter(|e| kept.user(&e.user_id).is_some_and(|u| u.arm.is_some()));
    let tz = opts.utc_offset_secs();
    let analysis = Analysis {
        log: &assigned,
        opts,
        metric_opts,
        seed,
    };

    let daily: BTreeMap<Arm, Daily> = Arm::BOTH
        .iter()
        .map(|&a| (a, daily_metrics(parts.arm(a), tz, metric_opts)))
        .collect();
    let arms = Arm::BOTH
        .iter()
        .map(|&arm| {
            let l = parts.arm(arm);
            ArmSummary {
                arm,
                users: l.active_users().len(),
                engagement: engagement(&l.events, metric_opts),
                journalistic: journalistic(l, metric_opts),
                daily_means: daily[&arm]
                    .iter()
                    .map(|(&m, pts)| (m, mean(&values(pts))))
                    .collect(),
            }
        })
        .collect();

    let (treat, ctrl) = (&parts.treatment, &parts.control);
    let mut comparisons = daily_comparisons(
        "",
        &Metric::ALL,
        &daily[&Arm::Personalization],
        &daily[&Arm::Control],
        opts.alpha,
    );
    comparisons.extend(user_comparisons("", treat, ctrl, opts.alpha));
    for (metric, f) in [
        (
            "reading_percentage",
            (|e: &InteractionEvent| e.reading_percentage) as fn(&InteractionEvent) -> Option<f64>,
        ),
        ("activity_duration", |e: &InteractionEvent| {
            e.activity_duration_s
        }),
    ] {
        let (a, b) = (per_click(&treat.events, f), per_click(&ctrl.events, f));
        comparisons.push(two_sample(
            format!("click.{metric}.mann_whitney"),
            metric,
            SampleUnit::Click,
            Method::MannWhitney,
            &a,
            &b,
            opts.alpha,
        ));
    }
    comparisons.extend(analysis.section_tests(treat, ctrl));

    let days: BTreeSet<i64> = assigned
        .events
        .iter()
        .map(|e| crate::model::day_index(e.at, tz))
        .collect();
    let mut rows = Vec::new();
    for (&arm, series) in &daily {
        for (&metric, pts) in series {
            rows.extend(pts.iter().map(|p| DailyRow {
                date: iso_date(p.day),
                metric,
                arm,
                value: p.value,
            }));
        }
    }
    rows.sort_by(|a, b| (&a.date, a.metric, a.arm).cmp(&(&b.date, b.metric, b.arm)));

    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION.into(),
        settings: ReportSettings {
            seed,
            alpha: opts.alpha,
            n_perm: opts.n_perm,
            permutation_unit: opts.permutation_unit,
            include_editorial: opts.include_editorial,
            utc_offset_hours: opts.utc_offset_hours,
            metrics: *metric_opts,
        },
        input: InputSummary {
            events: assigned.len(),
            impressions: assigned.events.iter().filter(|e| e.is_impression()).count(),
            clicks: assigned.events.iter().filter(|e| e.is_click()).count(),
            users: assigned.active_users().len(),
            articles_shown: assigned
                .events
                .iter()
                .map(|e| &e.article_id)
                .collect::<BTreeSet<_>>()
                .len(),
            editorial_events_excluded,
            unassigned_events_excluded: parts.excluded_events,
            first_day: days.first().map(|&d| iso_date(d)),
            last_day: days.last().map(|&d| iso_date(d)),
            days: days.len(),
        },
        arms,
        segments: analysis.segments(),
        comparisons,
        daily: rows,
    })
}

impl ExperimentReport {
    /// Parses a report, rejecting other schema versions.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("report is not JSON: {e}")))?;
        match value.get("schema_version").and_then(|v| v.as_str()) {
            Some(SCHEMA_VERSION) => {}
            Some(other) => {
                return Err(Error::InvalidInput(format!(
                    "report schema version {other} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(Error::InvalidInput("report has no schema_version".into())),
        }
        serde_json::from_value(value)
            .map_err(|e| Error::InvalidInput(format!("report does not match the schema: {e}")))
    }

    pub fn arm(&self, arm: Arm) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == arm)
    }

    pub fn comparison(&self, id: &str) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .chain(self.segments.segments.iter().flat_map(|s| &s.comparisons))
            .find(|c| c.id == id)
    }

    /// The daily series as `day,metric,arm,value` CSV; missing values are
    /// left empty.
    pub fn daily_csv(&self) -> String {
        let mut out = String::from("day,metric,arm,value\n");
        for r in &self.daily {
            let v = r.value.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", r.date, r.metric.name(), r.arm, v);
        }
        out
    }
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.4}"),
        _ => "n/a".into(),
    }
}

fn p_cell(p: Option<f64>) -> String {
    match p {
        Some(p) if p < 1e-4 => format!("{p:.1e}"),
        Some(p) => format!("{p:.4}"),
        None => "n/a".into(),
    }
}

fn comparison_rows(out: &mut String, rows: &[Comparison]) {
    if rows.is_empty() {
        out.push_str("  n/a\n");
        return;
    }
    let _ = writeln!(
        out,
        "  {:<44} {:>10} {:>10} {:<16} {:>9} {:>9} sig",
        "comparison", "control", "personal.", "test", "effect", "p"
    );
    for c in rows {
        let test = c.result.as_ref().map_or("n/a", |r| r.test_name.as_str());
        let marker = c.p_value().map_or("", significance_marker);
        let _ = writeln!(
            out,
            "  {:<44} {:>10} {:>10} {:<16} {:>9} {:>9} {marker}",
            c.id,
            cell(c.control),
            cell(c.personalization),
            test,
            cell(c.effect()),
            p_cell(c.p_value()),
        );
    }
}

/// Plain-text tables with `*` p<0.05, `**` p<0.01 and `***` p<0.001.
pub fn render_table(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let s = &report.settings;
    let i = &report.input;
    let _ = writeln!(
        out,
        "Experiment report (schema {}, seed {}, alpha {})",
        report.schema_version, s.seed, s.alpha
    );
    let _ = writeln!(
        out,
        "Input: {} events ({} impressions, {} clicks), {} users, {} articles, {} days ({} to {})",
        i.events,
        i.impressions,
        i.clicks,
        i.users,
        i.articles_shown,
        i.days,
        i.first_day.as_deref().unwrap_or("n/a"),
        i.last_day.as_deref().unwrap_or("n/a"),
    );

    out.push_str("\nPer-arm metrics (overall | mean of daily values)\n");
    if report.arms.is_empty() {
        out.push_str("  n/a\n");
    } else {
        let _ = write!(out, "  {:<20}", "metric");
        for a in &report.arms {
            let _ = write!(out, " {:>23}", a.arm.label());
        }
        out.push('\n');
        let _ = write!(out, "  {:<20}", "users");
        for a in &report.arms {
            let _ = write!(out, " {:>23}", a.users);
        }
        out.push('\n');
        for m in Metric::ALL {
            let _ = write!(out, "  {:<20}", m.name());
            for a in &report.arms {
                let overall = overall_value(a, m);
                let daily = a.daily_means.get(&m).copied().flatten();
                let _ = write!(
                    out,
                    " {:>23}",
                    format!("{:>10} | {:<10}", cell(overall), cell(daily))
                );
            }
            out.push('\n');
        }
    }

    out.push_str("\nComparisons (personalization vs control)\n");
    comparison_rows(&mut out, &report.comparisons);

    let seg = &report.segments;
    let _ = writeln!(
        out,
        "\nActivity segments (k = {}, Calinski-Harabasz optimum {})",
        seg.k,
        seg.best_k.map_or("n/a".into(), |k| k.to_string())
    );
    if seg.segments.is_empty() {
        let _ = writeln!(
            out,
            "  n/a{}",
            seg.note
                .as_deref()
                .map(|n| format!(" ({n})"))
                .unwrap_or_default()
        );
    }
    for sg in &seg.segments {
        let _ = writeln!(
            out,
            "Segment {} ({} users, {} to {} clicks)",
            sg.label, sg.users, sg.min_clicks, sg.max_clicks
        );
        for a in &sg.arms {
            let e = &a.engagement;
            let _ = writeln!(
                out,
                "  {:<16} users {:>6} ctr {:>8} ipu {:>9} cpu {:>9}",
                a.arm.label(),
                a.users,
                cell(e.ctr),
                cell(e.ipu),
                cell(e.cpu)
            );
        }
        comparison_rows(&mut out, &sg.comparisons);
    }
    out.lines().map(|l| format!("{}\n", l.trim_end())).collect()
}

fn overall_value(a: &ArmSummary, m: Metric) -> Option<f64> {
    let (e, j) = (&a.engagement, &a.journalistic);
    match m {
        Metric::Ctr => e.ctr,
        Metric::Ccr => e.ccr,
        Metric::Ipu => e.ipu,
        Metric::Cpu => e.cpu,
        Metric::ReadingPercentage => e.avg_reading_percentage,
        Metric::ActivityDuration => e.avg_activity_duration_s,
        Metric::ClickCoverage => j.click_coverage,
        Metric::Arp => j.arp,
        Metric::Acp => j.acp,
        Metric::Ppi => j.ppi,
        Metric::GiniImpressions => j.gini_impressions,
        Metric::GiniClicks => j.gini_clicks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::model::{Article, Catalog, User};

    fn catalog(users: &[(&str, Option<Arm>)]) -> Arc<Catalog> {
        let articles = [
            ("a", "Sport", false),
            ("b", "Kultur", false),
            ("c", "Sport", false),
            ("p", "Nyheter", true),
        ]
        .iter()
        .map(|&(id, s, pinned)| Article {
            article_id: id.into(),
            section: s.into(),
            published_at: 0,
            initial_news_value: 50,
            length_chars: 1000,
            editorial_pinned: pinned,
            pinned_position: pinned.then_some(0),
        })
        .collect();
        let users = users
            .iter()
            .map(|&(u, arm)| User {
                user_id: u.into(),
                subscriber: true,
                subscribed_since: 0,
                arm,
            })
            .collect();
        Arc::new(Catalog::new(articles, users).unwrap())
    }

    /// Four days; personalization readers click more.
    fn log() -> EventLog {
        let users = [
            ("c1", Some(Arm::Control)),
            ("c2", Some(Arm::Control)),
            ("t1", Some(Arm::Personalization)),
            ("t2", Some(Arm::Personalization)),
            ("x", None),
        ];
        let mut events = Vec::new();
        for day in 0..4i64 {
            let t0 = day * SECS_PER_DAY + 3600;
            for (i, (u, _)) in users.iter().enumerate() {
                let t = t0 + i as i64 * 100;
                for (j, a) in ["a", "b", "c", "p"].iter().enumerate() {
                    events.push(InteractionEvent::impression(
                        &(*u).into(),
                        &(*a).into(),
                        t + j as i64,
                        j as u32,
                    ));
                }
                let clicks = if u.starts_with('t') {
                    2 + (day % 2) as usize
                } else {
                    1
                };
                for (j, a) in ["a", "b", "c"].iter().take(clicks).enumerate() {
                    let rp = 0.3 + 0.1 * j as f64;
                    events.push(InteractionEvent::click(
                        &(*u).into(),
                        &(*a).into(),
                        t + 10 + j as i64,
                        j as u32,
                        rp,
                        40.0 + day as f64,
                    ));
                }
            }
        }
        events.sort_by_key(|e| e.at);
        EventLog::new(catalog(&users), events).unwrap()
    }

    fn opts() -> AnalysisOptions {
        AnalysisOptions {
            n_perm: 99,
            ..AnalysisOptions::default()
        }
    }

    #[test]
    fn report_covers_the_battery() {
        let r = analyze(&log(), &MetricOptions::default(), &opts(), 7).unwrap();
        assert_eq!(r.schema_version, SCHEMA_VERSION);
        assert_eq!(r.input.days, 4);
        assert_eq!(r.input.first_day.as_deref(), Some("1970-01-01"));
        assert_eq!(r.arms.len(), 2);
        for id in [
            "daily.ctr.welch",
            "daily.ctr.protocol",
            "daily.ctr.mann_whitney",
            "daily.click_coverage.welch",
            "daily.ppi.welch",
            "user.ipu.mann_whitney",
            "user.cpu.mann_whitney",
            "click.reading_percentage.mann_whitney",
            "click.activity_duration.mann_whitney",
            "section_impressions.chi_squared",
            "section_clicks.permutation_jsd",
        ] {
            assert!(r.comparison(id).is_some(), "missing {id}");
        }
        let ctr = r.comparison("daily.ctr.welch").unwrap();
        assert!(ctr.personalization.unwrap() > ctr.control.unwrap());
        assert!(ctr.effect().unwrap() > 0.0);
        let cpu = r.comparison("user.cpu.mann_whitney").unwrap();
        assert_eq!(cpu.effect(), Some(1.0));
        // Equal impression mix in both arms.
        let chi = r.comparison("section_impressions.chi_squared").unwrap();
        assert_eq!(chi.p_value(), Some(1.0));
    }

    #[test]
    fn editorial_and_unassigned_events_are_excluded() {
        let r = analyze(&log(), &MetricOptions::default(), &opts(), 7).unwrap();
        // 4 days x 5 users x 1 pinned impression.
        assert_eq!(r.input.editorial_events_excluded, 20);
        assert_eq!(r.input.unassigned_events_excluded, 4 * 3 + 4);
        assert_eq!(r.input.users, 4);
        let with = analyze(
            &log(),
            &MetricOptions::default(),
            &AnalysisOptions {
                include_editorial: true,
                ..opts()
            },
            7,
        )
        .unwrap();
        assert_eq!(with.input.editorial_events_excluded, 0);
        assert_eq!(with.input.impressions, r.input.impressions + 16);
    }

    #[test]
    fn an_empty_arm_is_an_error() {
        let l = log();
        let only_control = l.filter(|e| e.user_id.as_str().starts_with('c'));
        let err = analyze(&only_control, &MetricOptions::default(), &opts(), 7).unwrap_err();
        assert!(err.to_string().contains("personalization"), "{err}");
    }

    #[test]
    fn too_few_users_leave_segments_empty_with_a_note() {
        let r = analyze(&log(), &MetricOptions::default(), &opts(), 7).unwrap();
        // Two distinct click totals cannot form three segments.
        assert!(r.segments.segments.is_empty());
        assert!(r.segments.note.is_some());
        assert!(render_table(&r).contains("n/a"));
    }

    #[test]
    fn deterministic_and_round_trips() {
        let a = analyze(&log(), &MetricOptions::default(), &opts(), 7).unwrap();
        let b = analyze(&log(), &MetricOptions::default(), &opts(), 7).unwrap();
        let ja = String::from_utf8(crate::io::to_json_pretty(&a).unwrap()).unwrap();
        assert_eq!(
            ja,
            String::from_utf8(crate::io::to_json_pretty(&b).unwrap()).unwrap()
        );
        assert_eq!(ExperimentReport::from_json(&ja).unwrap(), a);
    }

    #[test]
    fn other_schema_versions_are_rejected() {
        let r = analyze(&log(), &MetricOptions::default(), &opts(), 7).unwrap();
        let mut v = serde_json::to_value(&r).unwrap();
        v["schema_version"] = "0.9.0".into();
        let err = ExperimentReport::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("0.9.0"));
        assert!(ExperimentReport::from_json("{\"schema_version\": \"1.0.0\"}").is_err());
        assert!(ExperimentReport::from_json("not json").is_err());
    }

    #[test]
    fn markers_follow_the_p_value() {
        let mut r = analyze(&log(), &MetricOptions::default(), &opts(), 7).unwrap();
        let c = r
            .comparisons
            .iter_mut()
            .find(|c| c.id == "daily.ctr.welch")
            .unwrap();
        c.result.as_mut().unwrap().p_value = 0.004;
        let c = r
            .comparisons
            .iter_mut()
            .find(|c| c.id == "user.ipu.mann_whitney")
            .unwrap();
        c.result.as_mut().unwrap().p_value = 0.2;
        let text = render_table(&r);
        let line = |id: &str| {
            text.lines()
                .find(|l| l.trim_start().starts_with(&format!("{id} ")))
                .unwrap()
                .to_owned()
        };
        assert!(line("daily.ctr.welch").trim_end().ends_with(" **"));
        assert!(!line("user.ipu.mann_whitney").contains('*'));
    }

    #[test]
    fn empty_sections_render_as_na() {
        let mut r = analyze(&log(), &MetricOptions::default(), &opts(), 7).unwrap();
        r.comparisons.clear();
        r.arms.clear();
        let text = render_table(&r);
        assert!(text.matches("n/a").count() >= 3, "{text}");
    }

    #[test]
    fn daily_csv_has_one_row_per_point() {
        let r = analyze(&log(), &MetricOptions::default(), &opts(), 7).unwrap();
        let csv = r.daily_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("day,metric,arm,value"));
        assert_eq!(lines.count(), 4 * 2 * Metric::ALL.len());
        assert!(csv.contains("1970-01-02,ctr,personalization,"));
    }

    #[test]
    fn iso_dates() {
        assert_eq!(iso_date(0), "1970-01-01");
        assert_eq!(iso_date(19_723), "2024-01-01");
        assert_eq!(iso_date(-1), "1969-12-31");
    }
}
