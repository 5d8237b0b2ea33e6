//! Engagement and journalistic-value metrics with daily and per-segment
//! aggregation.
//!
//! Ratios whose denominator is zero are `None` ("n/a" in reports), never 0.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{day_index, ArticleId, EventKind, EventLog, InteractionEvent, UserId};

/// How articles are split into popular and less popular ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum PopularSplit {
    /// The top fraction of clicked articles by click count.
    TopFraction(f64),
    /// The smallest top set holding this share of all clicks.
    ClickMass(f64),
}

impl Default for PopularSplit {
    fn default() -> Self {
        PopularSplit::TopFraction(0.2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    /// A click is canceled when its reading percentage is below this...
    pub cancel_reading_below: f64,
    /// ...or its activity duration is at most this many seconds.
    pub cancel_duration_at_most_s: f64,
    pub popular_split: PopularSplit,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            cancel_reading_below: 0.10,
            cancel_duration_at_most_s: 5.0,
            popular_split: PopularSplit::default(),
        }
    }
}

impl MetricOptions {
    pub fn validate(&self) -> Result<()> {
        let share = match self.popular_split {
            PopularSplit::TopFraction(f) | PopularSplit::ClickMass(f) => f,
        };
        if !(share > 0.0 && share <= 1.0) {
            return Err(Error::Config(format!(
                "popular split share must be in (0, 1], got {share}"
            )));
        }
        if !(0.0..=1.0).contains(&self.cancel_reading_below)
            || !(self.cancel_duration_at_most_s >= 0.0)
        {
            return Err(Error::Config("cancel thresholds out of range".into()));
        }
        Ok(())
    }

    pub fn is_canceled(&self, e: &InteractionEvent) -> bool {
        e.reading_percentage
            .is_some_and(|rp| rp < self.cancel_reading_below)
            || e.activity_duration_s
                .is_some_and(|ad| ad <= self.cancel_duration_at_most_s)
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementSummary {
    pub impressions: u64,
    pub clicks: u64,
    pub users: u64,
    pub ctr: Option<f64>,
    pub ccr: Option<f64>,
    pub ipu: Option<f64>,
    pub cpu: Option<f64>,
    pub avg_reading_percentage: Option<f64>,
    pub avg_activity_duration_s: Option<f64>,
}

pub fn engagement(events: &[InteractionEvent], opts: &MetricOptions) -> EngagementSummary {
    let mut impressions = 0u64;
    let mut clicks = 0u64;
    let mut canceled = 0u64;
    let mut rp_sum = 0.0;
    let mut ad_sum = 0.0;
    let mut users: BTreeSet<&UserId> = BTreeSet::new();
    for e in events {
        users.insert(&e.user_id);
        match e.kind {
            EventKind::Impression => impressions += 1,
            EventKind::Click => {
                clicks += 1;
                canceled += u64::from(opts.is_canceled(e));
                rp_sum += e.reading_percentage.unwrap_or(0.0);
                ad_sum += e.activity_duration_s.unwrap_or(0.0);
            }
        }
    }
    let n_users = users.len() as u64;
    EngagementSummary {
        impressions,
        clicks,
        users: n_users,
        ctr: ratio(clicks as f64, impressions as f64),
        ccr: ratio(canceled as f64, clicks as f64),
        ipu: ratio(impressions as f64, n_users as f64),
        cpu: ratio(clicks as f64, n_users as f64),
        avg_reading_percentage: ratio(rp_sum, clicks as f64),
        avg_activity_duration_s: ratio(ad_sum, clicks as f64),
    }
}

/// Gini index `sum_i sum_j |x_i - x_j| / (2 n^2 mean)` over all ordered
/// pairs. `None` for an empty or all-zero input.
pub fn gini(counts: &[f64]) -> Option<f64> {
    let n = counts.len() as f64;
    let total: f64 = counts.iter().sum();
    if counts.is_empty() || !(total > 0.0) {
        return None;
    }
    let mean = total / n;
    let mut pairwise = 0.0;
    for xi in counts {
        for xj in counts {
            pairwise += (xi - xj).abs();
        }
    }
    Some(pairwise / (2.0 * n * n * mean))
}

/// Unique clicked articles over unique impressed articles.
pub fn click_coverage(events: &[InteractionEvent]) -> Option<f64> {
    let mut shown: BTreeSet<&ArticleId> = BTreeSet::new();
    let mut clicked: BTreeSet<&ArticleId> = BTreeSet::new();
    for e in events {
        match e.kind {
            EventKind::Impression => shown.insert(&e.article_id),
            EventKind::Click => clicked.insert(&e.article_id),
        };
    }
    ratio(clicked.len() as f64, shown.len() as f64)
}

fn click_counts(events: &[InteractionEvent]) -> BTreeMap<&ArticleId, u64> {
    let mut counts: BTreeMap<&ArticleId, u64> = BTreeMap::new();
    for e in events.iter().filter(|e| e.is_click()) {
        *counts.entry(&e.article_id).or_default() += 1;
    }
    counts
}

/// Popular articles among those clicked at least once, ranked by click
/// count descending with ties broken by id.
pub fn popular_set(events: &[InteractionEvent], split: PopularSplit) -> BTreeSet<ArticleId> {
    let counts = click_counts(events);
    let mut ranked: Vec<(&ArticleId, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let take = match split {
        PopularSplit::TopFraction(f) => {
            // Guard against 0.2 * 10 landing a hair above 2.
            (f * ranked.len() as f64 - 1e-9).ceil().max(0.0) as usize
        }
        PopularSplit::ClickMass(share) => {
            let total: u64 = ranked.iter().map(|r| r.1).sum();
            let target = share * total as f64 - 1e-9;
            let mut acc = 0u64;
            ranked
                .iter()
                .position(|r| {
                    acc += r.1;
                    acc as f64 >= target
                })
                .map_or(ranked.len(), |p| p + 1)
        }
    };
    ranked
        .into_iter()
        .take(take)
        .map(|(a, _)| a.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopularityMetrics {
    pub arp: Option<f64>,
    pub acp: Option<f64>,
    pub ppi: Option<f64>,
}

/// ARP, ACP and PPI. PPI is the share of popular clicks per user, averaged
/// over users with at least one click.
pub fn popularity(events: &[InteractionEvent], split: PopularSplit) -> PopularityMetrics {
    let popular = popular_set(events, split);
    let mut impressions = 0u64;
    let mut clicks = 0u64;
    let mut shown: BTreeSet<&ArticleId> = BTreeSet::new();
    let mut clicked: BTreeSet<&ArticleId> = BTreeSet::new();
    let mut per_user: BTreeMap<&UserId, (u64, u64)> = BTreeMap::new();
    for e in events {
        match e.kind {
            EventKind::Impression => {
                impressions += 1;
                shown.insert(&e.article_id);
            }
            EventKind::Click => {
                clicks += 1;
                clicked.insert(&e.article_id);
                let slot = per_user.entry(&e.user_id).or_default();
                slot.0 += u64::from(popular.contains(&e.article_id));
                slot.1 += 1;
            }
        }
    }
    let ppi = if per_user.is_empty() {
        None
    } else {
        let sum: f64 = per_user.values().map(|(p, c)| *p as f64 / *c as f64).sum();
        Some(sum / per_user.len() as f64)
    };
    PopularityMetrics {
        arp: ratio(impressions as f64, shown.len() as f64),
        acp: ratio(clicks as f64, clicked.len() as f64),
        ppi,
    }
}

/// Event counts of `kind` per section, zero-filled over every catalog
/// section.
pub fn section_counts(log: &EventLog, kind: EventKind) -> BTreeMap<String, u64> {
    let mut counts: BTreeMap<String, u64> =
        log.catalog.sections().into_iter().map(|s| (s, 0)).collect();
    for e in log.events.iter().filter(|e| e.kind == kind) {
        if let Some(a) = log.article(&e.article_id) {
            *counts.entry(a.section.clone()).or_default() += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionShare {
    pub section: String,
    pub count: u64,
    pub share: f64,
}

/// Normalized per-section counts ordered by descending count, then name.
/// Empty when the log holds no events of `kind`.
pub fn section_distribution(log: &EventLog, kind: EventKind) -> Vec<SectionShare> {
    let counts = section_counts(log, kind);
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Vec::new();
    }
    let mut out: Vec<SectionShare> = counts
        .into_iter()
        .map(|(section, count)| SectionShare {
            share: count as f64 / total as f64,
            section,
            count,
        })
        .collect();
    out.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.section.cmp(&b.section))
    });
    out
}

/// Reorders `other` to follow the section order of `reference`; sections
/// missing from `reference` go last in their own order.
pub fn align_sections(reference: &[SectionShare], other: &[SectionShare]) -> Vec<SectionShare> {
    let rank: HashMap<&str, usize> = reference
        .iter()
        .enumerate()
        .map(|(i, s)| (s.section.as_str(), i))
        .collect();
    let mut out = other.to_vec();
    out.sort_by_key(|s| rank.get(s.section.as_str()).copied().unwrap_or(usize::MAX));
    out
}

fn gini_of(log: &EventLog, kind: EventKind) -> Option<f64> {
    let counts: Vec<f64> = section_counts(log, kind)
        .values()
        .map(|&c| c as f64)
        .collect();
    gini(&counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalisticSummary {
    pub gini_impressions: Option<f64>,
    pub gini_clicks: Option<f64>,
    pub click_coverage: Option<f64>,
    pub arp: Option<f64>,
    pub acp: Option<f64>,
    pub ppi: Option<f64>,
    pub section_impressions: Vec<SectionShare>,
    pub section_clicks: Vec<SectionShare>,
}

pub fn journalistic(log: &EventLog, opts: &MetricOptions) -> JournalisticSummary {
    let pop = popularity(&log.events, opts.popular_split);
    JournalisticSummary {
        gini_impressions: gini_of(log, EventKind::Impression),
        gini_clicks: gini_of(log, EventKind::Click),
        click_coverage: click_coverage(&log.events),
        arp: pop.arp,
        acp: pop.acp,
        ppi: pop.ppi,
        section_impressions: section_distribution(log, EventKind::Impression),
        section_clicks: section_distribution(log, EventKind::Click),
    }
}

/// Every scalar metric, selectable for daily and per-segment series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ctr,
    Ccr,
    Ipu,
    Cpu,
    ReadingPercentage,
    ActivityDuration,
    ClickCoverage,
    Arp,
    Acp,
    Ppi,
    GiniImpressions,
    GiniClicks,
}

impl Metric {
    pub const ALL: [Metric; 12] = [
        Metric::Ctr,
        Metric::Ccr,
        Metric::Ipu,
        Metric::Cpu,
        Metric::ReadingPercentage,
        Metric::ActivityDuration,
        Metric::ClickCoverage,
        Metric::Arp,
        Metric::Acp,
        Metric::Ppi,
        Metric::GiniImpressions,
        Metric::GiniClicks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ctr => "ctr",
            Metric::Ccr => "ccr",
            Metric::Ipu => "ipu",
            Metric::Cpu => "cpu",
            Metric::ReadingPercentage => "reading_percentage",
            Metric::ActivityDuration => "activity_duration",
            Metric::ClickCoverage => "click_coverage",
            Metric::Arp => "arp",
            Metric::Acp => "acp",
            Metric::Ppi => "ppi",
            Metric::GiniImpressions => "gini_impressions",
            Metric::GiniClicks => "gini_clicks",
        }
    }

    pub fn evaluate(self, log: &EventLog, opts: &MetricOptions) -> Option<f64> {
        let ev = &log.events;
        match self {
            Metric::Ctr => engagement(ev, opts).ctr,
            Metric::Ccr => engagement(ev, opts).ccr,
            Metric::Ipu => engagement(ev, opts).ipu,
            Metric::Cpu => engagement(ev, opts).cpu,
            Metric::ReadingPercentage => engagement(ev, opts).avg_reading_percentage,
            Metric::ActivityDuration => engagement(ev, opts).avg_activity_duration_s,
            Metric::ClickCoverage => click_coverage(ev),
            Metric::Arp => popularity(ev, opts.popular_split).arp,
            Metric::Acp => popularity(ev, opts.popular_split).acp,
            Metric::Ppi => popularity(ev, opts.popular_split).ppi,
            Metric::GiniImpressions => gini_of(log, EventKind::Impression),
            Metric::GiniClicks => gini_of(log, EventKind::Click),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyPoint {
    pub day: i64,
    pub value: Option<f64>,
}

/// Splits a log into calendar days under `tz_offset_secs`.
pub fn split_by_day(log: &EventLog, tz_offset_secs: i64) -> BTreeMap<i64, EventLog> {
    let mut days: BTreeMap<i64, Vec<InteractionEvent>> = BTreeMap::new();
    for e in &log.events {
        days.entry(day_index(e.at, tz_offset_secs))
            .or_default()
            .push(e.clone());
    }
    days.into_iter()
        .map(|(d, ev)| (d, log.with_events(ev)))
        .collect()
}

/// One point per calendar day holding events; the metric is computed on
/// that day's events alone.
pub fn daily_series(
    log: &EventLog,
    metric: Metric,
    tz_offset_secs: i64,
    opts: &MetricOptions,
) -> Vec<DailyPoint> {
    split_by_day(log, tz_offset_secs)
        .into_iter()
        .map(|(day, sub)| DailyPoint {
            day,
            value: metric.evaluate(&sub, opts),
        })
        .collect()
}

/// Defined values of a series, in day order.
pub fn series_values(points: &[DailyPoint]) -> Vec<f64> {
    points.iter().filter_map(|p| p.value).collect()
}

/// Per-segment sub-logs. Every user with events must carry a label.
pub fn segment_by_activity(
    log: &EventLog,
    labels: &BTreeMap<UserId, usize>,
) -> Result<BTreeMap<usize, EventLog>> {
    let mut parts: BTreeMap<usize, Vec<InteractionEvent>> = BTreeMap::new();
    for e in &log.events {
        let label = labels.get(&e.user_id).ok_or_else(|| {
            Error::InvalidInput(format!("user {} has no activity label", e.user_id))
        })?;
        parts.entry(*label).or_default().push(e.clone());
    }
    Ok(parts
        .into_iter()
        .map(|(l, ev)| (l, log.with_events(ev)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::model::{Article, Catalog, User, SECS_PER_DAY};

    fn catalog(sections: &[(&str, &str)], users: &[&str]) -> Arc<Catalog> {
        Arc::new(
            Catalog::new(
                sections
                    .iter()
                    .map(|(id, s)| Article {
                        article_id: (*id).into(),
                        section: (*s).into(),
                        published_at: 0,
                        initial_news_value: 50,
                        length_chars: 1000,
                        editorial_pinned: false,
                        pinned_position: None,
                    })
                    .collect(),
                users
                    .iter()
                    .map(|u| User {
                        user_id: (*u).into(),
                        subscriber: true,
                        subscribed_since: 0,
                        arm: None,
                    })
                    .collect(),
            )
            .unwrap(),
        )
    }

    fn imp(u: &str, a: &str, t: i64) -> InteractionEvent {
        InteractionEvent::impression(&u.into(), &a.into(), t, 0)
    }

    fn clk(u: &str, a: &str, t: i64, rp: f64, ad: f64) -> InteractionEvent {
        InteractionEvent::click(&u.into(), &a.into(), t, 0, rp, ad)
    }

    #[test]
    fn engagement_arithmetic() {
        let ev = vec![
            imp("u1", "a", 0),
            imp("u1", "b", 1),
            imp("u2", "a", 2),
            imp("u2", "b", 3),
            clk("u1", "a", 4, 0.5, 30.0),
            clk("u2", "b", 5, 0.5, 30.0),
        ];
        let s = engagement(&ev, &MetricOptions::default());
        assert_eq!(s.ctr, Some(0.5));
        assert_eq!(s.ipu, Some(2.0));
        assert_eq!(s.cpu, Some(1.0));
    }

    #[test]
    fn canceled_click_rule() {
        let ev = vec![
            clk("u", "a", 0, 0.05, 30.0),
            clk("u", "a", 1, 0.5, 4.0),
            clk("u", "a", 2, 0.5, 30.0),
        ];
        let s = engagement(&ev, &MetricOptions::default());
        assert!((s.ccr.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        // Boundaries: 5s exactly cancels, 10% exactly does not.
        let ev = vec![clk("u", "a", 0, 0.10, 5.0), clk("u", "a", 1, 0.10, 5.5)];
        assert_eq!(engagement(&ev, &MetricOptions::default()).ccr, Some(0.5));
    }

    #[test]
    fn no_clicks_gives_zero_ctr_and_null_ccr() {
        let s = engagement(&[imp("u", "a", 0)], &MetricOptions::default());
        assert_eq!(s.ctr, Some(0.0));
        assert_eq!(s.ccr, None);
        assert_eq!(s.avg_reading_percentage, None);
        let s = engagement(&[], &MetricOptions::default());
        assert_eq!((s.ctr, s.ipu), (None, None));
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[5.0, 5.0, 5.0, 5.0]), Some(0.0));
        assert_eq!(gini(&[10.0, 0.0]), Some(0.5));
        assert_eq!(gini(&[1.0, 2.0, 3.0, 4.0]), Some(0.25));
        assert_eq!(gini(&[0.0, 0.0]), None);
        assert_eq!(gini(&[]), None);
    }

    #[test]
    fn coverage_examples() {
        let mut ev: Vec<_> = (0..10).map(|i| imp("u", &format!("a{i}"), i)).collect();
        ev.extend((0..9).map(|i| clk("u", &format!("a{i}"), 20 + i, 0.5, 10.0)));
        assert!((click_coverage(&ev).unwrap() - 0.9).abs() < 1e-15);
        ev.push(clk("u", "a9", 40, 0.5, 10.0));
        assert_eq!(click_coverage(&ev), Some(1.0));
        assert_eq!(click_coverage(&[]), None);
    }

    #[test]
    fn arp_arithmetic() {
        let ev: Vec<_> = (0..100)
            .map(|i| imp("u", &format!("a{}", i % 20), i))
            .collect();
        assert_eq!(popularity(&ev, PopularSplit::default()).arp, Some(5.0));
    }

    #[test]
    fn pareto_split_trace() {
        let mut ev = Vec::new();
        let mut t = 0;
        for (a, n) in [("a", 10), ("b", 5), ("c", 3), ("d", 1), ("e", 1)] {
            for _ in 0..n {
                ev.push(clk("crowd", a, t, 0.5, 10.0));
                t += 1;
            }
        }
        let popular = popular_set(&ev, PopularSplit::TopFraction(0.2));
        assert_eq!(
            popular.into_iter().collect::<Vec<_>>(),
            vec![ArticleId::from("a")]
        );
        ev.extend([
            clk("x", "a", t, 0.5, 9.0),
            clk("x", "b", t, 0.5, 9.0),
            clk("x", "c", t, 0.5, 9.0),
        ]);
        let popular = popular_set(&ev, PopularSplit::TopFraction(0.2));
        let mine: Vec<_> = ev
            .iter()
            .filter(|e| e.user_id.as_str() == "x")
            .cloned()
            .collect();
        let share = mine
            .iter()
            .filter(|e| popular.contains(&e.article_id))
            .count() as f64
            / mine.len() as f64;
        assert!((share - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn click_mass_split() {
        let mut ev = Vec::new();
        for (a, n) in [("a", 6), ("b", 3), ("c", 1)] {
            for i in 0..n {
                ev.push(clk("u", a, i, 0.5, 10.0));
            }
        }
        let popular = popular_set(&ev, PopularSplit::ClickMass(0.8));
        assert_eq!(popular.len(), 2);
    }

    #[test]
    fn everyone_clicks_the_top_article() {
        let ev: Vec<_> = (0..5)
            .map(|i| clk(&format!("u{i}"), "top", i, 0.5, 10.0))
            .collect();
        assert_eq!(popularity(&ev, PopularSplit::default()).ppi, Some(1.0));
    }

    #[test]
    fn section_distribution_examples() {
        let cat = catalog(&[("a", "A"), ("b", "B")], &["u"]);
        let ev = vec![
            imp("u", "a", 0),
            imp("u", "a", 1),
            imp("u", "a", 2),
            imp("u", "b", 3),
        ];
        let log = EventLog::new(cat.clone(), ev.clone()).unwrap();
        let d = section_distribution(&log, EventKind::Impression);
        assert_eq!(d[0].section, "A");
        assert_eq!(d[0].share, 0.75);
        assert_eq!(d[1].share, 0.25);

        let doubled: Vec<_> = ev.iter().chain(ev.iter()).cloned().collect();
        let log2 = EventLog::new(cat.clone(), doubled).unwrap();
        let d2 = section_distribution(&log2, EventKind::Impression);
        assert_eq!(
            d.iter().map(|s| s.share).collect::<Vec<_>>(),
            d2.iter().map(|s| s.share).collect::<Vec<_>>()
        );

        let single = catalog(&[("x", "X")], &["u"]);
        let log = EventLog::new(single, vec![imp("u", "x", 0)]).unwrap();
        assert_eq!(
            section_distribution(&log, EventKind::Impression)[0].share,
            1.0
        );
        assert!(section_distribution(&EventLog::empty(cat), EventKind::Click).is_empty());
    }

    #[test]
    fn daily_series_cases() {
        let cat = catalog(&[("a", "A"), ("b", "B")], &["u", "v"]);
        // Day 0: 10 impressions, 5 clicks. Day 1: 2 impressions, 0 clicks.
        let mut ev = Vec::new();
        for i in 0..10 {
            ev.push(imp("u", "a", i));
        }
        for i in 0..5 {
            ev.push(clk("u", "a", 20 + i, 0.5, 30.0));
        }
        ev.push(imp("v", "b", SECS_PER_DAY + 1));
        ev.push(imp("v", "b", SECS_PER_DAY + 2));
        let log = EventLog::new(cat, ev).unwrap();
        let opts = MetricOptions::default();
        let series = daily_series(&log, Metric::Ctr, 0, &opts);
        assert_eq!(series.len(), 2);
        let mean_daily = series_values(&series).iter().sum::<f64>() / 2.0;
        let overall = Metric::Ctr.evaluate(&log, &opts).unwrap();
        assert!((mean_daily - 0.25).abs() < 1e-15);
        assert!((overall - 5.0 / 12.0).abs() < 1e-15);
        assert!((mean_daily - overall).abs() > 0.1);

        let one_day = log.filter(|e| e.at < SECS_PER_DAY);
        let s = daily_series(&one_day, Metric::Ctr, 0, &opts);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].value, Metric::Ctr.evaluate(&one_day, &opts));
    }

    #[test]
    fn segmentation_partitions_and_requires_labels() {
        let cat = catalog(&[("a", "A")], &["u", "v", "w"]);
        let ev = vec![
            imp("u", "a", 0),
            imp("v", "a", 1),
            clk("w", "a", 2, 0.5, 9.0),
            imp("w", "a", 3),
        ];
        let log = EventLog::new(cat, ev).unwrap();
        let labels: BTreeMap<UserId, usize> = [("u", 0), ("v", 1), ("w", 2)]
            .iter()
            .map(|(u, l)| ((*u).into(), *l))
            .collect();
        let parts = segment_by_activity(&log, &labels).unwrap();
        assert_eq!(parts.len(), 3);
        assert_eq!(parts.values().map(|p| p.len()).sum::<usize>(), log.len());
        let mut partial = labels.clone();
        partial.remove(&UserId::from("w"));
        assert!(segment_by_activity(&log, &partial).is_err());
    }
}
