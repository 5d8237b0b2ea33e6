//! Bot filtering, incomplete-record removal and edge-day trimming.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{day_index, validate_event, EventLog, UserId, SECS_PER_DAY};

const WINDOW_SECS: i64 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    pub max_events_per_minute: u32,
    pub burst_count: u32,
    pub burst_duration_s: f64,
    pub stale_age_days: f64,
    pub stale_click_count: u32,
    pub trim_first_last_day: bool,
    /// Offset of local time from UTC, used to find calendar days.
    pub utc_offset_hours: i32,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            max_events_per_minute: 13,
            burst_count: 9,
            burst_duration_s: 2.0,
            stale_age_days: 10.0,
            stale_click_count: 10,
            trim_first_last_day: true,
            utc_offset_hours: 0,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            (
                "max_events_per_minute",
                f64::from(self.max_events_per_minute),
            ),
            ("burst_count", f64::from(self.burst_count)),
            ("burst_duration_s", self.burst_duration_s),
            ("stale_age_days", self.stale_age_days),
            ("stale_click_count", f64::from(self.stale_click_count)),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!(
                    "cleaning.{name} must be positive, got {v}"
                )));
            }
        }
        if !(-12..=14).contains(&self.utc_offset_hours) {
            return Err(Error::Config(format!(
                "cleaning.utc_offset_hours out of range: {}",
                self.utc_offset_hours
            )));
        }
        Ok(())
    }

    fn tz_offset_secs(&self) -> i64 {
        i64::from(self.utc_offset_hours) * 3600
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    HighEventRate,
    ShortActivity,
    StaleInteraction,
}

fn timestamps_by_user(log: &EventLog) -> BTreeMap<&UserId, Vec<i64>> {
    let mut by_user: BTreeMap<&UserId, Vec<i64>> = BTreeMap::new();
    for e in &log.events {
        by_user.entry(&e.user_id).or_default().push(e.at);
    }
    by_user
}

/// Users with more than `threshold` events inside some 60-second window.
pub fn detect_high_event_rate(log: &EventLog, threshold: u32) -> BTreeSet<UserId> {
    let threshold = threshold as usize;
    timestamps_by_user(log)
        .into_iter()
        .filter_map(|(user, mut ts)| {
            ts.sort_unstable();
            let mut start = 0;
            for end in 0..ts.len() {
                while ts[end] - ts[start] >= WINDOW_SECS {
                    start += 1;
                }
                if end - start + 1 > threshold {
                    return Some(user.clone());
                }
            }
            None
        })
        .collect()
}

/// Users with more than `count` clicks whose activity lasted under
/// `duration_s` seconds.
pub fn detect_short_activity(log: &EventLog, count: u32, duration_s: f64) -> BTreeSet<UserId> {
    let mut short: BTreeMap<&UserId, u32> = BTreeMap::new();
    for e in log.events.iter().filter(|e| e.is_click()) {
        if e.activity_duration_s.is_some_and(|ad| ad < duration_s) {
            *short.entry(&e.user_id).or_default() += 1;
        }
    }
    short
        .into_iter()
        .filter(|(_, n)| *n > count)
        .map(|(u, _)| u.clone())
        .collect()
}

/// Users with more than `click_count` clicks on articles older than
/// `age_days` at click time. Also returns how many clicks referenced an
/// article missing from the catalog; those are skipped.
pub fn detect_stale_interaction(
    log: &EventLog,
    age_days: f64,
    click_count: u32,
) -> (BTreeSet<UserId>, usize) {
    let limit = age_days * SECS_PER_DAY as f64;
    let mut stale: BTreeMap<&UserId, u32> = BTreeMap::new();
    let mut unknown = 0;
    for e in log.events.iter().filter(|e| e.is_click()) {
        match log.article(&e.article_id) {
            Some(a) if (e.at - a.published_at) as f64 > limit => {
                *stale.entry(&e.user_id).or_default() += 1
            }
            Some(_) => {}
            None => unknown += 1,
        }
    }
    let flagged = stale
        .into_iter()
        .filter(|(_, n)| *n > click_count)
        .map(|(u, _)| u.clone())
        .collect();
    (flagged, unknown)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input_events: usize,
    pub flagged_users: BTreeMap<Heuristic, Vec<UserId>>,
    /// Distinct users flagged by at least one heuristic.
    pub removed_users: usize,
    pub removed_bot_events: usize,
    pub removed_incomplete_count: usize,
    pub removed_trimmed_events: usize,
    pub removed_event_count: usize,
    /// Clicks on uncatalogued articles skipped by the stale heuristic.
    pub unknown_article_clicks: usize,
    /// Calendar days dropped by trimming.
    pub trimmed_days: Vec<i64>,
    pub surviving_events: usize,
    pub surviving_users: usize,
    pub surviving_articles: usize,
    /// Records dropped while loading, before cleaning proper.
    #[serde(default)]
    pub rejected_at_load: usize,
}

impl CleaningReport {
    pub fn is_empty(&self) -> bool {
        self.removed_event_count == 0 && self.flagged_users.values().all(Vec::is_empty)
    }
}

/// Drops invalid events, then every event of users flagged by any
/// heuristic, then (optionally) the first and last calendar day of the
/// remaining log.
pub fn clean(log: &EventLog, cfg: &CleaningConfig) -> Result<(EventLog, CleaningReport)> {
    cfg.validate()?;
    let input_events = log.len();
    let valid = log.filter(|e| validate_event(e, &log.catalog).is_ok());
    let removed_incomplete_count = input_events - valid.len();

    let (rate, (short, (stale, unknown_article_clicks))) = rayon::join(
        || detect_high_event_rate(&valid, cfg.max_events_per_minute),
        || {
            rayon::join(
                || detect_short_activity(&valid, cfg.burst_count, cfg.burst_duration_s),
                || detect_stale_interaction(&valid, cfg.stale_age_days, cfg.stale_click_count),
            )
        },
    );
    let flagged: BTreeSet<UserId> = rate.iter().chain(&short).chain(&stale).cloned().collect();
    let humans = valid.filter(|e| !flagged.contains(&e.user_id));
    let removed_bot_events = valid.len() - humans.len();

    let tz = cfg.tz_offset_secs();
    let mut trimmed_days = Vec::new();
    let out = if cfg.trim_first_last_day && !humans.is_empty() {
        let days: BTreeSet<i64> = humans.events.iter().map(|e| day_index(e.at, tz)).collect();
        let first = *days.first().expect("non-empty");
        let last = *days.last().expect("non-empty");
        trimmed_days.push(first);
        if last != first {
            trimmed_days.push(last);
        }
        humans.filter(|e| {
            let d = day_index(e.at, tz);
            d != first && d != last
        })
    } else {
        humans.clone()
    };
    let removed_trimmed_events = humans.len() - out.len();

    let surviving_articles = out
        .events
        .iter()
        .map(|e| &e.article_id)
        .collect::<BTreeSet<_>>()
        .len();
    let report = CleaningReport {
        input_events,
        flagged_users: BTreeMap::from([
            (Heuristic::HighEventRate, rate.into_iter().collect()),
            (Heuristic::ShortActivity, short.into_iter().collect()),
            (Heuristic::StaleInteraction, stale.into_iter().collect()),
        ]),
        removed_users: flagged.len(),
        removed_bot_events,
        removed_incomplete_count,
        removed_trimmed_events,
        removed_event_count: input_events - out.len(),
        unknown_article_clicks,
        trimmed_days,
        surviving_events: out.len(),
        surviving_users: out.active_users().len(),
        surviving_articles,
        rejected_at_load: 0,
    };
    Ok((out, report))
}

/// Per-user statistics at a percentile, as data-driven suggestions for the
/// fixed thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSuggestion {
    pub percentile: f64,
    pub max_events_per_minute: f64,
    pub short_activity_clicks: f64,
    pub stale_clicks: f64,
}

/// Nearest-rank percentile of per-user maxima. Users without events in a
/// category count as zero.
pub fn suggest_thresholds(
    log: &EventLog,
    cfg: &CleaningConfig,
    percentile: f64,
) -> Result<ThresholdSuggestion> {
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::InvalidInput(format!(
            "percentile must be in [0, 100], got {percentile}"
        )));
    }
    let by_user = timestamps_by_user(log);
    if by_user.is_empty() {
        return Err(Error::InvalidInput(
            "cannot derive thresholds from an empty log".into(),
        ));
    }
    let limit = cfg.stale_age_days * SECS_PER_DAY as f64;
    let mut rate = Vec::with_capacity(by_user.len());
    let mut short = BTreeMap::new();
    let mut stale = BTreeMap::new();
    for (user, mut ts) in by_user {
        ts.sort_unstable();
        let (mut start, mut best) = (0, 0);
        for end in 0..ts.len() {
            while ts[end] - ts[start] >= WINDOW_SECS {
                start += 1;
            }
            best = best.max(end - start + 1);
        }
        rate.push(best as f64);
        short.insert(user, 0.0);
        stale.insert(user, 0.0);
    }
    for e in log.events.iter().filter(|e| e.is_click()) {
        if e.activity_duration_s
            .is_some_and(|ad| ad < cfg.burst_duration_s)
        {
            *short.get_mut(&e.user_id).expect("user seen") += 1.0;
        }
        if log
            .article(&e.article_id)
            .is_some_and(|a| (e.at - a.published_at) as f64 > limit)
        {
            *stale.get_mut(&e.user_id).expect("user seen") += 1.0;
        }
    }
    let pick = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let rank = ((percentile / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
        v[rank.min(v.len()) - 1]
    };
    Ok(ThresholdSuggestion {
        percentile,
        max_events_per_minute: pick(rate),
        short_activity_clicks: pick(short.into_values().collect()),
        stale_clicks: pick(stale.into_values().collect()),
    })
}
