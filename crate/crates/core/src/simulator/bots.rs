use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::BotSpec;
use crate::error::Result;
use crate::model::{
    day_index, Arm, Article, ArticleId, Catalog, EventLog, InteractionEvent, Timestamp, User,
    UserId, SECS_PER_DAY,
};

/// Events per rate bot, packed into one minute.
pub const RATE_BOT_EVENTS: usize = 20;
/// Clicks per burst bot and per stale bot.
pub const BOT_CLICKS: usize = 12;
const BURST_DWELL_S: f64 = 1.0;
/// Stale bots click articles at least this old.
const STALE_AGE_DAYS: i64 = 30;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotTruth {
    pub rate: Vec<UserId>,
    pub burst: Vec<UserId>,
    pub stale: Vec<UserId>,
}

impl BotTruth {
    pub fn all(&self) -> impl Iterator<Item = &UserId> {
        self.rate.iter().chain(&self.burst).chain(&self.stale)
    }

    pub fn len(&self) -> usize {
        self.rate.len() + self.burst.len() + self.stale.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Start and end of the interval where bot traffic goes: the log's interior
/// calendar days when there are any, otherwise its whole span.
fn active_span(log: &EventLog) -> (Timestamp, Timestamp) {
    let (Some(first), Some(last)) = (log.events.first(), log.events.last()) else {
        let t = log
            .catalog
            .articles
            .values()
            .map(|a| a.published_at)
            .max()
            .unwrap_or(0);
        return (t, t + SECS_PER_DAY);
    };
    let lo = (day_index(first.at, 0) + 1) * SECS_PER_DAY;
    let hi = day_index(last.at, 0) * SECS_PER_DAY;
    if hi - lo > 3600 {
        (lo, hi - 3600)
    } else {
        (first.at, last.at.max(first.at + 1))
    }
}

/// Adds synthetic users whose traces each break exactly one cleaning
/// heuristic with margin: rate bots fire 20 impressions in under a minute,
/// burst bots make 12 clicks of 1 s, stale bots make 12 clicks on articles
/// at least 30 days old. Articles the bots need are added to the catalog
/// when the log has none suitable.
pub fn inject_bots(log: &EventLog, spec: &BotSpec, seed: u64) -> Result<(EventLog, BotTruth)> {
    let mut truth = BotTruth::default();
    if spec.total() == 0 {
        return Ok((log.clone(), truth));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = active_span(log);
    let mut articles: Vec<Article> = log.catalog.articles.values().cloned().collect();
    let mut users: Vec<User> = log.catalog.users.values().cloned().collect();
    let mut events = log.events.clone();
    let section = articles
        .first()
        .map_or_else(|| "Norge".to_string(), |a| a.section.clone());
    let synthetic = |id: String, published_at: Timestamp| Article {
        article_id: ArticleId::new(id),
        section: section.clone(),
        published_at,
        initial_news_value: 50,
        length_chars: 3000,
        editorial_pinned: false,
        pinned_position: None,
    };

    let mut serial = 0;
    let mut add_user = |kind: &str, n: usize, users: &mut Vec<User>| -> UserId {
        let id = UserId::new(format!("bot-{kind}-{n:03}"));
        users.push(User {
            user_id: id.clone(),
            subscriber: true,
            subscribed_since: lo - 365 * SECS_PER_DAY,
            arm: Some(Arm::BOTH[serial % 2]),
        });
        serial += 1;
        id
    };

    for n in 0..spec.n_rate_bots {
        let id = add_user("rate", n, &mut users);
        let t0 = rng.random_range(lo..hi);
        let recent: Vec<&Article> = articles
            .iter()
            .filter(|a| !a.editorial_pinned && a.published_at <= t0)
            .collect();
        let target = match recent.choose(&mut rng) {
            Some(a) => a.article_id.clone(),
            None => {
                let a = synthetic(format!("bot-article-rate-{n:03}"), t0 - 3600);
                let id = a.article_id.clone();
                articles.push(a);
                id
            }
        };
        for i in 0..RATE_BOT_EVENTS {
            events.push(InteractionEvent::impression(
                &id,
                &target,
                t0 + 3 * i as i64,
                i as u32,
            ));
        }
        truth.rate.push(id);
    }

    for n in 0..spec.n_burst_bots {
        let id = add_user("burst", n, &mut users);
        let t0 = rng.random_range(lo..hi);
        let fresh: Vec<ArticleId> = articles
            .iter()
            .filter(|a| {
                !a.editorial_pinned
                    && a.published_at <= t0
                    && t0 - a.published_at < 2 * SECS_PER_DAY
            })
            .map(|a| a.article_id.clone())
            .collect();
        let pick = if fresh.is_empty() {
            let a = synthetic(format!("bot-article-burst-{n:03}"), t0 - 3600);
            let id = a.article_id.clone();
            articles.push(a);
            vec![id]
        } else {
            fresh
        };
        for i in 0..BOT_CLICKS {
            let at = t0 + 600 * i as i64;
            let target = pick.choose(&mut rng).expect("non-empty").clone();
            events.push(InteractionEvent::impression(&id, &target, at, 0));
            events.push(InteractionEvent::click(
                &id,
                &target,
                at + 5,
                0,
                0.05,
                BURST_DWELL_S,
            ));
        }
        truth.burst.push(id);
    }

    for n in 0..spec.n_stale_bots {
        let id = add_user("stale", n, &mut users);
        let t0 = rng.random_range(lo..hi);
        let cutoff = t0 - STALE_AGE_DAYS * SECS_PER_DAY;
        let old: Vec<ArticleId> = articles
            .iter()
            .filter(|a| !a.editorial_pinned && a.published_at <= cutoff)
            .map(|a| a.article_id.clone())
            .collect();
        let pick = if old.is_empty() {
            let a = synthetic(format!("bot-article-archive-{n:03}"), cutoff - SECS_PER_DAY);
            let id = a.article_id.clone();
            articles.push(a);
            vec![id]
        } else {
            old
        };
        for i in 0..BOT_CLICKS {
            let at = t0 + 600 * i as i64;
            let target = pick.choose(&mut rng).expect("non-empty").clone();
            events.push(InteractionEvent::impression(&id, &target, at, 0));
            events.push(InteractionEvent::click(&id, &target, at + 5, 0, 0.6, 60.0));
        }
        truth.stale.push(id);
    }

    events.sort_by_key(|e| e.at);
    let catalog = Arc::new(Catalog::new(articles, users)?);
    Ok((EventLog::new(catalog, events)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cleaning::{
        detect_high_event_rate, detect_short_activity, detect_stale_interaction,
    };
    use crate::simulator::{run_experiment, SimConfig};

    fn base_log() -> EventLog {
        let cfg = SimConfig {
            n_users: 60,
            n_articles_per_day: 10,
            n_days: 4,
            warmup_days: 0,
            min_article_clicks: 1,
            ..SimConfig::default()
        };
        run_experiment(&cfg).unwrap().log
    }

    fn spec(r: usize, b: usize, s: usize) -> BotSpec {
        BotSpec {
            n_rate_bots: r,
            n_burst_bots: b,
            n_stale_bots: s,
        }
    }

    #[test]
    fn empty_spec_is_identity() {
        let log = base_log();
        let (out, truth) = inject_bots(&log, &spec(0, 0, 0), 1).unwrap();
        assert!(truth.is_empty());
        assert_eq!(out.events, log.events);
        assert_eq!(out.catalog, log.catalog);
    }

    #[test]
    fn rate_bot_packs_fourteen_events_into_a_minute() {
        let (out, truth) = inject_bots(&base_log(), &spec(1, 0, 0), 1).unwrap();
        assert_eq!(truth.rate.len(), 1);
        let mut ts: Vec<Timestamp> = out
            .events
            .iter()
            .filter(|e| e.user_id == truth.rate[0])
            .map(|e| e.at)
            .collect();
        ts.sort_unstable();
        assert!(ts.windows(14).any(|w| w[13] - w[0] < 60));
        assert_eq!(
            detect_high_event_rate(&out, 13)
                .into_iter()
                .collect::<Vec<_>>(),
            truth.rate
        );
    }

    #[test]
    fn burst_bot_clicks_are_short() {
        let (out, truth) = inject_bots(&base_log(), &spec(0, 1, 0), 1).unwrap();
        let short = out
            .events
            .iter()
            .filter(|e| e.user_id == truth.burst[0] && e.is_click())
            .filter(|e| e.activity_duration_s.is_some_and(|d| d < 2.0))
            .count();
        assert!(short >= 10);
        assert!(detect_short_activity(&out, 9, 2.0).contains(&truth.burst[0]));
        assert!(detect_high_event_rate(&out, 13).is_empty());
    }

    #[test]
    fn stale_bot_reads_old_articles() {
        let (out, truth) = inject_bots(&base_log(), &spec(0, 0, 1), 1).unwrap();
        let (flagged, unknown) = detect_stale_interaction(&out, 10.0, 10);
        assert_eq!(unknown, 0);
        assert_eq!(flagged.into_iter().collect::<Vec<_>>(), truth.stale);
    }

    #[test]
    fn bots_are_deterministic_and_disjoint() {
        let log = base_log();
        let (a, ta) = inject_bots(&log, &spec(2, 2, 2), 5).unwrap();
        let (b, tb) = inject_bots(&log, &spec(2, 2, 2), 5).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(ta, tb);
        let ids: std::collections::BTreeSet<&UserId> = ta.all().collect();
        assert_eq!(ids.len(), 6);
        assert!(ids.iter().all(|u| log.user(u).is_none()));
    }
}
