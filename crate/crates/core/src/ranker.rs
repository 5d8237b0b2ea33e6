//! Popularity, recency and performance scorers, the composite score with
//! and without the personalization component, and feed ranking.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Article, ArticleId, EventKind, EventLog, InteractionEvent, RankingWeights, Timestamp, UserId,
    SECS_PER_HOUR,
};
use crate::personalize::{relevance_scores, FactorModel};
use crate::pool::CandidatePool;

/// Score assigned to every article when a normalized scorer cannot
/// discriminate (all raw values equal).
pub const NEUTRAL_SCORE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankerConfig {
    pub popularity_window_hours: f64,
    pub performance_window_hours: f64,
    pub recency_half_life_hours: f64,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self {
            popularity_window_hours: 24.0,
            performance_window_hours: 6.0,
            recency_half_life_hours: 12.0,
        }
    }
}

impl RankerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("popularity_window_hours", self.popularity_window_hours),
            ("performance_window_hours", self.performance_window_hours),
            ("recency_half_life_hours", self.recency_half_life_hours),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "ranker `{name}` must be > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub popularity: f64,
    pub recency: f64,
    pub performance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub personalization: Option<f64>,
}

impl ScoreVector {
    pub const fn new(
        popularity: f64,
        recency: f64,
        performance: f64,
        personalization: Option<f64>,
    ) -> Self {
        Self {
            popularity,
            recency,
            performance,
            personalization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredArticle {
    pub article_id: ArticleId,
    pub published_at: Timestamp,
    pub scores: ScoreVector,
    pub composite: f64,
}

/// Min-max scaling to `[0, 100]`; a constant input maps to 50 everywhere.
pub fn min_max_scale(values: &[f64]) -> Vec<f64> {
    let Some(first) = values.first() else {
        return Vec::new();
    };
    let (lo, hi) = values
        .iter()
        .fold((*first, *first), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi == lo {
        return vec![NEUTRAL_SCORE; values.len()];
    }
    values
        .iter()
        .map(|v| (v - lo) / (hi - lo) * 100.0)
        .collect()
}

fn scale_pool(pool: &[ArticleId], raw: impl Fn(&ArticleId) -> f64) -> BTreeMap<ArticleId, f64> {
    let values: Vec<f64> = pool.iter().map(raw).collect();
    pool.iter().cloned().zip(min_max_scale(&values)).collect()
}

/// Window click counts normalized over the pool.
pub fn popularity_score(
    pool: &[ArticleId],
    clicks: &HashMap<ArticleId, u64>,
) -> BTreeMap<ArticleId, f64> {
    scale_pool(pool, |id| clicks.get(id).copied().unwrap_or(0) as f64)
}

/// Front-page CTR normalized over the pool; unseen articles count as CTR 0.
pub fn performance_score(
    pool: &[ArticleId],
    ctr: &HashMap<ArticleId, f64>,
) -> BTreeMap<ArticleId, f64> {
    scale_pool(pool, |id| ctr.get(id).copied().unwrap_or(0.0))
}

/// News value decayed by publication age with an exponential half-life.
pub fn recency_score(article: &Article, now: Timestamp, half_life_hours: f64) -> f64 {
    let age = article.age_hours(now).max(0.0);
    let s = f64::from(article.initial_news_value) * (-age / half_life_hours).exp2();
    s.clamp(0.0, 100.0)
}

/// Weighted mean of the three base scores; the personalization weight is
/// ignored.
pub fn composite_nonpersonalized(s: &ScoreVector, w: &RankingWeights) -> Result<f64> {
    let denom = w.base_sum();
    if !(denom > 0.0) {
        return Err(Error::InvalidInput("base weights sum to zero".into()));
    }
    Ok(
        (w.popularity * s.popularity + w.recency * s.recency + w.performance * s.performance)
            / denom,
    )
}

/// Weighted mean of all four scores.
pub fn composite_personalized(s: &ScoreVector, w: &RankingWeights) -> Result<f64> {
    let s4 = s
        .personalization
        .ok_or_else(|| Error::InvalidInput("personalization score missing".into()))?;
    let denom = w.base_sum() + w.personalization;
    if !(denom > 0.0) {
        return Err(Error::InvalidInput("weights sum to zero".into()));
    }
    Ok((w.popularity * s.popularity
        + w.recency * s.recency
        + w.performance * s.performance
        + w.personalization * s4)
        / denom)
}

/// Click counts and CTRs observed in the scorer windows ending at `now`
/// (half-open `[now - W, now)`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowStats {
    pub clicks: HashMap<ArticleId, u64>,
    pub ctr: HashMap<ArticleId, f64>,
}

impl WindowStats {
    pub fn from_events(events: &[InteractionEvent], now: Timestamp, cfg: &RankerConfig) -> Self {
        let pop_from = now - (cfg.popularity_window_hours * SECS_PER_HOUR as f64) as i64;
        let perf_from = now - (cfg.performance_window_hours * SECS_PER_HOUR as f64) as i64;
        let mut clicks: HashMap<ArticleId, u64> = HashMap::new();
        let mut perf: HashMap<ArticleId, (u64, u64)> = HashMap::new();
        for e in events.iter().filter(|e| e.at < now) {
            if e.at >= pop_from && e.kind == EventKind::Click {
                *clicks.entry(e.article_id.clone()).or_default() += 1;
            }
            if e.at >= perf_from {
                let slot = perf.entry(e.article_id.clone()).or_default();
                match e.kind {
                    EventKind::Impression => slot.0 += 1,
                    EventKind::Click => slot.1 += 1,
                }
            }
        }
        let ctr = perf
            .into_iter()
            .map(|(id, (imp, clk))| {
                let rate = if imp == 0 {
                    0.0
                } else {
                    clk as f64 / imp as f64
                };
                (id, rate)
            })
            .collect();
        Self { clicks, ctr }
    }
}

/// Base scores of a pool at one instant, shared by every user ranked
/// against it.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseScores {
    pub ids: Vec<ArticleId>,
    pub published_at: Vec<Timestamp>,
    pub scores: Vec<ScoreVector>,
}

impl BaseScores {
    pub fn compute(
        pool: &CandidatePool,
        stats: &WindowStats,
        now: Timestamp,
        cfg: &RankerConfig,
    ) -> Self {
        let ids = pool.ids();
        let pop = popularity_score(&ids, &stats.clicks);
        let perf = performance_score(&ids, &stats.ctr);
        let scores = pool
            .articles
            .iter()
            .map(|a| {
                ScoreVector::new(
                    pop[&a.article_id],
                    recency_score(a, now, cfg.recency_half_life_hours),
                    perf[&a.article_id],
                    None,
                )
            })
            .collect();
        Self {
            published_at: pool.articles.iter().map(|a| a.published_at).collect(),
            ids,
            scores,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Scores and sorts the pool. `personal` carries one personalization
    /// score per pool article and is required when the weights use it.
    pub fn rank(
        &self,
        weights: &RankingWeights,
        personal: Option<&[f64]>,
    ) -> Result<Vec<ScoredArticle>> {
        let personalized = weights.is_personalized();
        if personalized && personal.is_none() {
            return Err(Error::InvalidInput(
                "personalization weight > 0 requires personalization scores".into(),
            ));
        }
        if let Some(p) = personal {
            if p.len() != self.len() {
                return Err(Error::InvalidInput(
                    "personalization scores misaligned with pool".into(),
                ));
            }
        }
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let mut s = self.scores[i];
            let composite = if personalized {
                s.personalization = personal.map(|p| p[i]);
                composite_personalized(&s, weights)?
            } else {
                composite_nonpersonalized(&s, weights)?
            };
            out.push(ScoredArticle {
                article_id: self.ids[i].clone(),
                published_at: self.published_at[i],
                scores: s,
                composite,
            });
        }
        sort_feed(&mut out);
        Ok(out)
    }
}

/// Composite descending, then newer first, then id ascending.
pub fn feed_order(a: &ScoredArticle, b: &ScoredArticle) -> Ordering {
    b.composite
        .total_cmp(&a.composite)
        .then_with(|| b.published_at.cmp(&a.published_at))
        .then_with(|| a.article_id.cmp(&b.article_id))
}

pub fn sort_feed(items: &mut [ScoredArticle]) {
    items.sort_by(feed_order);
}

/// Ranks the pool for one user at `now`, reading scorer windows from `log`.
pub fn rank_feed(
    pool: &CandidatePool,
    user: &UserId,
    weights: &RankingWeights,
    now: Timestamp,
    log: &EventLog,
    model: Option<&FactorModel>,
    cfg: &RankerConfig,
) -> Result<Vec<ScoredArticle>> {
    let stats = WindowStats::from_events(&log.events, now, cfg);
    let base = BaseScores::compute(pool, &stats, now, cfg);
    if weights.is_personalized() {
        let model = model.ok_or_else(|| {
            Error::InvalidInput("personalization weight > 0 but no factor model supplied".into())
        })?;
        let personal = relevance_scores(model, user, &base.ids);
        base.rank(weights, Some(&personal))
    } else {
        base.rank(weights, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::model::{Catalog, User};
    use crate::pool::{build_pool, PoolRules};

    fn ids(names: &[&str]) -> Vec<ArticleId> {
        names.iter().map(|n| ArticleId::from(*n)).collect()
    }

    fn counts(pairs: &[(&str, u64)]) -> HashMap<ArticleId, u64> {
        pairs
            .iter()
            .map(|(k, v)| (ArticleId::from(*k), *v))
            .collect()
    }

    #[test]
    fn popularity_min_max_endpoints() {
        let s = popularity_score(
            &ids(&["a", "b", "c"]),
            &counts(&[("a", 100), ("b", 50), ("c", 0)]),
        );
        assert_eq!(s[&"a".into()], 100.0);
        assert_eq!(s[&"b".into()], 50.0);
        assert_eq!(s[&"c".into()], 0.0);
    }

    #[test]
    fn popularity_all_equal_is_neutral() {
        let s = popularity_score(&ids(&["a", "b"]), &counts(&[("a", 7), ("b", 7)]));
        assert!(s.values().all(|&v| v == 50.0));
    }

    #[test]
    fn popularity_hand_min_max() {
        let s = popularity_score(
            &ids(&["a", "b", "c"]),
            &counts(&[("a", 10), ("b", 4), ("c", 1)]),
        );
        assert_eq!(s[&"a".into()], 100.0);
        assert!((s[&"b".into()] - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(s[&"c".into()], 0.0);
        assert!(popularity_score(&[], &HashMap::new()).is_empty());
    }

    fn article(news: u8, published_at: Timestamp) -> Article {
        Article {
            article_id: "x".into(),
            section: "Norge".into(),
            published_at,
            initial_news_value: news,
            length_chars: 100,
            editorial_pinned: false,
            pinned_position: None,
        }
    }

    #[test]
    fn recency_decay() {
        assert_eq!(recency_score(&article(100, 0), 0, 12.0), 100.0);
        assert!((recency_score(&article(80, 0), 12 * SECS_PER_HOUR, 12.0) - 40.0).abs() < 1e-12);
        assert_eq!(recency_score(&article(0, 0), 99_999, 12.0), 0.0);
    }

    #[test]
    fn performance_cases() {
        let ctr: HashMap<ArticleId, f64> = [("a", 0.5), ("b", 0.25), ("c", 0.0)]
            .iter()
            .map(|(k, v)| (ArticleId::from(*k), *v))
            .collect();
        let s = performance_score(&ids(&["a", "b", "c"]), &ctr);
        assert_eq!(
            (s[&"a".into()], s[&"b".into()], s[&"c".into()]),
            (100.0, 50.0, 0.0)
        );
        let s = performance_score(&ids(&["a"]), &ctr);
        assert_eq!(s[&"a".into()], 50.0);
        let ctr: HashMap<ArticleId, f64> = [("a", 0.2), ("b", 0.1), ("c", 0.15)]
            .iter()
            .map(|(k, v)| (ArticleId::from(*k), *v))
            .collect();
        let s = performance_score(&ids(&["a", "b", "c"]), &ctr);
        assert_eq!(s[&"a".into()], 100.0);
        assert_eq!(s[&"b".into()], 0.0);
        assert!((s[&"c".into()] - 50.0).abs() < 1e-9);
    }

    #[test]
    fn composite_examples() {
        let w = RankingWeights::non_personalized();
        let c =
            composite_nonpersonalized(&ScoreVector::new(100.0, 100.0, 100.0, None), &w).unwrap();
        assert_eq!(c, 100.0);
        let c = composite_nonpersonalized(&ScoreVector::new(80.0, 40.0, 60.0, None), &w).unwrap();
        assert!((c - 65.0).abs() < 1e-12);

        let wp = RankingWeights::personalized();
        let c =
            composite_personalized(&ScoreVector::new(80.0, 40.0, 60.0, Some(100.0)), &wp).unwrap();
        assert!((c - 72.0).abs() < 1e-12);
        let w0 = RankingWeights::new(0.5, 0.25, 0.25, 0.0);
        let c =
            composite_personalized(&ScoreVector::new(80.0, 40.0, 60.0, Some(13.0)), &w0).unwrap();
        assert!((c - 65.0).abs() < 1e-12);
        let c =
            composite_personalized(&ScoreVector::new(50.0, 50.0, 50.0, Some(50.0)), &wp).unwrap();
        assert!((c - 50.0).abs() < 1e-12);
    }

    #[test]
    fn composite_errors() {
        let zero = RankingWeights::new(0.0, 0.0, 0.0, 0.0);
        assert!(composite_nonpersonalized(&ScoreVector::new(1.0, 1.0, 1.0, None), &zero).is_err());
        assert!(
            composite_personalized(&ScoreVector::new(1.0, 1.0, 1.0, Some(1.0)), &zero).is_err()
        );
        let w = RankingWeights::personalized();
        assert!(composite_personalized(&ScoreVector::new(1.0, 1.0, 1.0, None), &w).is_err());
    }

    fn scored(id: &str, cs: f64, published_at: Timestamp) -> ScoredArticle {
        ScoredArticle {
            article_id: id.into(),
            published_at,
            scores: ScoreVector::new(0.0, 0.0, 0.0, None),
            composite: cs,
        }
    }

    #[test]
    fn feed_order_and_tie_breaks() {
        let mut v = vec![scored("b", 60.0, 0), scored("a", 70.0, 0)];
        sort_feed(&mut v);
        assert_eq!(v[0].article_id.as_str(), "a");

        let mut v = vec![scored("old", 50.0, 10), scored("new", 50.0, 20)];
        sort_feed(&mut v);
        assert_eq!(v[0].article_id.as_str(), "new");

        let mut v = vec![scored("z", 50.0, 10), scored("y", 50.0, 10)];
        sort_feed(&mut v);
        assert_eq!(v[0].article_id.as_str(), "y");
    }

    fn small_world() -> (EventLog, CandidatePool, Timestamp) {
        let now = 100 * SECS_PER_HOUR;
        let articles: Vec<Article> = (0..4)
            .map(|i| Article {
                article_id: ArticleId::new(format!("a{i}")),
                section: "Norge".into(),
                published_at: now - (i + 1) * SECS_PER_HOUR,
                initial_news_value: 40 + 10 * i as u8,
                length_chars: 2000,
                editorial_pinned: false,
                pinned_position: None,
            })
            .collect();
        let users = vec![User {
            user_id: "u".into(),
            subscriber: true,
            subscribed_since: 0,
            arm: None,
        }];
        let cat = Arc::new(Catalog::new(articles.clone(), users).unwrap());
        let u = UserId::from("u");
        let mut events = Vec::new();
        for (i, a) in articles.iter().enumerate() {
            for k in 0..(i + 1) {
                let t = now - 3 * SECS_PER_HOUR + k as i64;
                events.push(InteractionEvent::impression(&u, &a.article_id, t, i as u32));
                if k % 2 == 0 {
                    events.push(InteractionEvent::click(
                        &u,
                        &a.article_id,
                        t,
                        i as u32,
                        0.5,
                        40.0,
                    ));
                }
            }
        }
        events.sort_by_key(|e| e.at);
        let log = EventLog::new(cat.clone(), events).unwrap();
        let pool = build_pool(cat.articles.values(), &PoolRules::default(), now);
        (log, pool, now)
    }

    #[test]
    fn rank_feed_requires_model_when_personalized() {
        let (log, pool, now) = small_world();
        let err = rank_feed(
            &pool,
            &"u".into(),
            &RankingWeights::personalized(),
            now,
            &log,
            None,
            &RankerConfig::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn cold_user_differs_only_by_neutral_personal_score() {
        let (log, pool, now) = small_world();
        let cfg = RankerConfig::default();
        let model = FactorModel::empty(4, now);
        let w = RankingWeights::personalized();
        let w0 = RankingWeights {
            personalization: 0.0,
            ..w
        };
        let with = rank_feed(&pool, &"u".into(), &w, now, &log, Some(&model), &cfg).unwrap();
        let without = rank_feed(&pool, &"u".into(), &w0, now, &log, None, &cfg).unwrap();
        assert_eq!(with.len(), without.len());
        for a in &with {
            let b = without
                .iter()
                .find(|b| b.article_id == a.article_id)
                .unwrap();
            assert_eq!(a.scores.personalization, Some(50.0));
            let expected = (b.composite * w.base_sum() + w.personalization * 50.0)
                / (w.base_sum() + w.personalization);
            assert!((a.composite - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn ranking_is_a_permutation_of_the_pool() {
        let (log, pool, now) = small_world();
        let ranked = rank_feed(
            &pool,
            &"u".into(),
            &RankingWeights::non_personalized(),
            now,
            &log,
            None,
            &RankerConfig::default(),
        )
        .unwrap();
        let mut got: Vec<_> = ranked.iter().map(|s| s.article_id.clone()).collect();
        got.sort();
        assert_eq!(got, pool.ids());
        assert!(ranked.windows(2).all(|w| w[0].composite >= w[1].composite));
    }
}
