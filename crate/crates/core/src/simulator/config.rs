use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RankingWeights, Timestamp};
use crate::personalize::AlsParams;
use crate::pool::PoolRules;
use crate::ranker::RankerConfig;

/// 2023-11-30 12:00:00 UTC. Starting at noon leaves half days at both ends,
/// which the edge-day trimming then removes.
pub const DEFAULT_START: Timestamp = 1_701_345_600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub name: String,
    /// Relative share of newly published articles.
    pub base_popularity: f64,
}

impl SectionSpec {
    pub fn new(name: &str, base_popularity: f64) -> Self {
        Self {
            name: name.into(),
            base_popularity,
        }
    }
}

pub fn default_sections() -> Vec<SectionSpec> {
    [
        ("Norge", 0.20),
        ("Verden", 0.15),
        ("Oslo", 0.12),
        ("Sport", 0.10),
        ("Kultur", 0.08),
        ("Politikk", 0.08),
        ("Kommentar", 0.07),
        ("Debatt", 0.06),
        ("A-magasinet", 0.05),
        ("Fotball", 0.05),
        ("Sprek", 0.04),
    ]
    .iter()
    .map(|(n, p)| SectionSpec::new(n, *p))
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngagementLevel {
    Low,
    Medium,
    High,
}

impl EngagementLevel {
    pub const ALL: [EngagementLevel; 3] = [
        EngagementLevel::Low,
        EngagementLevel::Medium,
        EngagementLevel::High,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelBehavior {
    /// Mean of the Poisson number of sessions per day.
    pub sessions_per_day: f64,
    /// Probability of scanning one more slot.
    pub continuation: f64,
    /// Hard cap on slots scanned per session.
    pub scroll_budget: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorParams {
    /// Logistic click model `sigma((b0 + b1 * n_sections * affinity + appeal) / T)`.
    pub click_intercept: f64,
    pub click_slope: f64,
    /// Standard deviation of the latent per-article appeal.
    pub appeal_sd: f64,
    /// Log-scale spread of the per-user temperature `T`.
    pub temperature_log_sd: f64,
    /// Chance of ending the session after reading an article.
    pub satisfaction_stop: f64,
    /// Chance that a click is an immediate bounce, independent of interest.
    pub bounce_probability: f64,
    pub bounce_read_mean: f64,
    /// Mean read depth `base + slope * (n_sections * affinity - 1)`, clamped.
    pub read_depth_base: f64,
    pub read_depth_slope: f64,
    pub read_depth_concentration: f64,
    /// Mean reading speed in characters per second.
    pub reading_speed_cps: f64,
    pub reading_speed_log_sd: f64,
    pub dwell_noise_sd: f64,
    /// Minimum spacing between two events of one reader, seconds.
    pub min_event_gap_s: i64,
    /// Mean extra time spent on a slot before moving on, seconds.
    pub scan_time_mean_s: f64,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        Self {
            click_intercept: -5.0,
            click_slope: 1.6,
            appeal_sd: 0.2,
            temperature_log_sd: 0.2,
            satisfaction_stop: 0.5,
            bounce_probability: 0.015,
            bounce_read_mean: 0.03,
            read_depth_base: 0.6,
            read_depth_slope: 0.02,
            read_depth_concentration: 6.0,
            reading_speed_cps: 20.0,
            reading_speed_log_sd: 0.25,
            dwell_noise_sd: 3.0,
            min_event_gap_s: 5,
            scan_time_mean_s: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BotSpec {
    pub n_rate_bots: usize,
    pub n_burst_bots: usize,
    pub n_stale_bots: usize,
}

impl BotSpec {
    pub fn total(&self) -> usize {
        self.n_rate_bots + self.n_burst_bots + self.n_stale_bots
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditorialSpec {
    /// Feed indices of the curated mid-page picks.
    pub curated_positions: Vec<usize>,
}

impl Default for EditorialSpec {
    fn default() -> Self {
        Self {
            curated_positions: vec![10, 20, 30],
        }
    }
}

/// Newsroom output: editorial news value and article length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArticleSpec {
    pub news_value_mean: f64,
    pub news_value_sd: f64,
    pub length_median_chars: f64,
    pub length_log_sd: f64,
}

impl Default for ArticleSpec {
    fn default() -> Self {
        Self {
            news_value_mean: 50.0,
            news_value_sd: 20.0,
            length_median_chars: 3500.0,
            length_log_sd: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmWeights {
    pub control: RankingWeights,
    pub treatment: RankingWeights,
}

impl Default for ArmWeights {
    fn default() -> Self {
        Self {
            control: RankingWeights::non_personalized(),
            treatment: RankingWeights::personalized(),
        }
    }
}

impl SimConfig {
    /// A small A/A setup: both arms non-personalized, readers alike in
    /// engagement, taste, temperature and speed, and articles alike in
    /// appeal. Daily CTR then carries no shared article or composition
    /// effects, so arm-vs-arm tests should reject at their nominal rate.
    pub fn homogeneous_readers() -> Self {
        let base = Self::default();
        Self {
            n_users: 200,
            n_articles_per_day: 10,
            warmup_days: 1,
            affinity_concentration: 1e4,
            engagement_mixture: [0.0, 1.0, 0.0],
            behavior: BehaviorParams {
                appeal_sd: 0.0,
                temperature_log_sd: 0.0,
                reading_speed_log_sd: 0.0,
                ..base.behavior
            },
            weights: ArmWeights {
                control: base.weights.control,
                treatment: base.weights.control,
            },
            ..base
        }
    }

    /// Per-section Dirichlet parameters.
    pub fn affinity_alphas(&self) -> Vec<f64> {
        let n = self.sections.len() as f64;
        let centre: Vec<f64> = self
            .sections
            .iter()
            .map(|s| s.base_popularity.powf(self.affinity_popularity_exponent))
            .collect();
        let total: f64 = centre.iter().sum();
        centre
            .iter()
            .map(|c| self.affinity_concentration * n * c / total)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_users: usize,
    pub n_articles_per_day: usize,
    pub n_days: usize,
    /// Days simulated before the experiment starts; their traffic feeds the
    /// scorers and the factor model but is not emitted.
    pub warmup_days: usize,
    pub start: Timestamp,
    pub seed: u64,
    pub sections: Vec<SectionSpec>,
    /// Share of users assigned to the personalization arm.
    pub arm_split: f64,
    /// Mean per-section Dirichlet concentration of section affinities.
    pub affinity_concentration: f64,
    /// Centres the affinity Dirichlet on `base_popularity^exponent`
    /// (renormalized, same total concentration): 0 is symmetric, 1 makes
    /// the average reader's interests match section popularity.
    pub affinity_popularity_exponent: f64,
    /// Low / Medium / High mixture weights.
    pub engagement_mixture: [f64; 3],
    pub levels: [LevelBehavior; 3],
    pub behavior: BehaviorParams,
    pub editorial: EditorialSpec,
    pub articles: ArticleSpec,
    pub weights: ArmWeights,
    pub ranker: RankerConfig,
    pub pool: PoolRules,
    pub als: AlsParams,
    pub matrix_window_days: f64,
    pub min_article_clicks: u64,
    pub retrain_interval_hours: f64,
    /// Optional per-day activity multipliers; missing days use 1.
    pub daily_activity: Vec<f64>,
    pub bots: BotSpec,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_users: 2000,
            n_articles_per_day: 40,
            n_days: 14,
            warmup_days: 3,
            start: DEFAULT_START,
            seed: 1,
            sections: default_sections(),
            arm_split: 0.5,
            affinity_concentration: 0.5,
            affinity_popularity_exponent: 0.0,
            engagement_mixture: [0.50, 0.35, 0.15],
            levels: [
                LevelBehavior {
                    sessions_per_day: 0.7,
                    continuation: 0.85,
                    scroll_budget: 30,
                },
                LevelBehavior {
                    sessions_per_day: 1.4,
                    continuation: 0.92,
                    scroll_budget: 60,
                },
                LevelBehavior {
                    sessions_per_day: 2.4,
                    continuation: 0.96,
                    scroll_budget: 120,
                },
            ],
            behavior: BehaviorParams::default(),
            editorial: EditorialSpec::default(),
            articles: ArticleSpec::default(),
            weights: ArmWeights::default(),
            ranker: RankerConfig::default(),
            pool: PoolRules::default(),
            als: AlsParams::default(),
            matrix_window_days: 21.0,
            min_article_clicks: 5,
            retrain_interval_hours: 3.0,
            daily_activity: Vec::new(),
            bots: BotSpec::default(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

fn probability(name: &str, v: f64) -> Result<()> {
    check((0.0..=1.0).contains(&v), || {
        format!("simulation.{name} must be in [0, 1], got {v}")
    })
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.n_users >= 2, || {
            format!("simulation.n_users must be >= 2, got {}", self.n_users)
        })?;
        check(self.arm_split > 0.0 && self.arm_split < 1.0, || {
            format!(
                "simulation.arm_split must be in (0, 1), got {}",
                self.arm_split
            )
        })?;
        check(!self.sections.is_empty(), || {
            "simulation.sections is empty".into()
        })?;
        check(
            self.sections
                .iter()
                .all(|s| s.base_popularity > 0.0 && s.base_popularity.is_finite()),
            || "section base popularities must be > 0".into(),
        )?;
        let mut names: Vec<&str> = self.sections.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        check(names.len() == self.sections.len(), || {
            "duplicate section names".into()
        })?;
        check(self.affinity_popularity_exponent.is_finite(), || {
            "simulation.affinity_popularity_exponent must be finite".into()
        })?;
        check(self.affinity_concentration > 0.0, || {
            "simulation.affinity_concentration must be > 0".into()
        })?;
        check(
            self.engagement_mixture.iter().all(|w| *w >= 0.0)
                && self.engagement_mixture.iter().sum::<f64>() > 0.0,
            || {
                "simulation.engagement_mixture needs non-negative weights with a positive sum"
                    .into()
            },
        )?;
        for (lvl, b) in EngagementLevel::ALL.iter().zip(&self.levels) {
            probability(&format!("levels.{lvl:?}.continuation"), b.continuation)?;
            check(b.scroll_budget >= 1, || {
                format!("scroll budget of {lvl:?} must be >= 1")
            })?;
            check(b.sessions_per_day >= 0.0, || {
                format!("sessions_per_day of {lvl:?} must be >= 0")
            })?;
        }
        let b = &self.behavior;
        probability("behavior.satisfaction_stop", b.satisfaction_stop)?;
        probability("behavior.bounce_probability", b.bounce_probability)?;
        check(b.bounce_read_mean > 0.0 && b.bounce_read_mean < 1.0, || {
            "behavior.bounce_read_mean must be in (0, 1)".into()
        })?;
        check(b.read_depth_concentration > 0.0, || {
            "behavior.read_depth_concentration must be > 0".into()
        })?;
        check(b.reading_speed_cps > 0.0, || {
            "behavior.reading_speed_cps must be > 0".into()
        })?;
        check(
            b.appeal_sd >= 0.0 && b.temperature_log_sd >= 0.0 && b.dwell_noise_sd >= 0.0,
            || "behavior spreads must be >= 0".into(),
        )?;
        check(b.min_event_gap_s >= 1, || {
            "behavior.min_event_gap_s must be >= 1".into()
        })?;
        check(self.daily_activity.iter().all(|m| *m >= 0.0), || {
            "daily_activity multipliers must be >= 0".into()
        })?;
        for (arm, w) in [
            ("control", &self.weights.control),
            ("treatment", &self.weights.treatment),
        ] {
            w.validate().map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("simulation.weights.{arm}: {m}")),
                other => other,
            })?;
        }
        self.ranker.validate()?;
        self.pool.validate()?;
        self.als.validate()?;
        check(self.matrix_window_days > 0.0, || {
            "simulation.matrix_window_days must be > 0".into()
        })?;
        check(self.retrain_interval_hours > 0.0, || {
            "simulation.retrain_interval_hours must be > 0".into()
        })?;
        Ok(())
    }

    pub fn any_personalized(&self) -> bool {
        self.weights.control.is_personalized() || self.weights.treatment.is_personalized()
    }
}
