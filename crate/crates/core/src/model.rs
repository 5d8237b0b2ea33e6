//! Domain types shared by every stage: catalog entries, interaction events,
//! the event log, ranking weights, and arm partitioning.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unix seconds, UTC.
pub type Timestamp = i64;

pub const SECS_PER_HOUR: i64 = 3_600;
pub const SECS_PER_DAY: i64 = 86_400;

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(ArticleId);
string_id!(UserId);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub article_id: ArticleId,
    pub section: String,
    pub published_at: Timestamp,
    /// Editor-assigned importance in `0..=100`.
    pub initial_news_value: u8,
    pub length_chars: u32,
    pub editorial_pinned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinned_position: Option<usize>,
}

impl Article {
    pub fn validate(&self) -> Result<()> {
        if self.initial_news_value > 100 {
            return Err(Error::InvalidInput(format!(
                "article {}: initial_news_value {} outside 0..=100",
                self.article_id, self.initial_news_value
            )));
        }
        if self.length_chars == 0 {
            return Err(Error::InvalidInput(format!(
                "article {}: length_chars must be at least 1",
                self.article_id
            )));
        }
        if self.editorial_pinned != self.pinned_position.is_some() {
            return Err(Error::InvalidInput(format!(
                "article {}: pinned_position must be set iff editorial_pinned",
                self.article_id
            )));
        }
        Ok(())
    }

    /// Age in hours at `now`; negative for articles not yet published.
    pub fn age_hours(&self, now: Timestamp) -> f64 {
        (now - self.published_at) as f64 / SECS_PER_HOUR as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Personalization,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Personalization];

    pub fn label(self) -> &'static str {
        match self {
            Arm::Control => "control",
            Arm::Personalization => "personalization",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub user_id: UserId,
    pub subscriber: bool,
    pub subscribed_since: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<Arm>,
}

impl User {
    pub fn validate(&self) -> Result<()> {
        if self.arm.is_some() && !self.subscriber {
            return Err(Error::InvalidInput(format!(
                "user {}: only subscribers may carry an arm",
                self.user_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Impression,
    Click,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub user_id: UserId,
    pub article_id: ArticleId,
    pub kind: EventKind,
    pub at: Timestamp,
    /// Scroll depth as a fraction in `[0, 1]`; clicks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reading_percentage: Option<f64>,
    /// Seconds spent on the article after the click; clicks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity_duration_s: Option<f64>,
    pub feed_position: u32,
}

impl InteractionEvent {
    pub fn impression(user: &UserId, article: &ArticleId, at: Timestamp, position: u32) -> Self {
        Self {
            user_id: user.clone(),
            article_id: article.clone(),
            kind: EventKind::Impression,
            at,
            reading_percentage: None,
            activity_duration_s: None,
            feed_position: position,
        }
    }

    pub fn click(
        user: &UserId,
        article: &ArticleId,
        at: Timestamp,
        position: u32,
        reading_percentage: f64,
        activity_duration_s: f64,
    ) -> Self {
        Self {
            user_id: user.clone(),
            article_id: article.clone(),
            kind: EventKind::Click,
            at,
            reading_percentage: Some(reading_percentage),
            activity_duration_s: Some(activity_duration_s),
            feed_position: position,
        }
    }

    pub fn is_click(&self) -> bool {
        self.kind == EventKind::Click
    }

    pub fn is_impression(&self) -> bool {
        self.kind == EventKind::Impression
    }
}

/// Article and user catalogs keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    pub articles: BTreeMap<ArticleId, Article>,
    pub users: BTreeMap<UserId, User>,
}

impl Catalog {
    pub fn new(articles: Vec<Article>, users: Vec<User>) -> Result<Self> {
        let mut catalog = Catalog::default();
        for a in articles {
            a.validate()?;
            if catalog.articles.insert(a.article_id.clone(), a).is_some() {
                return Err(Error::InvalidInput("duplicate article id".into()));
            }
        }
        for u in users {
            u.validate()?;
            if catalog.users.insert(u.user_id.clone(), u).is_some() {
                return Err(Error::InvalidInput("duplicate user id".into()));
            }
        }
        Ok(catalog)
    }

    pub fn article(&self, id: &ArticleId) -> Option<&Article> {
        self.articles.get(id)
    }

    pub fn user(&self, id: &UserId) -> Option<&User> {
        self.users.get(id)
    }

    /// Distinct sections of all catalog articles, sorted.
    pub fn sections(&self) -> Vec<String> {
        let mut s: Vec<String> = self.articles.values().map(|a| a.section.clone()).collect();
        s.sort();
        s.dedup();
        s
    }
}

/// Reasons an event is unusable for analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Defect {
    UnknownUser,
    UnknownArticle,
    IncompleteClick,
    FieldOnWrongKind,
    NegativeDuration,
    ReadingOutOfRange,
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Defect::UnknownUser => "unknown user",
            Defect::UnknownArticle => "unknown article",
            Defect::IncompleteClick => "click missing reading_percentage or activity_duration_s",
            Defect::FieldOnWrongKind => "click-only field on an impression",
            Defect::NegativeDuration => "negative activity duration",
            Defect::ReadingOutOfRange => "reading_percentage outside [0, 1]",
        };
        f.write_str(s)
    }
}

/// Checks one event against the schema and the catalog. Never fails; a
/// defect is a verdict.
pub fn validate_event(event: &InteractionEvent, catalog: &Catalog) -> Result<(), Defect> {
    if !catalog.users.contains_key(&event.user_id) {
        return Err(Defect::UnknownUser);
    }
    if !catalog.articles.contains_key(&event.article_id) {
        return Err(Defect::UnknownArticle);
    }
    match event.kind {
        EventKind::Impression => {
            if event.reading_percentage.is_some() || event.activity_duration_s.is_some() {
                return Err(Defect::FieldOnWrongKind);
            }
        }
        EventKind::Click => {
            let (Some(rp), Some(ad)) = (event.reading_percentage, event.activity_duration_s) else {
                return Err(Defect::IncompleteClick);
            };
            if !(0.0..=1.0).contains(&rp) {
                return Err(Defect::ReadingOutOfRange);
            }
            if ad.is_nan() || ad < 0.0 {
                return Err(Defect::NegativeDuration);
            }
        }
    }
    Ok(())
}

/// Ordered events plus the catalogs they reference.
///
/// The catalog is shared behind an `Arc` so sub-logs (per arm, per day, per
/// segment) are cheap to carve out.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub catalog: Arc<Catalog>,
    pub events: Vec<InteractionEvent>,
}

impl EventLog {
    /// Builds a log, rejecting events that reference unknown ids.
    pub fn new(catalog: Arc<Catalog>, events: Vec<InteractionEvent>) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if !catalog.users.contains_key(&e.user_id) {
                return Err(Error::InvalidInput(format!(
                    "event {i}: unknown user {}",
                    e.user_id
                )));
            }
            if !catalog.articles.contains_key(&e.article_id) {
                return Err(Error::InvalidInput(format!(
                    "event {i}: unknown article {}",
                    e.article_id
                )));
            }
        }
        Ok(Self { catalog, events })
    }

    pub fn empty(catalog: Arc<Catalog>) -> Self {
        Self {
            catalog,
            events: Vec::new(),
        }
    }

    /// Sub-log sharing this log's catalog. Callers pass events drawn from
    /// this log, so id references stay valid.
    pub fn with_events(&self, events: Vec<InteractionEvent>) -> Self {
        Self {
            catalog: Arc::clone(&self.catalog),
            events,
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(&InteractionEvent) -> bool) -> Self {
        self.with_events(self.events.iter().filter(|e| keep(e)).cloned().collect())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn article(&self, id: &ArticleId) -> Option<&Article> {
        self.catalog.articles.get(id)
    }

    pub fn user(&self, id: &UserId) -> Option<&User> {
        self.catalog.users.get(id)
    }

    /// Distinct users with at least one event, sorted.
    pub fn active_users(&self) -> Vec<UserId> {
        let mut ids: Vec<UserId> = self.events.iter().map(|e| e.user_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

#[derive(Debug, Clone)]
pub struct ArmPartition {
    pub control: EventLog,
    pub treatment: EventLog,
    pub excluded_events: usize,
    pub excluded_users: usize,
}

impl ArmPartition {
    pub fn arm(&self, arm: Arm) -> &EventLog {
        match arm {
            Arm::Control => &self.control,
            Arm::Personalization => &self.treatment,
        }
    }
}

/// Splits events by the arm of their user. Users without an arm are dropped
/// and counted.
pub fn partition_by_arm(log: &EventLog) -> ArmPartition {
    let mut control = Vec::new();
    let mut treatment = Vec::new();
    let mut excluded_events = 0;
    let mut excluded = std::collections::BTreeSet::new();
    for e in &log.events {
        match log.user(&e.user_id).and_then(|u| u.arm) {
            Some(Arm::Control) => control.push(e.clone()),
            Some(Arm::Personalization) => treatment.push(e.clone()),
            None => {
                excluded_events += 1;
                excluded.insert(e.user_id.clone());
            }
        }
    }
    ArmPartition {
        control: log.with_events(control),
        treatment: log.with_events(treatment),
        excluded_events,
        excluded_users: excluded.len(),
    }
}

/// Weights of the composite score: popularity, recency, performance and
/// the per-user personalization component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingWeights {
    pub popularity: f64,
    pub recency: f64,
    pub performance: f64,
    #[serde(default)]
    pub personalization: f64,
}

impl RankingWeights {
    pub const fn new(
        popularity: f64,
        recency: f64,
        performance: f64,
        personalization: f64,
    ) -> Self {
        Self {
            popularity,
            recency,
            performance,
            personalization,
        }
    }

    /// Production weights of the non-personalized ranker.
    pub const fn non_personalized() -> Self {
        Self::new(0.50, 0.25, 0.25, 0.0)
    }

    /// Production weights of the personalized ranker; personalization is
    /// capped at a fifth of the composite.
    pub const fn personalized() -> Self {
        Self::new(0.40, 0.20, 0.20, 0.20)
    }

    pub fn base_sum(&self) -> f64 {
        self.popularity + self.recency + self.performance
    }

    pub fn is_personalized(&self) -> bool {
        self.personalization > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("popularity", self.popularity),
            ("recency", self.recency),
            ("performance", self.performance),
            ("personalization", self.personalization),
        ];
        for (name, w) in all {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config(format!(
                    "weight `{name}` must be finite and >= 0, got {w}"
                )));
            }
        }
        if self.base_sum() <= 0.0 {
            return Err(Error::Config(
                "weights `popularity` + `recency` + `performance` must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Calendar day index of `at` under a fixed UTC offset.
pub fn day_index(at: Timestamp, tz_offset_secs: i64) -> i64 {
    (at + tz_offset_secs).div_euclid(SECS_PER_DAY)
}
