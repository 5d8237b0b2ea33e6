//! Editorially constrained candidate pool and front-page assembly.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Article, ArticleId, Timestamp};
use crate::ranker::ScoredArticle;

/// Number of editorially pinned slots at the top of the feed.
pub const PINNED_SLOTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolRules {
    /// Section lifetimes overriding `default_max_age_hours`.
    pub max_age_hours_by_section: BTreeMap<String, f64>,
    pub default_max_age_hours: f64,
    pub min_opinion_articles: usize,
    pub opinion_sections: BTreeSet<String>,
}

impl Default for PoolRules {
    fn default() -> Self {
        Self {
            max_age_hours_by_section: BTreeMap::new(),
            default_max_age_hours: 72.0,
            min_opinion_articles: 3,
            opinion_sections: ["Kommentar", "Debatt"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl PoolRules {
    pub fn max_age_hours(&self, section: &str) -> f64 {
        self.max_age_hours_by_section
            .get(section)
            .copied()
            .unwrap_or(self.default_max_age_hours)
    }

    pub fn is_opinion(&self, section: &str) -> bool {
        self.opinion_sections.contains(section)
    }

    pub fn validate(&self) -> Result<()> {
        let hours = std::iter::once(("default_max_age_hours", self.default_max_age_hours)).chain(
            self.max_age_hours_by_section
                .values()
                .map(|h| ("max_age_hours_by_section", *h)),
        );
        for (name, h) in hours {
            if !(h > 0.0) {
                return Err(Error::Config(format!("pool `{name}` must be > 0, got {h}")));
            }
        }
        Ok(())
    }
}

/// Articles eligible for automated placement at one point in time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidatePool {
    pub articles: Vec<Article>,
    /// Opinion articles admitted past their lifetime to meet the minimum.
    pub admitted_by_minimum: Vec<ArticleId>,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn ids(&self) -> Vec<ArticleId> {
        self.articles.iter().map(|a| a.article_id.clone()).collect()
    }
}

/// Selects published, non-editorial articles within their section lifetime,
/// then tops up opinion articles with the most recent stale ones.
pub fn build_pool<'a>(
    articles: impl IntoIterator<Item = &'a Article>,
    rules: &PoolRules,
    now: Timestamp,
) -> CandidatePool {
    let mut fresh = Vec::new();
    let mut stale_opinion = Vec::new();
    for a in articles {
        if a.editorial_pinned || a.published_at > now {
            continue;
        }
        if a.age_hours(now) <= rules.max_age_hours(&a.section) {
            fresh.push(a.clone());
        } else if rules.is_opinion(&a.section) {
            stale_opinion.push(a);
        }
    }
    let fresh_opinion = fresh
        .iter()
        .filter(|a| rules.is_opinion(&a.section))
        .count();
    let mut admitted = Vec::new();
    if fresh_opinion < rules.min_opinion_articles {
        stale_opinion.sort_by(|x, y| {
            y.published_at
                .cmp(&x.published_at)
                .then_with(|| x.article_id.cmp(&y.article_id))
        });
        for a in stale_opinion
            .into_iter()
            .take(rules.min_opinion_articles - fresh_opinion)
        {
            admitted.push(a.article_id.clone());
            fresh.push(a.clone());
        }
    }
    fresh.sort_by(|x, y| x.article_id.cmp(&y.article_id));
    CandidatePool {
        articles: fresh,
        admitted_by_minimum: admitted,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EditorialPicks {
    /// Exactly [`PINNED_SLOTS`] articles, top of the feed in order.
    pub pinned: Vec<ArticleId>,
    /// Curated articles at fixed feed indices.
    pub curated: Vec<(usize, ArticleId)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    Pinned,
    Curated,
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSlot {
    pub article_id: ArticleId,
    pub kind: SlotKind,
    /// Composite score for automatically placed slots.
    pub composite: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontPageLayout {
    pub slots: Vec<LayoutSlot>,
}

impl FrontPageLayout {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    fn of_kind(&self, kind: SlotKind) -> impl Iterator<Item = &LayoutSlot> {
        self.slots.iter().filter(move |s| s.kind == kind)
    }

    pub fn pinned_top(&self) -> Vec<&ArticleId> {
        self.of_kind(SlotKind::Pinned)
            .map(|s| &s.article_id)
            .collect()
    }

    pub fn curated_mid(&self) -> Vec<(usize, &ArticleId)> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == SlotKind::Curated)
            .map(|(i, s)| (i, &s.article_id))
            .collect()
    }

    pub fn auto_slots(&self) -> Vec<&ArticleId> {
        self.of_kind(SlotKind::Auto)
            .map(|s| &s.article_id)
            .collect()
    }

    /// Automatically filled slots over all slots.
    pub fn automated_share(&self) -> f64 {
        if self.slots.is_empty() {
            return 0.0;
        }
        self.of_kind(SlotKind::Auto).count() as f64 / self.slots.len() as f64
    }
}

/// Lays out the feed: pinned picks first, curated picks at their indices,
/// ranked articles in the remaining slots. Ranked articles that are also
/// editorial picks are skipped. Curated picks whose index lies past the end
/// of the ranked list are appended in index order.
pub fn assemble_front_page(
    ranked: &[ScoredArticle],
    picks: &EditorialPicks,
) -> Result<FrontPageLayout> {
    if picks.pinned.len() != PINNED_SLOTS {
        return Err(Error::InvalidInput(format!(
            "front page needs exactly {PINNED_SLOTS} pinned picks, got {}",
            picks.pinned.len()
        )));
    }
    let mut seen: HashSet<&ArticleId> = HashSet::new();
    for id in picks
        .pinned
        .iter()
        .chain(picks.curated.iter().map(|(_, id)| id))
    {
        if !seen.insert(id) {
            return Err(Error::InvalidInput(format!(
                "editorial pick {id} appears twice"
            )));
        }
    }
    let mut curated: Vec<&(usize, ArticleId)> = picks.curated.iter().collect();
    curated.sort_by_key(|(pos, id)| (*pos, id.clone()));
    let mut curated = curated.into_iter().peekable();

    let mut slots: Vec<LayoutSlot> = picks
        .pinned
        .iter()
        .map(|id| LayoutSlot {
            article_id: id.clone(),
            kind: SlotKind::Pinned,
            composite: None,
        })
        .collect();
    let mut auto = ranked.iter().filter(|s| !seen.contains(&s.article_id));
    let mut placed_auto: HashSet<&ArticleId> = HashSet::new();
    loop {
        if let Some((pos, id)) = curated.peek() {
            if *pos <= slots.len() {
                slots.push(LayoutSlot {
                    article_id: id.clone(),
                    kind: SlotKind::Curated,
                    composite: None,
                });
                curated.next();
                continue;
            }
        }
        match auto.next() {
            Some(s) => {
                if !placed_auto.insert(&s.article_id) {
                    continue;
                }
                slots.push(LayoutSlot {
                    article_id: s.article_id.clone(),
                    kind: SlotKind::Auto,
                    composite: Some(s.composite),
                });
            }
            None => break,
        }
    }
    for (_, id) in curated {
        slots.push(LayoutSlot {
            article_id: id.clone(),
            kind: SlotKind::Curated,
            composite: None,
        });
    }
    Ok(FrontPageLayout { slots })
}
