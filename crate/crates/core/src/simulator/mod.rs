//! Synthetic readers and the A/B experiment loop: articles are published,
//! readers visit the front page in sessions, each arm ranks with its own
//! weights, and the factor model is retrained on a fixed schedule.
//!
//! The simulated clock advances in one-hour slices. Scores are computed at
//! the start of each slice from all traffic before it; events of a slice
//! become visible to the scorers from the next slice on. Every reader owns
//! a ChaCha stream derived from the seed and the reader's index, so output
//! is fully determined by the configuration.

mod bots;
mod config;
mod population;
mod session;

pub use bots::{inject_bots, BotTruth, BOT_CLICKS, RATE_BOT_EVENTS};
pub use config::{
    default_sections, ArmWeights, ArticleSpec, BehaviorParams, BotSpec, EditorialSpec,
    EngagementLevel, LevelBehavior, SectionSpec, SimConfig, DEFAULT_START,
};
pub use population::{generate_population, user_id, Population, UserProfile};
pub use session::{click_probability, simulate_session, FeedItem, Session};

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Arm, Article, ArticleId, Catalog, EventKind, EventLog, InteractionEvent, Timestamp, UserId,
    SECS_PER_DAY, SECS_PER_HOUR,
};
use crate::personalize::{
    relevance_scores, retrain_schedule, train, FactorModel, InteractionMatrix,
};
use crate::pool::{assemble_front_page, build_pool, EditorialPicks, FrontPageLayout, PINNED_SLOTS};
use crate::ranker::{BaseScores, ScoredArticle, WindowStats};

/// Independent sub-seeds for the parts of a run.
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    // SplitMix64 finalizer.
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_POPULATION: u64 = 1;
const TAG_ARTICLES: u64 = 2;
const TAG_READERS: u64 = 3;
const TAG_BOTS: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub experiment_start: Timestamp,
    pub experiment_end: Timestamp,
    pub sections: Vec<String>,
    pub profiles: Vec<UserProfile>,
    pub article_appeal: BTreeMap<ArticleId, f64>,
    /// Scheduled retrain instants over the experiment horizon.
    pub retrain_times: Vec<Timestamp>,
    /// Instants at which a model was actually fitted.
    pub trained_at: Vec<Timestamp>,
    pub bots: BotTruth,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub log: EventLog,
    pub truth: GroundTruth,
}

struct World {
    articles: Vec<Article>,
    appeal: Vec<f64>,
    section_of: Vec<usize>,
    index: HashMap<ArticleId, usize>,
    /// Editorial picks per simulated day.
    editorial: Vec<EditorialPicks>,
}

/// Splits each day's output across sections in proportion to base
/// popularity, carrying rounding remainders into later days so the running
/// totals never drift by more than one article per section.
struct SectionQuota {
    shares: Vec<f64>,
    owed: Vec<f64>,
}

impl SectionQuota {
    fn new(weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        let n = weights.len();
        Self {
            shares: weights.into_iter().map(|w| w / total).collect(),
            owed: vec![0.0; n],
        }
    }

    fn next_day(&mut self, n: usize) -> Vec<usize> {
        for (o, s) in self.owed.iter_mut().zip(&self.shares) {
            *o += s * n as f64;
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            // Largest outstanding entitlement first; ties go to the lower index.
            let (s, _) =
                self.owed
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &o)| {
                        if o > best.1 {
                            (i, o)
                        } else {
                            best
                        }
                    });
            self.owed[s] -= 1.0;
            out.push(s);
        }
        out
    }
}

fn generate_articles(cfg: &SimConfig, sim_start: Timestamp, total_days: usize) -> Result<World> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_ARTICLES));
    let sections = WeightedIndex::new(cfg.sections.iter().map(|s| s.base_popularity))
        .map_err(|e| Error::Config(e.to_string()))?;
    let spec = &cfg.articles;
    let news = Normal::new(spec.news_value_mean, spec.news_value_sd)
        .map_err(|e| Error::Config(e.to_string()))?;
    let length = LogNormal::new(spec.length_median_chars.ln(), spec.length_log_sd)
        .map_err(|e| Error::Config(e.to_string()))?;
    let appeal =
        Normal::new(0.0, cfg.behavior.appeal_sd).map_err(|e| Error::Config(e.to_string()))?;

    let mut world = World {
        articles: Vec::new(),
        appeal: Vec::new(),
        section_of: Vec::new(),
        index: HashMap::new(),
        editorial: Vec::new(),
    };
    let push = |world: &mut World,
                id: String,
                section: usize,
                published_at: Timestamp,
                pinned_position: Option<usize>,
                rng: &mut ChaCha8Rng| {
        let article = Article {
            article_id: ArticleId::new(id),
            section: cfg.sections[section].name.clone(),
            published_at,
            initial_news_value: news.sample(rng).round().clamp(0.0, 100.0) as u8,
            length_chars: (length.sample(rng).round() as u32).clamp(300, 20_000),
            editorial_pinned: pinned_position.is_some(),
            pinned_position,
        };
        world
            .index
            .insert(article.article_id.clone(), world.articles.len());
        world.articles.push(article);
        world.appeal.push(appeal.sample(rng));
        world.section_of.push(section);
    };
    let mut quota = SectionQuota::new(cfg.sections.iter().map(|s| s.base_popularity).collect());
    for day in 0..total_days {
        let day_start = sim_start + day as i64 * SECS_PER_DAY;
        let mut picks = EditorialPicks::default();
        let positions: Vec<usize> = (0..PINNED_SLOTS)
            .chain(cfg.editorial.curated_positions.iter().copied())
            .collect();
        for (j, &pos) in positions.iter().enumerate() {
            let id = format!("e{day:03}-{j:02}");
            let section = sections.sample(&mut rng);
            push(
                &mut world,
                id.clone(),
                section,
                day_start,
                Some(pos),
                &mut rng,
            );
            if j < PINNED_SLOTS {
                picks.pinned.push(ArticleId::new(id));
            } else {
                picks.curated.push((pos, ArticleId::new(id)));
            }
        }
        world.editorial.push(picks);
        let mut daily_sections = quota.next_day(cfg.n_articles_per_day);
        daily_sections.shuffle(&mut rng);
        for (j, section) in daily_sections.into_iter().enumerate() {
            let at = day_start + rng.random_range(0..SECS_PER_DAY);
            push(
                &mut world,
                format!("a{day:03}-{j:03}"),
                section,
                at,
                None,
                &mut rng,
            );
        }
    }
    Ok(world)
}

/// Events bucketed by the hour they happen in, for windowed counts.
#[derive(Default)]
struct History {
    /// `(at, article, is_click)` per hour since the simulation start.
    by_hour: Vec<Vec<(Timestamp, usize, bool)>>,
    /// `(at, user, article)` clicks per hour.
    clicks_by_hour: Vec<Vec<(Timestamp, usize, usize)>>,
}

impl History {
    fn hour(&self, sim_start: Timestamp, at: Timestamp) -> usize {
        ((at - sim_start).max(0) / SECS_PER_HOUR) as usize
    }

    fn record(&mut self, sim_start: Timestamp, user: usize, article: usize, e: &InteractionEvent) {
        let h = self.hour(sim_start, e.at);
        if self.by_hour.len() <= h {
            self.by_hour.resize_with(h + 1, Vec::new);
            self.clicks_by_hour.resize_with(h + 1, Vec::new);
        }
        self.by_hour[h].push((e.at, article, e.is_click()));
        if e.is_click() {
            self.clicks_by_hour[h].push((e.at, user, article));
        }
    }

    fn hours_between(
        &self,
        sim_start: Timestamp,
        from: Timestamp,
        to: Timestamp,
    ) -> std::ops::Range<usize> {
        let lo = self.hour(sim_start, from).min(self.by_hour.len());
        let hi = (self.hour(sim_start, to) + 1).min(self.by_hour.len());
        lo..hi.max(lo)
    }

    /// The same statistics `WindowStats::from_events` derives from the full
    /// log, restricted to `pool`.
    fn window_stats(
        &self,
        sim_start: Timestamp,
        now: Timestamp,
        cfg: &SimConfig,
        world: &World,
        pool: &[usize],
    ) -> WindowStats {
        let pop_from = now - (cfg.ranker.popularity_window_hours * SECS_PER_HOUR as f64) as i64;
        let perf_from = now - (cfg.ranker.performance_window_hours * SECS_PER_HOUR as f64) as i64;
        let mut clicks = vec![0u64; world.articles.len()];
        let mut perf = vec![(0u64, 0u64, false); world.articles.len()];
        for h in self.hours_between(sim_start, pop_from.min(perf_from), now) {
            for &(at, a, is_click) in &self.by_hour[h] {
                if at >= now {
                    continue;
                }
                if is_click && at >= pop_from {
                    clicks[a] += 1;
                }
                if at >= perf_from {
                    let slot = &mut perf[a];
                    slot.2 = true;
                    if is_click {
                        slot.1 += 1;
                    } else {
                        slot.0 += 1;
                    }
                }
            }
        }
        let mut stats = WindowStats::default();
        for &a in pool {
            let id = &world.articles[a].article_id;
            if clicks[a] > 0 {
                stats.clicks.insert(id.clone(), clicks[a]);
            }
            let (imp, clk, seen) = perf[a];
            if seen {
                stats.ctr.insert(
                    id.clone(),
                    if imp == 0 {
                        0.0
                    } else {
                        clk as f64 / imp as f64
                    },
                );
            }
        }
        stats
    }

    fn interaction_matrix(
        &self,
        sim_start: Timestamp,
        now: Timestamp,
        cfg: &SimConfig,
        world: &World,
        pop: &Population,
    ) -> InteractionMatrix {
        let from = now - (cfg.matrix_window_days * SECS_PER_DAY as f64) as i64;
        let mut counts: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for h in self.hours_between(sim_start, from, now) {
            for &(at, u, a) in &self.clicks_by_hour[h] {
                if at >= from && at <= now && pop.users[u].subscriber {
                    *counts.entry((u, a)).or_default() += 1;
                }
            }
        }
        InteractionMatrix::from_counts(
            counts.into_iter().map(|((u, a), c)| {
                (
                    pop.users[u].user_id.clone(),
                    world.articles[a].article_id.clone(),
                    c,
                )
            }),
            cfg.min_article_clicks,
            cfg.matrix_window_days,
            now,
        )
    }
}

struct Reader {
    rng: ChaCha8Rng,
    busy_until: Timestamp,
}

fn feed_items<'a>(layout: &'a FrontPageLayout, world: &World) -> Vec<FeedItem<'a>> {
    layout
        .slots
        .iter()
        .map(|s| {
            let i = world.index[&s.article_id];
            FeedItem {
                article_id: &s.article_id,
                section: world.section_of[i],
                appeal: world.appeal[i],
                length_chars: world.articles[i].length_chars,
            }
        })
        .collect()
}

/// Personalized rankings are traced only down to this rank.
pub const TRACE_TOP_N: usize = 10;

/// One ranked pool entry as a reader's feed saw it. Shared rankings carry
/// no user; personalized ones are kept to the top `TRACE_TOP_N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreTraceRow {
    pub at: Timestamp,
    pub arm: Arm,
    pub user_id: Option<UserId>,
    pub rank: usize,
    pub article_id: ArticleId,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub s4: Option<f64>,
    pub cs: f64,
}

fn trace_rows<'a>(
    at: Timestamp,
    arm: Arm,
    user: Option<&'a UserId>,
    ranked: &'a [ScoredArticle],
    top: usize,
) -> impl Iterator<Item = ScoreTraceRow> + 'a {
    ranked
        .iter()
        .take(top)
        .enumerate()
        .map(move |(rank, r)| ScoreTraceRow {
            at,
            arm,
            user_id: user.cloned(),
            rank,
            article_id: r.article_id.clone(),
            s1: r.scores.popularity,
            s2: r.scores.recency,
            s3: r.scores.performance,
            s4: r.scores.personalization,
            cs: r.composite,
        })
}

/// Runs the experiment described by `cfg` and returns the emitted log
/// (experiment period only, bots included when configured) with the
/// generating ground truth.
pub fn run_experiment(cfg: &SimConfig) -> Result<SimOutput> {
    run_experiment_traced(cfg, None)
}

/// `run_experiment` that also appends the rankings served during the
/// experiment period to `trace`.
pub fn run_experiment_traced(
    cfg: &SimConfig,
    mut trace: Option<&mut Vec<ScoreTraceRow>>,
) -> Result<SimOutput> {
    cfg.validate()?;
    let t0 = cfg.start;
    let horizon = cfg.n_days as i64 * SECS_PER_DAY;
    let end = t0 + horizon;
    let retrain_times = retrain_schedule(t0, horizon, cfg.retrain_interval_hours)?;
    let pop = generate_population(cfg, derive_seed(cfg.seed, TAG_POPULATION))?;
    let sections: Vec<String> = cfg.sections.iter().map(|s| s.name.clone()).collect();

    if cfg.n_days == 0 {
        let catalog = Arc::new(Catalog::new(Vec::new(), pop.users)?);
        return Ok(SimOutput {
            log: EventLog::empty(catalog),
            truth: GroundTruth {
                seed: cfg.seed,
                experiment_start: t0,
                experiment_end: end,
                sections,
                profiles: pop.profiles,
                article_appeal: BTreeMap::new(),
                retrain_times,
                trained_at: Vec::new(),
                bots: BotTruth::default(),
            },
        });
    }

    let total_days = cfg.warmup_days + cfg.n_days;
    let sim_start = t0 - cfg.warmup_days as i64 * SECS_PER_DAY;
    let world = generate_articles(cfg, sim_start, total_days)?;
    let readers_seed = derive_seed(cfg.seed, TAG_READERS);
    let mut readers: Vec<Reader> = (0..pop.users.len())
        .map(|u| {
            let mut rng = ChaCha8Rng::seed_from_u64(readers_seed);
            rng.set_stream(u as u64);
            Reader {
                rng,
                busy_until: i64::MIN,
            }
        })
        .collect();

    let mut history = History::default();
    let mut emitted: Vec<InteractionEvent> = Vec::new();
    let mut model: Option<FactorModel> = None;
    let mut trained_at = Vec::new();
    let mut next_retrain = 0;
    let empty_model = FactorModel::empty(cfg.als.factors, t0);
    let mut slices: Vec<Vec<(Timestamp, usize)>> = Vec::new();

    for hour in 0..total_days * 24 {
        let now = sim_start + hour as i64 * SECS_PER_HOUR;
        let day = hour / 24;
        if hour % 24 == 0 {
            slices = plan_day(cfg, &pop, &mut readers, now, day)?;
        }
        while next_retrain < retrain_times.len() && retrain_times[next_retrain] <= now {
            next_retrain += 1;
            if cfg.any_personalized() {
                model = retrain(&history, sim_start, now, cfg, &world, &pop)?;
                trained_at.push(now);
            }
        }
        let mut sessions = std::mem::take(&mut slices[hour % 24]);
        if sessions.is_empty() {
            continue;
        }
        sessions.sort_unstable();

        let pool = build_pool(world.articles.iter(), &cfg.pool, now);
        let pool_idx: Vec<usize> = pool
            .articles
            .iter()
            .map(|a| world.index[&a.article_id])
            .collect();
        let stats = history.window_stats(sim_start, now, cfg, &world, &pool_idx);
        let base = BaseScores::compute(&pool, &stats, now, &cfg.ranker);
        let picks = &world.editorial[day];
        let in_experiment = now >= t0;
        let mut shared: HashMap<Arm, FrontPageLayout> = HashMap::new();
        for arm in Arm::BOTH {
            // Before the experiment every reader gets the non-personalized ranker.
            let w = if in_experiment {
                weights_of(cfg, arm)
            } else {
                cfg.weights.control
            };
            if !w.is_personalized() {
                let ranked = base.rank(&w, None)?;
                if in_experiment {
                    if let Some(t) = trace.as_deref_mut() {
                        t.extend(trace_rows(now, arm, None, &ranked, ranked.len()));
                    }
                }
                shared.insert(arm, assemble_front_page(&ranked, picks)?);
            }
        }

        for (planned, u) in sessions {
            let profile = &pop.profiles[u];
            let layout = match shared.get(&profile.arm) {
                Some(l) => l.clone(),
                None => {
                    let m = model.as_ref().unwrap_or(&empty_model);
                    let personal = relevance_scores(m, &profile.user_id, &base.ids);
                    let ranked = base.rank(&weights_of(cfg, profile.arm), Some(&personal))?;
                    if let Some(t) = trace.as_deref_mut() {
                        t.extend(trace_rows(
                            now,
                            profile.arm,
                            Some(&profile.user_id),
                            &ranked,
                            TRACE_TOP_N,
                        ));
                    }
                    assemble_front_page(&ranked, picks)?
                }
            };
            let reader = &mut readers[u];
            let start = planned.max(
                reader
                    .busy_until
                    .saturating_add(cfg.behavior.min_event_gap_s),
            );
            let level = &cfg.levels[profile.engagement_level.index()];
            let session = simulate_session(
                profile,
                level,
                &feed_items(&layout, &world),
                &cfg.behavior,
                start,
                &mut reader.rng,
            );
            reader.busy_until = session.ended_at;
            for e in &session.events {
                history.record(sim_start, u, world.index[&e.article_id], e);
            }
            if start >= t0 {
                emitted.extend(session.events);
            }
        }
    }

    // The closing retrain at the horizon serves no feed but completes the schedule.
    if cfg.any_personalized() && next_retrain < retrain_times.len() {
        retrain(&history, sim_start, end, cfg, &world, &pop)?;
        trained_at.push(end);
    }
    emitted.retain(|e| e.at < end);
    emitted.sort_by_key(|e| e.at);
    let article_appeal = world
        .articles
        .iter()
        .zip(&world.appeal)
        .map(|(a, &v)| (a.article_id.clone(), v))
        .collect();
    let catalog = Arc::new(Catalog::new(world.articles, pop.users)?);
    let log = EventLog::new(catalog, emitted)?;
    let (log, bots) = inject_bots(&log, &cfg.bots, derive_seed(cfg.seed, TAG_BOTS))?;
    Ok(SimOutput {
        log,
        truth: GroundTruth {
            seed: cfg.seed,
            experiment_start: t0,
            experiment_end: end,
            sections,
            profiles: pop.profiles,
            article_appeal,
            retrain_times,
            trained_at,
            bots,
        },
    })
}

fn retrain(
    history: &History,
    sim_start: Timestamp,
    now: Timestamp,
    cfg: &SimConfig,
    world: &World,
    pop: &Population,
) -> Result<Option<FactorModel>> {
    let matrix = history.interaction_matrix(sim_start, now, cfg, world, pop);
    if matrix.is_empty() {
        return Ok(None);
    }
    train(&matrix, &cfg.als, now).map(Some)
}

fn weights_of(cfg: &SimConfig, arm: Arm) -> crate::model::RankingWeights {
    match arm {
        Arm::Control => cfg.weights.control,
        Arm::Personalization => cfg.weights.treatment,
    }
}

/// Session start times for one day, bucketed into its 24 hourly slices.
fn plan_day(
    cfg: &SimConfig,
    pop: &Population,
    readers: &mut [Reader],
    day_start: Timestamp,
    day: usize,
) -> Result<Vec<Vec<(Timestamp, usize)>>> {
    let multiplier = day
        .checked_sub(cfg.warmup_days)
        .and_then(|d| cfg.daily_activity.get(d))
        .copied()
        .unwrap_or(1.0);
    let mut slices = vec![Vec::new(); 24];
    for (u, profile) in pop.profiles.iter().enumerate() {
        let rate = cfg.levels[profile.engagement_level.index()].sessions_per_day * multiplier;
        let rng = &mut readers[u].rng;
        let n = if rate > 0.0 {
            Poisson::new(rate)
                .map_err(|e| Error::Config(e.to_string()))?
                .sample(rng) as usize
        } else {
            0
        };
        for _ in 0..n {
            let offset = rng.random_range(0..SECS_PER_DAY);
            slices[(offset / SECS_PER_HOUR) as usize].push((day_start + offset, u));
        }
    }
    Ok(slices)
}

/// Click and impression counts per article, for quick checks on a log.
pub fn event_counts(log: &EventLog) -> BTreeMap<ArticleId, (u64, u64)> {
    let mut out: BTreeMap<ArticleId, (u64, u64)> = BTreeMap::new();
    for e in &log.events {
        let slot = out.entry(e.article_id.clone()).or_default();
        match e.kind {
            EventKind::Impression => slot.0 += 1,
            EventKind::Click => slot.1 += 1,
        }
    }
    out
}
