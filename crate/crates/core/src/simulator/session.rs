use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, Normal};

use super::config::{BehaviorParams, LevelBehavior};
use super::population::UserProfile;
use crate::model::{ArticleId, InteractionEvent, Timestamp};

/// What a reader needs to know about one feed slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedItem<'a> {
    pub article_id: &'a ArticleId,
    pub section: usize,
    pub appeal: f64,
    pub length_chars: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub events: Vec<InteractionEvent>,
    pub ended_at: Timestamp,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn click_probability(profile: &UserProfile, item: &FeedItem<'_>, b: &BehaviorParams) -> f64 {
    let logit =
        b.click_intercept + b.click_slope * profile.relative_affinity(item.section) + item.appeal;
    sigmoid(logit / profile.temperature)
}

fn beta_with_mean(mean: f64, concentration: f64) -> Beta<f64> {
    let m = mean.clamp(0.01, 0.99);
    Beta::new(m * concentration, (1.0 - m) * concentration).expect("positive shape parameters")
}

/// Read depth and dwell time of one click, and whether it was a bounce.
fn read(
    profile: &UserProfile,
    item: &FeedItem<'_>,
    b: &BehaviorParams,
    rng: &mut impl Rng,
) -> (f64, f64, bool) {
    let bounce = rng.random::<f64>() < b.bounce_probability;
    let depth = if bounce {
        beta_with_mean(b.bounce_read_mean, b.read_depth_concentration)
    } else {
        let mean = b.read_depth_base
            + b.read_depth_slope * (profile.relative_affinity(item.section) - 1.0);
        beta_with_mean(mean.clamp(0.05, 0.95), b.read_depth_concentration)
    };
    let rp: f64 = depth.sample(rng);
    let noise = if b.dwell_noise_sd > 0.0 {
        Normal::new(0.0, b.dwell_noise_sd)
            .expect("finite sd")
            .sample(rng)
    } else {
        0.0
    };
    let ad = (f64::from(item.length_chars) * rp / profile.reading_speed_cps + noise).max(0.0);
    // Two decimals keep logs compact without losing anything measurable.
    (
        (rp * 1e4).round() / 1e4,
        (ad * 100.0).round() / 100.0,
        bounce,
    )
}

/// One visit to the front page. The reader scans slots top-down, emitting
/// an impression per slot, clicks with the logistic click probability,
/// and moves on with the level's continuation probability. A completed
/// (non-bounce) read may end the visit.
pub fn simulate_session(
    profile: &UserProfile,
    level: &LevelBehavior,
    feed: &[FeedItem<'_>],
    b: &BehaviorParams,
    start: Timestamp,
    rng: &mut impl Rng,
) -> Session {
    let scan = Exp::new(1.0 / b.scan_time_mean_s.max(1e-9)).expect("positive rate");
    let step = |rng: &mut dyn rand::RngCore| b.min_event_gap_s + scan.sample(rng) as i64;
    let mut events = Vec::new();
    let mut t = start;
    for (pos, item) in feed.iter().enumerate().take(level.scroll_budget as usize) {
        events.push(InteractionEvent::impression(
            &profile.user_id,
            item.article_id,
            t,
            pos as u32,
        ));
        if rng.random::<f64>() < click_probability(profile, item, b) {
            t += step(rng);
            let (rp, ad, bounce) = read(profile, item, b, rng);
            events.push(InteractionEvent::click(
                &profile.user_id,
                item.article_id,
                t,
                pos as u32,
                rp,
                ad,
            ));
            t += ad.ceil() as i64;
            if !bounce && rng.random::<f64>() < b.satisfaction_stop {
                break;
            }
        }
        if rng.random::<f64>() >= level.continuation {
            break;
        }
        t += step(rng);
    }
    Session {
        events,
        ended_at: t,
    }
}
