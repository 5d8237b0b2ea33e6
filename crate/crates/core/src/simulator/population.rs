use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal};
use serde::{Deserialize, Serialize};

use super::config::{EngagementLevel, SimConfig};
use crate::error::{Error, Result};
use crate::model::{Arm, User, UserId, SECS_PER_DAY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub arm: Arm,
    /// Interest weights aligned with the configured sections; sums to 1.
    pub section_affinity: Vec<f64>,
    pub engagement_level: EngagementLevel,
    /// Logistic temperature; above 1 flattens click decisions.
    pub temperature: f64,
    pub reading_speed_cps: f64,
}

impl UserProfile {
    /// Affinity relative to a uniform reader (1 = average interest).
    pub fn relative_affinity(&self, section: usize) -> f64 {
        self.section_affinity[section] * self.section_affinity.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub users: Vec<User>,
    pub profiles: Vec<UserProfile>,
}

fn dirichlet(rng: &mut impl Rng, gammas: &[Gamma<f64>]) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

pub fn user_id(index: usize, n_users: usize) -> UserId {
    let width = n_users.to_string().len();
    UserId::new(format!("u{index:0width$}"))
}

/// Draws readers and assigns arms by a seeded shuffle: the first
/// `round(n * arm_split)` shuffled users get personalization.
pub fn generate_population(cfg: &SimConfig, seed: u64) -> Result<Population> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_users;
    let n_treatment = ((n as f64) * cfg.arm_split).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut arms = vec![Arm::Control; n];
    for &i in &order[..n_treatment] {
        arms[i] = Arm::Personalization;
    }
    let gammas = cfg
        .affinity_alphas()
        .into_iter()
        .map(|a| Gamma::new(a, 1.0).map_err(|e| Error::Config(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let levels =
        WeightedIndex::new(cfg.engagement_mixture).map_err(|e| Error::Config(e.to_string()))?;
    let temperature = LogNormal::new(0.0, cfg.behavior.temperature_log_sd)
        .map_err(|e| Error::Config(e.to_string()))?;
    let speed = LogNormal::new(
        cfg.behavior.reading_speed_cps.ln(),
        cfg.behavior.reading_speed_log_sd,
    )
    .map_err(|e| Error::Config(e.to_string()))?;

    let mut users = Vec::with_capacity(n);
    let mut profiles = Vec::with_capacity(n);
    for (i, arm) in arms.into_iter().enumerate() {
        let id = user_id(i, n);
        let tenure_days = rng.random_range(30..3650);
        users.push(User {
            user_id: id.clone(),
            subscriber: true,
            subscribed_since: cfg.start - tenure_days * SECS_PER_DAY,
            arm: Some(arm),
        });
        profiles.push(UserProfile {
            user_id: id,
            arm,
            section_affinity: dirichlet(&mut rng, &gammas),
            engagement_level: EngagementLevel::ALL[levels.sample(&mut rng)],
            temperature: temperature.sample(&mut rng),
            reading_speed_cps: speed.sample(&mut rng),
        });
    }
    Ok(Population { users, profiles })
}
