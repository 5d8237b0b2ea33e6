//! The experiment configuration file: one TOML document covering
//! simulation, cleaning, metrics and analysis.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cleaning::CleaningConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricOptions;
use crate::simulator::SimConfig;

/// How the section-distribution permutation test reshuffles the pooled
/// data: individual events, or whole users with all their events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationUnit {
    #[default]
    Events,
    Users,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub alpha: f64,
    pub n_perm: usize,
    pub permutation_unit: PermutationUnit,
    /// Activity segments used for the per-segment breakdown.
    pub segments: usize,
    /// Candidate cluster counts scanned for the Calinski-Harabasz optimum.
    pub segment_candidates: Vec<usize>,
    pub kmeans_restarts: usize,
    /// Keep editorially pinned and curated articles in the analysis.
    pub include_editorial: bool,
    /// Offset applied before cutting the log into calendar days.
    pub utc_offset_hours: i32,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            n_perm: 10_000,
            permutation_unit: PermutationUnit::Events,
            segments: 3,
            segment_candidates: (2..=8).collect(),
            kmeans_restarts: crate::stats::DEFAULT_RESTARTS,
            include_editorial: false,
            utc_offset_hours: 0,
        }
    }
}

impl AnalysisOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "analysis.alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.segments < 2 || self.segment_candidates.iter().any(|&k| k < 2) {
            return Err(Error::Config(
                "analysis.segments and segment_candidates must be >= 2".into(),
            ));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::Config(
                "analysis.kmeans_restarts must be >= 1".into(),
            ));
        }
        if !(-12..=14).contains(&self.utc_offset_hours) {
            return Err(Error::Config(format!(
                "analysis.utc_offset_hours must be in [-12, 14], got {}",
                self.utc_offset_hours
            )));
        }
        Ok(())
    }

    pub fn utc_offset_secs(&self) -> i64 {
        i64::from(self.utc_offset_hours) * 3600
    }
}

/// The top-level `seed` drives every random choice: it replaces
/// `simulation.seed` and seeds the analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub simulation: SimConfig,
    pub cleaning: CleaningConfig,
    pub metrics: MetricOptions,
    pub analysis: AnalysisOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            simulation: SimConfig::default(),
            cleaning: CleaningConfig::default(),
            metrics: MetricOptions::default(),
            analysis: AnalysisOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// The simulation settings with the top-level seed applied.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            ..self.simulation.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim_config().validate()?;
        self.cleaning.validate()?;
        self.metrics.validate()?;
        self.analysis.validate()?;
        let sections: BTreeSet<&str> = self
            .simulation
            .sections
            .iter()
            .map(|s| s.name.as_str())
            .collect();
        let pool = &self.simulation.pool;
        for name in pool
            .max_age_hours_by_section
            .keys()
            .chain(&pool.opinion_sections)
        {
            if !sections.contains(name.as_str()) {
                return Err(Error::Config(format!(
                    "simulation.pool refers to section `{name}`, which is not in simulation.sections"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg =
            ExperimentConfig::from_toml_str("seed = 9\n[simulation]\nn_users = 50\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.simulation.n_users, 50);
        assert_eq!(cfg.sim_config().seed, 9);
        assert_eq!(cfg.analysis, AnalysisOptions::default());
    }

    #[test]
    fn zero_weights_name_the_field() {
        let text =
            "[simulation.weights.control]\npopularity = 0.0\nrecency = 0.0\nperformance = 0.0\n";
        let err = ExperimentConfig::from_toml_str(text)
            .unwrap_err()
            .to_string();
        assert!(err.contains("weights"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("sede = 3\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[analysis]\nalpah = 0.1\n").is_err());
    }

    #[test]
    fn pool_sections_must_exist() {
        let text = "[simulation.pool]\nopinion_sections = [\"Leder\"]\n";
        let err = ExperimentConfig::from_toml_str(text)
            .unwrap_err()
            .to_string();
        assert!(err.contains("Leder"), "{err}");
    }

    #[test]
    fn bad_alpha_rejected() {
        assert!(ExperimentConfig::from_toml_str("[analysis]\nalpha = 1.5\n").is_err());
    }
}
