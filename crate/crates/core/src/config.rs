//! Run configuration: paths, strategy selection, hyperparameters and the
//! master seed. Loaded from TOML; any field left out takes its default.
//!
//! Every module seed is derived from the one master seed, so a single number
//! reproduces a whole run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::{FilterPolicy, ReportFilters, StreakPolicy};
use crate::data::Subject;
use crate::error::{Error, Result};
use crate::gmm::{Divergence, GmmConfig, SubjectComponentCounts};
use crate::registry::Strategy;
use crate::rng::derive_seed;
use crate::som::SomConfig;

/// The shipped `config/default.toml`.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../../../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub models: PathBuf,
    pub sessions: PathBuf,
    pub questions: PathBuf,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: "data/corpus.jsonl".into(),
            models: "models".into(),
            sessions: "logs/sessions.csv".into(),
            questions: "logs/session_questions.csv".into(),
            output: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Strategies {
    pub train_som: bool,
    pub train_gmm: bool,
    /// Arms eligible for session assignment.
    pub arms: Vec<Strategy>,
}

impl Default for Strategies {
    fn default() -> Self {
        Strategies { train_som: true, train_gmm: true, arms: Strategy::EXPERIMENT.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SomSettings {
    pub rows: usize,
    pub cols: usize,
    pub epochs: usize,
    pub lr0: f64,
    /// Defaults to `max(rows, cols) / 2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius0: Option<f64>,
}

impl Default for SomSettings {
    fn default() -> Self {
        let c = SomConfig::default();
        SomSettings { rows: c.rows, cols: c.cols, epochs: c.epochs, lr0: c.lr0, radius0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub reg_covar: f64,
    pub divergence: Divergence,
    pub components: SubjectComponentCounts,
}

impl Default for GmmSettings {
    fn default() -> Self {
        let c = GmmConfig::default();
        GmmSettings {
            tol: c.tol,
            max_iter: c.max_iter,
            reg_covar: c.reg_covar,
            divergence: c.divergence,
            components: SubjectComponentCounts::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectKSettings {
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for SelectKSettings {
    fn default() -> Self {
        SelectKSettings { k_min: 1, k_max: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsSettings {
    pub min_duration_secs: f64,
    /// Percentile window applied to session durations.
    pub duration_window: [f64; 2],
    pub count_trailing_streaks: bool,
}

impl Default for AnalyticsSettings {
    fn default() -> Self {
        AnalyticsSettings { min_duration_secs: 5.0, duration_window: [5.0, 95.0], count_trailing_streaks: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub recommend_n: usize,
    pub paths: Paths,
    pub strategies: Strategies,
    pub som: SomSettings,
    pub gmm: GmmSettings,
    pub select_k: SelectKSettings,
    pub analytics: AnalyticsSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            recommend_n: 10,
            paths: Paths::default(),
            strategies: Strategies::default(),
            som: SomSettings::default(),
            gmm: GmmSettings::default(),
            select_k: SelectKSettings::default(),
            analytics: AnalyticsSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.som_config(Subject::Xyz).validate()?;
        for s in Subject::ALL {
            self.gmm_config(s).validate()?;
        }
        self.gmm.components.validate()?;
        self.report_filters().durations.validate()?;
        if self.recommend_n == 0 {
            return Err(Error::InvalidConfig("recommend_n must be at least 1".into()));
        }
        if self.select_k.k_min == 0 || self.select_k.k_min > self.select_k.k_max {
            return Err(Error::InvalidConfig("select_k needs 1 <= k_min <= k_max".into()));
        }
        if self.strategies.arms.is_empty() {
            return Err(Error::InvalidConfig("at least one arm is required".into()));
        }
        Ok(())
    }

    pub fn som_config(&self, subject: Subject) -> SomConfig {
        let s = &self.som;
        let mut c = SomConfig::grid(s.rows, s.cols);
        c.epochs = s.epochs;
        c.lr0 = s.lr0;
        if let Some(r) = s.radius0 {
            c.radius0 = r;
        }
        c.seed = derive_seed(self.seed, &format!("som/{subject}"));
        c
    }

    pub fn gmm_template(&self) -> GmmConfig {
        GmmConfig {
            k: 1,
            covariance: Default::default(),
            tol: self.gmm.tol,
            max_iter: self.gmm.max_iter,
            reg_covar: self.gmm.reg_covar,
            seed: 0,
            divergence: self.gmm.divergence,
        }
    }

    pub fn gmm_config(&self, subject: Subject) -> GmmConfig {
        GmmConfig {
            k: self.gmm.components.get(subject),
            seed: derive_seed(self.seed, &format!("gmm/{subject}")),
            ..self.gmm_template()
        }
    }

    pub fn select_k_template(&self, subject: Subject) -> GmmConfig {
        GmmConfig { seed: derive_seed(self.seed, &format!("select-k/{subject}")), ..self.gmm_template() }
    }

    pub fn assignment_seed(&self) -> u64 {
        derive_seed(self.seed, "assign")
    }

    pub fn fixture_seed(&self) -> u64 {
        derive_seed(self.seed, "fixtures")
    }

    pub fn report_filters(&self) -> ReportFilters {
        let a = &self.analytics;
        let cleaned = FilterPolicy { min_duration_secs: Some(a.min_duration_secs), ..FilterPolicy::cleaned() };
        ReportFilters {
            durations: FilterPolicy {
                percentile_window: Some((a.duration_window[0], a.duration_window[1])),
                ..cleaned
            },
            questions_per_session: cleaned,
            streak_policy: StreakPolicy { count_trailing: a.count_trailing_streaks },
            ..ReportFilters::default()
        }
    }
}
