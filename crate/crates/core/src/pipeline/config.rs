use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::synthetic::SyntheticConfig;
use crate::data::{FeatureSet, PeriodWindow, PropertyFilter, WindowPair, WindowRole, YearMonth};
use crate::error::{Error, Result};
use crate::geo::CostParams;
use crate::policies::PolicySpec;
use crate::risk::{Hyperparams, RiskThresholds};
use crate::routing::TourOptions;

/// Everything a run needs. Every field has a default, so an empty file is a
/// valid configuration; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives data generation, tour kicks and bootstrap resampling.
    pub seed: u64,
    /// Where every command writes. Default `out`.
    pub out_dir: PathBuf,
    /// Directory holding `properties.csv`, `filings.csv`,
    /// `neighborhoods.csv` and `tenures.csv`. Default `<out_dir>/data`,
    /// which is where `gen` writes.
    pub data_dir: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    pub filter: PropertyFilter,
    pub windows: WindowConfig,
    pub model: ModelConfig,
    pub cost: CostParams,
    pub tour: TourOptions,
    pub thresholds: RiskThresholds,
    /// Comparison rows, in report order.
    pub policies: Vec<PolicySpec>,
    pub significance: SignificanceConfig,
    pub histogram: HistogramConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            data_dir: None,
            synthetic: SyntheticConfig::default(),
            filter: PropertyFilter::default(),
            windows: WindowConfig::default(),
            model: ModelConfig::default(),
            cost: CostParams::default(),
            tour: TourOptions::default(),
            thresholds: RiskThresholds::default(),
            policies: PolicySpec::standard(),
            significance: SignificanceConfig::default(),
            histogram: HistogramConfig::default(),
        }
    }
}

/// Training uses `feature_months` of history starting at `train_start`
/// followed by `label_months` of labels. Testing labels start at
/// `test_label_start` with the same feature length immediately before.
/// The prior-count and neighborhood policies rank by filings in the
/// `prior_months` before `test_label_start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub train_start: YearMonth,
    pub feature_months: u32,
    pub label_months: u32,
    pub test_label_start: YearMonth,
    pub prior_months: u32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            train_start: YearMonth::new(2021, 1).expect("valid month"),
            feature_months: 7,
            label_months: 3,
            test_label_start: YearMonth::new(2021, 11).expect("valid month"),
            prior_months: 3,
        }
    }
}

impl WindowConfig {
    pub fn training(&self) -> Result<WindowPair> {
        WindowPair::training(self.train_start, self.feature_months, self.label_months)
    }

    pub fn testing(&self) -> Result<WindowPair> {
        WindowPair::preceding(self.test_label_start, self.feature_months, self.label_months)
    }

    pub fn prior(&self) -> Result<PeriodWindow> {
        if self.prior_months == 0 {
            return Err(Error::Config("windows.prior_months must be positive".into()));
        }
        PeriodWindow::spanning(
            self.test_label_start.offset(-i64::from(self.prior_months)),
            self.prior_months,
            WindowRole::Feature,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreImport {
    pub feature_set: FeatureSet,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub feature_sets: Vec<FeatureSet>,
    /// Applied to every feature set. Unset means the per-set defaults of
    /// [`Hyperparams::post_covid`].
    pub hyperparams: Option<Hyperparams>,
    /// Choose hyperparameters by stratified cross-validation over
    /// [`Hyperparams::search_grid`] instead.
    pub grid_search: bool,
    pub cv_folds: usize,
    /// Externally produced scores used in place of a trained model.
    pub import_scores: Vec<ScoreImport>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_sets: FeatureSet::ALL.to_vec(),
            hyperparams: None,
            grid_search: false,
            cv_folds: 5,
            import_scores: Vec::new(),
        }
    }
}

impl ModelConfig {
    pub fn hyperparams_for(&self, set: FeatureSet) -> Hyperparams {
        self.hyperparams.unwrap_or_else(|| Hyperparams::post_covid(set))
    }

    pub fn imported(&self, set: FeatureSet) -> Option<&Path> {
        self.import_scores.iter().find(|s| s.feature_set == set).map(|s| s.path.as_path())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignificanceConfig {
    pub bootstrap_iterations: usize,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        SignificanceConfig { bootstrap_iterations: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramConfig {
    /// Lower bounds of the unit-count buckets; the last bucket is open.
    pub bucket_lower_bounds: Vec<u32>,
    pub feature_set: FeatureSet,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        HistogramConfig {
            bucket_lower_bounds: vec![2, 5, 10, 25, 50, 100],
            feature_set: FeatureSet::ENO,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| self.out_dir.join("data"))
    }

    /// Checks everything that can be checked without touching the disk.
    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.cost.validate()?;
        self.thresholds.validate()?;
        self.windows.training()?;
        self.windows.testing()?;
        self.windows.prior()?;
        if self.model.feature_sets.is_empty() {
            return Err(Error::Config("model.feature_sets is empty".into()));
        }
        for set in &self.model.feature_sets {
            self.model.hyperparams_for(*set).validate()?;
        }
        if self.model.grid_search && self.model.cv_folds < 2 {
            return Err(Error::Config("model.cv_folds must be at least 2".into()));
        }
        for s in &self.policies {
            s.validate()?;
        }
        if self.significance.bootstrap_iterations < 100 {
            return Err(Error::Config("significance.bootstrap_iterations must be at least 100".into()));
        }
        let b = &self.histogram.bucket_lower_bounds;
        if b.is_empty() || b.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("histogram.bucket_lower_bounds must be strictly increasing".into()));
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration with the directory fields
    /// cleared, so relocating a run does not change it.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.data_dir = None;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
        assert_eq!(c.data_dir(), PathBuf::from("out/data"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("sed = 3"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("[windows]\nfeature_month = 3").is_err());
        assert!(RunConfig::from_toml("[cost]\nknock = 0.2").is_err());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = RunConfig::from_toml("seed = 9\n[cost]\nknock_hours_per_unit = 0.2\n[synthetic]\nproperties = 50\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.cost.knock_hours_per_unit, 0.2);
        assert_eq!(c.cost.speeds_mph, CostParams::default().speeds_mph);
        assert_eq!(c.synthetic.properties, 50);
        assert_eq!(c.synthetic.grid_rows, SyntheticConfig::default().grid_rows);
    }

    #[test]
    fn hash_ignores_directories_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        b.data_dir = Some("d".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn default_windows() {
        let w = WindowConfig::default();
        assert_eq!(w.prior().unwrap().to_string(), "2021-08..2021-10");
        assert_eq!(w.testing().unwrap().label.to_string(), "2021-11..2022-01");
        assert_eq!(w.training().unwrap().feature.to_string(), "2021-01..2021-07");
    }

    #[test]
    fn invalid_values_fail_validation() {
        let mut c = RunConfig::default();
        c.synthetic.properties = 0;
        assert!(c.validate().unwrap_err().is_validation());
        let mut c = RunConfig::default();
        c.histogram.bucket_lower_bounds = vec![5, 2];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.significance.bootstrap_iterations = 10;
        assert!(c.validate().is_err());
    }
}
