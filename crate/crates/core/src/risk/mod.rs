//! Risk scoring: boosted-tree training, cross-validated model selection,
//! risk bins and score files.

mod cv;
mod gbdt;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FeatureSet;
use crate::error::{Error, Result};

pub use cv::{grid_search_cv, precision_at, stratified_folds, GridCell, GridSearch};
pub use gbdt::{column_fingerprint, train_gbdt, GbdtModel, Node, Tree, MODEL_FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub max_depth: usize,
    pub learning_rate: f64,
    pub n_estimators: usize,
    pub scale_pos_weight: f64,
    pub gamma: f64,
    #[serde(default = "default_l2")]
    pub l2_leaf_penalty: f64,
}

fn default_l2() -> f64 {
    1.0
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self::post_covid(FeatureSet::ENO)
    }
}

impl Hyperparams {
    /// Values selected for the Post-COVID models of each feature set.
    pub fn post_covid(set: FeatureSet) -> Self {
        let scale_pos_weight = match set {
            FeatureSet::E => 3.0,
            FeatureSet::EN => 1.0,
            FeatureSet::ENO => 5.0,
        };
        Self {
            max_depth: 3,
            learning_rate: 0.05,
            n_estimators: 100,
            scale_pos_weight,
            gamma: 0.05,
            l2_leaf_penalty: 1.0,
        }
    }

    /// Full search grid: 4 depths x 3 rates x 3 sizes x 3 weights x 3 gammas.
    pub fn search_grid() -> Vec<Self> {
        let mut out = Vec::with_capacity(324);
        for max_depth in [2, 3, 4, 5] {
            for learning_rate in [0.01, 0.05, 0.1] {
                for n_estimators in [50, 100, 500] {
                    for scale_pos_weight in [1.0, 3.0, 5.0] {
                        for gamma in [0.0, 0.05, 0.1] {
                            out.push(Self {
                                max_depth,
                                learning_rate,
                                n_estimators,
                                scale_pos_weight,
                                gamma,
                                l2_leaf_penalty: 1.0,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.n_estimators < 1 {
            return Err(Error::Config("n_estimators must be at least 1".into()));
        }
        if !(self.scale_pos_weight >= 1.0 && self.scale_pos_weight.is_finite()) {
            return Err(Error::Config(format!(
                "scale_pos_weight must be at least 1, got {}",
                self.scale_pos_weight
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if !(self.l2_leaf_penalty >= 0.0 && self.l2_leaf_penalty.is_finite()) {
            return Err(Error::Config(format!(
                "l2_leaf_penalty must be non-negative, got {}",
                self.l2_leaf_penalty
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskGroup {
    VeryLow,
    Low,
    Medium,
    High,
}

impl RiskGroup {
    pub const ALL: [RiskGroup; 4] = [RiskGroup::VeryLow, RiskGroup::Low, RiskGroup::Medium, RiskGroup::High];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskGroup::VeryLow => "very_low",
            RiskGroup::Low => "low",
            RiskGroup::Medium => "medium",
            RiskGroup::High => "high",
        }
    }
}

impl fmt::Display for RiskGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Upper bounds (inclusive) of the VeryLow, Low and Medium groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RiskThresholds(pub [f64; 3]);

impl Default for RiskThresholds {
    fn default() -> Self {
        Self([0.05, 0.2, 0.8])
    }
}

impl RiskThresholds {
    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.0;
        if !(0.0 < a && a < b && b < c && c < 1.0) {
            return Err(Error::Config(format!(
                "risk thresholds must be strictly increasing inside (0, 1), got {:?}",
                self.0
            )));
        }
        Ok(())
    }

    pub fn bin(&self, score: f64) -> Result<RiskGroup> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!("risk score {score} outside [0, 1]")));
        }
        let [a, b, c] = self.0;
        Ok(if score <= a {
            RiskGroup::VeryLow
        } else if score <= b {
            RiskGroup::Low
        } else if score <= c {
            RiskGroup::Medium
        } else {
            RiskGroup::High
        })
    }

    /// Lower bound (exclusive) of the Medium group.
    pub fn medium_floor(&self) -> f64 {
        self.0[1]
    }
}

/// Bins a score with the default thresholds.
pub fn bin_risk(score: f64) -> Result<RiskGroup> {
    RiskThresholds::default().bin(score)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImportedScores {
    pub scores: BTreeMap<String, f64>,
    /// Ids not present in the known set; excluded from `scores`.
    pub unknown: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    property_id: String,
    score: String,
}

/// Reads a `property_id,score` file. When `known` is given, ids outside it
/// are set aside in `unknown`.
pub fn import_scores(path: &Path, known: Option<&HashSet<&str>>) -> Result<ImportedScores> {
    let file = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::invalid(format!("{file}: {other:?}")),
    })?;
    let headers = rdr.headers()?.clone();
    for column in ["property_id", "score"] {
        if !headers.iter().any(|h| h == column) {
            return Err(Error::MissingColumn {
                file: file.clone(),
                column: column.into(),
            });
        }
    }
    let mut out = ImportedScores::default();
    for (i, rec) in rdr.deserialize::<ScoreRow>().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let bad = |message: String| Error::InvalidRow {
            file: file.clone(),
            row,
            field: "score".into(),
            message,
        };
        let score: f64 = rec
            .score
            .trim()
            .parse()
            .map_err(|_| bad(format!("`{}` is not a number", rec.score)))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(bad(format!("{score} outside [0, 1]")));
        }
        let id = rec.property_id.trim().to_string();
        if id.is_empty() {
            return Err(Error::InvalidRow {
                file: file.clone(),
                row,
                field: "property_id".into(),
                message: "empty id".into(),
            });
        }
        if out.scores.contains_key(&id) || out.unknown.contains(&id) {
            return Err(Error::Duplicate { kind: "property_id", id });
        }
        if known.is_some_and(|k| !k.contains(id.as_str())) {
            out.unknown.push(id);
        } else {
            out.scores.insert(id, score);
        }
    }
    Ok(out)
}

/// Writes scores as `property_id,score` in the given order.
pub fn write_scores(path: &Path, ids: &[String], scores: &[f64]) -> Result<()> {
    if ids.len() != scores.len() {
        return Err(Error::invalid("ids and scores differ in length"));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    })?;
    w.write_record(["property_id", "score"])?;
    for (id, s) in ids.iter().zip(scores) {
        w.write_record([id.as_str(), &format!("{s}")])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
