//! CART regression trees and the ensembles built from them: bagged random
//! forests for regression/importance and gradient-boosted machines for
//! binary classification (logistic loss) and regression (squared loss).

mod cart;
mod forest;
mod gbm;

pub use cart::{cart_fit, CartSettings, CartTree, Node};
pub use forest::{rf_fit, rf_predict};
pub use gbm::{
    gbm_fit_classifier, gbm_fit_regressor, gbm_predict, gbm_predict_proba, logistic_loss,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serial;

pub const ENSEMBLE_FORMAT: &str = "cellcast/ensemble";

/// How many features each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSubsample {
    All,
    Sqrt,
    Count(usize),
}

impl FeatureSubsample {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            FeatureSubsample::All => n_features,
            FeatureSubsample::Sqrt => ((n_features as f64).sqrt().floor() as usize).max(1),
            FeatureSubsample::Count(k) => k.clamp(1, n_features),
        }
    }
}

/// Random-forest regressor settings (MSE split criterion throughout).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ForestSettings {
    pub trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: FeatureSubsample,
    pub seed: u64,
}

impl Default for ForestSettings {
    fn default() -> Self {
        ForestSettings {
            trees: 1200,
            max_depth: 20,
            min_samples_split: 10,
            min_samples_leaf: 2,
            max_features: FeatureSubsample::Sqrt,
            seed: 0,
        }
    }
}

impl ForestSettings {
    pub fn validate(&self) -> Result<()> {
        if self.trees < 1 || self.max_depth < 1 || self.min_samples_leaf < 1 {
            return Err(Error::config(
                "forest needs trees >= 1, depth >= 1, min leaf >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Gradient-boosting settings shared by the classifier and regressor.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GbmSettings {
    pub estimators: usize,
    pub learning_rate: f64,
    pub max_features: FeatureSubsample,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for GbmSettings {
    fn default() -> Self {
        GbmSettings {
            estimators: 500,
            learning_rate: 0.04,
            max_features: FeatureSubsample::All,
            max_depth: 8,
            seed: 0,
        }
    }
}

impl GbmSettings {
    pub fn validate(&self) -> Result<()> {
        if self.estimators < 1 {
            return Err(Error::config("GBM needs at least one estimator".to_string()));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::config("GBM learning rate must be >= 0".to_string()));
        }
        Ok(())
    }

    pub fn with_learning_rate(mut self, rate: f64) -> Self {
        self.learning_rate = rate;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    RfRegressor,
    GbmClassifier,
    GbmRegressor,
}

/// A fitted tree ensemble of any of the three kinds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub kind: EnsembleKind,
    pub n_features: usize,
    /// Base score: 0 for forests, mean target or base-rate log-odds for GBM.
    pub initial_score: f64,
    /// Stage shrinkage for GBM; unused by forests.
    pub learning_rate: f64,
    pub trees: Vec<CartTree>,
    /// Impurity-decrease importance per feature, normalized to sum 1.
    pub feature_importance: Vec<f64>,
    /// Training loss per boosting stage (log-loss or MSE); empty for forests.
    pub training_loss: Vec<f64>,
}

impl TreeEnsemble {
    /// Ensemble prediction: forest mean or boosted additive score
    /// (raw log-odds for the classifier).
    pub fn decision(&self, x: &[f64]) -> f64 {
        match self.kind {
            EnsembleKind::RfRegressor => {
                // Summing in value order makes the mean exactly invariant to
                // tree order (float addition is not associative).
                let mut outputs: Vec<f64> = self.trees.iter().map(|t| t.predict(x)).collect();
                outputs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                outputs.iter().sum::<f64>() / outputs.len() as f64
            }
            _ => {
                let boost: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
                self.initial_score + self.learning_rate * boost
            }
        }
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        serial::save(path, ENSEMBLE_FORMAT, self)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        serial::load(path, ENSEMBLE_FORMAT)
    }
}

pub(crate) fn check_matrix(x: &[f64], n_features: usize, y: &[f64]) -> Result<usize> {
    if n_features == 0 {
        return Err(Error::config("need at least one feature".to_string()));
    }
    if y.is_empty() {
        return Err(Error::empty("no training rows"));
    }
    if x.len() != y.len() * n_features {
        return Err(Error::shape(format!(
            "feature matrix has {} values for {} rows of {} features",
            x.len(),
            y.len(),
            n_features
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in training data".to_string()));
    }
    Ok(y.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ensemble_file_round_trip_and_version_gate() {
        let x: Vec<f64> = (0..60).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 2.0 + 1.0).collect();
        let settings = ForestSettings {
            trees: 10,
            ..ForestSettings::default()
        };
        let forest = rf_fit(&x, 1, &y, &settings).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rf.ensemble");
        forest.save(&path).unwrap();
        let back = TreeEnsemble::load(&path).unwrap();
        for probe in [0.1, 2.7, 5.9] {
            assert_eq!(forest.decision(&[probe]), back.decision(&[probe]));
        }

        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\":1", "\"version\":3");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            TreeEnsemble::load(&path).unwrap_err(),
            Error::Version { found: 3, .. }
        ));
    }
}
