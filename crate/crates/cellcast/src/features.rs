//! Feature screening and importance: Pearson cross-correlation of each
//! feature against bandwidth, and random-forest impurity-decrease importance
//! of the features at t-1 for predicting bandwidth at t.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::pearson;
use crate::trace::Trace;
use crate::trees::{rf_fit, ForestSettings};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreenReport {
    pub threshold: f64,
    /// Features with |corr| >= threshold, in schema order.
    pub selected: Vec<String>,
    /// Correlation per feature; `None` marks a constant (undefined) feature.
    pub correlations: Vec<(String, Option<f64>)>,
    pub warnings: Vec<String>,
}

/// Selects the features whose lag-0 Pearson correlation with bandwidth
/// clears `threshold` in absolute value. Constant features are excluded with
/// a warning since their correlation is undefined.
pub fn cross_correlation_screen(trace: &Trace, threshold: f64) -> Result<ScreenReport> {
    if trace.len() < 30 {
        return Err(Error::invalid(format!(
            "correlation screen needs >= 30 samples, trace has {}",
            trace.len()
        )));
    }
    let bw = trace.bandwidth();
    let mut selected = Vec::new();
    let mut correlations = Vec::new();
    let mut warnings = Vec::new();
    for (i, spec) in trace.schema.columns.iter().enumerate() {
        let corr = pearson(trace.column_at(i), bw);
        match corr {
            Some(r) => {
                if r.abs() >= threshold {
                    selected.push(spec.name.clone());
                }
            }
            None => warnings.push(format!(
                "feature `{}` is constant; correlation undefined, excluded",
                spec.name
            )),
        }
        correlations.push((spec.name.clone(), corr));
    }
    Ok(ScreenReport {
        threshold,
        selected,
        correlations,
        warnings,
    })
}

/// Per-feature importance weights for next-second bandwidth prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub trace_id: String,
    /// (feature, weight) in schema order; weights are nonnegative and sum to 1.
    pub weights: Vec<(String, f64)>,
    pub settings: ForestSettings,
    pub warnings: Vec<String>,
}

/// Trains a random-forest regressor mapping the feature vector at t-1 to
/// bandwidth at t and reports normalized impurity-decrease importances.
pub fn rf_importance(trace: &Trace, settings: &ForestSettings) -> Result<ImportanceReport> {
    settings.validate()?;
    if trace.len() < 100 {
        return Err(Error::invalid(format!(
            "importance analysis needs >= 100 samples, trace has {}",
            trace.len()
        )));
    }
    let names = trace.schema.feature_names();
    let n_features = names.len();
    let bw = trace.bandwidth();
    let constant_target = bw.iter().all(|&b| b == bw[0]);
    if constant_target {
        let uniform = 1.0 / n_features as f64;
        return Ok(ImportanceReport {
            trace_id: trace.route_id.clone(),
            weights: names.into_iter().map(|n| (n, uniform)).collect(),
            settings: settings.clone(),
            warnings: vec!["constant bandwidth: importances are uniform".to_string()],
        });
    }

    let rows = trace.len() - 1;
    let mut x = Vec::with_capacity(rows * n_features);
    let mut y = Vec::with_capacity(rows);
    for t in 1..trace.len() {
        x.extend(trace.row(t - 1));
        y.push(bw[t]);
    }
    let forest = rf_fit(&x, n_features, &y, settings)?;
    Ok(ImportanceReport {
        trace_id: trace.route_id.clone(),
        weights: names
            .into_iter()
            .zip(forest.feature_importance.iter().copied())
            .collect(),
        settings: settings.clone(),
        warnings: Vec::new(),
    })
}
