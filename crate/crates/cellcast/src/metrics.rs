//! Evaluation metrics and protocols.
//!
//! Regression metrics (RMSE / MAE / Pearson correlation), binary
//! classification metrics (confusion matrix, ROC sweep, AUC), seeded k-fold
//! cross-validation, and boxplot statistics for grouped predictions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pearson correlation coefficient, or `None` when either sequence is
/// constant (the coefficient is undefined there; callers must not read 0).
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.is_empty() {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        None
    } else {
        Some(cov / (va.sqrt() * vb.sqrt()))
    }
}

/// Prediction-error bundle for one (split, horizon) evaluation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RegressionReport {
    pub rmse: f64,
    pub mae: f64,
    /// `None` flags an undefined correlation (constant sequence).
    pub corr: Option<f64>,
    pub samples: usize,
    pub horizon: Option<usize>,
    pub split: Option<String>,
}

impl RegressionReport {
    pub fn with_context(mut self, horizon: usize, split: impl Into<String>) -> Self {
        self.horizon = Some(horizon);
        self.split = Some(split.into());
        self
    }
}

/// RMSE, MAE and Pearson correlation between predictions and ground truth.
pub fn regression_metrics(pred: &[f64], truth: &[f64]) -> Result<RegressionReport> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!(
            "prediction length {} != truth length {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::empty("no samples to score"));
    }
    let n = pred.len() as f64;
    let mut se = 0.0;
    let mut ae = 0.0;
    for (&p, &t) in pred.iter().zip(truth) {
        se += (p - t) * (p - t);
        ae += (p - t).abs();
    }
    Ok(RegressionReport {
        rmse: (se / n).sqrt(),
        mae: ae / n,
        corr: pearson(pred, truth),
        samples: pred.len(),
        horizon: None,
        split: None,
    })
}

/// Binary classification report: confusion counts at a fixed threshold plus
/// a full ROC sweep over the distinct score values.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassificationReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub f1: f64,
    /// (fpr, tpr) points, ascending, including (0,0) and (1,1).
    pub roc: Vec<(f64, f64)>,
    /// Trapezoid area under the ROC curve; `None` when only one class is
    /// present in the labels.
    pub auc: Option<f64>,
}

impl ClassificationReport {
    /// Derives the rate metrics from raw confusion counts. ROC and AUC are
    /// left empty; they need the underlying scores.
    pub fn from_confusion(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let tpr = frac(tp, tp + fn_);
        let fpr = frac(fp, fp + tn);
        let precision = frac(tp, tp + fp);
        let recall = tpr;
        let accuracy = frac(tp + tn, tp + fp + fn_ + tn);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassificationReport {
            tp,
            fp,
            fn_,
            tn,
            tpr,
            fpr,
            precision,
            recall,
            accuracy,
            f1,
            roc: Vec::new(),
            auc: None,
        }
    }
}

/// Scores a binary classifier: confusion counts at `threshold` (predict 1
/// when score >= threshold), ROC points over all distinct score thresholds,
/// and trapezoid AUC. AUC is `None` when labels contain a single class.
pub fn classification_metrics(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
) -> Result<ClassificationReport> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "score length {} != label length {}",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::empty("no samples to score"));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("non-finite score {s}")));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let mut report = ClassificationReport::from_confusion(tp, fp, fn_, tn);
    report.roc = roc_points(scores, labels);
    let pos = labels.iter().filter(|&&y| y != 0).count();
    if pos > 0 && pos < labels.len() {
        report.auc = Some(trapezoid_auc(&report.roc));
    }
    Ok(report)
}

/// ROC sweep: one operating point per distinct score threshold (predict 1
/// when score >= threshold), plus the (0,0) and (1,1) endpoints.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Vec<(f64, f64)> {
    let pos = labels.iter().filter(|&&y| y != 0).count();
    let neg = labels.len() - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap());

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        // Consume the whole tie group before emitting a point.
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let point = (
            if neg == 0 { 0.0 } else { fp as f64 / neg as f64 },
            if pos == 0 { 0.0 } else { tp as f64 / pos as f64 },
        );
        if *points.last().unwrap() != point {
            points.push(point);
        }
    }
    if *points.last().unwrap() != (1.0, 1.0) {
        points.push((1.0, 1.0));
    }
    points
}

fn trapezoid_auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|p| (p[1].0 - p[0].0) * (p[0].1 + p[1].1) / 2.0)
        .sum()
}

/// AUC as a rank statistic: the probability that a random positive outscores
/// a random negative, counting ties as one half. Computed from midranks, so
/// it is an implementation route independent of the ROC trapezoid.
pub fn auc_by_rank(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let pos = labels.iter().filter(|&&y| y != 0).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::invalid(
            "AUC undefined: labels contain a single class".to_string(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].partial_cmp(&scores[j]).unwrap());

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let start = i;
        while i < order.len() && scores[order[i]] == s {
            i += 1;
        }
        // 1-based midrank of the tie group [start, i).
        let midrank = (start + 1 + i) as f64 / 2.0;
        for &idx in &order[start..i] {
            if labels[idx] != 0 {
                rank_sum_pos += midrank;
            }
        }
    }
    Ok((rank_sum_pos - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KfoldReport {
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

/// Seeded k-fold cross-validated accuracy. Items are shuffled once with the
/// seed and cut into `folds` contiguous blocks; each block is held out once.
/// `trainer` receives (train indices, held-out indices) and returns predicted
/// labels for the held-out items, in order.
pub fn kfold_accuracy<F>(labels: &[u8], folds: usize, seed: u64, mut trainer: F) -> Result<KfoldReport>
where
    F: FnMut(&[usize], &[usize]) -> Vec<u8>,
{
    let n = labels.len();
    if folds < 2 {
        return Err(Error::config(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::config(format!(
            "{folds} folds requested but only {n} items available"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut fold_accuracy = Vec::with_capacity(folds);
    for k in 0..folds {
        let lo = k * n / folds;
        let hi = (k + 1) * n / folds;
        let held: Vec<usize> = order[lo..hi].to_vec();
        let train: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
        let predicted = trainer(&train, &held);
        assert_eq!(predicted.len(), held.len(), "trainer output length mismatch");
        let correct = held
            .iter()
            .zip(&predicted)
            .filter(|(&i, &p)| (labels[i] != 0) == (p != 0))
            .count();
        fold_accuracy.push(correct as f64 / held.len() as f64);
    }
    let mean_accuracy = fold_accuracy.iter().sum::<f64>() / folds as f64;
    Ok(KfoldReport {
        fold_accuracy,
        mean_accuracy,
    })
}

/// Five-number summary of one group of values.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BoxplotGroup {
    pub key: f64,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Boxplot statistics of values grouped by exact key, sorted by key.
/// Quartiles use linear interpolation between order statistics.
pub fn boxplot_stats(pairs: &[(f64, f64)]) -> Vec<BoxplotGroup> {
    let mut keys: Vec<f64> = pairs.iter().map(|&(k, _)| k).collect();
    keys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    keys.dedup();

    keys.into_iter()
        .map(|key| {
            let mut values: Vec<f64> = pairs
                .iter()
                .filter(|&&(k, _)| k == key)
                .map(|&(_, v)| v)
                .collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            BoxplotGroup {
                key,
                count: values.len(),
                min: values[0],
                q1: quantile(&values, 0.25),
                median: quantile(&values, 0.5),
                q3: quantile(&values, 0.75),
                max: values[values.len() - 1],
            }
        })
        .collect()
}

/// Linearly interpolated quantile of an already sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn regression_identity() {
        let r = regression_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.rmse, 0.0);
        assert_eq!(r.mae, 0.0);
        assert!((r.corr.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regression_arithmetic() {
        let r = regression_metrics(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((r.rmse - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((r.mae - 3.5).abs() < 1e-12);
    }

    #[test]
    fn regression_constant_truth_flags_corr() {
        let r = regression_metrics(&[1.0, 2.0], &[5.0, 5.0]).unwrap();
        assert!(r.corr.is_none());
        assert!(r.rmse > 0.0 && r.mae > 0.0);
    }

    #[test]
    fn regression_length_mismatch() {
        assert!(regression_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn confusion_matches_published_rates() {
        // All-features column of the unified handoff tables.
        let r = ClassificationReport::from_confusion(166, 67, 53, 164);
        assert!((r.accuracy - 0.733).abs() < 1e-3);
        assert!((r.precision - 0.712).abs() < 1e-3);
        assert!((r.recall - 0.758).abs() < 1e-3);
        assert!((r.f1 - 0.735).abs() < 1e-3);
        assert!((r.tpr - 0.758).abs() < 1e-3);
        assert!((r.fpr - 0.290).abs() < 1e-3);
    }

    #[test]
    fn separated_scores_auc_one() {
        let scores = [0.9, 0.8, 0.7, 0.2, 0.1];
        let labels = [1, 1, 1, 0, 0];
        let r = classification_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!(r.auc, Some(1.0));
        assert_eq!(auc_by_rank(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn constant_scores_auc_half() {
        let scores = [0.4; 6];
        let labels = [1, 0, 1, 0, 0, 1];
        let r = classification_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!(r.auc, Some(0.5));
        assert_eq!(auc_by_rank(&scores, &labels).unwrap(), 0.5);
        assert_eq!(r.roc, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn single_class_reports_confusion_without_auc() {
        let r = classification_metrics(&[0.9, 0.2], &[1, 1], 0.5).unwrap();
        assert!(r.auc.is_none());
        assert_eq!(r.tp + r.fn_, 2);
        assert!(auc_by_rank(&[0.9, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn kfold_leave_one_out() {
        let labels = [1, 0, 1, 0, 1, 0, 1, 0, 1, 0];
        let report = kfold_accuracy(&labels, 10, 7, |_, held| vec![1; held.len()]).unwrap();
        assert_eq!(report.fold_accuracy.len(), 10);
        for acc in &report.fold_accuracy {
            assert!(*acc == 0.0 || *acc == 1.0);
        }
        assert!((report.mean_accuracy - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kfold_majority_trainer_on_skewed_labels() {
        // 60/40 labels; a majority-class trainer scores the held-out majority rate.
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i < 60)).collect();
        let report = kfold_accuracy(&labels, 5, 3, |train, held| {
            let ones = train.iter().filter(|&&i| labels[i] != 0).count();
            let majority = u8::from(2 * ones >= train.len());
            vec![majority; held.len()]
        })
        .unwrap();
        assert!((report.mean_accuracy - 0.6).abs() < 0.1);
    }

    #[test]
    fn kfold_too_many_folds() {
        assert!(kfold_accuracy(&[1, 0], 3, 0, |_, h| vec![0; h.len()]).is_err());
    }

    #[test]
    fn boxplot_basics() {
        let pairs: Vec<(f64, f64)> = [1.0, 2.0, 3.0, 4.0, 5.0].iter().map(|&v| (0.0, v)).collect();
        let groups = boxplot_stats(&pairs);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].median, 3.0);
        assert_eq!(groups[0].q1, 2.0);
        assert_eq!(groups[0].q3, 4.0);
    }

    #[test]
    fn boxplot_single_value_group() {
        let groups = boxplot_stats(&[(1.0, 0.5)]);
        let g = &groups[0];
        assert!(g.min == 0.5 && g.q1 == 0.5 && g.median == 0.5 && g.q3 == 0.5 && g.max == 0.5);
    }

    proptest! {
        #[test]
        fn rmse_at_least_mae(
            pred in proptest::collection::vec(-1e3f64..1e3, 1..50),
            offset in proptest::collection::vec(-1e3f64..1e3, 1..50),
        ) {
            let n = pred.len().min(offset.len());
            let truth: Vec<f64> = pred[..n].iter().zip(&offset[..n]).map(|(p, o)| p + o).collect();
            let r = regression_metrics(&pred[..n], &truth).unwrap();
            prop_assert!(r.rmse >= r.mae - 1e-12);
        }

        #[test]
        fn corr_invariant_under_positive_affine(
            xs in proptest::collection::vec(-1e2f64..1e2, 3..40),
            scale in 0.1f64..10.0,
            shift in -50.0f64..50.0,
        ) {
            let ys: Vec<f64> = xs.iter().rev().map(|x| x * 1.7 - 2.0).collect();
            let scaled: Vec<f64> = xs.iter().map(|x| x * scale + shift).collect();
            let base = pearson(&xs, &ys);
            let transformed = pearson(&scaled, &ys);
            match (base, transformed) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
                (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
            }
        }

        #[test]
        fn auc_routes_agree(
            raw in proptest::collection::vec((0u8..2, 0f64..1.0, 0u8..2), 4..60),
        ) {
            // Mix continuous and coarsely quantized scores so ties occur.
            let labels: Vec<u8> = raw.iter().map(|&(y, _, _)| y).collect();
            let scores: Vec<f64> = raw
                .iter()
                .map(|&(_, s, q)| if q == 0 { (s * 4.0).round() / 4.0 } else { s })
                .collect();
            let pos = labels.iter().filter(|&&y| y != 0).count();
            prop_assume!(pos > 0 && pos < labels.len());
            let report = classification_metrics(&scores, &labels, 0.5).unwrap();
            let rank = auc_by_rank(&scores, &labels).unwrap();
            prop_assert!((report.auc.unwrap() - rank).abs() < 1e-12);
        }

        #[test]
        fn f1_is_harmonic_mean(tp in 0usize..200, fp in 0usize..200, fn_ in 0usize..200, tn in 0usize..200) {
            let r = ClassificationReport::from_confusion(tp, fp, fn_, tn);
            let expect = if r.precision + r.recall == 0.0 {
                0.0
            } else {
                2.0 * r.precision * r.recall / (r.precision + r.recall)
            };
            prop_assert!((r.f1 - expect).abs() < 1e-12);
        }
    }
}
