//! 4G/5G access-mode handoff prediction.
//!
//! Binary task: will the access mode switch within the next `lookahead`
//! seconds, predicted from the last `w` seconds of features. Continuous
//! task: the fraction of 5G time in a near-future window, regressed from the
//! last `w` seconds. Both run on gradient-boosted trees over 13 features per
//! history second: the 12 schema features with the raw cell identifier in
//! place of the derived handoff flag, plus a recent mode-switch indicator.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    boxplot_stats, classification_metrics, kfold_accuracy, BoxplotGroup, ClassificationReport,
};
use crate::serial;
use crate::trace::Trace;
use crate::trees::{
    gbm_fit_classifier, gbm_fit_regressor, gbm_predict, gbm_predict_proba, GbmSettings,
    TreeEnsemble,
};

pub const HANDOFF_MODEL_FORMAT: &str = "cellcast/handoff-model";

/// Per-second feature layout for handoff prediction (13 features).
pub const PER_SECOND: [&str; 13] = [
    "DL",
    "UL",
    "RSSI",
    "RSRQ",
    "RSRP",
    "NRxSRP",
    "NRxSRQ",
    "SNR",
    "CQI",
    "NetworkMode",
    "ModeSwitched",
    "CellID",
    "Speed",
];

/// Which per-second features feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSetChoice {
    /// All 13 features per second.
    All,
    /// Bandwidth only: DL and UL.
    BwOnly,
    /// Everything except DL and UL.
    WithoutBw,
}

impl std::str::FromStr for FeatureSetChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(FeatureSetChoice::All),
            "bw" | "bw-only" => Ok(FeatureSetChoice::BwOnly),
            "nobw" | "without-bw" | "wobw" => Ok(FeatureSetChoice::WithoutBw),
            other => Err(Error::config(format!("unknown feature set `{other}`"))),
        }
    }
}

impl FeatureSetChoice {
    /// Indices kept within each 13-feature second.
    pub fn kept_indices(self) -> Vec<usize> {
        match self {
            FeatureSetChoice::All => (0..PER_SECOND.len()).collect(),
            FeatureSetChoice::BwOnly => vec![0, 1],
            FeatureSetChoice::WithoutBw => (2..PER_SECOND.len()).collect(),
        }
    }

    pub fn per_second_count(self) -> usize {
        self.kept_indices().len()
    }
}

/// One handoff training sample: flattened `w x 13` history features plus a
/// binary or fractional label and the current access mode as direction
/// context.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandoffSample {
    pub t: usize,
    pub features: Vec<f64>,
    /// 0/1 for the binary task, rho in [0,1] for the continuous task.
    pub label: f64,
    pub current_mode: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandoffDataset {
    pub kind: DatasetKind,
    pub w: usize,
    pub feature_names: Vec<String>,
    pub samples: Vec<HandoffSample>,
}

impl HandoffDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Flattened feature matrix under a feature-set mask, plus labels.
    pub fn matrix(&self, choice: FeatureSetChoice) -> (Vec<f64>, Vec<f64>, usize) {
        let kept = choice.kept_indices();
        let per = PER_SECOND.len();
        let n_features = kept.len() * self.w;
        let mut x = Vec::with_capacity(self.samples.len() * n_features);
        let mut y = Vec::with_capacity(self.samples.len());
        for sample in &self.samples {
            for second in 0..self.w {
                for &k in &kept {
                    x.push(sample.features[second * per + k]);
                }
            }
            y.push(sample.label);
        }
        (x, y, n_features)
    }
}

fn mode_flags(trace: &Trace) -> Result<&[u8]> {
    trace
        .mode_flags()
        .ok_or_else(|| Error::invalid("trace has no access-mode annotations".to_string()))
}

/// Binary handoff label: 1 iff the access mode switches at some second in
/// (t, t + lookahead].
pub fn label_binary(trace: &Trace, t: usize, lookahead: usize) -> Result<u8> {
    let modes = mode_flags(trace)?;
    if t + lookahead >= trace.len() {
        return Err(Error::invalid(format!(
            "t={t} with lookahead {lookahead} runs past trace length {}",
            trace.len()
        )));
    }
    let now = modes[t];
    Ok(u8::from((1..=lookahead).any(|d| modes[t + d] != now)))
}

/// Fraction of 5G seconds in [t, t + delta); `None` when the window runs
/// past the end of the trace (the sample is dropped, not truncated).
pub fn rho(trace: &Trace, t: usize, delta: usize) -> Result<Option<f64>> {
    let modes = mode_flags(trace)?;
    if delta == 0 {
        return Err(Error::config("rho window must be >= 1".to_string()));
    }
    if t + delta > trace.len() {
        return Ok(None);
    }
    let sum: u32 = modes[t..t + delta].iter().map(|&m| u32::from(m)).sum();
    Ok(Some(f64::from(sum) / delta as f64))
}

struct FeatureSource<'a> {
    /// Schema columns in PER_SECOND order, minus the two derived slots.
    columns: Vec<&'a [f64]>,
    cell_id: &'a [f64],
    modes: &'a [u8],
}

impl<'a> FeatureSource<'a> {
    fn new(trace: &'a Trace) -> Result<Self> {
        let mut columns = Vec::new();
        for name in PER_SECOND {
            match name {
                "ModeSwitched" | "CellID" => continue,
                _ => {
                    let col = trace
                        .column(name)
                        .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
                    columns.push(col);
                }
            }
        }
        let cell_id = trace
            .aux_column("CellID")
            .ok_or_else(|| Error::MissingColumn("CellID".to_string()))?;
        Ok(FeatureSource {
            columns,
            cell_id,
            modes: mode_flags(trace)?,
        })
    }

    /// The 13 per-second features at second `s`, in `PER_SECOND` order.
    fn second(&self, s: usize, out: &mut Vec<f64>) {
        // columns[..10] covers DL..NetworkMode; columns[10] is Speed.
        for col in &self.columns[..10] {
            out.push(col[s]);
        }
        let switched = s > 0 && self.modes[s] != self.modes[s - 1];
        out.push(f64::from(switched));
        out.push(self.cell_id[s]);
        out.push(self.columns[10][s]);
    }

    fn window(&self, t: usize, w: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(w * PER_SECOND.len());
        for s in (t + 1 - w)..=t {
            self.second(s, &mut out);
        }
        out
    }
}

fn window_feature_names(w: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(w * PER_SECOND.len());
    for lag in (0..w).rev() {
        for name in PER_SECOND {
            names.push(format!("{name}[t-{lag}]"));
        }
    }
    names
}

/// Policy for drawing the balanced negative set.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NegativePolicy {
    /// Seconds around a handoff that count as "temporally close".
    pub close_radius: usize,
    pub seed: u64,
}

impl Default for NegativePolicy {
    fn default() -> Self {
        NegativePolicy {
            close_radius: 30,
            seed: 0,
        }
    }
}

/// Builds the balanced binary handoff dataset: every positive (up to the
/// cap), plus an equal number of negatives, half sampled near handoffs and
/// half uniformly from the remainder.
pub fn build_binary_dataset(
    trace: &Trace,
    w: usize,
    lookahead: usize,
    positives_cap: Option<usize>,
    policy: &NegativePolicy,
) -> Result<HandoffDataset> {
    if w < 1 {
        return Err(Error::config("window must be >= 1".to_string()));
    }
    let source = FeatureSource::new(trace)?;
    let modes = source.modes;
    let len = trace.len();
    if len < w + lookahead {
        return Err(Error::empty("trace too short for handoff windows"));
    }

    let handoff_seconds: Vec<usize> = (1..len).filter(|&s| modes[s] != modes[s - 1]).collect();

    let mut positives = Vec::new();
    let mut close_pool = Vec::new();
    let mut far_pool = Vec::new();
    for t in (w - 1)..(len - lookahead) {
        let label = label_binary(trace, t, lookahead)?;
        if label == 1 {
            positives.push(t);
        } else if handoff_seconds
            .iter()
            .any(|&s| s.abs_diff(t) <= policy.close_radius)
        {
            close_pool.push(t);
        } else {
            far_pool.push(t);
        }
    }
    if let Some(cap) = positives_cap {
        positives.truncate(cap);
    }
    if positives.is_empty() {
        return Err(Error::empty("no handoff events in trace"));
    }

    let n_close = positives.len() / 2;
    let n_far = positives.len() - n_close;
    if close_pool.len() < n_close || far_pool.len() < n_far {
        return Err(Error::invalid(format!(
            "not enough negatives: need {n_close} close / {n_far} far, \
             have {} close / {} far for {} positives",
            close_pool.len(),
            far_pool.len(),
            positives.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    close_pool.shuffle(&mut rng);
    far_pool.shuffle(&mut rng);
    let mut negatives: Vec<usize> = close_pool[..n_close]
        .iter()
        .chain(&far_pool[..n_far])
        .copied()
        .collect();
    negatives.sort_unstable();

    let mut samples = Vec::with_capacity(2 * positives.len());
    for (t, label) in positives
        .iter()
        .map(|&t| (t, 1.0))
        .chain(negatives.iter().map(|&t| (t, 0.0)))
    {
        samples.push(HandoffSample {
            t,
            features: source.window(t, w),
            label,
            current_mode: modes[t],
        });
    }

    Ok(HandoffDataset {
        kind: DatasetKind::Binary,
        w,
        feature_names: window_feature_names(w),
        samples,
    })
}

/// Builds the continuous dataset: every valid t maps the last `w` seconds to
/// rho over [t+1, t+delta].
pub fn build_continuous_dataset(trace: &Trace, w: usize, delta: usize) -> Result<HandoffDataset> {
    let source = FeatureSource::new(trace)?;
    let len = trace.len();
    if len < w + delta + 1 {
        return Err(Error::empty("trace too short for continuous handoff windows"));
    }
    let mut samples = Vec::new();
    for t in (w - 1)..len {
        let Some(target) = rho(trace, t + 1, delta)? else {
            break;
        };
        samples.push(HandoffSample {
            t,
            features: source.window(t, w),
            label: target,
            current_mode: source.modes[t],
        });
    }
    Ok(HandoffDataset {
        kind: DatasetKind::Continuous,
        w,
        feature_names: window_feature_names(w),
        samples,
    })
}

/// Seeded shuffle split of a (binary) handoff dataset. Continuous datasets
/// are time series; split them contiguously instead.
pub fn split_shuffled(
    dataset: &HandoffDataset,
    train_fraction: f64,
    seed: u64,
) -> (HandoffDataset, HandoffDataset) {
    let mut order: Vec<usize> = (0..dataset.samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * order.len() as f64).floor() as usize;
    let pick = |idx: &[usize]| HandoffDataset {
        kind: dataset.kind,
        w: dataset.w,
        feature_names: dataset.feature_names.clone(),
        samples: idx.iter().map(|&i| dataset.samples[i].clone()).collect(),
    };
    (pick(&order[..n_train]), pick(&order[n_train..]))
}

/// Contiguous-by-time split for continuous datasets.
pub fn split_contiguous(
    dataset: &HandoffDataset,
    train_fraction: f64,
) -> (HandoffDataset, HandoffDataset) {
    let n_train = (train_fraction * dataset.samples.len() as f64).floor() as usize;
    let pick = |range: std::ops::Range<usize>| HandoffDataset {
        kind: dataset.kind,
        w: dataset.w,
        feature_names: dataset.feature_names.clone(),
        samples: dataset.samples[range].to_vec(),
    };
    (pick(0..n_train), pick(n_train..dataset.samples.len()))
}

/// The learning-rate grid used for 5-fold tuning.
pub fn default_learning_rate_grid() -> Vec<f64> {
    vec![0.01, 0.04, 0.0475, 0.05, 0.0525, 0.055, 0.1, 0.25, 0.5, 0.75]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvRow {
    pub learning_rate: f64,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinaryTrainResult {
    pub model: TreeEnsemble,
    pub feature_set: FeatureSetChoice,
    pub chosen_rate: f64,
    pub cv_table: Vec<CvRow>,
}

/// Tunes the learning rate by seeded k-fold accuracy over the grid (ties go
/// to the smaller rate), then refits on the full training split.
pub fn train_binary(
    dataset: &HandoffDataset,
    feature_set: FeatureSetChoice,
    settings: &GbmSettings,
    folds: usize,
    grid: &[f64],
) -> Result<BinaryTrainResult> {
    if grid.is_empty() {
        return Err(Error::config("learning-rate grid is empty".to_string()));
    }
    let (x, y, n_features) = dataset.matrix(feature_set);
    let labels: Vec<u8> = y.iter().map(|&v| u8::from(v != 0.0)).collect();

    let mut rates: Vec<f64> = grid.to_vec();
    rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut cv_table = Vec::with_capacity(rates.len());
    let mut best: Option<(f64, f64)> = None; // (mean accuracy, rate)
    for &rate in &rates {
        let candidate = settings.clone().with_learning_rate(rate);
        let report = kfold_accuracy(&labels, folds, settings.seed, |train_idx, held_idx| {
            let mut xt = Vec::with_capacity(train_idx.len() * n_features);
            let mut yt = Vec::with_capacity(train_idx.len());
            for &i in train_idx {
                xt.extend_from_slice(&x[i * n_features..(i + 1) * n_features]);
                yt.push(labels[i]);
            }
            match gbm_fit_classifier(&xt, n_features, &yt, &candidate) {
                Ok(model) => held_idx
                    .iter()
                    .map(|&i| {
                        let p = gbm_predict_proba(&model, &x[i * n_features..(i + 1) * n_features]);
                        u8::from(p >= 0.5)
                    })
                    .collect(),
                // A single-class fold trains nothing useful; predict the one
                // label it saw.
                Err(_) => {
                    let majority = u8::from(
                        2 * train_idx.iter().filter(|&&i| labels[i] != 0).count()
                            >= train_idx.len(),
                    );
                    vec![majority; held_idx.len()]
                }
            }
        })?;
        let mean = report.mean_accuracy;
        cv_table.push(CvRow {
            learning_rate: rate,
            fold_accuracy: report.fold_accuracy,
            mean_accuracy: mean,
        });
        // Strictly greater keeps the smaller rate on ties (ascending scan).
        if best.map_or(true, |(m, _)| mean > m) {
            best = Some((mean, rate));
        }
    }
    let (_, chosen_rate) = best.expect("non-empty grid");
    let final_settings = settings.clone().with_learning_rate(chosen_rate);
    let model = gbm_fit_classifier(&x, n_features, &labels, &final_settings)?;
    Ok(BinaryTrainResult {
        model,
        feature_set,
        chosen_rate,
        cv_table,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparatedModels {
    /// Model for samples whose current mode is 5G (5G -> 4G handoffs).
    pub from_5g: BinaryTrainResult,
    /// Model for samples whose current mode is 4G (4G -> 5G handoffs).
    pub from_4g: BinaryTrainResult,
}

/// Splits a binary dataset by current access mode: (current 5G, current 4G).
pub fn split_by_direction(dataset: &HandoffDataset) -> (HandoffDataset, HandoffDataset) {
    let pick = |mode: u8| HandoffDataset {
        kind: dataset.kind,
        w: dataset.w,
        feature_names: dataset.feature_names.clone(),
        samples: dataset
            .samples
            .iter()
            .filter(|s| s.current_mode == mode)
            .cloned()
            .collect(),
    };
    (pick(1), pick(0))
}

/// Trains one model per handoff direction, each with its own learning-rate
/// tuning. Errors name the direction whose subset lacks a label class.
pub fn train_separated(
    dataset: &HandoffDataset,
    feature_set: FeatureSetChoice,
    settings: &GbmSettings,
    folds: usize,
    grid: &[f64],
) -> Result<SeparatedModels> {
    let (subset_5g, subset_4g) = split_by_direction(dataset);
    for (name, subset) in [("5G->4G", &subset_5g), ("4G->5G", &subset_4g)] {
        let pos = subset.samples.iter().filter(|s| s.label != 0.0).count();
        if pos == 0 || pos == subset.samples.len() {
            return Err(Error::invalid(format!(
                "direction {name}: subset of {} samples has a single label class",
                subset.samples.len()
            )));
        }
    }
    Ok(SeparatedModels {
        from_5g: train_binary(&subset_5g, feature_set, settings, folds, grid)?,
        from_4g: train_binary(&subset_4g, feature_set, settings, folds, grid)?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuousModel {
    pub model: TreeEnsemble,
    pub w: usize,
    pub delta: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuousReport {
    pub rmse: f64,
    pub n_test: usize,
    /// Predicted-rho distribution per ground-truth rho value.
    pub boxplot: Vec<BoxplotGroup>,
}

/// Trains the continuous handoff regressor on the first `train_fraction` of
/// the trace's samples (contiguous in time) and scores the rest.
pub fn train_continuous(
    trace: &Trace,
    w: usize,
    delta: usize,
    settings: &GbmSettings,
    train_fraction: f64,
) -> Result<(ContinuousModel, ContinuousReport)> {
    let dataset = build_continuous_dataset(trace, w, delta)?;
    let (train, test) = split_contiguous(&dataset, train_fraction);
    if train.is_empty() || test.is_empty() {
        return Err(Error::empty("continuous split left an empty segment"));
    }
    let (x, y, n_features) = train.matrix(FeatureSetChoice::All);
    let model = gbm_fit_regressor(&x, n_features, &y, settings)?;
    let continuous = ContinuousModel { model, w, delta };
    let report = evaluate_continuous(&continuous, &test);
    Ok((continuous, report))
}

/// Clamped rho prediction for a flattened `w x 13` feature window.
pub fn predict_rho(model: &ContinuousModel, window_features: &[f64]) -> f64 {
    gbm_predict(&model.model, window_features).clamp(0.0, 1.0)
}

pub fn evaluate_continuous(model: &ContinuousModel, test: &HandoffDataset) -> ContinuousReport {
    let (x, y, n_features) = test.matrix(FeatureSetChoice::All);
    let mut se = 0.0;
    let mut pairs = Vec::with_capacity(y.len());
    for (i, &truth) in y.iter().enumerate() {
        let pred = predict_rho(model, &x[i * n_features..(i + 1) * n_features]);
        se += (pred - truth) * (pred - truth);
        pairs.push((truth, pred));
    }
    ContinuousReport {
        rmse: (se / y.len() as f64).sqrt(),
        n_test: y.len(),
        boxplot: boxplot_stats(&pairs),
    }
}

/// Positive-class scores of a trained binary model on a dataset.
pub fn binary_scores(result: &BinaryTrainResult, dataset: &HandoffDataset) -> Vec<f64> {
    let (x, _, n_features) = dataset.matrix(result.feature_set);
    (0..dataset.len())
        .map(|i| gbm_predict_proba(&result.model, &x[i * n_features..(i + 1) * n_features]))
        .collect()
}

/// Scores a trained binary model on a held-out dataset.
pub fn evaluate_binary(
    result: &BinaryTrainResult,
    test: &HandoffDataset,
) -> Result<ClassificationReport> {
    let scores = binary_scores(result, test);
    let labels: Vec<u8> = test.samples.iter().map(|s| u8::from(s.label != 0.0)).collect();
    classification_metrics(&scores, &labels, 0.5)
}

/// Persisted handoff predictor: the trained model(s) plus everything needed
/// to rebuild the evaluation split deterministically from the source trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum HandoffModelKind {
    Unified(BinaryTrainResult),
    Separated(SeparatedModels),
    Continuous(ContinuousModel),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandoffModel {
    pub kind: HandoffModelKind,
    pub w: usize,
    pub lookahead: usize,
    pub delta: usize,
    pub train_fraction: f64,
    pub policy: NegativePolicy,
    pub split_seed: u64,
}

impl HandoffModel {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        serial::save(path, HANDOFF_MODEL_FORMAT, self)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        serial::load(path, HANDOFF_MODEL_FORMAT)
    }
}
