//! Deterministic training loop: Adam on mean squared error over normalized
//! targets, seeded shuffling and dropout, early stopping on validation loss
//! with best-epoch restore.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::{Mode, ModelKind, RecurrentModel};
use crate::nn::tensor::Tensor;
use crate::trace::WindowedDataset;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub layers: usize,
    pub units: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// CNN filter count for the attention head.
    pub filters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layers: 3,
            units: 32,
            dropout: 0.2,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            filters: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::config("learning rate must be > 0".to_string()));
        }
        if self.layers == 0 || self.units == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::config(
                "layers, units, batch size and epochs must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    /// (train MSE, validation MSE) per epoch, on normalized targets.
    pub epochs: Vec<(f64, f64)>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    fn new(shapes: &[&Tensor]) -> Self {
        Adam {
            m: shapes.iter().map(|p| Tensor::zeros(&p.shape)).collect(),
            v: shapes.iter().map(|p| Tensor::zeros(&p.shape)).collect(),
            t: 0,
        }
    }

    fn update(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor], config: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (config.beta1, config.beta2);
        let bias1 = 1.0 - b1.powi(self.t as i32);
        let bias2 = 1.0 - b2.powi(self.t as i32);
        for ((param, grad), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..param.data.len() {
                let g = grad.data[i];
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * g;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * g * g;
                let m_hat = m.data[i] / bias1;
                let v_hat = v.data[i] / bias2;
                param.data[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
            }
        }
    }
}

/// One forward/backward pass. Returns the batch loss and the gradient of
/// every parameter in `params()` order.
fn step_gradients(
    model: &RecurrentModel,
    inputs: &[f64],
    targets_norm: &[f64],
    mode: Mode,
    rng: Option<&mut ChaCha8Rng>,
) -> (f64, Vec<Tensor>) {
    let pass = model.forward(inputs, targets_norm.len(), mode, rng);
    let mut tape = pass.tape;
    let loss = tape.mse_loss(pass.pred, targets_norm.to_vec());
    let loss_value = tape.value(loss).data[0];
    let mut grads = tape.backward(loss);
    let out = pass
        .param_vars
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros(&model.params()[i].shape))
        })
        .collect();
    (loss_value, out)
}

/// Analytic loss and gradients in inference mode (no dropout); the entry
/// point finite-difference checks go through.
pub fn loss_and_gradients(
    model: &RecurrentModel,
    inputs: &[f64],
    targets_norm: &[f64],
) -> (f64, Vec<Tensor>) {
    step_gradients(model, inputs, targets_norm, Mode::Infer, None)
}

/// Loss only, in inference mode.
pub fn loss_only(model: &RecurrentModel, inputs: &[f64], targets_norm: &[f64]) -> f64 {
    let pass = model.forward(inputs, targets_norm.len(), Mode::Infer, None);
    let mut tape = pass.tape;
    let loss = tape.mse_loss(pass.pred, targets_norm.to_vec());
    tape.value(loss).data[0]
}

fn gather_batch(
    ds: &WindowedDataset,
    items: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let n = ds.n_features;
    let mut inputs = Vec::with_capacity(items.len() * ds.w * n);
    let mut targets = Vec::with_capacity(items.len());
    for &i in items {
        let start = inputs.len();
        inputs.extend_from_slice(ds.input_raw(i));
        ds.normalize_in_place(&mut inputs[start..]);
        targets.push(ds.stats.normalize(ds.target_column(), ds.target(i)));
    }
    (inputs, targets)
}

fn dataset_loss(model: &RecurrentModel, ds: &WindowedDataset) -> f64 {
    let mut total = 0.0;
    let items: Vec<usize> = (0..ds.len()).collect();
    for chunk in items.chunks(256) {
        let (inputs, targets) = gather_batch(ds, chunk);
        total += loss_only(model, &inputs, &targets) * chunk.len() as f64;
    }
    total / ds.len() as f64
}

/// Trains a forecaster of the given kind on the train/validation windows.
/// Fully reproducible for a given config seed; parameters from the best
/// validation epoch are restored before returning.
pub fn train(
    kind: ModelKind,
    train_ds: &WindowedDataset,
    val_ds: &WindowedDataset,
    config: &TrainConfig,
) -> Result<(RecurrentModel, TrainLog)> {
    config.validate()?;
    if train_ds.is_empty() || val_ds.is_empty() {
        return Err(Error::empty("training needs non-empty train and validation sets"));
    }
    if train_ds.w != val_ds.w
        || train_ds.horizon != val_ds.horizon
        || train_ds.stats != val_ds.stats
    {
        return Err(Error::config(
            "train and validation sets must share window, horizon and normalization stats"
                .to_string(),
        ));
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = RecurrentModel::init(
        kind,
        "windowed",
        train_ds.feature_names.clone(),
        train_ds.stats.clone(),
        train_ds.target_column(),
        train_ds.w,
        train_ds.horizon,
        config.clone(),
        &mut init_rng,
    );
    let mut train_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5EED));
    let mut adam = Adam::new(&model.params());

    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
    };
    let mut best_params: Vec<Tensor> = model.params().into_iter().cloned().collect();
    let mut since_best = 0usize;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut train_rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (inputs, targets) = gather_batch(train_ds, chunk);
            let (loss, grads) =
                step_gradients(&model, &inputs, &targets, Mode::Train, Some(&mut train_rng));
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: format!("non-finite training loss {loss}"),
                });
            }
            adam.update(model.params_mut(), &grads, config);
            train_loss += loss * chunk.len() as f64;
        }
        train_loss /= train_ds.len() as f64;
        let val_loss = dataset_loss(&model, val_ds);
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                reason: format!("non-finite validation loss {val_loss}"),
            });
        }
        log.epochs.push((train_loss, val_loss));

        if val_loss < log.best_val_loss {
            log.best_val_loss = val_loss;
            log.best_epoch = epoch;
            best_params = model.params().into_iter().cloned().collect();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    for (param, best) in model.params_mut().into_iter().zip(best_params) {
        *param = best;
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{make_windows, ColumnKind, ColumnSpec, FeatureSchema, Trace};
    use std::collections::BTreeMap;

    fn sine_trace(len: usize) -> Trace {
        let schema = FeatureSchema::new(
            "sine",
            vec![ColumnSpec {
                name: "BW".to_string(),
                kind: ColumnKind::Continuous,
                unit: "Mbps".to_string(),
            }],
            "BW",
        )
        .unwrap();
        let bw: Vec<f64> = (0..len)
            .map(|t| 5.0 + (t as f64 * 0.1).sin().abs() * 3.0)
            .collect();
        Trace::from_columns(schema, "sine", vec![bw], None, BTreeMap::new()).unwrap()
    }

    fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            layers: 1,
            units: 12,
            dropout: 0.1,
            batch_size: 32,
            max_epochs: 60,
            patience: 8,
            filters: 4,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn constant_target_converges() {
        let schema = FeatureSchema::new(
            "const",
            vec![ColumnSpec {
                name: "BW".to_string(),
                kind: ColumnKind::Continuous,
                unit: "Mbps".to_string(),
            }],
            "BW",
        )
        .unwrap();
        let trace =
            Trace::from_columns(schema, "const", vec![vec![7.5; 200]], None, BTreeMap::new())
                .unwrap();
        let ds = make_windows(&trace, 5, 1, None).unwrap();
        let mut config = small_config(3);
        config.dropout = 0.0;
        config.max_epochs = 80;
        let (model, _) = train(ModelKind::Lstm, &ds, &ds, &config).unwrap();
        // Normalized space: constant column normalizes to 0 everywhere, so
        // validation RMSE below 1e-3 means the head bias learned the mean.
        let rmse = dataset_loss(&model, &ds).sqrt();
        assert!(rmse < 1e-3, "val rmse {rmse}");
        let pred = model.predict(&vec![7.5; 5]).unwrap();
        assert!((pred - 7.5).abs() < 0.01, "predicted {pred}");
    }

    #[test]
    fn overfits_noiseless_sine() {
        let trace = sine_trace(500);
        let (train_t, val_t, _) = trace.split(&crate::trace::SplitSpec::default()).unwrap();
        let train_ds = make_windows(&train_t, 5, 1, None).unwrap();
        let val_ds = make_windows(&val_t, 5, 1, Some(train_ds.stats.clone())).unwrap();
        let mut config = small_config(1);
        config.dropout = 0.0;
        config.max_epochs = 200;
        config.patience = 200;
        let (model, log) = train(ModelKind::Lstm, &train_ds, &val_ds, &config).unwrap();

        // Raw-space training RMSE under 0.05 on the noiseless signal.
        let mut se = 0.0;
        for i in 0..train_ds.len() {
            let pred = model.predict(train_ds.input_raw(i)).unwrap();
            se += (pred - train_ds.target(i)).powi(2);
        }
        let rmse = (se / train_ds.len() as f64).sqrt();
        assert!(rmse < 0.05, "train rmse {rmse}");

        // Best validation loss beats the first epoch (sanity on early stop).
        assert!(log.best_val_loss <= log.epochs[0].1);
    }

    #[test]
    fn same_seed_same_parameters() {
        let trace = sine_trace(160);
        let ds = make_windows(&trace, 4, 1, None).unwrap();
        let mut config = small_config(9);
        config.max_epochs = 5;
        let (a, log_a) = train(ModelKind::Tpa, &ds, &ds, &config).unwrap();
        let (b, log_b) = train(ModelKind::Tpa, &ds, &ds, &config).unwrap();
        assert_eq!(log_a.epochs, log_b.epochs);
        for (pa, pb) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(pa.data, pb.data);
        }
    }

    #[test]
    fn inference_ignores_dropout() {
        let trace = sine_trace(120);
        let ds = make_windows(&trace, 4, 1, None).unwrap();
        let mut config = small_config(2);
        config.max_epochs = 3;
        config.dropout = 0.5;
        let (model, _) = train(ModelKind::Lstm, &ds, &ds, &config).unwrap();
        let window = ds.input_raw(0);
        let a = model.predict(window).unwrap();
        let b = model.predict(window).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn mismatched_stats_rejected() {
        let trace = sine_trace(100);
        let a = make_windows(&trace, 4, 1, None).unwrap();
        let other = sine_trace(80);
        let b = make_windows(&other, 4, 2, None).unwrap();
        assert!(train(ModelKind::Lstm, &a, &b, &small_config(0)).is_err());
    }

    /// Relative-error check of analytic gradients against central
    /// finite differences, over every parameter entry.
    fn check_gradients(model: &mut RecurrentModel, inputs: &[f64], targets: &[f64]) {
        let (_, grads) = loss_and_gradients(model, inputs, targets);
        let step = 1e-4;
        for p in 0..grads.len() {
            for e in 0..grads[p].data.len() {
                let original = model.params()[p].data[e];
                model.params_mut()[p].data[e] = original + step;
                let plus = loss_only(model, inputs, targets);
                model.params_mut()[p].data[e] = original - step;
                let minus = loss_only(model, inputs, targets);
                model.params_mut()[p].data[e] = original;
                let numeric = (plus - minus) / (2.0 * step);
                let analytic = grads[p].data[e];
                let denom = analytic.abs().max(numeric.abs());
                if denom > 1e-6 {
                    let rel = (analytic - numeric).abs() / denom;
                    assert!(
                        rel < 1e-4,
                        "param {p} entry {e}: analytic {analytic} vs numeric {numeric} (rel {rel})"
                    );
                } else {
                    assert!(
                        (analytic - numeric).abs() < 1e-7,
                        "param {p} entry {e}: tiny-gradient mismatch {analytic} vs {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let config = TrainConfig {
            layers: 2,
            units: 2,
            dropout: 0.0,
            filters: 3,
            ..TrainConfig::default()
        };
        let mut model = RecurrentModel::init(
            ModelKind::Lstm,
            "toy",
            vec!["a".into(), "b".into()],
            crate::trace::NormStats {
                columns: vec!["a".into(), "b".into()],
                mean: vec![0.0; 2],
                std: vec![1.0; 2],
                constant: vec![false; 2],
            },
            0,
            3,
            1,
            config,
            &mut rng,
        );
        let batch = 2;
        let inputs: Vec<f64> = (0..batch * 3 * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let targets: Vec<f64> = (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect();
        check_gradients(&mut model, &inputs, &targets);
    }

    #[test]
    fn tpa_gradients_match_finite_differences() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let config = TrainConfig {
            layers: 1,
            units: 4,
            dropout: 0.0,
            filters: 3,
            ..TrainConfig::default()
        };
        let mut model = RecurrentModel::init(
            ModelKind::Tpa,
            "toy",
            vec!["a".into(), "b".into(), "c".into()],
            crate::trace::NormStats {
                columns: vec!["a".into(), "b".into(), "c".into()],
                mean: vec![0.0; 3],
                std: vec![1.0; 3],
                constant: vec![false; 3],
            },
            0,
            4,
            1,
            config,
            &mut rng,
        );
        let batch = 2;
        let inputs: Vec<f64> = (0..batch * 4 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let targets: Vec<f64> = (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect();
        check_gradients(&mut model, &inputs, &targets);
    }
}
