//! Gradient-boosted trees: stagewise CART fits to loss gradients.
//!
//! The classifier boosts logistic loss with one Newton step per leaf; the
//! regressor boosts squared loss with mean-residual leaves. Training loss is
//! recorded per stage and must never increase; if a Newton step overshoots
//! (possible when leaf curvature is tiny) the stage is halved until the loss
//! is non-increasing again.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trees::cart::{fit_rows, CartSettings, CartTree, Node};
use crate::trees::{check_matrix, EnsembleKind, GbmSettings, TreeEnsemble};

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean binary cross-entropy of probabilities against 0/1 labels.
pub fn logistic_loss(probabilities: &[f64], labels: &[f64]) -> f64 {
    let n = labels.len() as f64;
    probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(1e-12, 1.0 - 1e-12);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}

fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / truth.len() as f64
}

fn cart_settings(settings: &GbmSettings, n_features: usize) -> CartSettings {
    CartSettings {
        max_depth: settings.max_depth,
        min_samples_split: 2,
        min_samples_leaf: 1,
        max_features: settings.max_features.resolve(n_features),
    }
}

/// Routes every row through the tree once; returns its leaf node index.
fn leaf_assignments(tree: &CartTree, x: &[f64], n_features: usize, n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| tree.leaf_index(&x[i * n_features..(i + 1) * n_features]))
        .collect()
}

/// Binary handoff classifier: stagewise logistic-loss boosting from the
/// base-rate log-odds. Labels must contain both classes.
pub fn gbm_fit_classifier(
    x: &[f64],
    n_features: usize,
    labels: &[u8],
    settings: &GbmSettings,
) -> Result<TreeEnsemble> {
    settings.validate()?;
    let y: Vec<f64> = labels.iter().map(|&v| f64::from(v != 0)).collect();
    let n = check_matrix(x, n_features, &y)?;
    let positives = y.iter().sum::<f64>();
    if positives == 0.0 || positives == n as f64 {
        return Err(Error::invalid(
            "classifier training needs both classes present".to_string(),
        ));
    }
    let base_rate = positives / n as f64;
    let initial_score = (base_rate / (1.0 - base_rate)).ln();

    let cart = cart_settings(settings, n_features);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let rows: Vec<u32> = (0..n as u32).collect();
    let mut score = vec![initial_score; n];
    let mut prob: Vec<f64> = score.iter().map(|&f| sigmoid(f)).collect();
    let mut trees = Vec::with_capacity(settings.estimators);
    let mut importance = vec![0.0; n_features];
    let mut training_loss = Vec::with_capacity(settings.estimators);
    let mut prev_loss = logistic_loss(&prob, &y);

    for _ in 0..settings.estimators {
        let residual: Vec<f64> = y.iter().zip(&prob).map(|(&yi, &pi)| yi - pi).collect();
        // Tree structure fits the gradient; leaf values take a Newton step
        // on the logistic loss over the rows in the leaf.
        let newton = |leaf_rows: &[u32]| {
            let mut num = 0.0;
            let mut den = 0.0;
            for &r in leaf_rows {
                let r = r as usize;
                num += y[r] - prob[r];
                den += prob[r] * (1.0 - prob[r]);
            }
            num / den.max(1e-12)
        };
        let (mut tree, imp) = fit_rows(x, n_features, &residual, &rows, &cart, &mut rng, &newton);
        let assign = leaf_assignments(&tree, x, n_features, n);

        // Guard against Newton overshoot: halve the stage until the training
        // loss is non-increasing.
        let mut scale = 1.0f64;
        let loss = loop {
            let mut candidate = score.clone();
            for (s, &leaf) in candidate.iter_mut().zip(&assign) {
                if let Node::Leaf { value } = tree.nodes()[leaf] {
                    *s += settings.learning_rate * scale * value;
                }
            }
            let p: Vec<f64> = candidate.iter().map(|&f| sigmoid(f)).collect();
            let loss = logistic_loss(&p, &y);
            if loss <= prev_loss + 1e-12 || scale < 1e-9 {
                score = candidate;
                prob = p;
                break loss;
            }
            scale *= 0.5;
        };
        if scale != 1.0 {
            tree.scale_leaves(scale);
        }
        prev_loss = prev_loss.min(loss);
        training_loss.push(loss);
        for (acc, v) in importance.iter_mut().zip(&imp) {
            *acc += v;
        }
        trees.push(tree);
    }

    normalize(&mut importance);
    Ok(TreeEnsemble {
        kind: EnsembleKind::GbmClassifier,
        n_features,
        initial_score,
        learning_rate: settings.learning_rate,
        trees,
        feature_importance: importance,
        training_loss,
    })
}

/// Squared-loss boosting from the mean target.
pub fn gbm_fit_regressor(
    x: &[f64],
    n_features: usize,
    y: &[f64],
    settings: &GbmSettings,
) -> Result<TreeEnsemble> {
    settings.validate()?;
    let n = check_matrix(x, n_features, y)?;
    if n < 2 {
        return Err(Error::invalid("regressor training needs at least 2 rows".to_string()));
    }
    let initial_score = y.iter().sum::<f64>() / n as f64;

    let cart = cart_settings(settings, n_features);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let rows: Vec<u32> = (0..n as u32).collect();
    let mut pred = vec![initial_score; n];
    let mut trees = Vec::with_capacity(settings.estimators);
    let mut importance = vec![0.0; n_features];
    let mut training_loss = Vec::with_capacity(settings.estimators);

    for _ in 0..settings.estimators {
        let residual: Vec<f64> = y.iter().zip(&pred).map(|(&yi, &pi)| yi - pi).collect();
        let mean_leaf = |leaf_rows: &[u32]| {
            leaf_rows.iter().map(|&r| residual[r as usize]).sum::<f64>() / leaf_rows.len() as f64
        };
        let (tree, imp) = fit_rows(x, n_features, &residual, &rows, &cart, &mut rng, &mean_leaf);
        let assign = leaf_assignments(&tree, x, n_features, n);
        for (p, &leaf) in pred.iter_mut().zip(&assign) {
            if let Node::Leaf { value } = tree.nodes()[leaf] {
                *p += settings.learning_rate * value;
            }
        }
        training_loss.push(mse(&pred, y));
        for (acc, v) in importance.iter_mut().zip(&imp) {
            *acc += v;
        }
        trees.push(tree);
    }

    normalize(&mut importance);
    Ok(TreeEnsemble {
        kind: EnsembleKind::GbmRegressor,
        n_features,
        initial_score,
        learning_rate: settings.learning_rate,
        trees,
        feature_importance: importance,
        training_loss,
    })
}

fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in weights.iter_mut() {
            *w /= total;
        }
    } else {
        let uniform = 1.0 / weights.len() as f64;
        for w in weights.iter_mut() {
            *w = uniform;
        }
    }
}

/// Positive-class probability from the boosted log-odds.
pub fn gbm_predict_proba(ensemble: &TreeEnsemble, x: &[f64]) -> f64 {
    debug_assert_eq!(ensemble.kind, EnsembleKind::GbmClassifier);
    sigmoid(ensemble.decision(x))
}

/// Boosted regression prediction (raw; callers clamp where the target has a
/// bounded domain).
pub fn gbm_predict(ensemble: &TreeEnsemble, x: &[f64]) -> f64 {
    debug_assert_eq!(ensemble.kind, EnsembleKind::GbmRegressor);
    ensemble.decision(x)
}
