//! Bagged random-forest regressor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::trees::cart::{fit_rows, CartSettings, CartTree};
use crate::trees::{check_matrix, EnsembleKind, ForestSettings, TreeEnsemble};

fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
    // Per-tree stream independent of scheduling order.
    ChaCha8Rng::seed_from_u64(seed ^ (tree_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Fits a random forest: each tree sees a bootstrap sample of the rows and a
/// fresh feature subsample per split. Trees are fit in parallel; per-tree
/// seeds make the result independent of the schedule.
pub fn rf_fit(x: &[f64], n_features: usize, y: &[f64], settings: &ForestSettings) -> Result<TreeEnsemble> {
    settings.validate()?;
    let n = check_matrix(x, n_features, y)?;
    let cart = CartSettings {
        max_depth: settings.max_depth,
        min_samples_split: settings.min_samples_split,
        min_samples_leaf: settings.min_samples_leaf,
        max_features: settings.max_features.resolve(n_features),
    };
    let mean_leaf =
        |rows: &[u32]| rows.iter().map(|&r| y[r as usize]).sum::<f64>() / rows.len() as f64;

    let fitted: Vec<(CartTree, Vec<f64>)> = (0..settings.trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree_rng(settings.seed, i);
            let rows: Vec<u32> = (0..n).map(|_| rng.gen_range(0..n) as u32).collect();
            fit_rows(x, n_features, y, &rows, &cart, &mut rng, &mean_leaf)
        })
        .collect();

    let mut trees = Vec::with_capacity(fitted.len());
    let mut importance = vec![0.0; n_features];
    for (tree, imp) in fitted {
        // Normalize per tree before averaging so deep trees do not dominate.
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            for (acc, v) in importance.iter_mut().zip(&imp) {
                *acc += v / total;
            }
        }
        trees.push(tree);
    }
    let total: f64 = importance.iter().sum();
    if total > 0.0 {
        for v in &mut importance {
            *v /= total;
        }
    } else {
        importance = vec![1.0 / n_features as f64; n_features];
    }

    Ok(TreeEnsemble {
        kind: EnsembleKind::RfRegressor,
        n_features,
        initial_score: 0.0,
        learning_rate: 1.0,
        trees,
        feature_importance: importance,
        training_loss: Vec::new(),
    })
}

/// Mean prediction over all trees.
pub fn rf_predict(ensemble: &TreeEnsemble, x: &[f64]) -> f64 {
    debug_assert_eq!(ensemble.kind, EnsembleKind::RfRegressor);
    ensemble.decision(x)
}
