//! Train the attention forecaster on a synthetic route and score it on the
//! held-out test split, next to the vanilla recurrent baseline.
//!
//! Run with: cargo run --release --example train_forecaster

use cellcast::metrics::regression_metrics;
use cellcast::nn::{train, ModelKind, TrainConfig};
use cellcast::synth::{generate, RouteProfile};
use cellcast::trace::{make_windows, FeatureSchema, SplitSpec};

fn main() -> cellcast::Result<()> {
    let mut profile = RouteProfile::default_lte();
    profile.trips = 4; // keep the example short
    let trace = generate(&profile, &FeatureSchema::lte8())?;
    let (train_trace, val_trace, test_trace) = trace.split(&SplitSpec::default())?;

    let horizon = 1;
    let window = 5;
    let train_ds = make_windows(&train_trace, window, horizon, None)?;
    let val_ds = make_windows(&val_trace, window, horizon, Some(train_ds.stats.clone()))?;
    let test_ds = make_windows(&test_trace, window, horizon, Some(train_ds.stats.clone()))?;

    let config = TrainConfig {
        max_epochs: 60,
        ..TrainConfig::default()
    };

    for kind in [ModelKind::Lstm, ModelKind::Tpa] {
        let (model, log) = train(kind, &train_ds, &val_ds, &config)?;
        let mut predictions = Vec::with_capacity(test_ds.len());
        let mut truths = Vec::with_capacity(test_ds.len());
        for i in 0..test_ds.len() {
            predictions.push(model.predict(test_ds.input_raw(i))?);
            truths.push(test_ds.target(i));
        }
        let report = regression_metrics(&predictions, &truths)?;
        println!(
            "{kind:?}: {} epochs (best {}), test RMSE {:.4}, MAE {:.4}, CORR {:.4}",
            log.epochs.len(),
            log.best_epoch,
            report.rmse,
            report.mae,
            report.corr.unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
