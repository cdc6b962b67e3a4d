//! Peek inside the attention head: after training, how strongly does each
//! filtered hidden-feature row get mixed into the prediction?
//!
//! Run with: cargo run --release --example attention_weights

use cellcast::nn::{train, ModelKind, TrainConfig};
use cellcast::synth::{generate, RouteProfile};
use cellcast::trace::{make_windows, FeatureSchema, SplitSpec};

fn main() -> cellcast::Result<()> {
    let mut profile = RouteProfile::default_lte();
    profile.trips = 3;
    let trace = generate(&profile, &FeatureSchema::lte8())?;
    let (train_trace, val_trace, test_trace) = trace.split(&SplitSpec::default())?;

    let train_ds = make_windows(&train_trace, 5, 1, None)?;
    let val_ds = make_windows(&val_trace, 5, 1, Some(train_ds.stats.clone()))?;
    let test_ds = make_windows(&test_trace, 5, 1, Some(train_ds.stats.clone()))?;

    let config = TrainConfig {
        units: 12,
        filters: 8,
        max_epochs: 40,
        ..TrainConfig::default()
    };
    let (model, _) = train(ModelKind::Tpa, &train_ds, &val_ds, &config)?;

    // Average the per-row attention weight over a slice of test windows.
    let mut sums = vec![0.0f64; config.units];
    let n = test_ds.len().min(200);
    for i in 0..n {
        let weights = model.attention_weights(test_ds.input_raw(i))?.unwrap();
        for (s, w) in sums.iter_mut().zip(&weights) {
            *s += w;
        }
    }
    println!("mean attention weight per hidden-feature row of H^C ({} windows):", n);
    for (row, sum) in sums.iter().enumerate() {
        let mean = sum / n as f64;
        let bar = "#".repeat((mean * 40.0).round() as usize);
        println!("  row {row:>2}: {mean:.3} {bar}");
    }
    println!("(each row is one hidden feature seen through all time filters)");
    Ok(())
}
