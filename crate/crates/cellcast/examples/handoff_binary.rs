//! Binary 4G/5G handoff prediction end to end: balanced dataset, learning-
//! rate tuning by 5-fold cross-validation, unified and per-direction models,
//! ROC/AUC on held-out samples.
//!
//! Run with: cargo run --release --example handoff_binary

use cellcast::handoff::{
    binary_scores, build_binary_dataset, default_learning_rate_grid, evaluate_binary,
    split_by_direction, split_shuffled, train_binary, train_separated, FeatureSetChoice,
    NegativePolicy,
};
use cellcast::synth::{generate, RouteProfile};
use cellcast::trace::FeatureSchema;
use cellcast::trees::GbmSettings;

fn main() -> cellcast::Result<()> {
    let trace = generate(&RouteProfile::default_5g(), &FeatureSchema::fiveg12())?;
    let switches = trace
        .mode_flags()
        .unwrap()
        .windows(2)
        .filter(|p| p[0] != p[1])
        .count();
    println!("trace: {} samples, {} mode switches", trace.len(), switches);

    let dataset = build_binary_dataset(&trace, 5, 3, None, &NegativePolicy::default())?;
    println!(
        "balanced dataset: {} samples x {} features",
        dataset.len(),
        dataset.feature_names.len()
    );
    let (train, test) = split_shuffled(&dataset, 0.7, 0);

    let settings = GbmSettings::default();
    let grid = default_learning_rate_grid();

    let unified = train_binary(&train, FeatureSetChoice::All, &settings, 5, &grid)?;
    println!("\nlearning-rate grid (5-fold mean accuracy):");
    for row in &unified.cv_table {
        println!("  {:<7} {:.3}", row.learning_rate, row.mean_accuracy);
    }
    println!("chosen rate: {}", unified.chosen_rate);

    let report = evaluate_binary(&unified, &test)?;
    println!(
        "\nunified model on {} held-out samples: accuracy {:.3}, F1 {:.3}, AUC {:.3}",
        test.len(),
        report.accuracy,
        report.f1,
        report.auc.unwrap_or(f64::NAN)
    );

    // One model per direction, evaluated on its own test subset.
    let separated = train_separated(&train, FeatureSetChoice::All, &settings, 5, &grid)?;
    let (test_5g, test_4g) = split_by_direction(&test);
    for (label, result, subset) in [
        ("5G->4G", &separated.from_5g, &test_5g),
        ("4G->5G", &separated.from_4g, &test_4g),
    ] {
        let r = evaluate_binary(result, subset)?;
        let unified_scores = binary_scores(&unified, subset);
        let unified_acc = unified_scores
            .iter()
            .zip(&subset.samples)
            .filter(|(s, sample)| (**s >= 0.5) == (sample.label != 0.0))
            .count() as f64
            / subset.len() as f64;
        println!(
            "{label}: separated accuracy {:.3} (unified on same subset {:.3}), AUC {:.3}",
            r.accuracy,
            unified_acc,
            r.auc.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
