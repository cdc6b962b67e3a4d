//! Feature screening and random-forest importance on a synthetic route:
//! which measurements carry predictive weight for next-second bandwidth?
//!
//! Run with: cargo run --release --example feature_importance

use cellcast::features::{cross_correlation_screen, rf_importance};
use cellcast::synth::{generate, RouteProfile};
use cellcast::trace::FeatureSchema;
use cellcast::trees::ForestSettings;

fn main() -> cellcast::Result<()> {
    let trace = generate(&RouteProfile::default_lte(), &FeatureSchema::lte8())?;

    let screen = cross_correlation_screen(&trace, 0.1)?;
    println!("correlation with bandwidth (|r| >= 0.1 selected):");
    for (name, corr) in &screen.correlations {
        match corr {
            Some(r) => println!(
                "  {name:<14} {r:+.4} {}",
                if screen.selected.contains(name) { "selected" } else { "" }
            ),
            None => println!("  {name:<14} constant"),
        }
    }

    // A lighter forest than the defaults keeps this example quick; the
    // ranking is already stable at this size.
    let settings = ForestSettings {
        trees: 200,
        ..ForestSettings::default()
    };
    let report = rf_importance(&trace, &settings)?;
    println!("\nrandom-forest importance for b(t) from features at t-1:");
    let mut ranked = report.weights.clone();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    for (name, weight) in ranked {
        println!("  {name:<14} {weight:.4}");
    }
    Ok(())
}
