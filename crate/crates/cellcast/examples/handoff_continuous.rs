//! Continuous handoff prediction: regress the fraction of 5G time in the
//! next 8 seconds from the last 10 seconds of features, then summarize the
//! predictions per ground-truth fraction as boxplot statistics.
//!
//! Run with: cargo run --release --example handoff_continuous

use cellcast::handoff::train_continuous;
use cellcast::synth::{generate, RouteProfile};
use cellcast::trace::FeatureSchema;
use cellcast::trees::GbmSettings;

fn main() -> cellcast::Result<()> {
    let trace = generate(&RouteProfile::default_5g(), &FeatureSchema::fiveg12())?;
    let settings = GbmSettings {
        estimators: 200, // enough for this clean synthetic signal
        ..GbmSettings::default()
    };
    let (_, report) = train_continuous(&trace, 10, 8, &settings, 0.7)?;

    println!("held-out rho RMSE: {:.4} over {} samples", report.rmse, report.n_test);
    println!("\npredicted rho by ground-truth rho:");
    println!("  truth   n      q1      median  q3");
    for group in &report.boxplot {
        println!(
            "  {:<7.3} {:<6} {:<7.3} {:<7.3} {:<7.3}",
            group.key, group.count, group.q1, group.median, group.q3
        );
    }
    println!("\nmedians track the truth; spread widens between 0 and 1 where");
    println!("the mode oscillates inside the future window.");
    Ok(())
}
