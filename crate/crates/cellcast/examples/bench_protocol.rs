//! The full comparison protocol on one synthetic route: every predictor,
//! horizons 1-3, shared test targets, one table.
//!
//! This takes a few minutes with the default settings (it trains an LSTM and
//! a TPA model per horizon plus 1200-tree forests).
//!
//! Run with: cargo run --release --example bench_protocol

use cellcast::bench::{run_bench, BenchConfig, PredictorKind};
use cellcast::synth::{generate, RouteProfile};
use cellcast::trace::FeatureSchema;

fn main() -> cellcast::Result<()> {
    let trace = generate(&RouteProfile::default_lte(), &FeatureSchema::lte8())?;
    let config = BenchConfig {
        predictors: PredictorKind::all(),
        ..BenchConfig::default()
    };
    let report = run_bench(&trace, &config)?;
    print!("{}", report.render_text());
    println!("\n(* = extra baselines outside the headline comparison)");
    Ok(())
}
