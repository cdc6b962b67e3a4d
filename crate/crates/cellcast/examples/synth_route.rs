//! Generate a synthetic fixed-route LTE trace and look at its structure.
//!
//! The generator repeats one route profile for several trips, so the
//! bandwidth signal is periodic at the route length — the property the
//! recurrent forecasters exploit.
//!
//! Run with: cargo run --release --example synth_route

use cellcast::metrics::pearson;
use cellcast::synth::{generate, RouteProfile};
use cellcast::trace::FeatureSchema;

fn main() -> cellcast::Result<()> {
    let profile = RouteProfile::default_lte();
    let trace = generate(&profile, &FeatureSchema::lte8())?;

    let bw = trace.bandwidth();
    let mean = bw.iter().sum::<f64>() / bw.len() as f64;
    let max = bw.iter().cloned().fold(0.0, f64::max);
    println!("route: {} ({} samples)", trace.route_id, trace.len());
    println!("bandwidth: mean {mean:.2} Mbps, max {max:.2} Mbps");

    // Periodicity: correlate the trace with itself one trip later.
    let lag = profile.route_len;
    let r = pearson(&bw[..bw.len() - lag], &bw[lag..]).unwrap();
    println!("lag-{lag} autocorrelation: {r:.3} (trips repeat the route)");

    // Handoff indicator fires exactly where the serving cell changes.
    let echng = trace.column("Echng").unwrap();
    let handoffs = echng.iter().filter(|&&e| e == 1.0).count();
    println!("cell handoffs: {handoffs}");

    let path = std::env::temp_dir().join("cellcast_example_route.trace");
    trace.save(&path)?;
    println!("saved versioned trace to {}", path.display());
    Ok(())
}
