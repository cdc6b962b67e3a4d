//! Univariate bandwidth baselines on one trace: history-repeat, EWMA,
//! harmonic mean, and recursive least squares, all running online.
//!
//! Run with: cargo run --release --example baseline_filters

use cellcast::filters::{ewma_step, harmonic_mean_predict, history_repeat, RlsState};
use cellcast::synth::{generate, RouteProfile};
use cellcast::trace::FeatureSchema;

fn main() -> cellcast::Result<()> {
    let trace = generate(&RouteProfile::default_lte(), &FeatureSchema::lte8())?;
    let bw = trace.bandwidth();
    let h = 5;

    let mut rls = RlsState::with_defaults();
    let mut ewma = bw[0];
    let mut errors = [0.0f64; 4]; // history, ewma, harmonic, rls
    let mut count = 0.0;

    for t in h..bw.len() - 1 {
        let history = &bw[..=t];
        let truth = bw[t + 1];

        let predictions = [
            history_repeat(history, 1)?,
            ewma,
            harmonic_mean_predict(history, h)?,
            {
                let window: Vec<f64> = (0..h).map(|k| bw[t - k]).collect();
                rls.predict(&window)?
            },
        ];
        for (err, pred) in errors.iter_mut().zip(predictions) {
            *err += (pred - truth) * (pred - truth);
        }
        count += 1.0;

        // Online updates with the realized observation.
        let window: Vec<f64> = (0..h).map(|k| bw[t - k]).collect();
        rls.update(&window, truth)?;
        ewma = ewma_step(ewma, truth, 0.5)?;
    }

    println!("one-step RMSE over {} predictions:", count as usize);
    for (name, err) in ["history-repeat", "ewma(0.5)", "harmonic(5)", "rls(5)"]
        .iter()
        .zip(errors)
    {
        println!("  {name:<15} {:.4} Mbps", (err / count).sqrt());
    }
    println!("\nfinal RLS coefficients (most recent first):");
    println!("  {:?}", rls.weights());
    Ok(())
}
