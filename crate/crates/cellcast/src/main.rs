//! Command-line front end: reproducible pipelines over the library.
//!
//! Every subcommand prints its resolved configuration to stderr, writes
//! versioned artifacts, and exits 0 on success, 1 on module errors, 2 on
//! usage errors. All randomness flows from `--seed` (or explicit seeds in a
//! config file).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use cellcast::bench::{run_bench_with_series, BenchConfig, PredictorKind};
use cellcast::error::{Error, Result};
use cellcast::features::{cross_correlation_screen, rf_importance};
use cellcast::handoff::{
    self, build_binary_dataset, default_learning_rate_grid, evaluate_binary, split_by_direction,
    split_shuffled, FeatureSetChoice, HandoffModel, HandoffModelKind, NegativePolicy,
};
use cellcast::metrics::{classification_metrics, regression_metrics, ClassificationReport};
use cellcast::nn::{self, ModelKind, RecurrentModel, TrainConfig};
use cellcast::serial;
use cellcast::synth::{generate, RouteProfile};
use cellcast::trace::{ingest_csv, make_windows, FeatureSchema, SplitSpec, Trace};
use cellcast::trees::{ForestSettings, GbmSettings};

#[derive(Parser)]
#[command(name = "cellcast", version, about = "Mobile bandwidth and 4G/5G handoff prediction")]
struct Cli {
    /// Seed for every random component.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON config file with default settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Optional settings file: any present section replaces the built-in
/// defaults, and explicit flags override both.
#[derive(Deserialize, Default)]
struct FileConfig {
    train: Option<TrainConfig>,
    forest: Option<ForestSettings>,
    gbm: Option<GbmSettings>,
    split: Option<SplitSpec>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a CSV trace file under a built-in schema.
    Ingest(IngestArgs),
    /// Generate a synthetic fixed-route trace.
    Synth(SynthArgs),
    /// Feature correlation screen and random-forest importance table.
    Featimp(FeatimpArgs),
    /// Train a recurrent bandwidth forecaster.
    Train(TrainArgs),
    /// Predict bandwidth from a trained model and a trace window.
    Predict(PredictArgs),
    /// Compare predictors per horizon on a trace.
    Bench(BenchArgs),
    /// Train a handoff predictor (binary, separated, or continuous).
    HandoffTrain(HandoffTrainArgs),
    /// Evaluate a handoff model on a trace.
    HandoffEval(HandoffEvalArgs),
    /// Compute metrics from files or confusion counts.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Built-in schema: lte8 or 5g12.
    #[arg(long)]
    schema: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    route_id: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// Built-in route profile: lte or 5g.
    #[arg(long, conflicts_with = "profile")]
    preset: Option<String>,
    /// Route profile file (cellcast/profile JSON).
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Override the profile's trip count.
    #[arg(long)]
    trips: Option<usize>,
    /// Override the profile's route length in seconds.
    #[arg(long)]
    route_len: Option<usize>,
    /// Override the profile's noise std in Mbps.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct FeatimpArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Also run the correlation screen at this threshold.
    #[arg(long)]
    screen: Option<f64>,
    /// Emit the machine-readable report instead of the table.
    #[arg(long)]
    json: bool,
    /// Override the forest's tree count.
    #[arg(long)]
    trees: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Model kind: lstm or tpa.
    #[arg(long)]
    model: String,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    units: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    filters: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    /// Window position: `last` or a 0-based window-end index.
    #[arg(long, default_value = "last")]
    window: String,
}

#[derive(Args)]
struct BenchArgs {
    /// One or more trace files.
    #[arg(long, required = true)]
    trace: Vec<PathBuf>,
    /// Comma-separated predictors (history,ewma,harmonic,rls,rf,lstm,tpa).
    #[arg(long)]
    predictors: Option<String>,
    /// Comma-separated horizons.
    #[arg(long)]
    horizons: Option<String>,
    /// Output format: text, csv, json, or plotdata.
    #[arg(long, default_value = "text")]
    emit: String,
    /// Output file (text/csv/json) or directory (plotdata). Stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
}

#[derive(Args)]
struct HandoffTrainArgs {
    #[arg(long)]
    trace: PathBuf,
    /// unified, separated, or continuous.
    #[arg(long, default_value = "unified")]
    kind: String,
    /// Feature set: all, bw, or nobw.
    #[arg(long, default_value = "all")]
    features: String,
    #[arg(long)]
    out: PathBuf,
    /// History window in seconds (5 binary / 10 continuous by default).
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = 3)]
    lookahead: usize,
    #[arg(long, default_value_t = 8)]
    delta: usize,
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    estimators: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, default_value_t = 30)]
    close_radius: usize,
}

#[derive(Args)]
struct HandoffEvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    /// Write the JSON report here as well.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for ROC / boxplot series files.
    #[arg(long)]
    plotdata: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Regression: prediction file (one value per line).
    #[arg(long, requires = "truth")]
    pred: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Classification: score file (one probability per line).
    #[arg(long, requires = "labels")]
    scores: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Confusion counts as TP,FP,FN,TN.
    #[arg(long)]
    confusion: Option<String>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        // Single machine-parsable line.
        let text = err.to_string().replace('\n', " ");
        eprintln!("error: {text}");
        std::process::exit(1);
    }
}

fn print_config<T: serde::Serialize>(label: &str, value: &T) {
    eprintln!(
        "config: {}",
        serde_json::json!({ label: value })
    );
}

fn run(cli: Cli) -> Result<()> {
    let file_config = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed;
    match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Synth(args) => cmd_synth(args, seed),
        Command::Featimp(args) => cmd_featimp(args, seed, &file_config),
        Command::Train(args) => cmd_train(args, seed, &file_config),
        Command::Predict(args) => cmd_predict(args),
        Command::Bench(args) => cmd_bench(args, seed, &file_config),
        Command::HandoffTrain(args) => cmd_handoff_train(args, seed, &file_config),
        Command::HandoffEval(args) => cmd_handoff_eval(args),
        Command::Metrics(args) => cmd_metrics(args),
    }
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let schema = FeatureSchema::builtin(&args.schema)?;
    print_config("ingest", &serde_json::json!({ "schema": schema.name, "csv": args.csv }));
    let mut trace = ingest_csv(&args.csv, &schema)?;
    if let Some(id) = args.route_id {
        trace.route_id = id;
    }
    for warning in &trace.warnings {
        eprintln!("warning: {warning}");
    }
    trace.save(&args.out)?;
    eprintln!("wrote {} samples to {}", trace.len(), args.out.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs, seed: u64) -> Result<()> {
    let mut profile = match (&args.preset, &args.profile) {
        (_, Some(path)) => RouteProfile::load(path)?,
        (Some(preset), None) => match preset.to_ascii_lowercase().as_str() {
            "lte" => RouteProfile::default_lte(),
            "5g" => RouteProfile::default_5g(),
            other => return Err(Error::config(format!("unknown preset `{other}`"))),
        },
        (None, None) => RouteProfile::default_lte(),
    };
    profile.seed = seed;
    if let Some(trips) = args.trips {
        profile.trips = trips;
    }
    if let Some(route_len) = args.route_len {
        profile.route_len = route_len;
    }
    if let Some(noise) = args.noise {
        profile.noise_std = noise;
    }
    let schema = if profile.mode_plan.iter().any(|&(_, m)| m == 1) {
        FeatureSchema::fiveg12()
    } else {
        FeatureSchema::lte8()
    };
    print_config("synth", &serde_json::json!({ "profile": profile, "schema": schema.name }));
    let trace = generate(&profile, &schema)?;
    trace.save(&args.out)?;
    eprintln!("wrote {} samples to {}", trace.len(), args.out.display());
    Ok(())
}

fn cmd_featimp(args: FeatimpArgs, seed: u64, file_config: &FileConfig) -> Result<()> {
    let trace = Trace::load(&args.trace)?;
    let mut settings = file_config.forest.clone().unwrap_or_default();
    settings.seed = seed;
    if let Some(trees) = args.trees {
        settings.trees = trees;
    }
    print_config("featimp", &settings);

    if let Some(threshold) = args.screen {
        let screen = cross_correlation_screen(&trace, threshold)?;
        for warning in &screen.warnings {
            eprintln!("warning: {warning}");
        }
        if args.json {
            println!("{}", serde_json::to_string(&screen)?);
        } else {
            println!("correlation screen (threshold {threshold}):");
            for (name, corr) in &screen.correlations {
                let selected = screen.selected.contains(name);
                match corr {
                    Some(r) => println!("  {name:<14} {r:+.4} {}", if selected { "selected" } else { "" }),
                    None => println!("  {name:<14} constant (excluded)"),
                }
            }
        }
    }

    let report = rf_importance(&trace, &settings)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    if args.json {
        println!("{}", serde_json::to_string(&report)?);
    } else {
        // One row per trace, one column per feature.
        let mut header = String::new();
        let mut row = format!("{:<12}", report.trace_id);
        header.push_str(&format!("{:<12}", ""));
        for (name, weight) in &report.weights {
            header.push_str(&format!("{name:>15}"));
            row.push_str(&format!("{weight:>15.4}"));
        }
        println!("{header}");
        println!("{row}");
    }
    Ok(())
}

fn cmd_train(args: TrainArgs, seed: u64, file_config: &FileConfig) -> Result<()> {
    let kind: ModelKind = args.model.parse()?;
    let trace = Trace::load(&args.trace)?;
    let split = file_config.split.unwrap_or_default();
    let mut config = file_config.train.clone().unwrap_or_default();
    config.seed = seed;
    if let Some(v) = args.epochs {
        config.max_epochs = v;
    }
    if let Some(v) = args.layers {
        config.layers = v;
    }
    if let Some(v) = args.units {
        config.units = v;
    }
    if let Some(v) = args.batch {
        config.batch_size = v;
    }
    if let Some(v) = args.dropout {
        config.dropout = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.patience {
        config.patience = v;
    }
    if let Some(v) = args.filters {
        config.filters = v;
    }
    print_config(
        "train",
        &serde_json::json!({ "model": args.model, "window": args.window, "horizon": args.horizon, "split": split, "train": config }),
    );

    let (train_trace, val_trace, _) = trace.split(&split)?;
    let train_ds = make_windows(&train_trace, args.window, args.horizon, None)?;
    let val_ds = make_windows(&val_trace, args.window, args.horizon, Some(train_ds.stats.clone()))?;
    let (model, log) = nn::train(kind, &train_ds, &val_ds, &config)?;
    eprintln!(
        "trained {} epochs, best validation MSE {:.6} at epoch {}",
        log.epochs.len(),
        log.best_val_loss,
        log.best_epoch
    );
    model.save(&args.out)?;
    eprintln!("wrote model to {}", args.out.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = RecurrentModel::load(&args.model)?;
    let trace = Trace::load(&args.trace)?;
    print_config(
        "predict",
        &serde_json::json!({ "window": args.window, "model_window": model.window, "horizon": model.horizon }),
    );
    let n = trace.n_features();
    if trace.schema.feature_names() != model.feature_names {
        return Err(Error::config(
            "trace schema does not match the model's feature list".to_string(),
        ));
    }
    let end = match args.window.as_str() {
        "last" => trace.len() - 1,
        idx => idx
            .parse::<usize>()
            .map_err(|_| Error::config(format!("bad window position `{idx}`")))?,
    };
    if end + 1 < model.window || end >= trace.len() {
        return Err(Error::config(format!(
            "window ending at {end} does not fit in trace of length {}",
            trace.len()
        )));
    }
    let mut window = Vec::with_capacity(model.window * n);
    for t in (end + 1 - model.window)..=end {
        window.extend(trace.row(t));
    }
    let mbps = model.predict(&window)?;
    println!("{mbps}");
    Ok(())
}

fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|e| Error::config(format!("bad list entry `{s}`: {e}")))
        })
        .collect()
}

fn cmd_bench(args: BenchArgs, seed: u64, file_config: &FileConfig) -> Result<()> {
    let mut config = BenchConfig {
        seed,
        ..BenchConfig::default()
    };
    if let Some(train) = &file_config.train {
        config.train = train.clone();
    }
    if let Some(forest) = &file_config.forest {
        config.forest = forest.clone();
    }
    if let Some(split) = file_config.split {
        config.split = split;
    }
    if let Some(p) = &args.predictors {
        config.predictors = parse_list::<PredictorKind>(p)?;
    }
    if let Some(h) = &args.horizons {
        config.horizons = parse_list::<usize>(h)?;
    }
    if let Some(epochs) = args.epochs {
        config.train.max_epochs = epochs;
    }
    if let Some(trees) = args.trees {
        config.forest.trees = trees;
    }
    print_config("bench", &config);

    for path in &args.trace {
        let trace = Trace::load(path)?;
        let (report, series) = run_bench_with_series(&trace, &config)?;
        match args.emit.as_str() {
            "text" => emit(&args.out, &report.render_text(), &report.trace_id, "txt")?,
            "csv" => emit(&args.out, &report.to_csv(), &report.trace_id, "csv")?,
            "json" => emit(&args.out, &report.to_json()?, &report.trace_id, "json")?,
            "plotdata" => {
                let dir = args
                    .out
                    .clone()
                    .ok_or_else(|| Error::config("--emit plotdata needs --out DIR".to_string()))?;
                std::fs::create_dir_all(&dir)?;
                let mut trace_series = String::from("t\tbandwidth\n");
                for (t, b) in trace.bandwidth().iter().enumerate() {
                    trace_series.push_str(&format!("{t}\t{b}\n"));
                }
                std::fs::write(dir.join(format!("{}_trace.tsv", report.trace_id)), trace_series)?;
                for cell in &series {
                    let mut text = String::from("index\tprediction\ttruth\n");
                    for (i, (p, t)) in cell.predictions.iter().zip(&cell.truths).enumerate() {
                        text.push_str(&format!("{i}\t{p}\t{t}\n"));
                    }
                    let name =
                        format!("{}_h{}_{}.tsv", report.trace_id, cell.horizon, cell.predictor);
                    std::fs::write(dir.join(name), text)?;
                }
                std::fs::write(
                    dir.join(format!("{}_report.json", report.trace_id)),
                    report.to_json()?,
                )?;
                eprintln!("wrote plot data to {}", dir.display());
            }
            other => return Err(Error::config(format!("unknown emit format `{other}`"))),
        }
    }
    Ok(())
}

fn emit(out: &Option<PathBuf>, content: &str, trace_id: &str, ext: &str) -> Result<()> {
    match out {
        None => {
            println!("{content}");
            Ok(())
        }
        Some(path) => {
            let target = if path.is_dir() {
                path.join(format!("{trace_id}.{ext}"))
            } else {
                path.clone()
            };
            std::fs::write(&target, content)?;
            eprintln!("wrote {}", target.display());
            Ok(())
        }
    }
}

fn cmd_handoff_train(args: HandoffTrainArgs, seed: u64, file_config: &FileConfig) -> Result<()> {
    let trace = Trace::load(&args.trace)?;
    let feature_set: FeatureSetChoice = args.features.parse()?;
    let mut settings = file_config.gbm.clone().unwrap_or_default();
    settings.seed = seed;
    if let Some(v) = args.estimators {
        settings.estimators = v;
    }
    if let Some(v) = args.depth {
        settings.max_depth = v;
    }
    let policy = NegativePolicy {
        close_radius: args.close_radius,
        seed,
    };
    let grid = default_learning_rate_grid();

    let kind = match args.kind.as_str() {
        "unified" | "separated" => {
            let w = args.window.unwrap_or(5);
            print_config(
                "handoff-train",
                &serde_json::json!({ "kind": args.kind, "features": args.features, "w": w, "lookahead": args.lookahead, "gbm": settings, "policy": policy }),
            );
            let dataset = build_binary_dataset(&trace, w, args.lookahead, None, &policy)?;
            let (train, _) = split_shuffled(&dataset, args.train_fraction, seed);
            if args.kind == "unified" {
                let result = train_binary_report(&train, feature_set, &settings, args.folds, &grid)?;
                HandoffModelKind::Unified(result)
            } else {
                let result =
                    handoff::train_separated(&train, feature_set, &settings, args.folds, &grid)?;
                eprintln!(
                    "chosen rates: 5G->4G {} / 4G->5G {}",
                    result.from_5g.chosen_rate, result.from_4g.chosen_rate
                );
                HandoffModelKind::Separated(result)
            }
        }
        "continuous" => {
            let w = args.window.unwrap_or(10);
            print_config(
                "handoff-train",
                &serde_json::json!({ "kind": args.kind, "w": w, "delta": args.delta, "gbm": settings }),
            );
            let (model, report) =
                handoff::train_continuous(&trace, w, args.delta, &settings, args.train_fraction)?;
            eprintln!("held-out rho RMSE {:.4} over {} samples", report.rmse, report.n_test);
            HandoffModelKind::Continuous(model)
        }
        other => return Err(Error::config(format!("unknown handoff model kind `{other}`"))),
    };

    let artifact = HandoffModel {
        kind,
        w: args.window.unwrap_or(if args.kind == "continuous" { 10 } else { 5 }),
        lookahead: args.lookahead,
        delta: args.delta,
        train_fraction: args.train_fraction,
        policy,
        split_seed: seed,
    };
    artifact.save(&args.out)?;
    eprintln!("wrote handoff model to {}", args.out.display());
    Ok(())
}

fn train_binary_report(
    train: &handoff::HandoffDataset,
    feature_set: FeatureSetChoice,
    settings: &GbmSettings,
    folds: usize,
    grid: &[f64],
) -> Result<handoff::BinaryTrainResult> {
    let result = handoff::train_binary(train, feature_set, settings, folds, grid)?;
    eprintln!("learning-rate grid (5-fold mean accuracy):");
    for row in &result.cv_table {
        eprintln!("  {:<8} {:.3}", row.learning_rate, row.mean_accuracy);
    }
    eprintln!("chosen learning rate: {}", result.chosen_rate);
    Ok(result)
}

fn print_classification(label: &str, report: &ClassificationReport) {
    println!("{label}:");
    println!("  confusion: TP={} FP={} FN={} TN={}", report.tp, report.fp, report.fn_, report.tn);
    println!(
        "  TPR={:.3} FPR={:.3} precision={:.3} recall={:.3} accuracy={:.3} F1={:.3} AUC={}",
        report.tpr,
        report.fpr,
        report.precision,
        report.recall,
        report.accuracy,
        report.f1,
        report
            .auc
            .map(|a| format!("{a:.3}"))
            .unwrap_or_else(|| "undefined".to_string())
    );
}

fn cmd_handoff_eval(args: HandoffEvalArgs) -> Result<()> {
    let model = HandoffModel::load(&args.model)?;
    let trace = Trace::load(&args.trace)?;
    print_config(
        "handoff-eval",
        &serde_json::json!({ "w": model.w, "lookahead": model.lookahead, "delta": model.delta, "train_fraction": model.train_fraction }),
    );

    let mut json_report = serde_json::Map::new();
    let mut roc_series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let mut boxplot_series = None;

    match &model.kind {
        HandoffModelKind::Unified(result) => {
            let dataset =
                build_binary_dataset(&trace, model.w, model.lookahead, None, &model.policy)?;
            let (_, test) = split_shuffled(&dataset, model.train_fraction, model.split_seed);
            let report = evaluate_binary(result, &test)?;
            print_classification("unified", &report);
            roc_series.push(("unified".to_string(), report.roc.clone()));
            json_report.insert("unified".to_string(), serde_json::to_value(&report)?);
        }
        HandoffModelKind::Separated(models) => {
            let dataset =
                build_binary_dataset(&trace, model.w, model.lookahead, None, &model.policy)?;
            let (_, test) = split_shuffled(&dataset, model.train_fraction, model.split_seed);
            let (test_5g, test_4g) = split_by_direction(&test);
            let report_5g = evaluate_binary(&models.from_5g, &test_5g)?;
            let report_4g = evaluate_binary(&models.from_4g, &test_4g)?;
            print_classification("5G->4G", &report_5g);
            print_classification("4G->5G", &report_4g);
            roc_series.push(("5g-to-4g".to_string(), report_5g.roc.clone()));
            roc_series.push(("4g-to-5g".to_string(), report_4g.roc.clone()));
            json_report.insert("from_5g".to_string(), serde_json::to_value(&report_5g)?);
            json_report.insert("from_4g".to_string(), serde_json::to_value(&report_4g)?);
        }
        HandoffModelKind::Continuous(continuous) => {
            let dataset =
                handoff::build_continuous_dataset(&trace, continuous.w, continuous.delta)?;
            let (_, test) = handoff::split_contiguous(&dataset, model.train_fraction);
            let report = handoff::evaluate_continuous(continuous, &test);
            println!("continuous handoff: rho RMSE {:.4} over {} samples", report.rmse, report.n_test);
            println!("  rho    count  min     q1      median  q3      max");
            for group in &report.boxplot {
                println!(
                    "  {:<6.3} {:<6} {:<7.3} {:<7.3} {:<7.3} {:<7.3} {:<7.3}",
                    group.key, group.count, group.min, group.q1, group.median, group.q3, group.max
                );
            }
            boxplot_series = Some(report.boxplot.clone());
            json_report.insert("continuous".to_string(), serde_json::to_value(&report)?);
        }
    }

    if let Some(path) = &args.out {
        let text = serial::to_string("cellcast/handoff-report", &json_report)?;
        std::fs::write(path, text)?;
        eprintln!("wrote report to {}", path.display());
    }
    if let Some(dir) = &args.plotdata {
        std::fs::create_dir_all(dir)?;
        for (name, points) in &roc_series {
            let mut text = String::from("fpr\ttpr\n");
            for (fpr, tpr) in points {
                text.push_str(&format!("{fpr}\t{tpr}\n"));
            }
            std::fs::write(dir.join(format!("roc_{name}.tsv")), text)?;
        }
        if let Some(groups) = &boxplot_series {
            let mut text = String::from("rho\tcount\tmin\tq1\tmedian\tq3\tmax\n");
            for g in groups {
                text.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    g.key, g.count, g.min, g.q1, g.median, g.q3, g.max
                ));
            }
            std::fs::write(dir.join("boxplot.tsv"), text)?;
        }
        eprintln!("wrote plot data to {}", dir.display());
    }
    Ok(())
}

fn read_numbers(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    text.split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad number `{s}` in {}", path.display())))
        })
        .collect()
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    print_config("metrics", &serde_json::json!({}));
    if let Some(spec) = &args.confusion {
        let counts: Vec<usize> = spec
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::config(format!("bad confusion count `{s}`")))
            })
            .collect::<Result<_>>()?;
        if counts.len() != 4 {
            return Err(Error::config("--confusion needs TP,FP,FN,TN".to_string()));
        }
        let report = ClassificationReport::from_confusion(counts[0], counts[1], counts[2], counts[3]);
        print_classification("confusion", &report);
        return Ok(());
    }
    if let (Some(pred), Some(truth)) = (&args.pred, &args.truth) {
        let report = regression_metrics(&read_numbers(pred)?, &read_numbers(truth)?)?;
        println!(
            "RMSE={:.4} MAE={:.4} CORR={} n={}",
            report.rmse,
            report.mae,
            report
                .corr
                .map(|c| format!("{c:.4}"))
                .unwrap_or_else(|| "undefined".to_string()),
            report.samples
        );
        return Ok(());
    }
    if let (Some(scores), Some(labels)) = (&args.scores, &args.labels) {
        let labels: Vec<u8> = read_numbers(labels)?.iter().map(|&v| u8::from(v != 0.0)).collect();
        let report = classification_metrics(&read_numbers(scores)?, &labels, 0.5)?;
        print_classification("classification", &report);
        return Ok(());
    }
    Err(Error::config(
        "metrics needs --confusion, --pred/--truth, or --scores/--labels".to_string(),
    ))
}
