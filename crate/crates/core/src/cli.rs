//! Command-line front end.
//!
//! A config file (`--config path`) holds `key = value` lines; each becomes
//! `--key=value` placed directly after the subcommand, so flags given on the
//! command line win. `true`/`false` values toggle switches.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::data::{
    generate_synthetic, load_dataset, save_dataset, split_adaptation,
    PumpDataset, SyntheticSpec, VibrationSample,
};
use crate::detectors::{
    build_combined, build_ecnn_profile, build_threshold_profile, default_factor_grid,
    training_examples, DetectorKind, PolicyKind, PumpProfile, SelectionPolicy,
    DEFAULT_TARGET_FPR,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    cross_validate, pareto_front, run_dse, save_results_csv, Algorithm, CrossValConfig, DseConfig,
    DseGrid, Variant,
};
use crate::nn::{count_macs, train, training_accuracy, Model, ModelConfig, TrainHyper};
use crate::rng::Rng;

pub const SEED_ENV: &str = "PUMP_ANOMALY_SEED";

const SUBCOMMANDS: [&str; 5] = ["generate", "train", "crossval", "dse", "adapt"];

#[derive(Debug, Parser)]
#[command(name = "pump-anomaly", version, about = "Pump vibration anomaly detection")]
#[command(args_override_self = true)]
struct Cli {
    /// Key-value file with default flag values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for every random choice of the run.
    #[arg(long, global = true, env = SEED_ENV, default_value_t = 0)]
    seed: u64,

    /// Worker threads for folds and grid points.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
    /// Train one network on a whole dataset.
    Train(TrainArgs),
    /// Leave-one-pump-out cross-validation.
    Crossval(CrossvalArgs),
    /// Design space exploration over network sizes.
    Dse(DseArgs),
    /// Build a pump profile from its first normal samples.
    Adapt(AdaptArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 20)]
    pumps: usize,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 2.0 / 3.0)]
    abnormal_fraction: f64,
    #[arg(long, default_value_t = 2.5)]
    severity: f64,
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct HyperArgs {
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
}

impl HyperArgs {
    fn hyper(&self, seed: u64) -> TrainHyper {
        TrainHyper {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
            ..TrainHyper::default()
        }
    }
}

#[derive(Debug, Args)]
struct NetworkArgs {
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 11)]
    kernel: usize,
    #[arg(long, default_value_t = 5)]
    channels: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// `cnn` or `ecnn`.
    #[arg(long, default_value = "ecnn")]
    algo: String,
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SelectionArgs {
    #[arg(long, default_value_t = DEFAULT_TARGET_FPR)]
    target_fpr: f64,
    #[arg(long, default_value_t = 0.5)]
    adapt_fraction: f64,
}

#[derive(Debug, Args)]
struct CrossvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated list of `threshold`, `cnn`, `ecnn`, `combined`.
    #[arg(long, default_value = "combined", value_delimiter = ',')]
    algo: Vec<String>,
    /// Comma-separated list of `optimal`, `fixed`, `fpr`.
    #[arg(long, default_value = "fpr", value_delimiter = ',')]
    policy: Vec<String>,
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    selection: SelectionArgs,
    /// Training-pump samples scored when tuning the fixed factor; 0 for all.
    #[arg(long, default_value_t = 40)]
    fixed_samples: usize,
    /// Hold out only the first N pumps.
    #[arg(long)]
    max_folds: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DseArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8,10")]
    depths: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "3,7,11,15,19,23")]
    kernels: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,30")]
    channels: Vec<usize>,
    /// Explore the enhanced network instead of the plain one.
    #[arg(long)]
    enhanced: bool,
    #[arg(long, default_value_t = 0.2)]
    test_ratio: f64,
    #[arg(long, default_value_t = DEFAULT_TARGET_FPR)]
    target_fpr: f64,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    pareto_out: PathBuf,
}

#[derive(Debug, Args)]
struct AdaptArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// ECNN model file; required unless `--algo threshold`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    pump: String,
    /// `threshold`, `ecnn` or `combined`.
    #[arg(long, default_value = "combined")]
    algo: String,
    #[command(flatten)]
    selection: SelectionArgs,
    /// Profile JSON path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected 'key = value'".into(),
            });
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "empty key".into(),
            });
        }
        entries.push((key, value.trim().to_string()));
    }
    Ok(entries)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Command line with config-file entries spliced in after the subcommand.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::usage(format!("cannot read config file {}: {e}", path.display())))?;
    let entries = parse_config(&text, &path).map_err(|e| Error::usage(e.to_string()))?;
    let Some(pos) = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(args);
    };
    let mut injected = Vec::new();
    for (key, value) in entries {
        match value.as_str() {
            "true" => injected.push(OsString::from(format!("--{key}"))),
            "false" => {}
            _ => injected.push(OsString::from(format!("--{key}={value}"))),
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

fn load_input(path: &Path) -> Result<PumpDataset> {
    if !path.exists() {
        return Err(Error::usage(format!("dataset {} does not exist", path.display())));
    }
    load_dataset(path)
}

fn network_config(algo: &str, net: &NetworkArgs) -> Result<ModelConfig> {
    let config = match algo.parse::<Algorithm>()? {
        Algorithm::Cnn => ModelConfig::cnn(net.depth, net.kernel, net.channels),
        Algorithm::Ecnn => ModelConfig::ecnn(net.depth, net.kernel, net.channels),
        other => {
            return Err(Error::usage(format!(
                "'{}' is not a trainable network; use cnn or ecnn",
                other.as_str()
            )))
        }
    };
    config.validate()?;
    Ok(config)
}

fn cmd_generate(args: &GenerateArgs, seed: u64) -> Result<()> {
    let spec = SyntheticSpec {
        n_pumps: args.pumps,
        samples_per_pump: args.samples,
        abnormal_fraction: args.abnormal_fraction,
        severity: args.severity,
        noise_level: args.noise,
        seed,
    };
    let dataset = generate_synthetic(&spec)?;
    save_dataset(&dataset, &args.out)?;
    let (normal, abnormal) = dataset.label_counts();
    println!(
        "wrote {} samples ({normal} normal, {abnormal} abnormal) for {} pumps to {}",
        dataset.len(),
        dataset.pump_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs, seed: u64) -> Result<()> {
    let config = network_config(&args.algo, &args.network)?;
    let hyper = args.hyper.hyper(seed);
    hyper.validate()?;
    let dataset = load_input(&args.dataset)?;
    let view = dataset.view();
    let factor_seed = Rng::stream(seed, 1).next_u64();
    let examples = training_examples(&view, config.enhanced, factor_seed)?;
    info!("training {} on {} samples", config.label(), examples.len());
    let model = train(&examples, config, &hyper)?;
    model.save(&args.out)?;
    println!("train accuracy {:.4}", training_accuracy(&model, &examples)?);
    println!("mac count {}", count_macs(&config));
    Ok(())
}

fn variants(algos: &[String], policies: &[String]) -> Result<Vec<Variant>> {
    if algos.is_empty() || policies.is_empty() {
        return Err(Error::usage("at least one algorithm and one policy are required"));
    }
    let policies = policies
        .iter()
        .map(|p| p.parse::<PolicyKind>())
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<Variant> = Vec::new();
    for a in algos {
        let algorithm = a.parse::<Algorithm>()?;
        if algorithm == Algorithm::Combined && !policies.contains(&PolicyKind::Fpr) {
            return Err(Error::usage("the combined detector supports only the fpr policy"));
        }
        for &policy in &policies {
            let policy = match algorithm {
                Algorithm::Cnn => PolicyKind::Fpr,
                Algorithm::Combined if policy != PolicyKind::Fpr => continue,
                _ => policy,
            };
            let v = Variant::new(algorithm, policy)?;
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }
    Ok(out)
}

fn cmd_crossval(args: &CrossvalArgs, seed: u64, jobs: usize) -> Result<()> {
    let variants = variants(&args.algo, &args.policy)?;
    let cfg = CrossValConfig {
        model: ModelConfig::cnn(args.network.depth, args.network.kernel, args.network.channels),
        hyper: args.hyper.hyper(seed),
        adapt_fraction: args.selection.adapt_fraction,
        target_fpr: args.selection.target_fpr,
        factor_grid: default_factor_grid(),
        fixed_samples_per_pump: args.fixed_samples,
        max_folds: args.max_folds,
        jobs,
    };
    let dataset = load_input(&args.dataset)?;
    let report = cross_validate(&dataset, &variants, &cfg)?;
    save_results_csv(&report.records(), &args.out)?;
    for (id, reason) in &report.skipped {
        println!("skipped {id}: {reason}");
    }
    for r in &report.results {
        let a = &r.aggregate;
        println!(
            "{}: accuracy {:.4} (sample-weighted {:.4}) tpdr {} fpr {}",
            r.variant.label(),
            a.accuracy,
            r.weighted_accuracy,
            a.tpdr.map_or("n/a".into(), |v| format!("{v:.4}")),
            a.fpr.map_or("n/a".into(), |v| format!("{v:.4}")),
        );
    }
    Ok(())
}

fn cmd_dse(args: &DseArgs, seed: u64, jobs: usize) -> Result<()> {
    if args.depths.is_empty() || args.kernels.is_empty() || args.channels.is_empty() {
        return Err(Error::usage("design space grid is empty"));
    }
    let cfg = DseConfig {
        grid: DseGrid {
            depths: args.depths.clone(),
            kernels: args.kernels.clone(),
            channels: args.channels.clone(),
            enhanced: args.enhanced,
        },
        hyper: args.hyper.hyper(seed),
        test_ratio: args.test_ratio,
        target_fpr: args.target_fpr,
        jobs,
    };
    let dataset = load_input(&args.dataset)?;
    let records = run_dse(&dataset, &cfg)?;
    let front = pareto_front(&records);
    save_results_csv(&records, &args.out)?;
    save_results_csv(&front, &args.pareto_out)?;
    println!("{} design points, {} on the Pareto front", records.len(), front.len());
    Ok(())
}

/// Fraction of the adaptation normals the profile flags as abnormal.
fn adaptation_fpr(profile: &PumpProfile, model: Option<&Model<f32>>, normals: &[&VibrationSample]) -> Result<f64> {
    let mut flagged = 0usize;
    for s in normals {
        let label = match (profile.chosen_detector, model) {
            (Some(DetectorKind::Ecnn), Some(m)) => profile.predict_ecnn(m, s)?,
            _ => profile.predict_threshold(s)?,
        };
        flagged += usize::from(label);
    }
    Ok(flagged as f64 / normals.len() as f64)
}

fn cmd_adapt(args: &AdaptArgs) -> Result<()> {
    let algorithm = args.algo.parse::<Algorithm>()?;
    if algorithm == Algorithm::Cnn {
        return Err(Error::usage("the cnn detector has no per-pump parameter to adapt"));
    }
    let policy = SelectionPolicy {
        target_fpr: args.selection.target_fpr,
        ..SelectionPolicy::new(PolicyKind::Fpr)
    };
    policy.validate()?;
    let dataset = load_input(&args.dataset)?;
    let samples = dataset
        .pump(&args.pump)
        .ok_or_else(|| Error::usage(format!("unknown pump '{}'", args.pump)))?;
    let split = split_adaptation(samples, args.selection.adapt_fraction)?;
    let normals = &split.adapt_normals;

    let model = match (algorithm, &args.model) {
        (Algorithm::Threshold, _) => None,
        (_, None) => return Err(Error::usage("--model is required for ecnn and combined")),
        (_, Some(path)) => {
            if !path.exists() {
                return Err(Error::usage(format!("model {} does not exist", path.display())));
            }
            Some(Model::<f32>::load(path)?)
        }
    };
    let profile = match (algorithm, &model) {
        (Algorithm::Threshold, _) => build_threshold_profile(&args.pump, normals, &policy)?,
        (Algorithm::Ecnn, Some(m)) => match build_ecnn_profile(m, &args.pump, normals, &policy)? {
            Some(p) => p,
            None => {
                return Err(Error::numeric(format!(
                    "no factor reaches a false positive rate below {} on pump '{}'",
                    policy.target_fpr, args.pump
                )))
            }
        },
        (_, Some(m)) => build_combined(m, &args.pump, normals, &policy)?,
        (_, None) => unreachable!("model loaded above"),
    };
    let fpr = adaptation_fpr(&profile, model.as_ref(), normals)?;
    let detector = profile.chosen_detector.map_or("none", |d| d.as_str());
    let parameter = match profile.chosen_detector {
        Some(DetectorKind::Ecnn) => format!("factor {}", profile.factor.unwrap_or_default()),
        _ => format!("threshold {}", profile.threshold.unwrap_or_default()),
    };
    let summary = format!(
        "pump {}: {detector} ({parameter}), adaptation fpr {fpr:.4} over {} normals",
        args.pump,
        normals.len()
    );
    match &args.out {
        Some(path) => {
            profile.save(path)?;
            println!("{summary}");
        }
        None => {
            eprintln!("{summary}");
            print!("{}", profile.to_json()?);
        }
    }
    Ok(())
}

/// Runs the tool on `args` (including the program name) and returns the
/// process exit code.
pub fn run(args: Vec<OsString>) -> i32 {
    let args = match expand_args(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return 2;
    }
    let outcome = match &cli.command {
        Command::Generate(a) => cmd_generate(a, cli.seed),
        Command::Train(a) => cmd_train(a, cli.seed),
        Command::Crossval(a) => cmd_crossval(a, cli.seed, cli.jobs),
        Command::Dse(a) => cmd_dse(a, cli.seed, cli.jobs),
        Command::Adapt(a) => cmd_adapt(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}
