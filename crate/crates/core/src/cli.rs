//! Command-line entry points and experiment orchestration.
//!
//! Subcommands: `simulate`, `train`, `discover`, `ept`, `gait`, `filter`,
//! `sweep`. Every command echoes its effective configuration (stdout and
//! `config_echo.toml` in the run directory) and is deterministic for a
//! fixed `--seed`. Configuration files are TOML with flat sections;
//! command-line flags win over file values.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use crate::discovery::{
    discover_terms, match_against_truth, render_equations, truth_terms, MatchReport, MergeConfig,
    Term,
};
use crate::dynamics::{
    generate_dataset, read_dataset_csv, subseed, write_dataset_csv, System, TrainingDataset,
    TrajectoryConfig,
};
use crate::evaluation::{
    compute_ept, trial_seed, write_ept_csv, write_error_dump, EptConfig, EptReportRow,
};
use crate::network::{
    deserialize_model, serialize_model, InitConfig, ModelMeta, ProductUnitModel,
};
use crate::signal::{
    build_embedding_dataset, butterworth_lowpass, forecast, read_signal_csv, rmse_metrics,
    synth_gait, write_forecast_csv, write_metrics_csv, write_signal_csv, EmbeddingConfig,
    FilterSpec, TimeSeries,
};
use crate::training::{train, write_history_csv, TrainConfig, TrainingHistory};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

const EXIT_OK: i32 = 0;
const EXIT_RUNTIME: i32 = 1;
const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "pundit", version, about = "Sparse equation discovery with complex product-unit networks")]
struct Cli {
    /// Base seed; everything downstream derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory for run artifacts.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// TOML configuration file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Concurrent jobs for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate trajectories of a built-in system and write the dataset CSV.
    Simulate(SimulateArgs),
    /// Train a model on generated or loaded data and save it.
    Train(TrainArgs),
    /// Full discovery pipeline: train, extract, merge, prune, match, render.
    Discover(DiscoverArgs),
    /// Effective-prediction-time evaluation of a saved model.
    Ept(EptArgs),
    /// Signal pipeline: filter, embed, train, forecast, metrics.
    Gait(GaitArgs),
    /// Butterworth low-pass filter a signal CSV.
    Filter(FilterArgs),
    /// Run a grid of discovery experiments and collect a summary CSV.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct SimulateArgs {
    #[arg(long)]
    system: String,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct TrainArgs {
    #[arg(long)]
    system: String,
    /// Load this dataset CSV instead of generating one.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    units: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr_coefficients: Option<f64>,
    #[arg(long)]
    lr_exponents: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct DiscoverArgs {
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct EptArgs {
    /// Model file produced by `train` or `discover`.
    #[arg(long)]
    model: PathBuf,
    /// System to compare against; defaults to the model's meta entry.
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Zero the imaginary parts of the model state after every step.
    #[arg(long)]
    discard_imaginary: bool,
    /// Also write a per-step error series CSV per trial.
    #[arg(long)]
    dump_errors: bool,
}

#[derive(Args, Debug, Clone)]
struct GaitArgs {
    /// Signal CSV (t,ax,ay,az); omit to use the synthetic generator.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Synthetic signal duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    rate: Option<f64>,
    /// Leading seconds used for training; the rest is forecast.
    #[arg(long)]
    train_seconds: Option<f64>,
    #[arg(long)]
    units: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    order: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    order: Option<usize>,
    /// Sample rate fallback when the CSV has fewer than two rows.
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct SweepArgs {
    /// Sweep definition TOML (system, points, trajectories, seeds, ...).
    #[arg(long)]
    sweep_config: Option<PathBuf>,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::runtime(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Configuration files
// ---------------------------------------------------------------------------

/// Optional file-provided settings; any present value acts as the default
/// for the matching flag.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub run: RunSection,
    pub train: TrainSection,
    pub merge: MergeSection,
    pub ept: EptSection,
    pub gait: GaitSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub system: Option<String>,
    pub points: Option<usize>,
    pub trajectories: Option<usize>,
    pub units: Option<usize>,
    pub dt: Option<f64>,
    pub init_box: Option<[[f64; 2]; 3]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr_coefficients: Option<f64>,
    pub lr_exponents: Option<f64>,
    pub decay_gamma: Option<f64>,
    pub exponent_init_sigma: Option<f64>,
    pub coefficient_init_sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeSection {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub rounding_decimals: Option<u32>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EptSection {
    pub trials: Option<usize>,
    pub warmup_steps: Option<usize>,
    pub horizon_steps: Option<usize>,
    pub dt: Option<f64>,
    pub keep_imaginary: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitSection {
    pub duration: Option<f64>,
    pub rate: Option<f64>,
    pub train_seconds: Option<f64>,
    pub units: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub decay_gamma: Option<f64>,
    pub cutoff_hz: Option<f64>,
    pub filter_order: Option<usize>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::usage(format!("config {}: {e}", p.display())))
        }
    }
}

fn build_train_config(
    args: &TrainArgs,
    file: &FileConfig,
    shuffle_seed: u64,
) -> TrainConfig {
    let defaults = TrainConfig::default();
    TrainConfig {
        epochs: args.epochs.or(file.train.epochs).unwrap_or(defaults.epochs),
        batch_size: args
            .batch_size
            .or(file.train.batch_size)
            .unwrap_or(defaults.batch_size),
        lr_coefficients: args
            .lr_coefficients
            .or(file.train.lr_coefficients)
            .unwrap_or(defaults.lr_coefficients),
        lr_exponents: args
            .lr_exponents
            .or(file.train.lr_exponents)
            .unwrap_or(defaults.lr_exponents),
        decay_gamma: args
            .gamma
            .or(file.train.decay_gamma)
            .unwrap_or(defaults.decay_gamma),
        seed: shuffle_seed,
        init: InitConfig {
            exponent_sigma: file
                .train
                .exponent_init_sigma
                .unwrap_or(defaults.init.exponent_sigma),
            coefficient_sigma: file
                .train
                .coefficient_init_sigma
                .unwrap_or(defaults.init.coefficient_sigma),
        },
        ..defaults
    }
}

// ---------------------------------------------------------------------------
// Pipelines (shared by commands, sweeps, and the acceptance suite)
// ---------------------------------------------------------------------------

/// Everything a single discovery run produces.
pub struct DiscoveryOutcome {
    pub model: ProductUnitModel,
    pub history: TrainingHistory,
    pub terms: Vec<Vec<Term>>,
    pub report: MatchReport,
    pub final_loss: f64,
    pub total_truth_terms: usize,
}

impl DiscoveryOutcome {
    pub fn is_exact(&self) -> bool {
        self.report.is_exact(self.total_truth_terms)
    }
}

/// Seed roles derived from one user seed.
pub struct DerivedSeeds {
    pub dataset: u64,
    pub model_init: u64,
    pub shuffle: u64,
    pub ept: u64,
}

pub fn derive_seeds(seed: u64) -> DerivedSeeds {
    DerivedSeeds {
        dataset: subseed(seed, 1),
        model_init: subseed(seed, 2),
        shuffle: subseed(seed, 3),
        ept: subseed(seed, 4),
    }
}

/// Train a fresh model on a dataset of a known system and run the full
/// term pipeline against its ground truth.
pub fn run_discovery(
    system: System,
    dataset: &TrainingDataset,
    n_units: usize,
    seed: u64,
    train_config: &TrainConfig,
    merge_config: &MergeConfig,
) -> Result<DiscoveryOutcome, crate::training::TrainingError> {
    let seeds = derive_seeds(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.model_init);
    let model = ProductUnitModel::random(3, n_units, 3, train_config.init, &mut rng);
    let config = TrainConfig {
        seed: seeds.shuffle,
        ..*train_config
    };
    let (model, history) = train(model, dataset, &config)?;
    let terms = discover_terms(&model, merge_config);
    let truth = truth_terms(system);
    let total_truth_terms = truth.iter().map(Vec::len).sum();
    let report = match_against_truth(&terms, &truth, merge_config.epsilon);
    let final_loss = history.last().map_or(f64::NAN, |h| h.loss);
    Ok(DiscoveryOutcome {
        model,
        history,
        terms,
        report,
        final_loss,
        total_truth_terms,
    })
}

/// JSON form of one term.
#[derive(Serialize, Deserialize)]
struct TermDoc {
    coefficient: [f64; 2],
    exponents: Vec<[f64; 2]>,
}

impl From<&Term> for TermDoc {
    fn from(t: &Term) -> Self {
        Self {
            coefficient: [t.coefficient.re, t.coefficient.im],
            exponents: t.exponents.iter().map(|w| [w.re, w.im]).collect(),
        }
    }
}

#[derive(Serialize)]
struct DiscoveryReportDoc<'a> {
    system: &'a str,
    seed: u64,
    points: usize,
    trajectories: usize,
    units: usize,
    final_loss: f64,
    status: &'a str,
    equations: Vec<String>,
    terms: Vec<Vec<TermDoc>>,
    match_report: &'a MatchReport,
}

/// One line of the sweep/discovery summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub system: String,
    pub seed: u64,
    pub points: usize,
    pub trajectories: usize,
    pub units: usize,
    pub correct: usize,
    pub erroneous: usize,
    pub final_loss: f64,
}

impl SummaryRow {
    fn key(&self) -> (String, usize, usize, usize, u64) {
        (
            self.system.clone(),
            self.points,
            self.trajectories,
            self.units,
            self.seed,
        )
    }
}

const SUMMARY_HEADER: &str = "system,seed,points,trajectories,units,correct,erroneous,final_loss";

fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.system, r.seed, r.points, r.trajectories, r.units, r.correct, r.erroneous,
            r.final_loss
        ));
    }
    out
}

fn summary_from_csv(text: &str) -> Result<Vec<SummaryRow>, CliError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(CliError::runtime(format!(
                "summary line {} has {} fields",
                i + 1,
                parts.len()
            )));
        }
        rows.push(SummaryRow {
            system: parts[0].to_string(),
            seed: parts[1].parse().map_err(|e| CliError::runtime(format!("seed: {e}")))?,
            points: parts[2].parse().map_err(|e| CliError::runtime(format!("points: {e}")))?,
            trajectories: parts[3]
                .parse()
                .map_err(|e| CliError::runtime(format!("trajectories: {e}")))?,
            units: parts[4].parse().map_err(|e| CliError::runtime(format!("units: {e}")))?,
            correct: parts[5].parse().map_err(|e| CliError::runtime(format!("correct: {e}")))?,
            erroneous: parts[6]
                .parse()
                .map_err(|e| CliError::runtime(format!("erroneous: {e}")))?,
            final_loss: parts[7]
                .parse()
                .map_err(|e| CliError::runtime(format!("final_loss: {e}")))?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/usage text
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let file = match load_file_config(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {}", e.message);
            return e.code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(&cli, args, &file),
        Command::Train(args) => cmd_train(&cli, args, &file).map(|_| ()),
        Command::Discover(args) => cmd_discover(&cli, args, &file),
        Command::Ept(args) => cmd_ept(&cli, args, &file),
        Command::Gait(args) => cmd_gait(&cli, args, &file),
        Command::Filter(args) => cmd_filter(args, &file),
        Command::Sweep(args) => cmd_sweep(&cli, args, &file),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn parse_system(name: &str) -> Result<System, CliError> {
    System::from_name(name).map_err(|e| CliError::usage(e.to_string()))
}

fn run_dir(out: &Path, prefix: &str) -> Result<PathBuf, CliError> {
    let dir = out.join(prefix);
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn echo_config(dir: &Path, effective: &FileConfig) -> Result<(), CliError> {
    let text = toml::to_string_pretty(effective)
        .map_err(|e| CliError::runtime(format!("config echo: {e}")))?;
    println!("# effective configuration\n{text}");
    fs::write(dir.join("config_echo.toml"), &text)
        .map_err(|e| CliError::runtime(format!("config echo: {e}")))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateSettings {
    system: System,
    trajectories: usize,
    points: usize,
    dt: f64,
    init_box: [[f64; 2]; 3],
}

fn resolve_simulate(
    system_name: &str,
    trajectories: Option<usize>,
    points: Option<usize>,
    dt: Option<f64>,
    file: &FileConfig,
) -> Result<SimulateSettings, CliError> {
    let system = parse_system(system_name)?;
    let trajectories = trajectories
        .or(file.run.trajectories)
        .unwrap_or(30);
    let points = points.or(file.run.points).unwrap_or(3000);
    let dt = dt.or(file.run.dt).unwrap_or_else(|| system.default_dt());
    let init_box = file.run.init_box.unwrap_or_else(|| system.default_init_box());
    if trajectories == 0 || points == 0 {
        return Err(CliError::usage("trajectories and points must be positive"));
    }
    Ok(SimulateSettings {
        system,
        trajectories,
        points,
        dt,
        init_box,
    })
}

fn effective_config(s: &SimulateSettings, train: Option<&TrainConfig>, merge: Option<&MergeConfig>) -> FileConfig {
    FileConfig {
        run: RunSection {
            system: Some(s.system.name().to_string()),
            points: Some(s.points),
            trajectories: Some(s.trajectories),
            units: None,
            dt: Some(s.dt),
            init_box: Some(s.init_box),
        },
        train: train
            .map(|t| TrainSection {
                epochs: Some(t.epochs),
                batch_size: Some(t.batch_size),
                lr_coefficients: Some(t.lr_coefficients),
                lr_exponents: Some(t.lr_exponents),
                decay_gamma: Some(t.decay_gamma),
                exponent_init_sigma: Some(t.init.exponent_sigma),
                coefficient_init_sigma: Some(t.init.coefficient_sigma),
            })
            .unwrap_or_default(),
        merge: merge
            .map(|m| MergeSection {
                epsilon: Some(m.epsilon),
                delta: Some(m.delta),
                rounding_decimals: Some(m.rounding_decimals),
            })
            .unwrap_or_default(),
        ept: EptSection::default(),
        gait: GaitSection::default(),
    }
}

fn make_dataset(s: &SimulateSettings, seed: u64) -> Result<(TrainingDataset, TrajectoryConfig), CliError> {
    let config = TrajectoryConfig {
        n_trajectories: s.trajectories,
        total_points: s.points,
        dt: s.dt,
        init_box: s.init_box,
        state_clamp: s.system.state_clamp(),
        seed,
    };
    let dataset = generate_dataset(s.system, &config)
        .map_err(|e| CliError::runtime(format!("dataset generation failed: {e}")))?;
    Ok((dataset, config))
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs, file: &FileConfig) -> Result<(), CliError> {
    let s = resolve_simulate(&args.system, args.trajectories, args.points, args.dt, file)?;
    let seeds = derive_seeds(cli.seed);
    let (dataset, config) = make_dataset(&s, seeds.dataset)?;
    let dir = run_dir(
        &cli.out,
        &format!("sim_{}_{}_{}_{}", s.system.name(), s.points, s.trajectories, cli.seed),
    )?;
    echo_config(&dir, &effective_config(&s, None, None))?;
    let path = dir.join("dataset.csv");
    let out = fs::File::create(&path)?;
    write_dataset_csv(&dataset, config.dt, out)?;
    println!(
        "wrote {} samples ({} trajectories x {} points, dt = {}) to {}",
        dataset.len(),
        s.trajectories,
        config.points_per_trajectory(),
        s.dt,
        path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train / discover
// ---------------------------------------------------------------------------

struct TrainedArtifacts {
    system: System,
    settings: SimulateSettings,
    units: usize,
    model: ProductUnitModel,
    history: TrainingHistory,
    dir: PathBuf,
}

fn cmd_train(cli: &Cli, args: &TrainArgs, file: &FileConfig) -> Result<TrainedArtifacts, CliError> {
    let s = resolve_simulate(&args.system, args.trajectories, args.points, args.dt, file)?;
    let units = args
        .units
        .or(file.run.units)
        .unwrap_or_else(|| s.system.min_units());
    if units == 0 {
        return Err(CliError::usage("units must be at least 1"));
    }
    let seeds = derive_seeds(cli.seed);
    let train_config = build_train_config(args, file, seeds.shuffle);

    let dataset = match &args.data {
        Some(path) => {
            let f = fs::File::open(path)
                .map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))?;
            read_dataset_csv(f)?
        }
        None => make_dataset(&s, seeds.dataset)?.0,
    };

    let dir = run_dir(
        &cli.out,
        &format!("{}_{}_{}_{}", s.system.name(), s.points, s.trajectories, cli.seed),
    )?;
    echo_config(&dir, &effective_config(&s, Some(&train_config), None))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seeds.model_init);
    let model = ProductUnitModel::random(3, units, 3, train_config.init, &mut rng);
    let (model, history) = train(model, &dataset, &train_config)
        .map_err(|e| CliError::runtime(format!("training failed: {e}")))?;

    let meta = ModelMeta {
        system: Some(s.system.name().to_string()),
        seed: Some(cli.seed),
        epochs: Some(train_config.epochs),
    };
    fs::write(dir.join("model.json"), serialize_model(&model, &meta))?;
    let f = fs::File::create(dir.join("loss_history.csv"))?;
    write_history_csv(&history, f)?;
    println!(
        "trained {} units on {} samples for {} epochs; final loss {:.3e}",
        units,
        dataset.len(),
        train_config.epochs,
        history.last().map_or(f64::NAN, |h| h.loss)
    );
    Ok(TrainedArtifacts {
        system: s.system,
        settings: resolve_simulate(&args.system, args.trajectories, args.points, args.dt, file)?,
        units,
        model,
        history,
        dir,
    })
}

fn build_merge_config(args: &DiscoverArgs, file: &FileConfig) -> MergeConfig {
    let defaults = MergeConfig::default();
    MergeConfig {
        epsilon: args.epsilon.or(file.merge.epsilon).unwrap_or(defaults.epsilon),
        delta: args.delta.or(file.merge.delta).unwrap_or(defaults.delta),
        rounding_decimals: file
            .merge
            .rounding_decimals
            .unwrap_or(defaults.rounding_decimals),
    }
}

fn cmd_discover(cli: &Cli, args: &DiscoverArgs, file: &FileConfig) -> Result<(), CliError> {
    let artifacts = cmd_train(cli, &args.train, file)?;
    let merge_config = build_merge_config(args, file);

    let terms = discover_terms(&artifacts.model, &merge_config);
    let truth = truth_terms(artifacts.system);
    let report = match_against_truth(&terms, &truth, merge_config.epsilon);
    let rendered = render_equations(&terms, &["x", "y", "z"], merge_config.rounding_decimals);
    let final_loss = artifacts.history.last().map_or(f64::NAN, |h| h.loss);

    let doc = DiscoveryReportDoc {
        system: artifacts.system.name(),
        seed: cli.seed,
        points: artifacts.settings.points,
        trajectories: artifacts.settings.trajectories,
        units: artifacts.units,
        final_loss,
        status: "complete",
        equations: rendered.lines().map(str::to_string).collect(),
        terms: terms.iter().map(|eq| eq.iter().map(TermDoc::from).collect()).collect(),
        match_report: &report,
    };
    fs::write(
        artifacts.dir.join("report.json"),
        serde_json::to_string_pretty(&doc).map_err(|e| CliError::runtime(e.to_string()))?,
    )?;
    fs::write(artifacts.dir.join("equations.txt"), &rendered)?;

    let row = SummaryRow {
        system: artifacts.system.name().to_string(),
        seed: cli.seed,
        points: artifacts.settings.points,
        trajectories: artifacts.settings.trajectories,
        units: artifacts.units,
        correct: report.correct_count,
        erroneous: report.erroneous_count,
        final_loss,
    };
    merge_summary_rows(&cli.out.join("summary.csv"), vec![row])?;

    println!("{rendered}");
    println!(
        "correct terms: {} / {}, erroneous: {}",
        report.correct_count,
        truth.iter().map(Vec::len).sum::<usize>(),
        report.erroneous_count
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// ept
// ---------------------------------------------------------------------------

fn cmd_ept(cli: &Cli, args: &EptArgs, file: &FileConfig) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.model)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", args.model.display())))?;
    let (model, meta) = deserialize_model(&text)?;
    let system_name = args
        .system
        .clone()
        .or(meta.system)
        .ok_or_else(|| CliError::usage("no --system given and the model file names none"))?;
    let system = parse_system(&system_name)?;
    let trials = args.trials.or(file.ept.trials).unwrap_or(3).max(1);
    let seeds = derive_seeds(cli.seed);

    let mut base = EptConfig::for_system(system, 0);
    base.warmup_steps = args.warmup.or(file.ept.warmup_steps).unwrap_or(base.warmup_steps);
    base.horizon_steps = args
        .horizon
        .or(file.ept.horizon_steps)
        .unwrap_or(base.horizon_steps);
    base.dt = args.dt.or(file.ept.dt).unwrap_or(base.dt);
    base.keep_imaginary = if args.discard_imaginary {
        false
    } else {
        file.ept.keep_imaginary.unwrap_or(true)
    };

    let dir = run_dir(&cli.out, &format!("ept_{}_{}", system.name(), cli.seed))?;
    let mut rows = Vec::with_capacity(trials);
    for trial in 0..trials {
        let config = EptConfig {
            seed: trial_seed(seeds.ept, trial),
            ..base.clone()
        };
        let result = compute_ept(system, &model, &config)
            .map_err(|e| CliError::runtime(format!("trial {trial}: {e}")))?;
        if args.dump_errors {
            let f = fs::File::create(dir.join(format!("errors_trial{trial}.csv")))?;
            write_error_dump(&result.error_series, &result.imag_series, f)?;
        }
        println!(
            "trial {trial}: theta = {:.4}, ept = {}, normalized = {}",
            result.threshold_theta,
            result
                .ept_steps
                .map_or_else(|| "inf".into(), |s| s.to_string()),
            if result.ept_normalized.is_finite() {
                format!("{:.4}", result.ept_normalized)
            } else {
                "inf".into()
            }
        );
        rows.push(EptReportRow::new(system, config.seed, trial, &result));
    }
    let f = fs::File::create(dir.join("ept.csv"))?;
    write_ept_csv(&rows, f)?;
    println!("wrote {}", dir.join("ept.csv").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// gait
// ---------------------------------------------------------------------------

fn cmd_gait(cli: &Cli, args: &GaitArgs, file: &FileConfig) -> Result<(), CliError> {
    let rate = args.rate.or(file.gait.rate).unwrap_or(200.0);
    let duration = args.duration.or(file.gait.duration).unwrap_or(40.0);
    let train_seconds = args
        .train_seconds
        .or(file.gait.train_seconds)
        .unwrap_or(10.0);
    let units = args.units.or(file.gait.units).unwrap_or(300);
    let epochs = args.epochs.or(file.gait.epochs).unwrap_or(500);
    let batch_size = args.batch_size.or(file.gait.batch_size).unwrap_or(30);
    let gamma = args.gamma.or(file.gait.decay_gamma).unwrap_or(0.99);
    let cutoff = args.cutoff.or(file.gait.cutoff_hz).unwrap_or(15.0);
    let order = args.order.or(file.gait.filter_order).unwrap_or(4);

    let seeds = derive_seeds(cli.seed);
    let raw = match &args.input {
        Some(path) => {
            let f = fs::File::open(path)
                .map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))?;
            read_signal_csv(f, rate)?
        }
        None => synth_gait(duration, rate, seeds.dataset),
    };
    if raw.is_empty() {
        return Err(CliError::usage("input signal is empty"));
    }

    let spec = FilterSpec {
        order,
        cutoff_hz: cutoff,
        sample_rate_hz: raw.sample_rate,
    };
    let filtered = butterworth_lowpass(&raw, &spec)?;

    let train_len = ((train_seconds * filtered.sample_rate).round() as usize).min(filtered.len());
    let history_series = TimeSeries {
        samples: filtered.samples[..train_len].to_vec(),
        sample_rate: filtered.sample_rate,
    };
    let embedding = EmbeddingConfig::default();
    let dataset = build_embedding_dataset(&history_series, &embedding)?;

    let train_config = TrainConfig {
        epochs,
        batch_size,
        decay_gamma: gamma,
        seed: seeds.shuffle,
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.model_init);
    let model = ProductUnitModel::random(
        dataset.input_dim(),
        units,
        3,
        train_config.init,
        &mut rng,
    );
    let (model, history) = train(model, &dataset, &train_config)
        .map_err(|e| CliError::runtime(format!("training failed: {e}")))?;

    let steps = filtered.len() - train_len;
    let pred = forecast(&model, &history_series, steps, &embedding)?;
    let dir = run_dir(&cli.out, &format!("gait_{}", cli.seed))?;

    let meta = ModelMeta {
        system: Some("gait".into()),
        seed: Some(cli.seed),
        epochs: Some(epochs),
    };
    fs::write(dir.join("model.json"), serialize_model(&model, &meta))?;
    let f = fs::File::create(dir.join("loss_history.csv"))?;
    write_history_csv(&history, f)?;
    let f = fs::File::create(dir.join("filtered.csv"))?;
    write_signal_csv(&filtered, f)?;
    let f = fs::File::create(dir.join("forecast.csv"))?;
    write_forecast_csv(&pred, train_len, filtered.sample_rate, f)?;

    let status = if pred.failure.is_some() { "partial" } else { "complete" };
    if pred.samples.is_empty() {
        println!("forecast produced no samples (status: {status})");
        return Ok(());
    }
    let truth_tail = TimeSeries {
        samples: filtered.samples[train_len..train_len + pred.samples.len()].to_vec(),
        sample_rate: filtered.sample_rate,
    };
    let window = filtered.sample_rate.round() as usize;
    let metrics = rmse_metrics(&truth_tail, &pred.real_series(filtered.sample_rate), window)?;
    let f = fs::File::create(dir.join("metrics.csv"))?;
    write_metrics_csv(&metrics, train_len, filtered.sample_rate, f)?;

    println!(
        "forecast {} steps (status: {status}); normalized RMSE x/y/z = {:.4}/{:.4}/{:.4}",
        pred.samples.len(),
        metrics.normalized_rmse[0],
        metrics.normalized_rmse[1],
        metrics.normalized_rmse[2]
    );
    println!("artifacts in {}", dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// filter
// ---------------------------------------------------------------------------

fn cmd_filter(args: &FilterArgs, file: &FileConfig) -> Result<(), CliError> {
    let rate = args.rate.or(file.gait.rate).unwrap_or(200.0);
    let cutoff = args.cutoff.or(file.gait.cutoff_hz).unwrap_or(15.0);
    let order = args.order.or(file.gait.filter_order).unwrap_or(4);
    let f = fs::File::open(&args.input)
        .map_err(|e| CliError::usage(format!("cannot open {}: {e}", args.input.display())))?;
    let series = read_signal_csv(f, rate)?;
    let spec = FilterSpec {
        order,
        cutoff_hz: cutoff,
        sample_rate_hz: series.sample_rate,
    };
    let filtered = butterworth_lowpass(&series, &spec)?;
    let out = fs::File::create(&args.output)?;
    write_signal_csv(&filtered, out)?;
    println!(
        "filtered {} samples at {:.1} Hz (order {order}, cutoff {cutoff} Hz) -> {}",
        filtered.len(),
        filtered.sample_rate,
        args.output.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// Grid definition for a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub system: String,
    pub points: Vec<usize>,
    pub trajectories: Vec<usize>,
    pub units: Option<usize>,
    pub seeds: Vec<u64>,
    pub train: TrainSection,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            system: "lorenz63".into(),
            points: vec![1000, 3000, 5000],
            trajectories: (1..=10).map(|k| k * 10).collect(),
            units: None,
            seeds: (0..10).collect(),
            train: TrainSection::default(),
        }
    }
}

#[derive(Clone)]
struct SweepCell {
    system: System,
    points: usize,
    trajectories: usize,
    units: usize,
    seed: u64,
}

fn merge_summary_rows(path: &Path, new_rows: Vec<SummaryRow>) -> Result<(), CliError> {
    let mut rows = if path.exists() {
        summary_from_csv(&fs::read_to_string(path)?)?
    } else {
        Vec::new()
    };
    let existing: HashSet<_> = rows.iter().map(SummaryRow::key).collect();
    for row in new_rows {
        if !existing.contains(&row.key()) {
            rows.push(row);
        }
    }
    rows.sort_by(|a, b| a.key().cmp(&b.key()));
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, summary_to_csv(&rows))?;
    Ok(())
}

fn run_sweep_cell(
    cell: &SweepCell,
    train_section: &TrainSection,
    out: &Path,
) -> Result<SummaryRow, CliError> {
    let config = TrajectoryConfig::for_system(cell.system, cell.trajectories, cell.points, 0);
    let seeds = derive_seeds(cell.seed);
    let config = TrajectoryConfig {
        seed: seeds.dataset,
        ..config
    };
    let dataset = generate_dataset(cell.system, &config)?;
    let defaults = TrainConfig::default();
    let train_config = TrainConfig {
        epochs: train_section.epochs.unwrap_or(defaults.epochs),
        batch_size: train_section.batch_size.unwrap_or(defaults.batch_size),
        lr_coefficients: train_section
            .lr_coefficients
            .unwrap_or(defaults.lr_coefficients),
        lr_exponents: train_section.lr_exponents.unwrap_or(defaults.lr_exponents),
        decay_gamma: train_section.decay_gamma.unwrap_or(defaults.decay_gamma),
        init: InitConfig {
            exponent_sigma: train_section
                .exponent_init_sigma
                .unwrap_or(defaults.init.exponent_sigma),
            coefficient_sigma: train_section
                .coefficient_init_sigma
                .unwrap_or(defaults.init.coefficient_sigma),
        },
        ..defaults
    };
    let merge_config = MergeConfig::default();
    let outcome = run_discovery(
        cell.system,
        &dataset,
        cell.units,
        cell.seed,
        &train_config,
        &merge_config,
    )
    .map_err(|e| CliError::runtime(e.to_string()))?;

    let dir = run_dir(
        out,
        &format!(
            "{}_{}_{}_{}",
            cell.system.name(),
            cell.points,
            cell.trajectories,
            cell.seed
        ),
    )?;
    let meta = ModelMeta {
        system: Some(cell.system.name().to_string()),
        seed: Some(cell.seed),
        epochs: Some(train_config.epochs),
    };
    fs::write(dir.join("model.json"), serialize_model(&outcome.model, &meta))?;
    let f = fs::File::create(dir.join("loss_history.csv"))?;
    write_history_csv(&outcome.history, f)?;
    fs::write(
        dir.join("equations.txt"),
        render_equations(&outcome.terms, &["x", "y", "z"], merge_config.rounding_decimals),
    )?;

    Ok(SummaryRow {
        system: cell.system.name().to_string(),
        seed: cell.seed,
        points: cell.points,
        trajectories: cell.trajectories,
        units: cell.units,
        correct: outcome.report.correct_count,
        erroneous: outcome.report.erroneous_count,
        final_loss: outcome.final_loss,
    })
}

fn cmd_sweep(cli: &Cli, args: &SweepArgs, _file: &FileConfig) -> Result<(), CliError> {
    let sweep: SweepConfig = match &args.sweep_config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => SweepConfig::default(),
    };
    let system = parse_system(&sweep.system)?;
    let units = sweep.units.unwrap_or_else(|| system.min_units());

    let summary_path = cli.out.join("summary.csv");
    let existing: HashSet<_> = if summary_path.exists() {
        summary_from_csv(&fs::read_to_string(&summary_path)?)?
            .iter()
            .map(SummaryRow::key)
            .collect()
    } else {
        HashSet::new()
    };

    let mut cells = Vec::new();
    for &points in &sweep.points {
        for &trajectories in &sweep.trajectories {
            for &seed in &sweep.seeds {
                let key = (system.name().to_string(), points, trajectories, units, seed);
                if existing.contains(&key) {
                    continue;
                }
                cells.push(SweepCell {
                    system,
                    points,
                    trajectories,
                    units,
                    seed,
                });
            }
        }
    }
    println!(
        "sweep: {} cells to run ({} already present), {} job(s)",
        cells.len(),
        existing.len(),
        cli.jobs.max(1)
    );

    let next = AtomicUsize::new(0);
    let failures = Mutex::new(Vec::<String>::new());
    let results = Mutex::new(Vec::<SummaryRow>::new());
    let jobs = cli.jobs.max(1).min(cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let cell = &cells[i];
                match run_sweep_cell(cell, &sweep.train, &cli.out) {
                    Ok(row) => {
                        let mut rows = results.lock().expect("results lock");
                        rows.push(row.clone());
                        // flush incrementally so interrupts lose little work
                        let _ = merge_summary_rows(&summary_path, vec![row]);
                        println!(
                            "cell {}/{} done: {} pts={} trajs={} seed={} correct={} erroneous={}",
                            i + 1,
                            cells.len(),
                            cell.system.name(),
                            cell.points,
                            cell.trajectories,
                            cell.seed,
                            rows.last().map_or(0, |r| r.correct),
                            rows.last().map_or(0, |r| r.erroneous),
                        );
                    }
                    Err(e) => {
                        failures.lock().expect("failures lock").push(format!(
                            "cell pts={} trajs={} seed={}: {}",
                            cell.points, cell.trajectories, cell.seed, e.message
                        ));
                    }
                }
            });
        }
    });

    let failures = failures.into_inner().expect("failures lock");
    for f in &failures {
        eprintln!("failed: {f}");
    }
    println!("summary at {}", summary_path.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::runtime(format!(
            "{} sweep cell(s) failed",
            failures.len()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_csv_round_trips() {
        let rows = vec![
            SummaryRow {
                system: "lorenz63".into(),
                seed: 3,
                points: 3000,
                trajectories: 30,
                units: 5,
                correct: 7,
                erroneous: 0,
                final_loss: 1.25e-9,
            },
            SummaryRow {
                system: "lorenz63".into(),
                seed: 1,
                points: 1000,
                trajectories: 10,
                units: 5,
                correct: 5,
                erroneous: 2,
                final_loss: 0.03,
            },
        ];
        let text = summary_to_csv(&rows);
        let back = summary_from_csv(&text).unwrap();
        assert_eq!(rows, back);
    }

    #[test]
    fn merge_summary_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        let row = SummaryRow {
            system: "four_wing".into(),
            seed: 0,
            points: 1000,
            trajectories: 10,
            units: 6,
            correct: 7,
            erroneous: 0,
            final_loss: 2e-8,
        };
        merge_summary_rows(&path, vec![row.clone()]).unwrap();
        merge_summary_rows(&path, vec![row.clone()]).unwrap();
        let rows = summary_from_csv(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn unknown_system_is_usage_error() {
        let code = run([
            "pundit", "simulate", "--system", "roessler", "--points", "100",
            "--trajectories", "2",
        ]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn simulate_writes_expected_rows() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap().to_string();
        let code = run([
            "pundit",
            "simulate",
            "--system",
            "lorenz63",
            "--trajectories",
            "10",
            "--points",
            "1000",
            "--dt",
            "0.001",
            "--seed",
            "7",
            "--out",
            &out,
        ]);
        assert_eq!(code, EXIT_OK);
        let csv = fs::read_to_string(dir.path().join("sim_lorenz63_1000_10_7/dataset.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1001); // header + 1000 samples
    }

    #[test]
    fn simulate_is_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        for dir in [&dir_a, &dir_b] {
            let out = dir.path().to_str().unwrap().to_string();
            let code = run([
                "pundit", "simulate", "--system", "four_wing", "--trajectories", "3",
                "--points", "120", "--seed", "9", "--out", &out,
            ]);
            assert_eq!(code, EXIT_OK);
        }
        let a = fs::read(dir_a.path().join("sim_four_wing_120_3_9/dataset.csv")).unwrap();
        let b = fs::read(dir_b.path().join("sim_four_wing_120_3_9/dataset.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_echo_round_trips() {
        // A short discover run; rerunning from the echoed config (no
        // flags beyond seed/out) must reproduce the model byte for byte.
        let dir = tempfile::tempdir().unwrap();
        let out1 = dir.path().join("a");
        let code = run([
            "pundit",
            "discover",
            "--system",
            "lorenz63",
            "--points",
            "200",
            "--trajectories",
            "4",
            "--units",
            "5",
            "--epochs",
            "3",
            "--seed",
            "5",
            "--out",
            out1.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
        let echo = out1.join("lorenz63_200_4_5/config_echo.toml");
        let out2 = dir.path().join("b");
        let code = run([
            "pundit",
            "discover",
            "--system",
            "lorenz63",
            "--config",
            echo.to_str().unwrap(),
            "--seed",
            "5",
            "--out",
            out2.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
        let a = fs::read(out1.join("lorenz63_200_4_5/model.json")).unwrap();
        let b = fs::read(out2.join("lorenz63_200_4_5/model.json")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_degenerate_cell_matches_discover() {
        let dir = tempfile::tempdir().unwrap();
        let sweep_path = dir.path().join("sweep.toml");
        fs::write(
            &sweep_path,
            r#"
system = "lorenz63"
points = [200]
trajectories = [4]
seeds = [5]

[train]
epochs = 3
"#,
        )
        .unwrap();
        let out_sweep = dir.path().join("sweep_out");
        let code = run([
            "pundit",
            "sweep",
            "--sweep-config",
            sweep_path.to_str().unwrap(),
            "--out",
            out_sweep.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);

        let out_disc = dir.path().join("disc_out");
        let code = run([
            "pundit",
            "discover",
            "--system",
            "lorenz63",
            "--points",
            "200",
            "--trajectories",
            "4",
            "--epochs",
            "3",
            "--seed",
            "5",
            "--out",
            out_disc.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);

        let a = fs::read(out_sweep.join("lorenz63_200_4_5/model.json")).unwrap();
        let b = fs::read(out_disc.join("lorenz63_200_4_5/model.json")).unwrap();
        assert_eq!(a, b);

        // resume: rerunning the sweep adds no duplicate rows
        let summary_before =
            fs::read_to_string(out_sweep.join("summary.csv")).unwrap();
        let code = run([
            "pundit",
            "sweep",
            "--sweep-config",
            sweep_path.to_str().unwrap(),
            "--out",
            out_sweep.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK);
        let summary_after = fs::read_to_string(out_sweep.join("summary.csv")).unwrap();
        assert_eq!(summary_before, summary_after);
    }
}
