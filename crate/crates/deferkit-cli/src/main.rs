//! Experiment CLI: generate data, train the policy and the cardinality
//! function, evaluate, sweep the accuracy/budget frontier, and run the
//! property suites.
//!
//! Exit codes: 0 success, 2 config/validation error, 3 numerical failure
//! (divergence), 4 verification failure. Every command writes a manifest
//! with the resolved config and artifact hashes; rerunning a command with
//! `--config <manifest>` reproduces its deterministic artifacts byte for
//! byte. `DEFERKIT_SEED` overrides the seed from any source.

mod config;
mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use deferkit::aggregation::{evaluate, CardinalityChoice, RegressionLoss};
use deferkit::datasets::{
    generate_experts, generate_gaussian_mixture, load_tabular_path, Dataset, ExpertPoolSpec,
    GaussianMixtureSpec, TabularSchema,
};
use deferkit::entities::{EntityPredictions, EntitySet, OutputKind, TaskPenalty};
use deferkit::losses::{CardinalityLossConfig, CompSumParam};
use deferkit::models::{Activation, Architecture, Checkpoint, ScoreModel};
use deferkit::training::{
    build_two_stage_regression_pool, train_cardinality, train_policy, TrainConfig,
};
use deferkit::verify::{FaultInjection, VerifyConfig};

use config::*;
use manifest::Manifest;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Verification(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Verification(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Verification(m) => m,
        }
    }
}

impl From<deferkit::Error> for CliError {
    fn from(e: deferkit::Error) -> Self {
        match &e {
            deferkit::Error::Diverged { .. } | deferkit::Error::NonFiniteScore { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "deferkit",
    about = "Cost-sensitive top-k learning-to-defer experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic classification task with an expert pool.
    Gen(GenArgs),
    /// Ingest a tabular regression CSV and build a two-stage entity pool.
    GenTabular(GenTabularArgs),
    /// Train the deferral policy (one model serves every k).
    TrainPolicy(TrainPolicyArgs),
    /// Train the per-input committee-size function against a frozen policy.
    TrainCardinality(TrainCardinalityArgs),
    /// Evaluate a trained policy at a fixed k or with a cardinality model.
    Eval(EvalArgs),
    /// Emit the accuracy/budget frontier over fixed k and a lambda grid.
    Sweep(SweepArgs),
    /// Run the seeded property suites.
    Verify(VerifyArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::GenTabular(args) => cmd_gen_tabular(args),
        Command::TrainPolicy(args) => cmd_train_policy(args),
        Command::TrainCardinality(args) => cmd_train_cardinality(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Verify(args) => cmd_verify(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}

// ---------------------------------------------------------------------------
// Shared data-directory plumbing
// ---------------------------------------------------------------------------

#[derive(serde::Serialize, serde::Deserialize)]
struct DataMeta {
    output_kind: OutputKind,
    penalty: TaskPenalty,
}

struct DataDir {
    train: Dataset,
    test: Dataset,
    set: EntitySet,
    preds: EntityPredictions,
    penalty: TaskPenalty,
}

fn load_data_dir(dir: &Path) -> Result<DataDir, CliError> {
    let meta: DataMeta = serde_json::from_reader(
        std::fs::File::open(dir.join("meta.json"))
            .map_err(|e| CliError::config(format!("cannot open {dir:?}/meta.json: {e}")))?,
    )
    .map_err(|e| CliError::config(format!("invalid meta.json: {e}")))?;
    let train = Dataset::load_csv(&dir.join("train.csv"), meta.output_kind)?;
    let test = Dataset::load_csv(&dir.join("test.csv"), meta.output_kind)?;
    let set = EntitySet::load(&dir.join("entity_set.json"))?;
    let preds = EntityPredictions::load(&dir.join("predictions.csv"), meta.output_kind)?;
    Ok(DataDir {
        train,
        test,
        set,
        preds,
        penalty: meta.penalty,
    })
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::config(format!("cannot create {path:?}: {e}")))
}

fn policy_arch(input_dim: usize, output_dim: usize, hidden: usize) -> Architecture {
    if hidden == 0 {
        Architecture::Linear {
            input_dim,
            output_dim,
        }
    } else {
        Architecture::Mlp {
            input_dim,
            hidden_dim: hidden,
            output_dim,
            activation: Activation::Tanh,
        }
    }
}

fn train_config_from(
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    momentum: f64,
    u: f64,
    validation_fraction: f64,
    seed: u64,
) -> Result<TrainConfig, CliError> {
    Ok(TrainConfig {
        epochs,
        batch_size,
        learning_rate,
        momentum,
        seed,
        u: CompSumParam::new(u)?,
        validation_fraction,
    })
}

fn load_policy(path: &Path) -> Result<ScoreModel, CliError> {
    if !path.exists() {
        return Err(CliError::config(format!(
            "policy checkpoint {path:?} does not exist"
        )));
    }
    Ok(ScoreModel::from_checkpoint(&Checkpoint::load(path)?)?)
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

#[derive(Args)]
struct GenArgs {
    /// JSON config (a bare config or a previous run manifest).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    experts: Option<usize>,
    /// Classes each expert is competent on.
    #[arg(long)]
    specialty: Option<usize>,
    /// Probability of a correct expert prediction on specialty classes.
    #[arg(long)]
    competence: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated fee schedule, most expensive expert first.
    #[arg(long, value_delimiter = ',')]
    fees: Option<Vec<f64>>,
}

fn resolve_gen(args: GenArgs) -> Result<GenConfig, CliError> {
    let mut cfg: GenConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => GenConfig::default(),
    };
    macro_rules! take {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    take!(out, classes, experts, specialty, competence, n, dim, radius, sigma, test_fraction, seed);
    if let Some(fees) = args.fees {
        cfg.fees = fees;
    }
    if let Some(seed) = seed_from_env()? {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let cfg = resolve_gen(args)?;
    ensure_dir(&cfg.out)?;
    let mixture = GaussianMixtureSpec {
        n_classes: cfg.classes,
        feature_dim: cfg.dim,
        n_examples: cfg.n,
        radius: cfg.radius,
        sigma: cfg.sigma,
        seed: cfg.seed,
    };
    let pool_spec = ExpertPoolSpec {
        n_experts: cfg.experts,
        specialty_size: cfg.specialty,
        competence: cfg.competence,
        fees: cfg.fees.clone(),
        seed: cfg.seed ^ 0x9e37_79b9,
    };
    let full = generate_gaussian_mixture(&mixture)?;
    let (set, preds, _pool) = generate_experts(&full, cfg.classes, &pool_spec)?;
    let (train, test) = full.split(cfg.test_fraction, cfg.seed ^ 0x51_7cc1)?;

    let mut manifest = Manifest::new("gen", &cfg, cfg.seed)?;
    let write = |name: &str, f: &dyn Fn(&Path) -> Result<(), CliError>| -> Result<PathBuf, CliError> {
        let path = cfg.out.join(name);
        f(&path)?;
        Ok(path)
    };
    let train_path = write("train.csv", &|p| Ok(train.save_csv(p)?))?;
    let test_path = write("test.csv", &|p| Ok(test.save_csv(p)?))?;
    let preds_path = write("predictions.csv", &|p| Ok(preds.save(p)?))?;
    let set_path = write("entity_set.json", &|p| Ok(set.save(p)?))?;
    let cond_path = write("conditionals.json", &|p| {
        let file = std::fs::File::create(p).map_err(deferkit::Error::from)?;
        Ok(full.write_conditionals_json(std::io::BufWriter::new(file))?)
    })?;
    let meta_path = write("meta.json", &|p| {
        let meta = DataMeta {
            output_kind: OutputKind::Class,
            penalty: TaskPenalty::ZeroOne,
        };
        let file = std::fs::File::create(p).map_err(deferkit::Error::from)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &meta)
            .map_err(deferkit::Error::from)?;
        Ok(())
    })?;
    for path in [&train_path, &test_path, &preds_path, &set_path, &cond_path, &meta_path] {
        manifest.record_output(path)?;
    }
    manifest.save(&cfg.out.join("manifest_gen.json"))?;
    println!(
        "generated {} train / {} test examples, |A| = {} -> {}",
        train.len(),
        test.len(),
        set.size(),
        cfg.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-tabular
// ---------------------------------------------------------------------------

#[derive(Args)]
struct GenTabularArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV with named feature and target columns.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Comma-separated feature column names.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    experts: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    fees: Option<Vec<f64>>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GenTabularConfig {
    pub csv: PathBuf,
    pub features: Vec<String>,
    pub target: String,
    pub out: PathBuf,
    pub experts: usize,
    pub fees: Vec<f64>,
    pub test_fraction: f64,
    pub seed: u64,
    pub epochs: usize,
    pub hidden: usize,
}

impl Default for GenTabularConfig {
    fn default() -> Self {
        Self {
            csv: PathBuf::from("data.csv"),
            features: Vec::new(),
            target: "target".into(),
            out: PathBuf::from("runs/tabular"),
            experts: 5,
            fees: vec![0.05, 0.045, 0.040, 0.035, 0.03],
            test_fraction: 0.2,
            seed: 7,
            epochs: 80,
            hidden: 32,
        }
    }
}

fn cmd_gen_tabular(args: GenTabularArgs) -> Result<(), CliError> {
    let mut cfg: GenTabularConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => GenTabularConfig::default(),
    };
    macro_rules! take {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    take!(csv, features, target, out, experts, fees, test_fraction, seed, epochs, hidden);
    if let Some(seed) = seed_from_env()? {
        cfg.seed = seed;
    }
    if cfg.features.is_empty() {
        return Err(CliError::config("at least one feature column is required"));
    }
    ensure_dir(&cfg.out)?;

    let schema = TabularSchema {
        feature_columns: cfg.features.clone(),
        target_column: cfg.target.clone(),
        test_fraction: cfg.test_fraction,
        seed: cfg.seed,
    };
    let (train, test, stats) = load_tabular_path(&cfg.csv, &schema)?;
    let mut full = train.clone();
    full.examples.extend(test.examples.iter().cloned());
    let entity_train = TrainConfig {
        epochs: cfg.epochs,
        batch_size: 64,
        learning_rate: 0.02,
        momentum: 0.9,
        seed: cfg.seed,
        u: CompSumParam::LOGISTIC,
        validation_fraction: 0.15,
    };
    let (set, preds) = build_two_stage_regression_pool(
        &train,
        &full,
        cfg.experts,
        &cfg.fees,
        cfg.hidden,
        &entity_train,
    )?;

    let mut manifest = Manifest::new("gen-tabular", &cfg, cfg.seed)?;
    manifest.record_input(&cfg.csv)?;
    let train_path = cfg.out.join("train.csv");
    train.save_csv(&train_path)?;
    let test_path = cfg.out.join("test.csv");
    test.save_csv(&test_path)?;
    let preds_path = cfg.out.join("predictions.csv");
    preds.save(&preds_path)?;
    let set_path = cfg.out.join("entity_set.json");
    set.save(&set_path)?;
    let meta_path = cfg.out.join("meta.json");
    {
        let meta = DataMeta {
            output_kind: OutputKind::Real,
            penalty: TaskPenalty::SquaredError,
        };
        let file = std::fs::File::create(&meta_path).map_err(deferkit::Error::from)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &meta)
            .map_err(deferkit::Error::from)?;
    }
    let stats_path = cfg.out.join("column_stats.json");
    {
        let file = std::fs::File::create(&stats_path).map_err(deferkit::Error::from)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &stats)
            .map_err(deferkit::Error::from)?;
    }
    for path in [&train_path, &test_path, &preds_path, &set_path, &meta_path, &stats_path] {
        manifest.record_output(path)?;
    }
    manifest.save(&cfg.out.join("manifest_gen_tabular.json"))?;
    println!(
        "ingested {} train / {} test rows, |A| = {} -> {}",
        train.len(),
        test.len(),
        set.size(),
        cfg.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train-policy
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TrainPolicyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory produced by gen / gen-tabular.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    /// Comp-sum family parameter (1 = logistic).
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// Hidden width; 0 trains a linear scorer.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_train_policy(args: TrainPolicyArgs) -> Result<(), CliError> {
    let mut cfg: TrainPolicyConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => TrainPolicyConfig::default(),
    };
    macro_rules! take {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    take!(data, out, epochs, batch_size, learning_rate, momentum, u, validation_fraction, hidden, seed);
    if let Some(seed) = seed_from_env()? {
        cfg.seed = seed;
    }
    ensure_dir(&cfg.out)?;
    let data = load_data_dir(&cfg.data)?;
    let arch = policy_arch(data.train.feature_dim, data.set.size(), cfg.hidden);
    let train_cfg = train_config_from(
        cfg.epochs,
        cfg.batch_size,
        cfg.learning_rate,
        cfg.momentum,
        cfg.u,
        cfg.validation_fraction,
        cfg.seed,
    )?;
    println!(
        "training policy on {} examples (|A| = {}, {} parameters)",
        data.train.len(),
        data.set.size(),
        arch.param_count()
    );
    let (model, log) = train_policy(
        &data.train,
        &data.set,
        &data.preds,
        data.penalty,
        arch,
        &train_cfg,
    )?;
    let ckpt_path = cfg.out.join("policy.json");
    model.to_checkpoint(cfg.seed).save(&ckpt_path)?;
    let log_path = cfg.out.join("policy_log.csv");
    log.write_csv(std::fs::File::create(&log_path).map_err(deferkit::Error::from)?)?;
    let mut manifest = Manifest::new("train-policy", &cfg, cfg.seed)?;
    for input in ["train.csv", "entity_set.json", "predictions.csv"] {
        manifest.record_input(&cfg.data.join(input))?;
    }
    manifest.record_output(&ckpt_path)?;
    manifest.record_log(&log_path);
    manifest.save(&cfg.out.join("manifest_train_policy.json"))?;
    println!(
        "best epoch {} (val surrogate {:.6}) -> {}",
        log.best_epoch,
        log.records[log.best_epoch - 1].val_surrogate,
        ckpt_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train-cardinality
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TrainCardinalityArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Trained policy checkpoint (required input).
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Aggregation metric d: top_k_membership, majority_vote, ...
    #[arg(long)]
    rule: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Budget transform: identity, sqrt, log1p.
    #[arg(long)]
    xi: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_train_cardinality(args: TrainCardinalityArgs) -> Result<(), CliError> {
    let mut cfg: TrainCardinalityConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => TrainCardinalityConfig::default(),
    };
    macro_rules! take {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    take!(data, policy, out, rule, lambda, xi, epochs, batch_size, learning_rate, momentum, u, validation_fraction, hidden, seed);
    if let Some(seed) = seed_from_env()? {
        cfg.seed = seed;
    }
    ensure_dir(&cfg.out)?;
    let data = load_data_dir(&cfg.data)?;
    let policy = load_policy(&cfg.policy)?;
    let card_config = CardinalityLossConfig::new(
        parse_rule(&cfg.rule)?,
        RegressionLoss::Squared,
        cfg.lambda,
        parse_xi(&cfg.xi)?,
    )?;
    let arch = policy_arch(data.train.feature_dim, data.set.size(), cfg.hidden);
    let train_cfg = train_config_from(
        cfg.epochs,
        cfg.batch_size,
        cfg.learning_rate,
        cfg.momentum,
        cfg.u,
        cfg.validation_fraction,
        cfg.seed,
    )?;
    println!(
        "training cardinality function (rule {}, lambda {})",
        cfg.rule, cfg.lambda
    );
    let (model, log) = train_cardinality(
        &data.train,
        &policy,
        &data.set,
        &data.preds,
        &card_config,
        arch,
        &train_cfg,
    )?;
    let ckpt_path = cfg.out.join("cardinality.json");
    model.to_checkpoint(cfg.seed).save(&ckpt_path)?;
    let log_path = cfg.out.join("cardinality_log.csv");
    log.write_csv(std::fs::File::create(&log_path).map_err(deferkit::Error::from)?)?;
    let mut manifest = Manifest::new("train-cardinality", &cfg, cfg.seed)?;
    for input in ["train.csv", "entity_set.json", "predictions.csv"] {
        manifest.record_input(&cfg.data.join(input))?;
    }
    manifest.record_input(&cfg.policy)?;
    manifest.record_output(&ckpt_path)?;
    manifest.record_log(&log_path);
    manifest.save(&cfg.out.join("manifest_train_cardinality.json"))?;
    println!(
        "best epoch {} -> {}",
        log.best_epoch,
        ckpt_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Fixed committee size (mutually exclusive with --cardinality).
    #[arg(long)]
    k: Option<usize>,
    /// Cardinality-model checkpoint for adaptive committee sizes.
    #[arg(long)]
    cardinality: Option<PathBuf>,
    #[arg(long)]
    rule: Option<String>,
    /// Which split to score: train or test.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let mut cfg: EvalConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => EvalConfig::default(),
    };
    macro_rules! take {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    take!(data, policy, rule, split, out, seed);
    if args.k.is_some() {
        cfg.k = args.k;
        cfg.cardinality = None;
    }
    if let Some(card) = args.cardinality {
        cfg.cardinality = Some(card);
        cfg.k = None;
    }
    if let Some(seed) = seed_from_env()? {
        cfg.seed = seed;
    }
    let data = load_data_dir(&cfg.data)?;
    let policy = load_policy(&cfg.policy)?;
    let rule = parse_rule(&cfg.rule)?;
    if rule.is_classification() != matches!(data.penalty, TaskPenalty::ZeroOne) {
        return Err(CliError::config(format!(
            "rule {} does not match the dataset's output space",
            cfg.rule
        )));
    }
    let dataset = match cfg.split.as_str() {
        "train" => &data.train,
        "test" => &data.test,
        other => {
            return Err(CliError::config(format!(
                "unknown split {other:?} (expected train or test)"
            )))
        }
    };
    let card_model = match (&cfg.k, &cfg.cardinality) {
        (Some(_), None) => None,
        (None, Some(path)) => Some(load_policy(path)?),
        (None, None) => {
            return Err(CliError::config(
                "one of --k or --cardinality is required",
            ))
        }
        (Some(_), Some(_)) => {
            return Err(CliError::config(
                "--k and --cardinality are mutually exclusive",
            ))
        }
    };
    let choice = match (&cfg.k, &card_model) {
        (Some(k), _) => CardinalityChoice::Fixed(*k),
        (None, Some(model)) => CardinalityChoice::Adaptive(model),
        _ => unreachable!(),
    };
    let report = evaluate(
        dataset,
        &data.preds,
        &data.set,
        &policy,
        &choice,
        rule,
        RegressionLoss::Squared,
        cfg.seed,
    )?;
    if let Some(parent) = cfg.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    let file = std::fs::File::create(&cfg.out).map_err(deferkit::Error::from)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &report)
        .map_err(deferkit::Error::from)?;
    let mut manifest = Manifest::new("eval", &cfg, cfg.seed)?;
    manifest.record_input(&cfg.policy)?;
    manifest.record_output(&cfg.out)?;
    let manifest_path = cfg
        .out
        .with_file_name(format!(
            "manifest_eval_{}.json",
            cfg.out.file_stem().and_then(|s| s.to_str()).unwrap_or("report")
        ));
    manifest.save(&manifest_path)?;
    println!(
        "{} = {:.5} (k_bar {:.3}, budget {:.4}) -> {}",
        report.metric_name,
        report.value,
        report.k_bar,
        report.budget_bar,
        cfg.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    rule: Option<String>,
    #[arg(long)]
    xi: Option<String>,
    /// Comma-separated lambda grid for the adaptive rows.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    u: Option<f64>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel cardinality trainings.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct FrontierRow {
    pub k_or_lambda: String,
    pub budget_bar: f64,
    pub k_bar: f64,
    pub metric: f64,
}

/// Fixed-k rows followed by one adaptive row per lambda. Exposed for the
/// acceptance suite, which inspects the frontier directly.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<FrontierRow>, CliError> {
    let data = load_data_dir(&cfg.data)?;
    let policy = load_policy(&cfg.policy)?;
    let rule = parse_rule(&cfg.rule)?;
    let xi = parse_xi(&cfg.xi)?;
    let mut rows = Vec::new();
    for k in 1..=data.set.size() {
        let report = evaluate(
            &data.test,
            &data.preds,
            &data.set,
            &policy,
            &CardinalityChoice::Fixed(k),
            rule,
            RegressionLoss::Squared,
            cfg.seed,
        )?;
        rows.push(FrontierRow {
            k_or_lambda: format!("k={k}"),
            budget_bar: report.budget_bar,
            k_bar: report.k_bar,
            metric: report.value,
        });
    }
    let arch = policy_arch(data.train.feature_dim, data.set.size(), cfg.hidden);
    let train_cfg = train_config_from(
        cfg.epochs,
        cfg.batch_size,
        cfg.learning_rate,
        cfg.momentum,
        cfg.u,
        cfg.validation_fraction,
        cfg.seed,
    )?;
    let workers = cfg.threads.max(1);
    let mut adaptive: Vec<Option<FrontierRow>> = vec![None; cfg.lambdas.len()];
    for chunk_start in (0..cfg.lambdas.len()).step_by(workers) {
        let chunk_end = (chunk_start + workers).min(cfg.lambdas.len());
        let results: Vec<Result<FrontierRow, CliError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (chunk_start..chunk_end)
                .map(|i| {
                    let lambda = cfg.lambdas[i];
                    let data = &data;
                    let policy = &policy;
                    let train_cfg = &train_cfg;
                    scope.spawn(move || -> Result<FrontierRow, CliError> {
                        let card_config = CardinalityLossConfig::new(
                            rule,
                            RegressionLoss::Squared,
                            lambda,
                            xi,
                        )?;
                        let (card, _) = train_cardinality(
                            &data.train,
                            policy,
                            &data.set,
                            &data.preds,
                            &card_config,
                            arch,
                            train_cfg,
                        )?;
                        let report = evaluate(
                            &data.test,
                            &data.preds,
                            &data.set,
                            policy,
                            &CardinalityChoice::Adaptive(&card),
                            rule,
                            RegressionLoss::Squared,
                            cfg.seed,
                        )?;
                        Ok(FrontierRow {
                            k_or_lambda: format!("lambda={lambda}"),
                            budget_bar: report.budget_bar,
                            k_bar: report.k_bar,
                            metric: report.value,
                        })
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        });
        for (offset, result) in results.into_iter().enumerate() {
            adaptive[chunk_start + offset] = Some(result?);
        }
    }
    rows.extend(adaptive.into_iter().map(|r| r.expect("all lambdas run")));
    Ok(rows)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let mut cfg: SweepConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => SweepConfig::default(),
    };
    macro_rules! take {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    take!(data, policy, out, rule, xi, lambdas, epochs, batch_size, learning_rate, momentum, u, validation_fraction, hidden, seed, threads);
    if let Some(seed) = seed_from_env()? {
        cfg.seed = seed;
    }
    ensure_dir(&cfg.out)?;
    let rows = run_sweep(&cfg)?;
    let csv_path = cfg.out.join("frontier.csv");
    {
        use std::io::Write;
        let mut file =
            std::io::BufWriter::new(std::fs::File::create(&csv_path).map_err(deferkit::Error::from)?);
        writeln!(file, "k_or_lambda,budget_bar,k_bar,metric").map_err(deferkit::Error::from)?;
        for row in &rows {
            writeln!(
                file,
                "{},{:?},{:?},{:?}",
                row.k_or_lambda, row.budget_bar, row.k_bar, row.metric
            )
            .map_err(deferkit::Error::from)?;
        }
    }
    let mut manifest = Manifest::new("sweep", &cfg, cfg.seed)?;
    manifest.record_input(&cfg.policy)?;
    manifest.record_output(&csv_path)?;
    manifest.save(&cfg.out.join("manifest_sweep.json"))?;
    println!("{} frontier rows -> {}", rows.len(), csv_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated substrings selecting which suites run.
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
    /// Testing hook: deliberately lower one bound so the checker reports
    /// a counterexample.
    #[arg(long)]
    inject_fault: bool,
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    let mut cfg: VerifyCmdConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => VerifyCmdConfig::default(),
    };
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(checks) = args.checks {
        cfg.checks = checks;
    }
    if args.inject_fault {
        cfg.inject_fault = true;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(seed) = seed_from_env()? {
        cfg.seed = seed;
    }
    let verify_cfg = VerifyConfig {
        seed: cfg.seed,
        only: cfg.checks.clone(),
        fault: if cfg.inject_fault {
            FaultInjection::LowerUpperBound
        } else {
            FaultInjection::None
        },
    };
    let report = deferkit::verify::run(&verify_cfg)?;
    for check in &report.checks {
        println!(
            "{:<18} {} ({} cases, {} failures)",
            check.check,
            if check.passed { "pass" } else { "FAIL" },
            check.cases,
            check.failures
        );
        for ce in &check.counterexamples {
            println!("    counterexample: {ce}");
        }
    }
    if let Some(parent) = cfg.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    let file = std::fs::File::create(&cfg.out).map_err(deferkit::Error::from)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &report)
        .map_err(deferkit::Error::from)?;
    let mut manifest = Manifest::new("verify", &cfg, cfg.seed)?;
    manifest.record_output(&cfg.out)?;
    manifest.save(&cfg.out.with_file_name("manifest_verify.json"))?;
    if !report.all_passed {
        return Err(CliError::Verification(
            "one or more property suites failed".into(),
        ));
    }
    println!("all property suites passed -> {}", cfg.out.display());
    Ok(())
}
