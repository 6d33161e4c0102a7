use std::fmt::Display;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vcguard::datasets::idx::{encode_idx_images_f64, encode_idx_images_u8, write_maybe_gz};
use vcguard::datasets::{self, DataError, LabeledDataset, SweepRecord};
use vcguard::harness::{self, DetectionConfig, DetectionResult, HarnessError, SweepConfig};
use vcguard::stats::{BootstrapConfig, StatsError};
use vcguard::tinynet::{self, checkpoint, FgsmConfig, Mlp, NetError, TrainConfig, TrainTrajectory};
use vcguard::vc::{self, Normalization, VcConfig, VcError};
use vcguard::DEFAULT_SEED;

const EXIT_INPUT: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "vc-guard",
    version,
    about = "Label-free Volatility-in-Certainty monitoring for classifier outputs",
    after_help = "Exit codes: 0 success, 2 input error, 3 degenerate metric, 4 training divergence.\n\
                  Only `vc` and `correlate` work without labels; `train`, `attack`, `sweep` and `detect` read an IDX label file."
)]
struct Cli {
    /// Seed for every random choice. Printed with each run.
    #[arg(long, global = true, env = "VC_GUARD_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute VC of a probability CSV (header p0..pC-1). Needs no labels.
    Vc(VcArgs),
    /// Train the MLP on IDX images. Needs labels.
    Train(TrainArgs),
    /// Write FGSM-perturbed images in IDX3 layout. Needs labels (the attack follows the loss gradient).
    Attack(AttackArgs),
    /// Accuracy and log VC over contamination levels or FGSM epsilons. Labels feed only the accuracy column.
    Sweep(SweepArgs),
    /// Smallest contamination level whose bootstrapped log VC differs from clean (Welch t-test). Labels drive the attack.
    Detect(DetectArgs),
    /// Pearson correlation of accuracy and log VC from a records or trajectory file.
    Correlate(CorrelateArgs),
}

#[derive(Args, Debug, Clone)]
struct MetricArgs {
    /// Guard added to the lower margin of each ratio.
    #[arg(long, default_value_t = 1e-6)]
    epsilon0: f64,
    #[arg(long, default_value_t = 0.2)]
    trim_low: f64,
    #[arg(long, default_value_t = 0.8)]
    trim_high: f64,
    /// Divide by (trim_high - trim_low)·N instead of the number of included gaps.
    #[arg(long)]
    paper_normalization: bool,
}

impl MetricArgs {
    fn config(&self) -> Result<VcConfig, CliError> {
        let norm = if self.paper_normalization { Normalization::PaperLiteral } else { Normalization::CountMean };
        Ok(VcConfig::new(self.epsilon0, self.trim_low, self.trim_high, norm)?)
    }
}

#[derive(Args, Debug)]
struct VcArgs {
    #[arg(long)]
    probs: PathBuf,
    #[command(flatten)]
    metric: MetricArgs,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    train_images: PathBuf,
    #[arg(long)]
    train_labels: PathBuf,
    /// Separate validation images. Without them the last --val-size training samples are held out.
    #[arg(long, requires = "val_labels")]
    val_images: Option<PathBuf>,
    #[arg(long, requires = "val_images")]
    val_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    val_size: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    label_smoothing: f64,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_values_t = [128, 64])]
    hidden: Vec<usize>,
    /// Validation subsets scored per epoch.
    #[arg(long, default_value_t = 10)]
    val_subsets: usize,
    #[arg(long, default_value_t = 1000)]
    val_subset_size: usize,
    #[command(flatten)]
    metric: MetricArgs,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Trajectory JSON. Defaults to `<out>.trajectory.json`.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ModelData {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    labels: PathBuf,
}

impl ModelData {
    fn load(&self) -> Result<(Mlp, LabeledDataset), CliError> {
        let net = checkpoint::load(&self.model)?;
        let data = LabeledDataset::from_idx(&self.images, &self.labels)?;
        if data.dim() != net.input_dim() {
            return Err(CliError::input(format!(
                "images have {} pixels but the model expects {}",
                data.dim(),
                net.input_dim()
            )));
        }
        Ok((net, data))
    }
}

#[derive(Args, Debug, Clone)]
struct ClipArgs {
    #[arg(long, default_value_t = 0.0)]
    clip_min: f64,
    #[arg(long, default_value_t = 1.0)]
    clip_max: f64,
}

impl ClipArgs {
    fn fgsm(&self, epsilon: f64) -> Result<FgsmConfig, CliError> {
        let cfg = FgsmConfig { epsilon, clip_min: self.clip_min, clip_max: self.clip_max };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct AttackArgs {
    #[command(flatten)]
    input: ModelData,
    #[arg(long, default_value_t = 0.10)]
    epsilon: f64,
    #[command(flatten)]
    clip: ClipArgs,
    /// Quantised IDX3 output (gzip when the name ends in .gz).
    #[arg(long)]
    out: PathBuf,
    /// Unquantised f64 IDX sidecar.
    #[arg(long)]
    float_out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SweepMode {
    Contamination,
    Epsilon,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum, default_value_t = SweepMode::Contamination)]
    mode: SweepMode,
    #[command(flatten)]
    input: ModelData,
    /// Attack strength for contamination mode.
    #[arg(long, default_value_t = 0.10)]
    epsilon: f64,
    /// Epsilon schedule for epsilon mode. Defaults to 0.000, 0.002, ..., 0.030.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[command(flatten)]
    clip: ClipArgs,
    /// Samples per test set in contamination mode.
    #[arg(long, default_value_t = 1000)]
    set_size: usize,
    /// Largest number of replaced samples.
    #[arg(long, default_value_t = 100)]
    max_level: usize,
    #[arg(long, default_value_t = 5)]
    level_step: usize,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(long)]
    out: PathBuf,
    /// Output format. Inferred from the extension of --out when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[command(flatten)]
    input: ModelData,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.10)]
    epsilon: f64,
    #[command(flatten)]
    clip: ClipArgs,
    #[arg(long, default_value_t = 1000)]
    set_size: usize,
    #[arg(long, default_value_t = 100)]
    max_level: usize,
    #[arg(long, default_value_t = 5)]
    level_step: usize,
    /// Samples per bootstrap subset.
    #[arg(long, default_value_t = 200)]
    subset_size: usize,
    /// Bootstrap subsets per set.
    #[arg(long, default_value_t = 30)]
    bootstrap_trials: usize,
    #[command(flatten)]
    metric: MetricArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CorrelateArgs {
    /// Sweep records (CSV or JSON) or a training trajectory JSON.
    #[arg(long)]
    records: PathBuf,
    /// Also report the correlation above and at-or-below this accuracy.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn input(message: impl Display) -> Self {
        Self { code: EXIT_INPUT, message: message.to_string() }
    }
}

impl From<VcError> for CliError {
    fn from(e: VcError) -> Self {
        let code = match e {
            VcError::DegenerateZeroVolatility | VcError::UnguardedZeroMargin => EXIT_DEGENERATE,
            _ => EXIT_INPUT,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Matrix(v) => v.into(),
            other => CliError::input(other),
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Diverged { .. } => Self { code: EXIT_DIVERGED, message: e.to_string() },
            NetError::Vc(v) => v.into(),
            other => CliError::input(other),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        let code = match &e {
            StatsError::ZeroVariance | StatsError::DegenerateSamples => EXIT_DEGENERATE,
            StatsError::Bootstrap { source, .. } => CliError::from(source.clone()).code,
            _ => EXIT_INPUT,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Net(e) => e.into(),
            HarnessError::Data(e) => e.into(),
            HarnessError::Vc(e) => e.into(),
            HarnessError::Stats(e) => e.into(),
            other => CliError::input(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    println!("seed: {}", cli.seed);
    let seed = cli.seed;
    let result = match cli.command {
        Command::Vc(a) => cmd_vc(a),
        Command::Train(a) => cmd_train(a, seed),
        Command::Attack(a) => cmd_attack(a),
        Command::Sweep(a) => cmd_sweep(a, seed),
        Command::Detect(a) => cmd_detect(a, seed),
        Command::Correlate(a) => cmd_correlate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), datasets::format_sig17)
}

fn cmd_vc(args: VcArgs) -> Result<(), CliError> {
    let cfg = args.metric.config()?;
    let probs = datasets::read_prob_csv(&args.probs)?;
    let report = vc::vc(&probs, &cfg)?;
    println!("vc: {}", datasets::format_sig17(report.vc));
    println!("included_count: {}", report.included_count);
    println!("normalization: {}", cfg.normalization().as_str());
    if let Some(out) = &args.out {
        datasets::write_report_json(&report, out)?;
    }
    match report.log_vc {
        Some(l) => {
            println!("log_vc: {}", datasets::format_sig17(l));
            Ok(())
        }
        None => Err(VcError::DegenerateZeroVolatility.into()),
    }
}

#[derive(Serialize)]
struct TrajectoryFile<'a> {
    seed: u64,
    layer_dims: Vec<usize>,
    epochs: &'a [tinynet::EpochRecord],
}

fn cmd_train(args: TrainArgs, seed: u64) -> Result<(), CliError> {
    let full = LabeledDataset::from_idx(&args.train_images, &args.train_labels)?;
    let (train_set, val_set) = match (&args.val_images, &args.val_labels) {
        (Some(images), Some(labels)) => (full, LabeledDataset::from_idx(images, labels)?),
        _ => {
            if args.val_size == 0 || args.val_size >= full.len() {
                return Err(CliError::input(format!(
                    "--val-size {} must be in 1..{} (training samples)",
                    args.val_size,
                    full.len()
                )));
            }
            full.split_at(full.len() - args.val_size)
        }
    };

    let mut dims = vec![train_set.dim()];
    dims.extend(&args.hidden);
    dims.push(train_set.n_classes());
    let mut net = Mlp::he_uniform(&dims, seed)?;
    let cfg = TrainConfig {
        learning_rate: args.lr,
        label_smoothing: args.label_smoothing,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed,
        val_subsets: args.val_subsets,
        val_subset_size: args.val_subset_size,
        vc: args.metric.config()?,
        ..TrainConfig::default()
    };
    println!("train: {} samples, validation: {} samples, layers: {:?}", train_set.len(), val_set.len(), dims);
    let traj: TrainTrajectory = tinynet::train(&mut net, &train_set, &val_set, &cfg)?;
    for e in &traj.epochs {
        println!(
            "epoch {}: loss {:.4}, train acc {:.4}, val acc {:.4}",
            e.epoch, e.train_loss, e.train_accuracy, e.validation_accuracy
        );
    }
    if let Some(last) = traj.last() {
        println!("final validation accuracy: {}", datasets::format_sig17(last.validation_accuracy));
    }

    checkpoint::save(&net, &args.out)?;
    let traj_path = args.trajectory.unwrap_or_else(|| {
        let mut s = args.out.clone().into_os_string();
        s.push(".trajectory.json");
        PathBuf::from(s)
    });
    datasets::write_json(&TrajectoryFile { seed, layer_dims: dims, epochs: &traj.epochs }, &traj_path)?;
    println!("model: {}", args.out.display());
    println!("trajectory: {}", traj_path.display());
    Ok(())
}

fn write_images(path: &Path, images: &ndarray::Array2<f64>, quantized: bool) -> Result<(), CliError> {
    let bytes = if quantized { encode_idx_images_u8(images.view()) } else { encode_idx_images_f64(images.view()) };
    Ok(write_maybe_gz(path, &bytes)?)
}

fn cmd_attack(args: AttackArgs) -> Result<(), CliError> {
    let cfg = args.clip.fgsm(args.epsilon)?;
    let (net, data) = args.input.load()?;
    let attacked = tinynet::attack(&net, &data, &cfg)?;
    println!("clean accuracy: {}", datasets::format_sig17(tinynet::accuracy(&net, &data)?));
    println!("attacked accuracy: {}", datasets::format_sig17(tinynet::accuracy(&net, &attacked)?));
    write_images(&args.out, attacked.images(), true)?;
    if let Some(p) = &args.float_out {
        write_images(p, attacked.images(), false)?;
    }
    Ok(())
}

fn write_records(records: &[SweepRecord], out: &Path, format: Option<Format>) -> Result<(), CliError> {
    let format =
        format.unwrap_or(if out.extension().is_some_and(|e| e == "json") { Format::Json } else { Format::Csv });
    match format {
        Format::Json => datasets::write_sweep_json(records, out)?,
        Format::Csv => datasets::write_sweep_csv(records, BufWriter::new(File::create(out)?))?,
    }
    Ok(())
}

fn levels(max_level: usize, step: usize) -> Result<Vec<usize>, CliError> {
    if step == 0 {
        return Err(CliError::input("--level-step must be positive"));
    }
    Ok(harness::contamination_levels(max_level, step))
}

fn print_rho(records: &[SweepRecord]) {
    match harness::records_correlation(records) {
        Ok(c) => println!("rho: {} (n = {})", datasets::format_sig17(c.rho), c.n),
        Err(e) => {
            eprintln!("warning: correlation undefined: {e}");
            println!("rho: n/a");
        }
    }
}

fn cmd_sweep(args: SweepArgs, seed: u64) -> Result<(), CliError> {
    let vc_cfg = args.metric.config()?;
    let (net, data) = args.input.load()?;
    let records = match args.mode {
        SweepMode::Contamination => {
            let cfg = SweepConfig {
                fgsm: args.clip.fgsm(args.epsilon)?,
                set_size: args.set_size,
                levels: levels(args.max_level, args.level_step)?,
                trials: args.trials,
                seed,
                vc: vc_cfg,
            };
            harness::contamination_sweep(&net, &data, &cfg)?
        }
        SweepMode::Epsilon => {
            let eps = args.epsilons.clone().unwrap_or_else(harness::fine_epsilons);
            let clip = args.clip.fgsm(0.0)?;
            harness::epsilon_sweep(&net, &data, &eps, &clip, &vc_cfg)?
        }
    };
    write_records(&records, &args.out, args.format)?;
    println!("records: {}", records.len());
    print_rho(&records);
    Ok(())
}

#[derive(Serialize)]
struct DetectionFile<'a> {
    seed: u64,
    #[serde(flatten)]
    result: &'a DetectionResult,
}

fn cmd_detect(args: DetectArgs, seed: u64) -> Result<(), CliError> {
    let cfg = DetectionConfig {
        fgsm: args.clip.fgsm(args.epsilon)?,
        set_size: args.set_size,
        levels: levels(args.max_level, args.level_step)?.into_iter().filter(|&n| n > 0).collect(),
        alpha: args.alpha,
        bootstrap: BootstrapConfig { subset_size: args.subset_size, trials: args.bootstrap_trials },
        seed,
        vc: args.metric.config()?,
    };
    let (net, data) = args.input.load()?;
    let result = harness::detect_min_contamination(&net, &data, &cfg)?;
    println!("clean mean log_vc: {}", datasets::format_sig17(result.clean_mean_log_vc));
    println!("level\tmean_log_vc\tt\tdf\tp_value");
    for c in &result.curve {
        println!(
            "{}\t{}\t{}\t{}\t{}",
            datasets::format_sig17(c.level),
            datasets::format_sig17(c.mean_log_vc),
            datasets::format_sig17(c.t),
            datasets::format_sig17(c.df),
            datasets::format_sig17(c.p_value)
        );
    }
    match result.p_star {
        Some(p) => println!("p*: {} (alpha {})", datasets::format_sig17(p), args.alpha),
        None => println!("p*: none (alpha {})", args.alpha),
    }
    if let Some(out) = &args.out {
        datasets::write_json(&DetectionFile { seed, result: &result }, out)?;
    }
    Ok(())
}

/// Points from a trajectory JSON (an object with `epochs`) or from sweep records.
fn load_points(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(CliError::input)?;
        if value.get("epochs").is_some() {
            let traj: TrainTrajectory = serde_json::from_value(value).map_err(CliError::input)?;
            return Ok(traj.points());
        }
    }
    let records = datasets::read_sweep_records(path)?;
    Ok(records.iter().filter_map(|r| r.log_vc.map(|l| (r.accuracy, l))).collect())
}

fn cmd_correlate(args: CorrelateArgs) -> Result<(), CliError> {
    let points = load_points(&args.records)?;
    let (acc, lvc): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    match vcguard::stats::pearson(&acc, &lvc) {
        Ok(c) => println!("rho: {} (n = {})", datasets::format_sig17(c.rho), c.n),
        Err(e) => {
            eprintln!("warning: correlation undefined: {e}");
            println!("rho: n/a");
        }
    }
    if let Some(threshold) = args.threshold {
        let side = |keep: &dyn Fn(f64) -> bool| -> Option<f64> {
            let (a, l): (Vec<f64>, Vec<f64>) = points.iter().copied().filter(|(x, _)| keep(*x)).unzip();
            if a.len() < 3 {
                return None;
            }
            vcguard::stats::pearson(&a, &l)
                .inspect_err(|e| eprintln!("warning: split correlation undefined: {e}"))
                .ok()
                .map(|c| c.rho)
        };
        println!("rho above {threshold}: {}", fmt_opt(side(&|a| a > threshold)));
        println!("rho at or below {threshold}: {}", fmt_opt(side(&|a| a <= threshold)));
    }
    Ok(())
}
