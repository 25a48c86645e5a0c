//! Command-line surface: train, calibrate, bounds, attack, smooth,
//! verify-masking, and report inspection.
//!
//! Every command validates its referenced paths before any long computation
//! starts, echoes its configuration into the report payload, and derives all
//! randomness from `--seed` (defaulting to the `FORGENET_SEED` environment
//! variable), so a fixed seed reproduces report payloads byte for byte.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O or parse error,
//! 4 numeric failure, 5 contract violation.

use crate::attack::{self, AttackConfig, AttackKind};
use crate::data::{self, Dataset, Split};
use crate::error::{Error, Result};
use crate::lipschitz;
use crate::masking;
use crate::net::{self, io as model_io, InsertPolicy, Model};
use crate::report::{fmt_f64, Report, Verdict};
use crate::smoothing::{self, SmoothingConfig};
use crate::train::{self, Optimizer, TrainConfig};
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "forgenet",
    version,
    about = "Post-hoc activation-threshold hardening, bound analysis, and attack/certification protocols for small neural networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model (optionally with PGD adversarial training).
    Train(TrainArgs),
    /// Insert threshold layers and calibrate them by scanning a dataset.
    Calibrate(CalibrateArgs),
    /// Per-layer spectral/Gershgorin/empirical bound report.
    Bounds(BoundsArgs),
    /// Run attacks or epsilon sweeps against a model.
    Attack(AttackArgs),
    /// Randomized-smoothing certification curve.
    Smooth(SmoothArgs),
    /// Five-point gradient-masking checklist over an original/forged pair.
    VerifyMasking(VerifyArgs),
    /// Inspect a report file; optionally export its tables as CSV.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct DataOpt {
    /// Dataset spec: `blobs:classes=3,dim=2,count=200,separation=6` or
    /// `idx:IMAGES,LABELS`.
    #[arg(long)]
    data: String,
    /// Keep only the first N samples.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataOpt,
    /// Held-out dataset spec for per-epoch test accuracy.
    #[arg(long)]
    test_data: Option<String>,
    /// Architecture: `mlp:D0,D1,...`, `linear:IN,CLASSES`, `mlp-mnist`,
    /// or `cnn-mnist`.
    #[arg(long)]
    arch: String,
    /// Hidden activation for mlp/linear architectures.
    #[arg(long, default_value = "relu")]
    activation: String,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// `sgd` or `sgd-momentum`.
    #[arg(long, default_value = "sgd")]
    optimizer: String,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    /// Replace each batch with PGD adversaries against the current weights.
    #[arg(long)]
    adversarial: bool,
    /// Attack radius for adversarial training.
    #[arg(long, default_value_t = 8.0 / 255.0)]
    epsilon: f64,
    /// Inner PGD steps for adversarial training.
    #[arg(long, default_value_t = 7)]
    steps: usize,
    #[arg(long, env = "FORGENET_SEED", default_value_t = 0)]
    seed: u64,
    /// Output model path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataOpt,
    /// Single threshold ratio; when absent the grid is used.
    #[arg(long)]
    c_ratio: Option<f64>,
    /// Comma-separated threshold-ratio grid.
    #[arg(long, default_value = "0.00390625,0.0078125,0.015625")]
    c_ratio_grid: String,
    /// Insertion policy: `all` or `indices:K0,K1,...` (k-th linear layers).
    #[arg(long, default_value = "all")]
    policy: String,
    /// Calibrate on a seeded random subset of this many samples.
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long, env = "FORGENET_SEED", default_value_t = 0)]
    seed: u64,
    /// Output model path; grid runs append `-cr<ratio>` to the stem.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataOpt,
    /// Emit one masked-vs-unmasked row per sample and layer.
    #[arg(long)]
    per_sample: bool,
    #[arg(long, env = "FORGENET_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataOpt,
    /// Comma-separated kinds: fgsm, pgd, pgd-margin, random-search.
    #[arg(long, default_value = "pgd")]
    kinds: String,
    #[arg(long, default_value_t = 8.0 / 255.0)]
    epsilon: f64,
    /// Comma-separated radii; `default` selects 1,2,4,8,16,32,64,96 over 255.
    #[arg(long)]
    epsilon_grid: Option<String>,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long)]
    step_size: Option<f64>,
    /// Dump adversarial examples as a dataset file.
    #[arg(long)]
    dump_adv: Option<PathBuf>,
    #[arg(long, env = "FORGENET_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SmoothArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataOpt,
    #[arg(long, default_value_t = 0.25)]
    sigma: f64,
    #[arg(long, default_value_t = 100)]
    n0: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.001)]
    alpha: f64,
    /// Comma-separated non-decreasing certification radii.
    #[arg(long, default_value = "0,0.05,0.1,0.15,0.2,0.25,0.3,0.4,0.5")]
    radii: String,
    /// Per-sample certificate CSV (index, class, radius, p_lower).
    #[arg(long)]
    certificates: Option<PathBuf>,
    #[arg(long, env = "FORGENET_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    forged: PathBuf,
    #[command(flatten)]
    data: DataOpt,
    /// Radius for the fixed-epsilon sections (1 and 4).
    #[arg(long, default_value_t = 8.0 / 255.0)]
    epsilon: f64,
    /// Comma-separated sweep radii; defaults to the 1..96 over 255 grid.
    #[arg(long)]
    epsilon_grid: Option<String>,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// Seeds for the statistical white-box-vs-black-box comparison.
    #[arg(long, default_value_t = 5)]
    attack_seeds: u64,
    #[arg(long, default_value_t = 0.25)]
    sigma: f64,
    #[arg(long, default_value_t = 32)]
    n0: usize,
    #[arg(long, default_value_t = 128)]
    n: usize,
    #[arg(long, default_value_t = 0.001)]
    alpha: f64,
    #[arg(long, default_value = "0,0.05,0.1,0.15,0.2,0.25,0.3")]
    radii: String,
    #[arg(long, env = "FORGENET_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    report: PathBuf,
    /// Export every table as CSV next to the report (or into --out-dir).
    #[arg(long)]
    csv: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Entry point used by the binary.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Entry point usable from tests; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Smooth(args) => cmd_smooth(args),
        Command::VerifyMasking(args) => cmd_verify_masking(args),
        Command::Report(args) => cmd_report(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("path not found: {}", path.display()),
        )))
    }
}

fn prepare_output(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

/// Checks a dataset spec's file references without loading anything.
fn validate_data_spec(spec: &str) -> Result<()> {
    if let Some(rest) = spec.strip_prefix("idx:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::Config(format!(
                "idx spec needs `idx:IMAGES,LABELS`, got `{spec}`"
            )));
        }
        require_file(Path::new(parts[0]))?;
        require_file(Path::new(parts[1]))?;
        Ok(())
    } else if spec.starts_with("blobs:") {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "unknown dataset spec `{spec}` (expected blobs:... or idx:...)"
        )))
    }
}

fn parse_data_spec(spec: &str, split: Split, default_seed: u64) -> Result<Dataset> {
    if let Some(rest) = spec.strip_prefix("blobs:") {
        let mut classes = 3usize;
        let mut dim = 2usize;
        let mut count = 200usize;
        let mut separation = 6.0f64;
        let mut seed = default_seed;
        for pair in rest.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad blobs option `{pair}`")))?;
            match k {
                "classes" => classes = parse_cfg(v, "classes")?,
                "dim" => dim = parse_cfg(v, "dim")?,
                "count" => count = parse_cfg(v, "count")?,
                "separation" => separation = parse_cfg(v, "separation")?,
                "seed" => seed = parse_cfg(v, "seed")?,
                other => {
                    return Err(Error::Config(format!("unknown blobs option `{other}`")));
                }
            }
        }
        data::synth_blobs(classes, dim, count, separation, seed, split)
    } else if let Some(rest) = spec.strip_prefix("idx:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 2 {
            return Err(Error::Config(format!(
                "idx spec needs `idx:IMAGES,LABELS`, got `{spec}`"
            )));
        }
        data::load_idx(Path::new(parts[0]), Path::new(parts[1]), split)
    } else {
        Err(Error::Config(format!("unknown dataset spec `{spec}`")))
    }
}

fn parse_cfg<T: std::str::FromStr>(v: &str, what: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid {what} `{v}`")))
}

fn load_data(opt: &DataOpt, split: Split, seed: u64) -> Result<Dataset> {
    let ds = parse_data_spec(&opt.data, split, seed)?;
    Ok(match opt.limit {
        Some(n) => ds.truncated(n),
        None => ds,
    })
}

fn parse_float_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid {what} entry `{t}`")))
        })
        .collect()
}

fn parse_epsilon_grid(arg: &Option<String>) -> Result<Vec<f64>> {
    match arg.as_deref() {
        None | Some("default") => Ok(attack::default_epsilon_grid()),
        Some(text) => parse_float_list(text, "epsilon grid"),
    }
}

fn parse_activation(name: &str) -> Result<net::presets::Activation> {
    match name {
        "relu" => Ok(net::presets::Activation::Relu),
        "silu" => Ok(net::presets::Activation::Silu),
        "gelu" => Ok(net::presets::Activation::Gelu),
        other => Err(Error::Config(format!("unknown activation `{other}`"))),
    }
}

fn build_arch(arch: &str, activation: &str, seed: u64) -> Result<Model> {
    match arch {
        "mlp-mnist" => Ok(net::presets::mlp_mnist(seed)),
        "cnn-mnist" => Ok(net::presets::cnn_mnist(seed)),
        _ => {
            let act = parse_activation(activation)?;
            if let Some(rest) = arch.strip_prefix("mlp:") {
                let dims: Vec<usize> = rest
                    .split(',')
                    .map(|t| parse_cfg(t, "mlp extent"))
                    .collect::<Result<_>>()?;
                net::presets::mlp("mlp", &dims, act, seed)
            } else if let Some(rest) = arch.strip_prefix("linear:") {
                let dims: Vec<usize> = rest
                    .split(',')
                    .map(|t| parse_cfg(t, "linear extent"))
                    .collect::<Result<_>>()?;
                if dims.len() != 2 {
                    return Err(Error::Config(
                        "linear arch needs exactly `linear:IN,CLASSES`".into(),
                    ));
                }
                net::presets::mlp("linear", &dims, act, seed)
            } else {
                Err(Error::Config(format!("unknown architecture `{arch}`")))
            }
        }
    }
}

fn parse_policy(text: &str) -> Result<InsertPolicy> {
    if text == "all" {
        return Ok(InsertPolicy::All);
    }
    if let Some(rest) = text.strip_prefix("indices:") {
        // An empty list is legal here; insertion reports it as the
        // empty-insertion contract violation.
        let ks: Vec<usize> = rest
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| parse_cfg(t, "policy index"))
            .collect::<Result<_>>()?;
        return Ok(InsertPolicy::LinearIndices(ks));
    }
    Err(Error::Config(format!(
        "unknown policy `{text}` (expected `all` or `indices:K,...`)"
    )))
}

fn write_report(report: &Report, path: &Option<PathBuf>, started: Instant) -> Result<()> {
    if let Some(path) = path {
        report.write_file(path, started.elapsed().as_millis())?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let started = Instant::now();
    validate_data_spec(&args.data.data)?;
    if let Some(spec) = &args.test_data {
        validate_data_spec(spec)?;
    }
    prepare_output(&args.out)?;
    if let Some(r) = &args.report {
        prepare_output(r)?;
    }

    let train_ds = load_data(&args.data, Split::Train, args.seed)?;
    let test_ds = args
        .test_data
        .as_ref()
        .map(|spec| parse_data_spec(spec, Split::Test, args.seed))
        .transpose()?;
    let model = build_arch(&args.arch, &args.activation, args.seed)?;
    if let Some(shape) = train_ds.sample_shape() {
        if shape != model.meta.input_shape {
            return Err(Error::dimension(
                "training data vs model input",
                format!("{:?}", model.meta.input_shape),
                format!("{shape:?}"),
            ));
        }
    }

    let optimizer = match args.optimizer.as_str() {
        "sgd" => Optimizer::Sgd,
        "sgd-momentum" => Optimizer::SgdMomentum(args.momentum),
        other => return Err(Error::Config(format!("unknown optimizer `{other}`"))),
    };
    let adversarial = args.adversarial.then(|| {
        AttackConfig::new(AttackKind::Pgd, args.epsilon)
            .with_steps(args.steps)
            .with_seed(args.seed)
    });
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        optimizer,
        adversarial,
        seed: args.seed,
    };

    let (trained, curve) = train::train(&model, &train_ds, test_ds.as_ref(), &config)?;
    model_io::save_model(&trained, &args.out)?;

    let mut report = Report::new("train");
    report
        .kv("seed", args.seed)
        .kv("arch", &args.arch)
        .kv("data", &train_ds.provenance)
        .kv("adversarial", args.adversarial)
        .kv("epochs", args.epochs)
        .kv("batch_size", args.batch_size)
        .kv("lr", fmt_f64(args.lr))
        .kv("model_out", args.out.display());
    let provenance = format!(
        "arch={} data={} seed={} lr={} adversarial={}",
        args.arch, train_ds.provenance, args.seed, args.lr, args.adversarial
    );
    let section = report.section("training");
    let table = section.table(
        "loss-curve",
        &provenance,
        &["epoch", "mean_loss", "train_accuracy", "test_accuracy"],
    );
    for stat in &curve {
        table.push_row(vec![
            stat.epoch.to_string(),
            fmt_f64(stat.mean_loss),
            fmt_f64(stat.train_accuracy),
            stat.test_accuracy.map(fmt_f64).unwrap_or_else(|| "-".into()),
        ]);
    }
    let last = curve.last().expect("at least one epoch");
    println!(
        "trained {} for {} epochs: train accuracy {:.4}{}",
        args.arch,
        args.epochs,
        last.train_accuracy,
        last.test_accuracy
            .map(|a| format!(", test accuracy {a:.4}"))
            .unwrap_or_default()
    );
    println!("model written to {}", args.out.display());
    write_report(&report, &args.report, started)
}

/// Suffixes the file stem with the ratio for grid outputs.
fn grid_out_path(base: &Path, c_ratio: f64) -> PathBuf {
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let ext = base
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    base.with_file_name(format!("{stem}-cr{}{ext}", fmt_f64(c_ratio)))
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let started = Instant::now();
    require_file(&args.model)?;
    validate_data_spec(&args.data.data)?;
    prepare_output(&args.out)?;
    if let Some(r) = &args.report {
        prepare_output(r)?;
    }

    let base = model_io::load_model(&args.model)?;
    let policy = parse_policy(&args.policy)?;
    let full_data = load_data(&args.data, Split::Train, args.seed)?;
    let data = match args.subset {
        Some(n) => full_data.sampled_subset(n, args.seed),
        None => full_data,
    };

    let grid: Vec<f64> = match args.c_ratio {
        Some(c) => vec![c],
        None => parse_float_list(&args.c_ratio_grid, "c_ratio grid")?,
    };
    if grid.is_empty() {
        return Err(Error::Config("empty c_ratio grid".into()));
    }

    let mut report = Report::new("calibrate");
    report
        .kv("seed", args.seed)
        .kv("model_in", args.model.display())
        .kv("data", &data.provenance)
        .kv("policy", &args.policy)
        .kv("grid", grid.iter().map(|c| fmt_f64(*c)).collect::<Vec<_>>().join(","));

    for &c_ratio in &grid {
        let mut forged = base.insert_forge(&policy)?;
        forged.set_c_ratio(c_ratio)?;
        let stats = train::calibrate_forge(&mut forged, &data)?;
        let out_path = if grid.len() == 1 {
            args.out.clone()
        } else {
            grid_out_path(&args.out, c_ratio)
        };
        model_io::save_model(&forged, &out_path)?;

        let section = report.section(&format!("calibration-cr{}", fmt_f64(c_ratio)));
        section
            .kv("c_ratio", fmt_f64(c_ratio))
            .kv("model_out", out_path.display())
            .kv("forward_passes", stats.forward_passes)
            .kv("backward_passes", stats.backward_passes);
        let provenance = format!(
            "model={} data={} c_ratio={} seed={}",
            args.model.display(),
            data.provenance,
            fmt_f64(c_ratio),
            args.seed
        );
        let table = section.table("thresholds", &provenance, &["layer", "b", "c_th"]);
        for (layer, b, c_th) in &stats.per_layer {
            table.push_row(vec![layer.to_string(), fmt_f64(*b), fmt_f64(*c_th)]);
        }
        println!(
            "calibrated c_ratio={} over {} samples ({} threshold layers, {} backward passes) -> {}",
            fmt_f64(c_ratio),
            data.len(),
            stats.per_layer.len(),
            stats.backward_passes,
            out_path.display()
        );
    }
    write_report(&report, &args.report, started)
}

fn cmd_bounds(args: BoundsArgs) -> Result<()> {
    let started = Instant::now();
    require_file(&args.model)?;
    validate_data_spec(&args.data.data)?;
    if let Some(r) = &args.report {
        prepare_output(r)?;
    }

    let model = model_io::load_model(&args.model)?;
    let data = load_data(&args.data, Split::Test, args.seed)?;
    let bound_report = lipschitz::layer_bound_report(&model, &data.inputs, args.per_sample)?;

    let mut report = Report::new("bounds");
    report
        .kv("seed", args.seed)
        .kv("model", args.model.display())
        .kv("data", &data.provenance)
        .kv("product_bound", fmt_f64(bound_report.product_bound));
    let provenance = format!(
        "model={} data={} seed={}",
        args.model.display(),
        data.provenance,
        args.seed
    );
    let section = report.section("bounds");
    for f in &bound_report.activation_factors {
        section.note(format!(
            "layer {} ({}) contributes external Lipschitz constant {}",
            f.layer_index, f.kind, f.constant
        ));
    }
    let table = section.table(
        "layers",
        &provenance,
        &[
            "layer",
            "form",
            "sigma_max",
            "converged",
            "gershgorin",
            "empirical",
            "masked_mean",
            "masked_max",
            "masked_violations",
        ],
    );
    for lb in &bound_report.layers {
        let (mm, mx, viol) = lb
            .masked
            .as_ref()
            .map(|m| (fmt_f64(m.mean), fmt_f64(m.max), m.violations.to_string()))
            .unwrap_or_else(|| ("-".into(), "-".into(), "-".into()));
        table.push_row(vec![
            lb.layer_index.to_string(),
            lb.form.label().to_string(),
            fmt_f64(lb.spectral.value),
            lb.spectral.converged.to_string(),
            fmt_f64(lb.gershgorin),
            lb.empirical.map(fmt_f64).unwrap_or_else(|| "-".into()),
            mm,
            mx,
            viol,
        ]);
    }
    if args.per_sample {
        let table = section.table(
            "per-sample",
            &provenance,
            &["layer", "sample", "masked_bound", "unmasked_bound"],
        );
        for lb in &bound_report.layers {
            for (s, masked, unmasked) in &lb.per_sample {
                table.push_row(vec![
                    lb.layer_index.to_string(),
                    s.to_string(),
                    fmt_f64(*masked),
                    fmt_f64(*unmasked),
                ]);
            }
        }
    }

    println!("product bound: {}", fmt_f64(bound_report.product_bound));
    for lb in &bound_report.layers {
        println!(
            "layer {:>2} ({}): sigma={:.6} gershgorin={:.6}{}{}",
            lb.layer_index,
            lb.form.label(),
            lb.spectral.value,
            lb.gershgorin,
            lb.empirical
                .map(|e| format!(" empirical={e:.6}"))
                .unwrap_or_default(),
            lb.masked
                .as_ref()
                .map(|m| format!(" masked mean={:.6} max={:.6} violations={}", m.mean, m.max, m.violations))
                .unwrap_or_default(),
        );
    }
    write_report(&report, &args.report, started)
}

fn parse_kinds(text: &str) -> Result<Vec<AttackKind>> {
    text.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| AttackKind::parse(t.trim()))
        .collect()
}

fn cmd_attack(args: AttackArgs) -> Result<()> {
    let started = Instant::now();
    require_file(&args.model)?;
    validate_data_spec(&args.data.data)?;
    if let Some(r) = &args.report {
        prepare_output(r)?;
    }
    if let Some(d) = &args.dump_adv {
        prepare_output(d)?;
    }

    let model = model_io::load_model(&args.model)?;
    let data = load_data(&args.data, Split::Test, args.seed)?;
    let kinds = parse_kinds(&args.kinds)?;
    if kinds.is_empty() {
        return Err(Error::Config("no attack kinds requested".into()));
    }

    let base = AttackConfig {
        kind: kinds[0],
        epsilon: args.epsilon,
        steps: args.steps,
        step_size: args.step_size,
        restarts: args.restarts,
        seed: args.seed,
    };

    let mut report = Report::new("attack");
    report
        .kv("seed", args.seed)
        .kv("model", args.model.display())
        .kv("data", &data.provenance);

    if let Some(grid_arg) = &args.epsilon_grid {
        let grid = parse_epsilon_grid(&Some(grid_arg.clone()))?;
        let cells = attack::epsilon_sweep(&model, &data, &kinds, &grid, &base)?;
        let section = report.section("sweep");
        section.note("pgd columns are nesting-seeded: each radius reuses the previous adversary");
        let table = section.table(
            "robust-accuracy",
            &base.provenance(),
            &["kind", "epsilon", "clean", "robust"],
        );
        for cell in &cells {
            table.push_row(vec![
                cell.kind.name().to_string(),
                fmt_f64(cell.epsilon),
                fmt_f64(cell.result.clean_accuracy),
                fmt_f64(cell.result.robust_accuracy),
            ]);
            println!(
                "{:>13} eps={:<12} clean={:.4} robust={:.4}",
                cell.kind.name(),
                fmt_f64(cell.epsilon),
                cell.result.clean_accuracy,
                cell.result.robust_accuracy
            );
        }
    } else {
        let keep = args.dump_adv.is_some();
        let section = report.section("attack");
        for &kind in &kinds {
            let cfg = AttackConfig { kind, ..base.clone() };
            let result = attack::run_attack(&model, &data, &cfg, keep)?;
            let table = section.table(
                &format!("{}-result", kind.name()),
                &cfg.provenance(),
                &["kind", "epsilon", "clean", "robust"],
            );
            table.push_row(vec![
                kind.name().to_string(),
                fmt_f64(args.epsilon),
                fmt_f64(result.clean_accuracy),
                fmt_f64(result.robust_accuracy),
            ]);
            println!(
                "{:>13} eps={:<12} clean={:.4} robust={:.4}",
                kind.name(),
                fmt_f64(args.epsilon),
                result.clean_accuracy,
                result.robust_accuracy
            );
            if let (Some(dump), Some(examples)) = (&args.dump_adv, &result.adversarial) {
                let path = if kinds.len() == 1 {
                    dump.clone()
                } else {
                    grid_out_path(dump, args.epsilon)
                };
                let adv_ds = Dataset::new(
                    examples.clone(),
                    data.labels.clone(),
                    data.classes,
                    Split::Test,
                    format!("adversarial {} from {}", cfg.provenance(), data.provenance),
                )?;
                data::save_dataset(&adv_ds, &path)?;
                println!("adversarial examples written to {}", path.display());
            }
        }
    }
    write_report(&report, &args.report, started)
}

fn cmd_smooth(args: SmoothArgs) -> Result<()> {
    let started = Instant::now();
    require_file(&args.model)?;
    validate_data_spec(&args.data.data)?;
    if let Some(r) = &args.report {
        prepare_output(r)?;
    }
    if let Some(c) = &args.certificates {
        prepare_output(c)?;
    }

    let model = model_io::load_model(&args.model)?;
    let data = load_data(&args.data, Split::Test, args.seed)?;
    let radii = parse_float_list(&args.radii, "radius")?;
    let config = SmoothingConfig {
        sigma: args.sigma,
        n0: args.n0,
        n: args.n,
        alpha: args.alpha,
        seed: args.seed,
    };
    let (curve, certificates) = smoothing::certified_accuracy_curve(&model, &data, &radii, &config)?;

    let mut report = Report::new("smooth");
    report
        .kv("seed", args.seed)
        .kv("model", args.model.display())
        .kv("data", &data.provenance);
    let section = report.section("smoothing");
    section.note(
        "thresholds are not recalibrated under noise; the noise distribution may deviate from the observed data",
    );
    let table = section.table(
        "certified-accuracy",
        &config.provenance(),
        &["radius", "certified_accuracy"],
    );
    for point in &curve {
        table.push_row(vec![fmt_f64(point.radius), fmt_f64(point.certified_accuracy)]);
        println!(
            "radius {:<10} certified accuracy {:.4}",
            fmt_f64(point.radius),
            point.certified_accuracy
        );
    }
    if let Some(path) = &args.certificates {
        let mut csv = String::from("index,class,radius,p_lower\n");
        for (i, pred, radius, p_lower) in &certificates {
            csv.push_str(&format!(
                "{i},{},{},{}\n",
                pred.map(|c| c.to_string()).unwrap_or_else(|| "abstain".into()),
                fmt_f64(*radius),
                fmt_f64(*p_lower)
            ));
        }
        std::fs::write(path, csv)?;
        println!("certificates written to {}", path.display());
    }
    write_report(&report, &args.report, started)
}

fn cmd_verify_masking(args: VerifyArgs) -> Result<()> {
    let started = Instant::now();
    require_file(&args.original)?;
    require_file(&args.forged)?;
    validate_data_spec(&args.data.data)?;
    if let Some(r) = &args.report {
        prepare_output(r)?;
    }

    let original = model_io::load_model(&args.original)?;
    let forged = model_io::load_model(&args.forged)?;
    let data = load_data(&args.data, Split::Test, args.seed)?;
    let config = masking::ChecklistConfig {
        epsilon: args.epsilon,
        epsilon_grid: parse_epsilon_grid(&args.epsilon_grid)?,
        steps: args.steps,
        restarts: args.restarts,
        attack_seeds: args.attack_seeds,
        smoothing: SmoothingConfig {
            sigma: args.sigma,
            n0: args.n0,
            n: args.n,
            alpha: args.alpha,
            seed: args.seed,
        },
        radii: parse_float_list(&args.radii, "radius")?,
        seed: args.seed,
    };
    let checklist = masking::run_checklist(&original, &forged, &data, &config)?;

    let mut report = Report::new("verify-masking");
    report
        .kv("seed", args.seed)
        .kv("original", args.original.display())
        .kv("forged", args.forged.display())
        .kv("data", &data.provenance)
        .kv("epsilon", fmt_f64(args.epsilon));

    let announce = |name: &str, verdict: &(Verdict, String)| {
        println!("section {name}: {} ({})", verdict.0.label(), verdict.1);
    };
    let fail = |report: &mut Report, name: &str, e: &Error| {
        report
            .section(name)
            .set_verdict(Verdict::Failed, format!("sub-run failed: {e}"));
        println!("section {name}: FAILED ({e})");
    };

    match &checklist.white_vs_black {
        Ok(out) => {
            let section = report.section("white-box-vs-black-box");
            section.kv(
                "budget",
                format!("{} model queries per sample", args.steps * args.restarts),
            );
            let table = section.table(
                "per-seed",
                &format!(
                    "eps={} steps={} restarts={} base_seed={}",
                    fmt_f64(args.epsilon),
                    args.steps,
                    args.restarts,
                    args.seed
                ),
                &["seed", "pgd_robust", "random_search_robust"],
            );
            for (seed, pgd, rs) in &out.rows {
                table.push_row(vec![seed.to_string(), fmt_f64(*pgd), fmt_f64(*rs)]);
            }
            section.set_verdict(out.verdict.0, out.verdict.1.clone());
            announce("white-box-vs-black-box", &out.verdict);
        }
        Err(e) => fail(&mut report, "white-box-vs-black-box", e),
    }

    match &checklist.sweeps {
        Ok(out) => {
            let section = report.section("one-step-vs-iterative");
            let table = section.table(
                "fgsm-vs-pgd",
                &format!("grid seed={} steps={}", args.seed, args.steps),
                &["model", "epsilon", "fgsm_robust", "pgd_robust"],
            );
            for (model_name, eps, fgsm_acc, pgd_acc) in &out.rows {
                table.push_row(vec![
                    model_name.clone(),
                    fmt_f64(*eps),
                    fmt_f64(*fgsm_acc),
                    fmt_f64(*pgd_acc),
                ]);
            }
            section.set_verdict(out.one_step_verdict.0, out.one_step_verdict.1.clone());
            announce("one-step-vs-iterative", &out.one_step_verdict);

            let section = report.section("epsilon-sweep");
            section
                .kv("clean_original", fmt_f64(out.clean_original))
                .kv("clean_forged", fmt_f64(out.clean_forged))
                .kv("terminal_pgd_original", fmt_f64(out.terminal_original))
                .kv("terminal_pgd_forged", fmt_f64(out.terminal_forged));
            section.set_verdict(out.sweep_verdict.0, out.sweep_verdict.1.clone());
            announce("epsilon-sweep", &out.sweep_verdict);
        }
        Err(e) => {
            fail(&mut report, "one-step-vs-iterative", e);
            report
                .section("epsilon-sweep")
                .set_verdict(Verdict::Failed, "sweep unavailable");
        }
    }

    match &checklist.transfer {
        Ok(out) => {
            let section = report.section("transfer");
            section
                .kv("transfer_robust", fmt_f64(out.transfer_robust))
                .kv("direct_robust", fmt_f64(out.direct_robust));
            section.set_verdict(out.verdict.0, out.verdict.1.clone());
            announce("transfer", &out.verdict);
        }
        Err(e) => fail(&mut report, "transfer", e),
    }

    match &checklist.smoothing {
        Ok(out) => {
            let section = report.section("smoothing");
            let table = section.table(
                "certified-accuracy",
                &config.smoothing.provenance(),
                &["radius", "original", "forged"],
            );
            for (o, f) in out.original.iter().zip(&out.forged) {
                table.push_row(vec![
                    fmt_f64(o.radius),
                    fmt_f64(o.certified_accuracy),
                    fmt_f64(f.certified_accuracy),
                ]);
            }
            section.set_verdict(out.verdict.0, out.verdict.1.clone());
            announce("smoothing", &out.verdict);
        }
        Err(e) => fail(&mut report, "smoothing", e),
    }

    write_report(&report, &args.report, started)?;
    match checklist.into_first_failure() {
        None => Ok(()),
        Some(e) => Err(e),
    }
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    require_file(&args.report)?;
    let report = Report::load(&args.report)?;
    println!("tool: {}", report.tool);
    println!("command: {}", report.command);
    for (k, v) in &report.kvs {
        println!("  {k} = {v}");
    }
    for section in &report.sections {
        let verdict = section
            .verdict
            .as_ref()
            .map(|(v, reason)| format!(" [{} {reason}]", v.label()))
            .unwrap_or_default();
        println!("section {}{verdict}", section.name);
        for t in &section.tables {
            println!("  table {} ({} rows x {} cols)", t.name, t.rows.len(), t.columns.len());
        }
    }
    if args.csv {
        let dir = args
            .out_dir
            .clone()
            .unwrap_or_else(|| args.report.parent().unwrap_or(Path::new(".")).to_path_buf());
        std::fs::create_dir_all(&dir)?;
        let stem = args
            .report
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "report".into());
        for section in &report.sections {
            for table in &section.tables {
                let path = dir.join(format!("{stem}-{}-{}.csv", section.name, table.name));
                std::fs::write(&path, table.to_csv())?;
                println!("csv written to {}", path.display());
            }
        }
    }
    Ok(())
}
