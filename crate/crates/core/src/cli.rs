//! Subcommand front end behind the `cleansel` binary.
//!
//! Every subcommand is a thin wrapper over the library. Global flags
//! (`--seed`, `--preset`, `--config`, `-v`, `--out-dir`) may appear before or
//! after the subcommand; relative output paths land under `--out-dir`.
//! Failures print one line, `error: kind=<kind> message="<text>"`, and exit 1;
//! usage errors exit 2.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{run_sweep, Source, SweepSpec};
use crate::config::{ConfigFile, GlobalConfig};
use crate::corpus::{
    cifar10_pair_map, inject_noise, load_embeddings, load_labels, load_manifest, save_dataset,
    save_embeddings, save_labels, LabelVector, NoiseKind, NoiseSpec, NoisyDataset,
};
use crate::error::{Error, Result};
use crate::induced::{
    default_k, fit_probe, knn_probabilities, load_probe, predict_probe, save_probe, ProbeConfig,
};
use crate::mixfix::{mixfix_run, MixFixConfig};
use crate::select::{
    consistency_select, intersect, loss_select, selection_quality, LossMode, SelectionResult,
};
use crate::zeroshot::{
    l2_normalize, zeroshot_probabilities, Aggregation, ClassProbabilities, PromptBank,
    DEFAULT_TEMPERATURE,
};

#[derive(Debug, Parser)]
#[command(name = "cleansel", version, about = "Clean-sample selection for noisy labels")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Threshold preset (default, strict, cifar10-sym, cifar10-asym,
    /// cifar100-sym, red-mini-imagenet, webvision, clothing1m, animal10n).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// JSON config file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    /// Base directory for relative output paths.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Corrupt a dataset's labels and write the result as a new dataset.
    InjectNoise(InjectArgs),
    /// Zero-shot class probabilities from the manifest's prompt bank.
    Zeroshot(ZeroshotArgs),
    /// Class probabilities from a probe fitted on the noisy labels.
    Probe(ProbeArgs),
    /// Select likely-clean samples from one or more probability files.
    Select(SelectArgs),
    /// Train on a selection, absorbing and relabeling the rest.
    Mixfix(MixfixArgs),
    /// Score a selection mask and/or a trained probe against known labels.
    Evaluate(EvaluateArgs),
    /// Run a noise sweep described by a JSON spec.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct InjectArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    kind: NoiseKind,
    #[arg(long)]
    ratio: f64,
    /// Asymmetric flip targets: `cifar10` or a comma-separated class list.
    #[arg(long)]
    pair_map: Option<String>,
    /// Let symmetric noise redraw the original class.
    #[arg(long)]
    include_original: bool,
    /// Output dataset directory.
    #[arg(long, default_value = "noisy")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ZeroshotArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, value_enum, default_value_t = Aggregation::Mean)]
    agg: Aggregation,
    #[arg(long, default_value = "probs.emb1")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProbeMode {
    Logistic,
    Knn,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = ProbeMode::Logistic)]
    mode: ProbeMode,
    /// Neighbours for `knn`; defaults to min(50, smallest class).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, default_value = "probs.emb1")]
    out: PathBuf,
    /// Also save the fitted logistic probe.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SelectorArg {
    Consistency,
    Loss,
    BothIntersect,
}

#[derive(Debug, Args)]
struct SelectArgs {
    /// Probability file (EMB1); repeat to intersect several estimators.
    #[arg(long, required = true)]
    probs: Vec<PathBuf>,
    #[arg(long)]
    labels: PathBuf,
    /// Ground truth, for the quality fields of the report.
    #[arg(long)]
    true_labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SelectorArg::BothIntersect)]
    selector: SelectorArg,
    #[arg(long)]
    theta_c: Option<f64>,
    #[arg(long)]
    theta_l: Option<f64>,
    #[arg(long, value_enum, default_value_t = LossMode::PerClass)]
    loss_mode: LossMode,
    #[arg(long, default_value = "mask.lab1")]
    out: PathBuf,
    #[arg(long, default_value = "report.json")]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct MixfixArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    theta_r: Option<f64>,
    #[arg(long = "theta-rp")]
    theta_r_prime: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    epoch_iterations: Option<usize>,
    #[arg(long)]
    sticky: bool,
    /// Held-out dataset for per-epoch accuracy.
    #[arg(long)]
    holdout: Option<PathBuf>,
    #[arg(long, default_value = "model.bin")]
    out: PathBuf,
    #[arg(long, default_value = "history.csv")]
    history: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Selection mask (LAB1, 0/1) to score against the true labels.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Trained probe to score on the manifest's samples.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "evaluation.json")]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: kind={} message={:?}", e.kind(), e.to_string());
            1
        }
    }
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .try_init();
}

fn run(cli: Cli) -> Result<()> {
    let file = cli.config.as_ref().map(ConfigFile::read).transpose()?.unwrap_or_default();
    let g = GlobalConfig::resolve(cli.seed, cli.preset.as_deref(), cli.verbose, cli.out_dir, file)?;
    init_logging(g.verbosity);
    fs::create_dir_all(&g.out_dir).map_err(|e| Error::io(&g.out_dir, e))?;
    match cli.command {
        Command::InjectNoise(a) => inject_cmd(&g, a),
        Command::Zeroshot(a) => zeroshot_cmd(&g, a),
        Command::Probe(a) => probe_cmd(&g, a),
        Command::Select(a) => select_cmd(&g, a),
        Command::Mixfix(a) => mixfix_cmd(&g, a),
        Command::Evaluate(a) => evaluate_cmd(&g, a),
        Command::Simulate(a) => simulate_cmd(&g, a),
    }
}

fn normalized(ds: NoisyDataset) -> Result<NoisyDataset> {
    let e = l2_normalize(ds.embeddings())?;
    ds.with_embeddings(e)
}

fn load_normalized(path: &Path) -> Result<(NoisyDataset, Option<PromptBank>)> {
    let (ds, bank) = load_manifest(path)?;
    Ok((normalized(ds)?, bank.map(|b| b.normalized()).transpose()?))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn parse_pair_map(text: &str) -> Result<Vec<usize>> {
    if text == "cifar10" {
        return Ok(cifar10_pair_map());
    }
    text.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad pair-map entry {t:?}")))
        })
        .collect()
}

fn inject_cmd(g: &GlobalConfig, a: InjectArgs) -> Result<()> {
    let (ds, bank) = load_manifest(&a.manifest)?;
    let spec = NoiseSpec {
        kind: a.kind,
        ratio: a.ratio,
        pair_map: a.pair_map.as_deref().map(parse_pair_map).transpose()?,
        seed: g.seed,
        include_original: a.include_original,
    };
    // Instance noise reads prompt directions only, so normalisation is irrelevant here.
    let noisy = inject_noise(&ds, &spec, bank.as_ref())?;
    let path = save_dataset(g.output_path(&a.out), &noisy, bank.as_ref())?;
    log::info!(
        "wrote {} (realized noise {:?})",
        path.display(),
        noisy.noise_rate()
    );
    Ok(())
}

fn zeroshot_cmd(g: &GlobalConfig, a: ZeroshotArgs) -> Result<()> {
    let (ds, bank) = load_normalized(&a.manifest)?;
    let bank = bank.ok_or_else(|| {
        Error::Validation(format!("{} lists no prompts", a.manifest.display()))
    })?;
    let t = a.temperature.or(g.file.temperature).unwrap_or(DEFAULT_TEMPERATURE);
    let probs = zeroshot_probabilities(ds.embeddings(), &bank, t, a.agg)?;
    save_embeddings(&probs.to_matrix()?, g.output_path(&a.out))
}

fn probe_cmd(g: &GlobalConfig, a: ProbeArgs) -> Result<()> {
    let (ds, _) = load_normalized(&a.manifest)?;
    let probs = match a.mode {
        ProbeMode::Logistic => {
            let defaults = ProbeConfig::default();
            let cfg = ProbeConfig {
                l2_lambda: a.lambda.unwrap_or(defaults.l2_lambda),
                iterations: a.iterations.unwrap_or(defaults.iterations),
                seed: g.seed,
                ..defaults
            };
            let probe = fit_probe(&ds, &cfg)?;
            if let Some(m) = &a.model {
                save_probe(&probe, g.output_path(m))?;
            }
            predict_probe(&probe, ds.embeddings())?
        }
        ProbeMode::Knn => knn_probabilities(&ds, a.k.unwrap_or_else(|| default_k(&ds)))?,
    };
    save_embeddings(&probs.to_matrix()?, g.output_path(&a.out))
}

#[derive(Serialize)]
struct SelectReport {
    selector: String,
    threshold: Option<f64>,
    n_total: usize,
    n_selected: usize,
    n_clean: Option<usize>,
    precision: Option<f64>,
    recall: Option<f64>,
    f1: Option<f64>,
    roc_auc: Option<f64>,
    /// Selected samples per noisy-label class.
    per_class_selected_counts: Vec<usize>,
    warnings: Vec<String>,
}

fn select_report(
    result: &SelectionResult,
    labels: &LabelVector,
    truth: Option<&LabelVector>,
    classes: usize,
) -> Result<SelectReport> {
    let quality = truth.map(|t| selection_quality(result, labels, t)).transpose()?;
    let mut per_class = vec![0; classes];
    for (&m, &l) in result.mask.iter().zip(labels.as_slice()) {
        if m {
            per_class[l] += 1;
        }
    }
    Ok(SelectReport {
        selector: result.selector.clone(),
        threshold: result.threshold,
        n_total: result.len(),
        n_selected: result.count(),
        n_clean: quality.as_ref().map(|q| q.n_clean),
        precision: quality.as_ref().and_then(|q| q.precision),
        recall: quality.as_ref().and_then(|q| q.recall),
        f1: quality.as_ref().and_then(|q| q.f1),
        roc_auc: quality.as_ref().and_then(|q| q.roc_auc),
        per_class_selected_counts: per_class,
        warnings: result.warnings.clone(),
    })
}

fn select_cmd(g: &GlobalConfig, a: SelectArgs) -> Result<()> {
    let labels = load_labels(&a.labels)?;
    let truth = a.true_labels.as_ref().map(load_labels).transpose()?;
    let theta_c = g.theta_consistency(a.theta_c);
    let theta_l = g.theta_loss(a.theta_l);
    let mut parts = Vec::new();
    let mut classes = 0;
    for p in &a.probs {
        let probs = ClassProbabilities::from_matrix(&load_embeddings(p)?)?;
        classes = classes.max(probs.num_classes());
        let one = match a.selector {
            SelectorArg::Consistency => consistency_select(&probs, &labels, theta_c)?,
            SelectorArg::Loss => loss_select(&probs, &labels, theta_l, a.loss_mode)?,
            SelectorArg::BothIntersect => intersect(&[
                consistency_select(&probs, &labels, theta_c)?,
                loss_select(&probs, &labels, theta_l, a.loss_mode)?,
            ])?,
        };
        parts.push(one);
    }
    let result = if parts.len() == 1 {
        parts.pop().expect("one part")
    } else {
        intersect(&parts)?
    };
    for w in &result.warnings {
        log::warn!("{w}");
    }
    save_labels(&result.mask_labels(), g.output_path(&a.out))?;
    let report = select_report(&result, &labels, truth.as_ref(), classes)?;
    write_json(&g.output_path(&a.report), &report)
}

fn mask_selection(mask: &LabelVector, n: usize) -> Result<SelectionResult> {
    if mask.len() != n {
        return Err(Error::Dimension(format!(
            "mask has {} entries, dataset {n}",
            mask.len()
        )));
    }
    if mask.as_slice().iter().any(|&m| m > 1) {
        return Err(Error::Validation("mask entries must be 0 or 1".into()));
    }
    let scores = mask.as_slice().iter().map(|&m| m as f64).collect();
    Ok(SelectionResult::from_scores("mask", scores, 0.5))
}

fn mixfix_cmd(g: &GlobalConfig, a: MixfixArgs) -> Result<()> {
    let (ds, _) = load_normalized(&a.manifest)?;
    let selected = mask_selection(&load_labels(&a.mask)?, ds.len())?;
    let holdout = a
        .holdout
        .as_ref()
        .map(|h| load_normalized(h).map(|(d, _)| d))
        .transpose()?;
    let defaults = MixFixConfig::default();
    let cfg = MixFixConfig {
        theta_r: g.theta_r(a.theta_r),
        theta_r_prime: g.theta_r_prime(a.theta_r_prime),
        epochs: a.epochs.or(g.file.epochs).unwrap_or(defaults.epochs),
        epoch_iterations: a.epoch_iterations.unwrap_or(defaults.epoch_iterations),
        sticky: a.sticky,
        seed: g.seed,
        probe: ProbeConfig { seed: g.seed, ..defaults.probe },
    };
    let (state, _) = mixfix_run(&ds, &selected, &cfg, holdout.as_ref())?;
    save_probe(&state.model, g.output_path(&a.out))?;
    let path = g.output_path(&a.history);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for r in &state.history {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

#[derive(Serialize)]
struct EvaluateReport {
    n_total: usize,
    noise_rate: Option<f64>,
    selection: Option<SelectReport>,
    /// Probe accuracy against the true labels, or the labels if none are known.
    model_accuracy: Option<f64>,
}

fn evaluate_cmd(g: &GlobalConfig, a: EvaluateArgs) -> Result<()> {
    if a.mask.is_none() && a.model.is_none() {
        return Err(Error::InvalidParameter("evaluate needs --mask and/or --model".into()));
    }
    let (ds, _) = load_normalized(&a.manifest)?;
    let selection = a
        .mask
        .as_ref()
        .map(|m| -> Result<SelectReport> {
            let sel = mask_selection(&load_labels(m)?, ds.len())?;
            select_report(&sel, ds.noisy_labels(), ds.true_labels(), ds.num_classes())
        })
        .transpose()?;
    let model_accuracy = a
        .model
        .as_ref()
        .map(|m| -> Result<f64> {
            let probe = load_probe(m)?;
            let truth = ds.true_labels().unwrap_or(ds.noisy_labels());
            Ok(predict_probe(&probe, ds.embeddings())?.accuracy(truth.as_slice()))
        })
        .transpose()?;
    let report = EvaluateReport {
        n_total: ds.len(),
        noise_rate: ds.noise_rate(),
        selection,
        model_accuracy,
    };
    write_json(&g.output_path(&a.report), &report)
}

fn simulate_cmd(g: &GlobalConfig, a: SimulateArgs) -> Result<()> {
    let mut spec = SweepSpec::read(&a.spec)?;
    if let Source::Manifest(p) = &mut spec.source {
        if p.is_relative() {
            *p = a.spec.parent().unwrap_or(Path::new(".")).join(&*p);
        }
    }
    if let Some(p) = spec.holdout_manifest.as_mut() {
        if p.is_relative() {
            *p = a.spec.parent().unwrap_or(Path::new(".")).join(&*p);
        }
    }
    if g.seed_set {
        spec.base_seed = g.seed;
    }
    let report = run_sweep(&spec)?;
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} sweep cells failed", report.rows.len());
    }
    report.write(&g.out_dir)
}
