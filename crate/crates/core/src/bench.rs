//! Noise-sweep harness: inject noise, estimate class probabilities, select,
//! score the selection against the truth and optionally run MixFix, for every
//! cell of a `noise × ratio × estimator × selector × repeat` grid.
//!
//! Sweep spec JSON (all keys except `source`, `noise`, `estimators`,
//! `selectors` are optional):
//!
//! ```json
//! {
//!   "source": {"world": {"num_classes": 3, "dim": 16, "samples_per_class": [1000, 1000, 1000],
//!                        "centroid_separation": 6.0, "cluster_sigma": 1.0,
//!                        "prompts_per_class": 4, "prompt_jitter_sigma": 0.5, "seed": 0}},
//!   "noise": [{"kind": "symmetric", "ratios": [0.2, 0.5, 0.8]}],
//!   "estimators": ["zeroshot", "logistic", "knn"],
//!   "selectors": ["consistency", "loss", "intersect"],
//!   "repeats": 1,
//!   "seeds": [7],
//!   "temperature": 100.0,
//!   "aggregation": "mean",
//!   "theta_consistency": 0.8,
//!   "theta_loss": 0.5,
//!   "loss_mode": "per_class",
//!   "mixfix": {"theta_r": 0.7, "theta_r_prime": 0.8, "epochs": 20},
//!   "holdout_per_class": 200
//! }
//! ```
//!
//! `source` may instead be `{"manifest": "path/to/manifest.json"}`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    inject_noise, load_manifest, NoiseKind, NoiseSpec, NoisyDataset, SyntheticWorld,
    SyntheticWorldSpec,
};
use crate::error::{Error, Result};
use crate::induced::{default_k, fit_probe, knn_probabilities, predict_probe, ProbeConfig};
use crate::mixfix::{mixfix_run, MixFixConfig};
use crate::select::{
    consistency_select, intersect, loss_select, selection_quality, LossMode, SelectionResult,
    DEFAULT_THETA_CONSISTENCY, DEFAULT_THETA_LOSS,
};
use crate::zeroshot::{
    l2_normalize, zeroshot_probabilities, Aggregation, ClassProbabilities, PromptBank,
    DEFAULT_TEMPERATURE,
};

pub use crate::select::emit_roc_points;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Zeroshot,
    Logistic,
    Knn,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Zeroshot => "zeroshot",
            Estimator::Logistic => "logistic",
            Estimator::Knn => "knn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SelectorKind {
    Consistency,
    Loss,
    /// Consistency ∧ loss.
    Intersect,
}

impl SelectorKind {
    pub fn name(self) -> &'static str {
        match self {
            SelectorKind::Consistency => "consistency",
            SelectorKind::Loss => "loss",
            SelectorKind::Intersect => "intersect",
        }
    }
}

/// Knobs shared by every estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorSettings {
    pub temperature: f64,
    pub aggregation: Aggregation,
    pub probe: ProbeConfig,
    /// `None` uses `min(50, smallest class)`.
    pub knn_k: Option<usize>,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            aggregation: Aggregation::Mean,
            probe: ProbeConfig::default(),
            knn_k: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorSettings {
    pub theta_consistency: f64,
    pub theta_loss: f64,
    pub loss_mode: LossMode,
}

impl Default for SelectorSettings {
    fn default() -> Self {
        Self {
            theta_consistency: DEFAULT_THETA_CONSISTENCY,
            theta_loss: DEFAULT_THETA_LOSS,
            loss_mode: LossMode::PerClass,
        }
    }
}

/// Class probabilities for every sample of `ds`. Embeddings (and prompts)
/// are expected to be unit-normalised already.
pub fn estimate(
    estimator: Estimator,
    ds: &NoisyDataset,
    bank: Option<&PromptBank>,
    settings: &EstimatorSettings,
) -> Result<ClassProbabilities> {
    match estimator {
        Estimator::Zeroshot => {
            let bank = bank.ok_or_else(|| {
                Error::InvalidParameter("zero-shot estimation needs a prompt bank".into())
            })?;
            zeroshot_probabilities(ds.embeddings(), bank, settings.temperature, settings.aggregation)
        }
        Estimator::Logistic => {
            let probe = fit_probe(ds, &settings.probe)?;
            predict_probe(&probe, ds.embeddings())
        }
        Estimator::Knn => knn_probabilities(ds, settings.knn_k.unwrap_or_else(|| default_k(ds))),
    }
}

pub fn select(
    kind: SelectorKind,
    probs: &ClassProbabilities,
    ds: &NoisyDataset,
    settings: &SelectorSettings,
) -> Result<SelectionResult> {
    let labels = ds.noisy_labels();
    match kind {
        SelectorKind::Consistency => consistency_select(probs, labels, settings.theta_consistency),
        SelectorKind::Loss => loss_select(probs, labels, settings.theta_loss, settings.loss_mode),
        SelectorKind::Intersect => intersect(&[
            consistency_select(probs, labels, settings.theta_consistency)?,
            loss_select(probs, labels, settings.theta_loss, settings.loss_mode)?,
        ]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    World(SyntheticWorldSpec),
    Manifest(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseAxis {
    pub kind: NoiseKind,
    pub ratios: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_map: Option<Vec<usize>>,
    #[serde(default)]
    pub include_original: bool,
}

fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub source: Source,
    pub noise: Vec<NoiseAxis>,
    pub estimators: Vec<Estimator>,
    pub selectors: Vec<SelectorKind>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Noise seed per repeat; defaults to `base_seed + repeat`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, flatten)]
    pub estimator_settings: EstimatorSettings,
    #[serde(default, flatten)]
    pub selector_settings: SelectorSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixfix: Option<MixFixConfig>,
    /// World sources only: held-out samples per class for MixFix accuracy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout_per_class: Option<usize>,
    /// Manifest sources only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout_manifest: Option<PathBuf>,
}

impl SweepSpec {
    /// Minimal sweep over one noise kind on a synthetic world.
    pub fn on_world(world: SyntheticWorldSpec, kind: NoiseKind, ratios: Vec<f64>) -> Self {
        Self {
            source: Source::World(world),
            noise: vec![NoiseAxis {
                kind,
                ratios,
                pair_map: None,
                include_original: false,
            }],
            estimators: vec![Estimator::Zeroshot],
            selectors: vec![SelectorKind::Consistency],
            repeats: 1,
            seeds: None,
            base_seed: 0,
            estimator_settings: EstimatorSettings::default(),
            selector_settings: SelectorSettings::default(),
            mixfix: None,
            holdout_per_class: None,
            holdout_manifest: None,
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: bad sweep spec: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.noise.is_empty() || self.noise.iter().any(|n| n.ratios.is_empty()) {
            return bad("sweep needs at least one noise kind with at least one ratio");
        }
        if self.estimators.is_empty() || self.selectors.is_empty() {
            return bad("sweep needs at least one estimator and one selector");
        }
        if self.repeats == 0 {
            return bad("repeats must be >= 1");
        }
        if let Some(seeds) = &self.seeds {
            if seeds.len() != self.repeats {
                return bad("seeds must list one seed per repeat");
            }
        }
        if let Some(m) = &self.mixfix {
            m.validate()?;
        }
        Ok(())
    }

    pub fn seed(&self, repeat: usize) -> u64 {
        match &self.seeds {
            Some(s) => s[repeat],
            None => self.base_seed.wrapping_add(repeat as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixFixOutcome {
    pub train_size: usize,
    pub absorbed: usize,
    pub relabeled: usize,
    pub train_noise_ratio: f64,
    pub holdout_acc: Option<f64>,
}

/// One `(noise, ratio, estimator, selector, repeat)` result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub noise_kind: NoiseKind,
    pub ratio: f64,
    pub repeat: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub selector: SelectorKind,
    pub realized_noise: Option<f64>,
    pub n_selected: Option<usize>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub roc_auc: Option<f64>,
    pub per_class_selected_counts: Option<Vec<usize>>,
    pub mixfix: Option<MixFixOutcome>,
    pub error: Option<String>,
    pub wall_ms: f64,
}

/// Flat CSV view of a row. Wall-clock is left out so that reruns are
/// byte-identical.
#[derive(Serialize)]
struct CsvRow<'a> {
    noise_kind: &'a str,
    ratio: f64,
    repeat: usize,
    seed: u64,
    estimator: &'static str,
    selector: &'static str,
    realized_noise: Option<f64>,
    n_selected: Option<usize>,
    precision: Option<f64>,
    recall: Option<f64>,
    f1: Option<f64>,
    roc_auc: Option<f64>,
    mixfix_train_size: Option<usize>,
    mixfix_train_noise: Option<f64>,
    mixfix_holdout_acc: Option<f64>,
    error: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

fn kind_name(k: NoiseKind) -> &'static str {
    match k {
        NoiseKind::Symmetric => "symmetric",
        NoiseKind::Asymmetric => "asymmetric",
        NoiseKind::Instance => "instance",
    }
}

impl SweepReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(CsvRow {
                noise_kind: kind_name(r.noise_kind),
                ratio: r.ratio,
                repeat: r.repeat,
                seed: r.seed,
                estimator: r.estimator.name(),
                selector: r.selector.name(),
                realized_noise: r.realized_noise,
                n_selected: r.n_selected,
                precision: r.precision,
                recall: r.recall,
                f1: r.f1,
                roc_auc: r.roc_auc,
                mixfix_train_size: r.mixfix.as_ref().map(|m| m.train_size),
                mixfix_train_noise: r.mixfix.as_ref().map(|m| m.train_noise_ratio),
                mixfix_holdout_acc: r.mixfix.as_ref().and_then(|m| m.holdout_acc),
                error: r.error.as_deref(),
            })?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Format(format!("csv flush failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `report.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("report.csv");
        fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join("report.json");
        fs::write(&json_path, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| Error::io(&json_path, e))
    }

    /// Rows matching the given cell coordinates.
    pub fn cell(
        &self,
        estimator: Estimator,
        selector: SelectorKind,
        ratio: f64,
    ) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| {
            r.estimator == estimator && r.selector == selector && r.ratio == ratio
        })
    }
}

struct Prepared {
    ds: NoisyDataset,
    bank: Option<PromptBank>,
    holdout: Option<NoisyDataset>,
}

fn prepare(spec: &SweepSpec) -> Result<Prepared> {
    let (ds, bank, holdout) = match &spec.source {
        Source::World(w) => {
            let world = SyntheticWorld::generate(w.clone())?;
            let holdout = spec
                .holdout_per_class
                .map(|n| world.holdout(n, spec.base_seed))
                .transpose()?;
            (world.dataset()?, Some(world.prompt_bank()?), holdout)
        }
        Source::Manifest(path) => {
            let (ds, bank) = load_manifest(path)?;
            let holdout = spec
                .holdout_manifest
                .as_ref()
                .map(|p| load_manifest(p).map(|(h, _)| h))
                .transpose()?;
            (ds, bank, holdout)
        }
    };
    let normalize = |d: NoisyDataset| -> Result<NoisyDataset> {
        let e = l2_normalize(d.embeddings())?;
        d.with_embeddings(e)
    };
    Ok(Prepared {
        ds: normalize(ds)?,
        bank: bank.map(|b| b.normalized()).transpose()?,
        holdout: holdout.map(normalize).transpose()?,
    })
}

struct Group {
    axis: usize,
    ratio: f64,
    repeat: usize,
}

fn run_group(spec: &SweepSpec, data: &Prepared, g: &Group) -> Vec<SweepRow> {
    let axis = &spec.noise[g.axis];
    let seed = spec.seed(g.repeat);
    let noise = NoiseSpec {
        kind: axis.kind,
        ratio: g.ratio,
        pair_map: axis.pair_map.clone(),
        seed,
        include_original: axis.include_original,
    };
    let noisy = inject_noise(&data.ds, &noise, data.bank.as_ref());
    let mut rows = Vec::new();
    for &est in &spec.estimators {
        let start = Instant::now();
        let probs = noisy.as_ref().map_err(|e| e.to_string()).and_then(|ds| {
            estimate(est, ds, data.bank.as_ref(), &spec.estimator_settings)
                .map_err(|e| e.to_string())
        });
        let estimate_ms = start.elapsed().as_secs_f64() * 1e3;
        for &sel in &spec.selectors {
            let start = Instant::now();
            let mut row = SweepRow {
                noise_kind: axis.kind,
                ratio: g.ratio,
                repeat: g.repeat,
                seed,
                estimator: est,
                selector: sel,
                realized_noise: noisy.as_ref().ok().and_then(|d| d.noise_rate()),
                n_selected: None,
                precision: None,
                recall: None,
                f1: None,
                roc_auc: None,
                per_class_selected_counts: None,
                mixfix: None,
                error: None,
                wall_ms: 0.0,
            };
            let outcome = probs.as_ref().map_err(Clone::clone).and_then(|p| {
                let ds = noisy.as_ref().expect("probabilities imply a dataset");
                run_cell(spec, data, ds, p, sel, &mut row).map_err(|e| e.to_string())
            });
            if let Err(e) = outcome {
                row.error = Some(e);
            }
            row.wall_ms = estimate_ms + start.elapsed().as_secs_f64() * 1e3;
            rows.push(row);
        }
    }
    rows
}

fn run_cell(
    spec: &SweepSpec,
    data: &Prepared,
    ds: &NoisyDataset,
    probs: &ClassProbabilities,
    sel: SelectorKind,
    row: &mut SweepRow,
) -> Result<()> {
    let result = select(sel, probs, ds, &spec.selector_settings)?;
    row.n_selected = Some(result.count());
    if let Some(truth) = ds.true_labels() {
        let q = selection_quality(&result, ds.noisy_labels(), truth)?;
        row.precision = q.precision;
        row.recall = q.recall;
        row.f1 = q.f1;
        row.roc_auc = q.roc_auc;
        row.per_class_selected_counts = Some(q.per_class_selected_counts);
    }
    if let Some(cfg) = &spec.mixfix {
        let (state, _) = mixfix_run(ds, &result, cfg, data.holdout.as_ref())?;
        let last = state.history.last().expect("history starts at epoch 0");
        row.mixfix = Some(MixFixOutcome {
            train_size: last.n_train,
            absorbed: last.n_absorbed,
            relabeled: last.n_relabeled,
            train_noise_ratio: ds
                .true_labels()
                .map_or(f64::NAN, |t| state.train_noise_ratio(t.as_slice())),
            holdout_acc: last.holdout_acc,
        });
    }
    Ok(())
}

/// Runs every cell. Failures inside a cell are recorded on its row; only an
/// invalid spec or unloadable source aborts the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    spec.validate()?;
    let data = prepare(spec)?;
    let mut groups = Vec::new();
    for (axis, n) in spec.noise.iter().enumerate() {
        for &ratio in &n.ratios {
            for repeat in 0..spec.repeats {
                groups.push(Group { axis, ratio, repeat });
            }
        }
    }
    let rows: Vec<Vec<SweepRow>> = groups
        .par_iter()
        .map(|g| run_group(spec, &data, g))
        .collect();
    Ok(SweepReport {
        rows: rows.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_world() -> SyntheticWorldSpec {
        SyntheticWorldSpec::balanced(3, 8, 60)
    }

    #[test]
    fn clean_data_gives_perfect_precision() {
        let mut spec = SweepSpec::on_world(small_world(), NoiseKind::Symmetric, vec![0.0]);
        spec.estimators = vec![Estimator::Zeroshot, Estimator::Logistic, Estimator::Knn];
        spec.selectors = vec![SelectorKind::Consistency, SelectorKind::Loss, SelectorKind::Intersect];
        let report = run_sweep(&spec).unwrap();
        assert_eq!(report.rows.len(), 9);
        for r in &report.rows {
            assert!(r.error.is_none(), "{:?}", r.error);
            if r.n_selected.unwrap() > 0 {
                assert_eq!(r.precision, Some(1.0));
            }
        }
    }

    #[test]
    fn repeats_are_deterministic_per_seed() {
        let mut spec = SweepSpec::on_world(small_world(), NoiseKind::Symmetric, vec![0.4]);
        spec.repeats = 3;
        spec.seeds = Some(vec![5, 5, 9]);
        let report = run_sweep(&spec).unwrap();
        assert_eq!(report.rows.len(), 3);
        let strip = |r: &SweepRow| SweepRow { repeat: 0, wall_ms: 0.0, ..r.clone() };
        assert_eq!(strip(&report.rows[0]), strip(&report.rows[1]));
        assert_ne!(report.rows[0].realized_noise, report.rows[2].realized_noise);
        assert_eq!(run_sweep(&spec).unwrap().to_csv().unwrap(), report.to_csv().unwrap());
    }

    #[test]
    fn cell_failures_are_recorded() {
        // asymmetric without a pair map fails at injection for every cell
        let spec = SweepSpec::on_world(small_world(), NoiseKind::Asymmetric, vec![0.3]);
        let report = run_sweep(&spec).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.rows[0].error.is_some());
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let mut spec = SweepSpec::on_world(small_world(), NoiseKind::Symmetric, vec![]);
        assert!(run_sweep(&spec).is_err());
        spec.noise[0].ratios = vec![0.1];
        spec.repeats = 0;
        assert!(run_sweep(&spec).is_err());
    }

    #[test]
    fn spec_json_round_trips() {
        let mut spec = SweepSpec::on_world(small_world(), NoiseKind::Symmetric, vec![0.2, 0.5]);
        spec.mixfix = Some(MixFixConfig::default());
        let text = serde_json::to_string(&spec).unwrap();
        let back: SweepSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let minimal = r#"{"source": {"manifest": "m.json"},
                          "noise": [{"kind": "instance", "ratios": [0.2]}],
                          "estimators": ["knn"], "selectors": ["intersect"]}"#;
        let s: SweepSpec = serde_json::from_str(minimal).unwrap();
        assert_eq!(s.repeats, 1);
        assert_eq!(s.selector_settings.theta_consistency, 0.8);
    }
}
