//! Selectors that turn class-probability estimates and noisy labels into a
//! per-sample clean score and binary keep/discard mask.

mod metrics;

pub use metrics::{
    emit_roc_points, rank_auc, roc_curve, selection_quality, trapezoid_area, SelectionQuality,
};

use serde::{Deserialize, Serialize};

use crate::corpus::LabelVector;
use crate::error::{Error, Result};
use crate::gmm::{fit_em, EmConfig, Gmm1D};
use crate::zeroshot::ClassProbabilities;

/// Probabilities are floored here before taking `-ln`.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

pub const DEFAULT_THETA_CONSISTENCY: f64 = 0.8;
pub const DEFAULT_THETA_LOSS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selector: String,
    pub scores: Vec<f64>,
    pub mask: Vec<bool>,
    /// `None` when operands of an intersection used different thresholds.
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SelectionResult {
    /// Scores thresholded as `score >= threshold`.
    pub fn from_scores(selector: impl Into<String>, scores: Vec<f64>, threshold: f64) -> Self {
        let mask = scores.iter().map(|&s| s >= threshold).collect();
        Self {
            selector: selector.into(),
            scores,
            mask,
            threshold: Some(threshold),
            warnings: Vec::new(),
        }
    }

    /// Keeps everything, score 1.
    pub fn all(n: usize) -> Self {
        Self::from_scores("all", vec![1.0; n], 1.0)
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    /// Re-thresholds the continuous scores.
    pub fn with_threshold(&self, threshold: f64) -> Self {
        let mut r = Self::from_scores(self.selector.clone(), self.scores.clone(), threshold);
        r.warnings = self.warnings.clone();
        r
    }

    /// Mask as a 0/1 label vector (the on-disk mask format).
    pub fn mask_labels(&self) -> LabelVector {
        LabelVector::new(self.mask.iter().map(|&m| usize::from(m)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// One mixture per noisy-label class.
    #[default]
    PerClass,
    /// One mixture over every sample.
    Single,
}

fn check_inputs(probs: &ClassProbabilities, labels: &LabelVector) -> Result<()> {
    if probs.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probability rows for {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    labels.validate(probs.num_classes())
}

/// `score_i = P(y_i | x_i) / max_k P(k | x_i)`, kept when `score_i >= theta`.
pub fn consistency_select(
    probs: &ClassProbabilities,
    labels: &LabelVector,
    theta: f64,
) -> Result<SelectionResult> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "consistency threshold must be in (0, 1], got {theta}"
        )));
    }
    check_inputs(probs, labels)?;
    let scores = probs
        .iter_rows()
        .zip(labels.as_slice())
        .map(|(row, &y)| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if row[y] == max {
                1.0
            } else {
                row[y] / max
            }
        })
        .collect();
    Ok(SelectionResult::from_scores("consistency", scores, theta))
}

/// Per-sample cross-entropy `-ln max(P(y_i | x_i), 1e-12)`.
pub fn sample_losses(probs: &ClassProbabilities, labels: &LabelVector) -> Result<Vec<f64>> {
    check_inputs(probs, labels)?;
    Ok(probs
        .iter_rows()
        .zip(labels.as_slice())
        .map(|(row, &y)| -row[y].max(PROBABILITY_FLOOR).ln())
        .collect())
}

/// Small-loss selection: the score is the posterior of the low-mean component
/// of a two-component GMM over losses.
pub fn loss_select(
    probs: &ClassProbabilities,
    labels: &LabelVector,
    theta: f64,
    mode: LossMode,
) -> Result<SelectionResult> {
    loss_select_with(probs, labels, theta, mode, &EmConfig::default())
}

pub fn loss_select_with(
    probs: &ClassProbabilities,
    labels: &LabelVector,
    theta: f64,
    mode: LossMode,
    em: &EmConfig,
) -> Result<SelectionResult> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!(
            "loss threshold must be in [0, 1], got {theta}"
        )));
    }
    let losses = sample_losses(probs, labels)?;
    let mut warnings = Vec::new();

    // Lazily fitted, shared by single mode and per-class fallbacks.
    let mut global: Option<Option<Gmm1D>> = None;
    let mut global_model = |warnings: &mut Vec<String>| -> Option<Gmm1D> {
        global
            .get_or_insert_with(|| match fit_em(&losses, em) {
                Ok(g) => Some(g),
                Err(e) => {
                    warnings.push(format!("global loss model unavailable ({e}); scoring all samples 1"));
                    None
                }
            })
            .clone()
    };

    let mut scores = vec![0.0; losses.len()];
    let score_with = |model: &Option<Gmm1D>, idx: &[usize], scores: &mut [f64]| {
        for &i in idx {
            scores[i] = model.as_ref().map_or(1.0, |g| g.posterior_small(losses[i]));
        }
    };
    match mode {
        LossMode::Single => {
            let all: Vec<usize> = (0..losses.len()).collect();
            let model = global_model(&mut warnings);
            score_with(&model, &all, &mut scores);
        }
        LossMode::PerClass => {
            for c in 0..probs.num_classes() {
                let idx: Vec<usize> = labels
                    .as_slice()
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &l)| (l == c).then_some(i))
                    .collect();
                if idx.is_empty() {
                    continue;
                }
                let class_losses: Vec<f64> = idx.iter().map(|&i| losses[i]).collect();
                let model = match fit_em(&class_losses, em) {
                    Ok(g) => Some(g),
                    Err(e) => {
                        let msg = format!("class {c}: {e}; using the global loss model");
                        log::warn!("{msg}");
                        warnings.push(msg);
                        global_model(&mut warnings)
                    }
                };
                score_with(&model, &idx, &mut scores);
            }
        }
    }
    let name = match mode {
        LossMode::PerClass => "loss-per-class",
        LossMode::Single => "loss-single",
    };
    let mut result = SelectionResult::from_scores(name, scores, theta);
    result.warnings = warnings;
    Ok(result)
}

/// Conservative combination: AND of masks, element-wise minimum of scores.
pub fn intersect(results: &[SelectionResult]) -> Result<SelectionResult> {
    let first = results
        .first()
        .ok_or_else(|| Error::InvalidParameter("intersect needs at least one selection".into()))?;
    let n = first.len();
    if let Some(r) = results.iter().find(|r| r.len() != n) {
        return Err(Error::Dimension(format!(
            "cannot intersect selections of length {n} and {}",
            r.len()
        )));
    }
    let mut scores = first.scores.clone();
    let mut mask = first.mask.clone();
    for r in &results[1..] {
        for i in 0..n {
            scores[i] = scores[i].min(r.scores[i]);
            mask[i] &= r.mask[i];
        }
    }
    let threshold = first
        .threshold
        .filter(|&t| results.iter().all(|r| r.threshold == Some(t)));
    let names: Vec<&str> = results.iter().map(|r| r.selector.as_str()).collect();
    Ok(SelectionResult {
        selector: format!("intersect({})", names.join(",")),
        scores,
        mask,
        threshold,
        warnings: results.iter().flat_map(|r| r.warnings.clone()).collect(),
    })
}
