use serde::{Deserialize, Serialize};

use super::SelectionResult;
use crate::corpus::LabelVector;
use crate::error::{Error, Result};

/// How well a selection recovers the truly clean samples.
///
/// Undefined ratios are `None`: precision with nothing selected, recall with
/// no clean samples, AUC when either class is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionQuality {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub roc_auc: Option<f64>,
    pub n_selected: usize,
    pub n_clean: usize,
    pub n_total: usize,
    /// Selected samples per noisy-label class.
    pub per_class_selected_counts: Vec<usize>,
}

impl SelectionQuality {
    /// Largest over smallest per-class selected count; infinite when some
    /// class had nothing selected.
    pub fn max_min_ratio(&self) -> f64 {
        let max = self.per_class_selected_counts.iter().copied().max().unwrap_or(0);
        let min = self.per_class_selected_counts.iter().copied().min().unwrap_or(0);
        if min == 0 {
            f64::INFINITY
        } else {
            max as f64 / min as f64
        }
    }
}

/// Mann-Whitney AUC of `scores` for separating `positive` from the rest;
/// tied pairs count 1/2.
pub fn rank_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based mid-ranks of the positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| positive[i]).count();
        rank_sum += mid * pos_in_group as f64;
        start = end;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// ROC curve as `(fpr, tpr)` points from `(0,0)` to `(1,1)`, one point per
/// distinct score. With only one class present the curve is the diagonal.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Vec<(f64, f64)> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return vec![(0.0, 0.0), (1.0, 1.0)];
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            if positive[order[end]] {
                tp += 1;
            } else {
                fp += 1;
            }
            end += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        start = end;
    }
    points
}

pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

fn clean_indicator(noisy: &LabelVector, truth: &LabelVector) -> Result<Vec<bool>> {
    if noisy.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} noisy labels vs {} true labels",
            noisy.len(),
            truth.len()
        )));
    }
    Ok(noisy
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| a == b)
        .collect())
}

/// ROC points of the selection's continuous scores against the truly clean
/// samples.
pub fn emit_roc_points(
    result: &SelectionResult,
    truth: &LabelVector,
    noisy: &LabelVector,
) -> Result<Vec<(f64, f64)>> {
    let clean = clean_indicator(noisy, truth)?;
    if clean.len() != result.len() {
        return Err(Error::Dimension("selection length does not match labels".into()));
    }
    Ok(roc_curve(&result.scores, &clean))
}

pub fn selection_quality(
    result: &SelectionResult,
    noisy: &LabelVector,
    truth: &LabelVector,
) -> Result<SelectionQuality> {
    let clean = clean_indicator(noisy, truth)?;
    if clean.len() != result.len() {
        return Err(Error::Dimension(format!(
            "selection has {} entries, labels {}",
            result.len(),
            clean.len()
        )));
    }
    let n_selected = result.count();
    let n_clean = clean.iter().filter(|&&c| c).count();
    let hits = result
        .mask
        .iter()
        .zip(&clean)
        .filter(|(&m, &c)| m && c)
        .count();
    let precision = (n_selected > 0).then(|| hits as f64 / n_selected as f64);
    let recall = (n_clean > 0).then(|| hits as f64 / n_clean as f64);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    let classes = noisy
        .max_label()
        .into_iter()
        .chain(truth.max_label())
        .max()
        .map_or(0, |m| m + 1);
    let mut per_class = vec![0; classes];
    for (&m, &l) in result.mask.iter().zip(noisy.as_slice()) {
        if m {
            per_class[l] += 1;
        }
    }
    Ok(SelectionQuality {
        precision,
        recall,
        f1,
        roc_auc: rank_auc(&result.scores, &clean),
        n_selected,
        n_clean,
        n_total: clean.len(),
        per_class_selected_counts: per_class,
    })
}
