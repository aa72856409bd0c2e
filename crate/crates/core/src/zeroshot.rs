//! Zero-shot class probabilities from image embeddings and a bank of prompt
//! embeddings.
//!
//! For an image `x` and class `k` with prompts `p_{k,1..J_k}`, the raw score is
//!
//! ```text
//! s_k(x) = agg_j exp(t * <x, p_{k,j}>)        agg = mean (default) | sum
//! P(k | x) = s_k(x) / sum_k' s_k'(x)
//! ```
//!
//! Nothing here looks at labels, so the estimate is unaffected by label noise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Row-sum tolerance for a valid probability row.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

pub const DEFAULT_TEMPERATURE: f64 = 100.0;

/// Per-class prompt embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBank {
    class_names: Vec<String>,
    prompts: Vec<EmbeddingMatrix>,
}

impl PromptBank {
    pub fn new(class_names: Vec<String>, prompts: Vec<EmbeddingMatrix>) -> Result<Self> {
        if prompts.is_empty() {
            return Err(Error::Validation("prompt bank has no classes".into()));
        }
        if class_names.len() != prompts.len() {
            return Err(Error::Validation(format!(
                "{} class names for {} prompt sets",
                class_names.len(),
                prompts.len()
            )));
        }
        let dim = prompts[0].cols();
        if let Some(k) = prompts.iter().position(|p| p.cols() != dim) {
            return Err(Error::Dimension(format!(
                "class {k} prompts have dimension {}, expected {dim}",
                prompts[k].cols()
            )));
        }
        Ok(Self {
            class_names,
            prompts,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.prompts.len()
    }

    pub fn dim(&self) -> usize {
        self.prompts[0].cols()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_prompts(&self, k: usize) -> &EmbeddingMatrix {
        &self.prompts[k]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.prompts.iter().map(|p| p.rows()).collect()
    }

    /// Mean prompt embedding of each class.
    pub fn centroids(&self) -> Vec<Vec<f64>> {
        self.prompts
            .iter()
            .map(|p| {
                let mut c = vec![0.0; p.cols()];
                for row in p.iter_rows() {
                    for (acc, &v) in c.iter_mut().zip(row) {
                        *acc += v as f64;
                    }
                }
                c.iter_mut().for_each(|v| *v /= p.rows() as f64);
                c
            })
            .collect()
    }

    pub fn normalized(&self) -> Result<Self> {
        Ok(Self {
            class_names: self.class_names.clone(),
            prompts: self
                .prompts
                .iter()
                .map(l2_normalize)
                .collect::<Result<_>>()?,
        })
    }
}

/// `N × K` matrix whose rows are probability distributions over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbabilities {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ClassProbabilities {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::Validation("probability rows must be non-empty".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} probabilities need {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        for (i, row) in data.chunks_exact(cols).enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Validation(format!(
                    "row {i} has an entry outside [0, 1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Validation(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.as_ref().len() != cols {
                return Err(Error::Dimension("ragged probability rows".into()));
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(rows.len(), cols, data)
    }

    /// Uniform `1/K` rows.
    pub fn uniform(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![1.0 / cols as f64; rows * cols],
        }
    }

    /// Reads probabilities stored as an EMB1 matrix. Rows are renormalised
    /// after widening, since `f32` storage perturbs row sums slightly.
    pub fn from_matrix(m: &EmbeddingMatrix) -> Result<Self> {
        let mut data = Vec::with_capacity(m.rows() * m.cols());
        for (i, row) in m.iter_rows().enumerate() {
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            if row.iter().any(|&v| v < 0.0) || (s - 1.0).abs() > 1e-4 {
                return Err(Error::Validation(format!(
                    "row {i} is not a probability distribution (sum {s})"
                )));
            }
            data.extend(row.iter().map(|&v| v as f64 / s));
        }
        Self::new(m.rows(), m.cols(), data)
    }

    pub fn to_matrix(&self) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::new(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| v as f32).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn num_classes(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Row-wise argmax, ties to the lowest class index.
    pub fn argmax(&self) -> Vec<usize> {
        self.iter_rows().map(|r| argmax(r).0).collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Fraction of rows whose argmax equals `labels[i]`.
    pub fn accuracy(&self, labels: &[usize]) -> f64 {
        let hits = self
            .argmax()
            .iter()
            .zip(labels)
            .filter(|(a, b)| a == b)
            .count();
        hits as f64 / self.rows.max(1) as f64
    }
}

/// `(index, value)` of the first maximum.
pub(crate) fn argmax(row: &[f64]) -> (usize, f64) {
    let mut best = (0, row[0]);
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Average of per-prompt kernels; insensitive to unequal prompt counts.
    #[default]
    Mean,
    /// Plain sum over prompts.
    Sum,
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = Vec::with_capacity(m.rows() * m.cols());
    for (i, row) in m.iter_rows().enumerate() {
        let norm = row
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm { row: i });
        }
        data.extend(row.iter().map(|&v| (v as f64 / norm) as f32));
    }
    EmbeddingMatrix::new(m.rows(), m.cols(), data)
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum()
}

/// Multi-prompt zero-shot estimate. Inputs are expected to be unit-normalised.
pub fn zeroshot_probabilities(
    images: &EmbeddingMatrix,
    bank: &PromptBank,
    temperature: f64,
    aggregation: Aggregation,
) -> Result<ClassProbabilities> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    if images.cols() != bank.dim() {
        return Err(Error::Dimension(format!(
            "images have dimension {}, prompts {}",
            images.cols(),
            bank.dim()
        )));
    }
    let k = bank.num_classes();
    let data: Vec<f64> = (0..images.rows())
        .into_par_iter()
        .flat_map_iter(|i| score_row(images.row(i), bank, temperature, aggregation))
        .collect();
    debug_assert_eq!(data.len(), images.rows() * k);
    Ok(ClassProbabilities {
        rows: images.rows(),
        cols: k,
        data,
    })
}

fn score_row(x: &[f32], bank: &PromptBank, temperature: f64, agg: Aggregation) -> Vec<f64> {
    // Similarities are sorted within each class so the reduction does not
    // depend on prompt order.
    let sims: Vec<Vec<f64>> = (0..bank.num_classes())
        .map(|k| {
            let mut s: Vec<f64> = bank.class_prompts(k).iter_rows().map(|p| dot(x, p)).collect();
            s.sort_by(f64::total_cmp);
            s
        })
        .collect();
    let shift = sims
        .iter()
        .flat_map(|s| s.last().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut scores: Vec<f64> = sims
        .iter()
        .map(|s| {
            let total: f64 = s.iter().map(|&v| (temperature * (v - shift)).exp()).sum();
            match agg {
                Aggregation::Mean => total / s.len() as f64,
                Aggregation::Sum => total,
            }
        })
        .collect();
    let z: f64 = scores.iter().sum();
    scores.iter_mut().for_each(|s| *s /= z);
    scores
}

/// The single-template special case: exactly one prompt per class.
pub fn single_prompt_probabilities(
    images: &EmbeddingMatrix,
    bank: &PromptBank,
    temperature: f64,
) -> Result<ClassProbabilities> {
    if let Some(k) = bank.counts().iter().position(|&c| c != 1) {
        return Err(Error::Validation(format!(
            "class {k} has {} prompts, single-prompt mode needs exactly 1",
            bank.counts()[k]
        )));
    }
    zeroshot_probabilities(images, bank, temperature, Aggregation::Mean)
}
