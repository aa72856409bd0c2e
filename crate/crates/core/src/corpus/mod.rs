//! Dataset containers, on-disk formats, label-noise injection and synthetic
//! embedding worlds.
//!
//! Embeddings are stored as `f32` so that they round-trip bit-exactly through
//! the EMB1 format; all downstream arithmetic accumulates in `f64`.

mod format;
mod manifest;
mod noise;
mod world;

pub use format::{
    load_embeddings, load_labels, read_embeddings, read_labels, save_embeddings, save_labels,
    write_embeddings, write_labels, EMBEDDINGS_MAGIC, LABELS_MAGIC,
};
pub use manifest::{load_manifest, save_dataset, Manifest, PromptEntry};
pub use noise::{cifar10_pair_map, inject_noise, NoiseKind, NoiseSpec};
pub use world::{make_synthetic_world, SyntheticWorld, SyntheticWorldSpec};

use crate::error::{Error, Result};

/// Dense row-major `rows × cols` matrix of finite `f32` scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Validation(format!(
                "embedding matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at row {}, col {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from `f64` rows, rounding to `f32`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.cols)
    }

    /// Copies the selected rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.cols, data)
    }

    /// Stacks `other` below `self`.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if other.cols != self.cols {
            return Err(Error::Dimension(format!(
                "cannot stack {} columns onto {}",
                other.cols, self.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Self::new(self.rows + other.rows, self.cols, data)
    }
}

/// Class indices, one per sample.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelVector {
    labels: Vec<usize>,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.labels
    }

    pub fn max_label(&self) -> Option<usize> {
        self.labels.iter().copied().max()
    }

    /// Errors unless every label is `< num_classes`.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().position(|&l| l >= num_classes) {
            Some(i) => Err(Error::Validation(format!(
                "label {} at index {i} is out of range for {num_classes} classes",
                self.labels[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn histogram(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

impl From<Vec<usize>> for LabelVector {
    fn from(labels: Vec<usize>) -> Self {
        Self::new(labels)
    }
}

/// Embeddings with (possibly corrupted) labels and, for evaluation, the
/// clean labels they were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    embeddings: EmbeddingMatrix,
    noisy_labels: LabelVector,
    true_labels: Option<LabelVector>,
    num_classes: usize,
    class_names: Vec<String>,
}

impl NoisyDataset {
    pub fn new(
        embeddings: EmbeddingMatrix,
        noisy_labels: LabelVector,
        true_labels: Option<LabelVector>,
        num_classes: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if class_names.len() != num_classes {
            return Err(Error::Validation(format!(
                "{} class names for {num_classes} classes",
                class_names.len()
            )));
        }
        let n = embeddings.rows();
        if noisy_labels.len() != n {
            return Err(Error::Dimension(format!(
                "{} noisy labels for {n} embeddings",
                noisy_labels.len()
            )));
        }
        noisy_labels.validate(num_classes)?;
        if let Some(t) = &true_labels {
            if t.len() != n {
                return Err(Error::Dimension(format!(
                    "{} true labels for {n} embeddings",
                    t.len()
                )));
            }
            t.validate(num_classes)?;
        }
        Ok(Self {
            embeddings,
            noisy_labels,
            true_labels,
            num_classes,
            class_names,
        })
    }

    /// Clean dataset whose noisy labels start equal to the truth.
    pub fn clean(
        embeddings: EmbeddingMatrix,
        labels: LabelVector,
        num_classes: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        Self::new(
            embeddings,
            labels.clone(),
            Some(labels),
            num_classes,
            class_names,
        )
    }

    pub fn default_class_names(num_classes: usize) -> Vec<String> {
        (0..num_classes).map(|k| format!("class{k}")).collect()
    }

    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn noisy_labels(&self) -> &LabelVector {
        &self.noisy_labels
    }

    pub fn true_labels(&self) -> Option<&LabelVector> {
        self.true_labels.as_ref()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Same samples, different noisy labels.
    pub fn with_noisy_labels(&self, labels: LabelVector) -> Result<Self> {
        Self::new(
            self.embeddings.clone(),
            labels,
            self.true_labels.clone(),
            self.num_classes,
            self.class_names.clone(),
        )
    }

    pub fn with_embeddings(&self, embeddings: EmbeddingMatrix) -> Result<Self> {
        Self::new(
            embeddings,
            self.noisy_labels.clone(),
            self.true_labels.clone(),
            self.num_classes,
            self.class_names.clone(),
        )
    }

    /// Fraction of samples whose noisy label differs from the truth.
    pub fn noise_rate(&self) -> Option<f64> {
        let truth = self.true_labels.as_ref()?;
        let flipped = self
            .noisy_labels
            .as_slice()
            .iter()
            .zip(truth.as_slice())
            .filter(|(a, b)| a != b)
            .count();
        Some(flipped as f64 / self.len() as f64)
    }

    /// `c_i = (noisy_i == true_i)`, when truth is known.
    pub fn clean_indicator(&self) -> Option<Vec<bool>> {
        let truth = self.true_labels.as_ref()?;
        Some(
            self.noisy_labels
                .as_slice()
                .iter()
                .zip(truth.as_slice())
                .map(|(a, b)| a == b)
                .collect(),
        )
    }
}
