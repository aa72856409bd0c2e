//! Synthetic label corruption.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabelVector, NoisyDataset};
use crate::error::{Error, Result};
use crate::zeroshot::PromptBank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// Flip to a uniformly random other class.
    Symmetric,
    /// Flip along a fixed class-to-class map.
    Asymmetric,
    /// Flip to the most similar other class, judged by prompt centroids.
    Instance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_map: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
    /// Symmetric only: draw the replacement from all `K` classes, so the
    /// realised corruption rate is `ratio * (K - 1) / K`.
    #[serde(default)]
    pub include_original: bool,
}

impl NoiseSpec {
    pub fn symmetric(ratio: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Symmetric,
            ratio,
            pair_map: None,
            seed,
            include_original: false,
        }
    }

    pub fn asymmetric(ratio: f64, pair_map: Vec<usize>, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Asymmetric,
            ratio,
            pair_map: Some(pair_map),
            seed,
            include_original: false,
        }
    }

    pub fn instance(ratio: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Instance,
            ratio,
            pair_map: None,
            seed,
            include_original: false,
        }
    }
}

/// The usual CIFAR-10 confusion pairs: truck→automobile, bird→airplane,
/// deer→horse, cat↔dog. Class order is the standard CIFAR-10 order.
pub fn cifar10_pair_map() -> Vec<usize> {
    // airplane automobile bird cat deer dog frog horse ship truck
    vec![0, 1, 0, 5, 7, 3, 6, 7, 8, 1]
}

/// `(sample, true class, rng) -> corrupted class`.
type FlipTarget = dyn Fn(usize, usize, &mut ChaCha8Rng) -> usize;

/// Replaces the noisy labels of `ds` with a corruption of its true labels.
/// Instance-dependent noise needs the prompt bank to locate class centroids.
pub fn inject_noise(
    ds: &NoisyDataset,
    spec: &NoiseSpec,
    prompts: Option<&PromptBank>,
) -> Result<NoisyDataset> {
    if !(0.0..=1.0).contains(&spec.ratio) {
        return Err(Error::InvalidParameter(format!(
            "noise ratio {} is outside [0, 1]",
            spec.ratio
        )));
    }
    let truth = ds.true_labels().ok_or_else(|| {
        Error::Validation("noise injection needs true labels on the dataset".into())
    })?;
    let k = ds.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let target: Box<FlipTarget> = match spec.kind {
        NoiseKind::Symmetric => {
            let include = spec.include_original;
            Box::new(move |_, c, rng| {
                if include {
                    rng.random_range(0..k)
                } else {
                    let r = rng.random_range(0..k - 1);
                    if r >= c {
                        r + 1
                    } else {
                        r
                    }
                }
            })
        }
        NoiseKind::Asymmetric => {
            let map = spec.pair_map.clone().ok_or_else(|| {
                Error::InvalidParameter("asymmetric noise requires a pair map".into())
            })?;
            if map.len() != k || map.iter().any(|&t| t >= k) {
                return Err(Error::InvalidParameter(format!(
                    "pair map must have {k} entries, each < {k}"
                )));
            }
            Box::new(move |_, c, _| map[c])
        }
        NoiseKind::Instance => {
            let bank = prompts.ok_or_else(|| {
                Error::InvalidParameter("instance noise requires a prompt bank".into())
            })?;
            if bank.num_classes() != k || bank.dim() != ds.dim() {
                return Err(Error::Dimension(
                    "prompt bank does not match dataset classes/dimension".into(),
                ));
            }
            let nearest = nearest_other_centroid(ds, bank);
            Box::new(move |i, _, _| nearest[i])
        }
    };

    let labels: Vec<usize> = truth
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let u: f64 = rng.random();
            if u < spec.ratio {
                target(i, c, &mut rng)
            } else {
                c
            }
        })
        .collect();
    ds.with_noisy_labels(LabelVector::new(labels))
}

/// For each sample, the non-true class whose prompt centroid has the highest
/// cosine similarity (ties to the lower class index).
fn nearest_other_centroid(ds: &NoisyDataset, bank: &PromptBank) -> Vec<usize> {
    let centroids: Vec<Vec<f64>> = bank
        .centroids()
        .into_iter()
        .map(|c| {
            let n = c.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            c.into_iter().map(|v| v / n).collect()
        })
        .collect();
    let truth = ds.true_labels().expect("checked by caller");
    ds.embeddings()
        .iter_rows()
        .zip(truth.as_slice())
        .map(|(x, &c)| {
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for (j, cent) in centroids.iter().enumerate() {
                if j == c {
                    continue;
                }
                let s: f64 = x.iter().zip(cent).map(|(&a, b)| a as f64 * b).sum();
                if s > best.1 {
                    best = (j, s);
                }
            }
            best.0
        })
        .collect()
}
