//! Gaussian-cluster stand-in for a vision-language embedding space.
//!
//! Class centroids sit on a sphere of radius `separation * sigma`, pairwise at
//! least `separation * sigma` apart. Images scatter isotropically around their
//! centroid; prompts scatter around the same centroid with their own jitter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EmbeddingMatrix, LabelVector, NoisyDataset};
use crate::error::{Error, Result};
use crate::zeroshot::PromptBank;

const MAX_CENTROID_ATTEMPTS: usize = 10_000;

const STREAM_CENTROIDS: u64 = 1;
const STREAM_IMAGES: u64 = 2;
const STREAM_PROMPTS: u64 = 3;
const STREAM_HOLDOUT: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorldSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: Vec<usize>,
    pub centroid_separation: f64,
    pub cluster_sigma: f64,
    pub prompts_per_class: usize,
    pub prompt_jitter_sigma: f64,
    pub seed: u64,
}

impl SyntheticWorldSpec {
    /// Balanced world with `per_class` samples in each class.
    pub fn balanced(num_classes: usize, dim: usize, per_class: usize) -> Self {
        Self {
            num_classes,
            dim,
            samples_per_class: vec![per_class; num_classes],
            centroid_separation: 6.0,
            cluster_sigma: 1.0,
            prompts_per_class: 4,
            prompt_jitter_sigma: 0.5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.dim == 0 || self.prompts_per_class == 0 {
            return bad("dim and prompts_per_class must be >= 1".into());
        }
        if self.samples_per_class.len() != self.num_classes
            || self.samples_per_class.contains(&0)
        {
            return bad(format!(
                "samples_per_class needs {} entries, each >= 1",
                self.num_classes
            ));
        }
        if !(self.cluster_sigma > 0.0 && self.cluster_sigma.is_finite()) {
            return bad(format!("cluster_sigma must be > 0, got {}", self.cluster_sigma));
        }
        if !(self.prompt_jitter_sigma >= 0.0 && self.prompt_jitter_sigma.is_finite()) {
            return bad(format!(
                "prompt_jitter_sigma must be >= 0, got {}",
                self.prompt_jitter_sigma
            ));
        }
        if !(self.centroid_separation >= 0.0 && self.centroid_separation.is_finite()) {
            return bad("centroid_separation must be finite and >= 0".into());
        }
        Ok(())
    }
}

/// A generated world: its parameters plus the class centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    spec: SyntheticWorldSpec,
    centroids: Vec<Vec<f64>>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

impl SyntheticWorld {
    pub fn generate(spec: SyntheticWorldSpec) -> Result<Self> {
        spec.validate()?;
        let radius = spec.centroid_separation * spec.cluster_sigma;
        let min_dist = radius;
        let mut rng = stream(spec.seed, STREAM_CENTROIDS);
        let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(spec.num_classes);
        for k in 0..spec.num_classes {
            let mut placed = false;
            for _ in 0..MAX_CENTROID_ATTEMPTS {
                let mut v = gaussian(&mut rng, spec.dim);
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n == 0.0 {
                    continue;
                }
                v.iter_mut().for_each(|x| *x *= radius / n);
                if centroids.iter().all(|c| distance(c, &v) >= min_dist) {
                    centroids.push(v);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::Generation(format!(
                    "could not place centroid {k} at separation {} in {} dimensions",
                    spec.centroid_separation, spec.dim
                )));
            }
        }
        Ok(Self { spec, centroids })
    }

    pub fn spec(&self) -> &SyntheticWorldSpec {
        &self.spec
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    fn class_names(&self) -> Vec<String> {
        NoisyDataset::default_class_names(self.spec.num_classes)
    }

    fn sample_with(
        &self,
        counts: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<(EmbeddingMatrix, LabelVector)> {
        let total: usize = counts.iter().sum();
        let mut data = Vec::with_capacity(total * self.spec.dim);
        let mut labels = Vec::with_capacity(total);
        for (k, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                let noise = gaussian(rng, self.spec.dim);
                data.extend(
                    self.centroids[k]
                        .iter()
                        .zip(noise)
                        .map(|(c, z)| (c + self.spec.cluster_sigma * z) as f32),
                );
                labels.push(k);
            }
        }
        Ok((
            EmbeddingMatrix::new(total, self.spec.dim, data)?,
            LabelVector::new(labels),
        ))
    }

    /// Training set: `samples_per_class` points, class-major order, clean labels.
    pub fn dataset(&self) -> Result<NoisyDataset> {
        let mut rng = stream(self.spec.seed, STREAM_IMAGES);
        let (m, labels) = self.sample_with(&self.spec.samples_per_class, &mut rng)?;
        NoisyDataset::clean(m, labels, self.spec.num_classes, self.class_names())
    }

    /// Independent draw from the same clusters, for held-out evaluation.
    pub fn holdout(&self, per_class: usize, seed: u64) -> Result<NoisyDataset> {
        let mut rng = stream(self.spec.seed ^ seed.rotate_left(17), STREAM_HOLDOUT);
        let counts = vec![per_class; self.spec.num_classes];
        let (m, labels) = self.sample_with(&counts, &mut rng)?;
        NoisyDataset::clean(m, labels, self.spec.num_classes, self.class_names())
    }

    pub fn prompt_bank(&self) -> Result<PromptBank> {
        let mut rng = stream(self.spec.seed, STREAM_PROMPTS);
        let j = self.spec.prompts_per_class;
        let sets = self
            .centroids
            .iter()
            .map(|c| {
                let mut data = Vec::with_capacity(j * self.spec.dim);
                for _ in 0..j {
                    let noise = gaussian(&mut rng, self.spec.dim);
                    data.extend(
                        c.iter()
                            .zip(noise)
                            .map(|(c, z)| (c + self.spec.prompt_jitter_sigma * z) as f32),
                    );
                }
                EmbeddingMatrix::new(j, self.spec.dim, data)
            })
            .collect::<Result<Vec<_>>>()?;
        PromptBank::new(self.class_names(), sets)
    }
}

/// Generates the training set (clean labels) and its prompt bank.
pub fn make_synthetic_world(spec: &SyntheticWorldSpec) -> Result<(NoisyDataset, PromptBank)> {
    let world = SyntheticWorld::generate(spec.clone())?;
    Ok((world.dataset()?, world.prompt_bank()?))
}
