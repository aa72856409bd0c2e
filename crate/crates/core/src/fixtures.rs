//! Fixed synthetic worlds and seeds used by the examples and the acceptance
//! suite, so measured thresholds stay stable from run to run.

use crate::bench::{Estimator, SelectorKind, SweepSpec};
use crate::corpus::{NoiseKind, NoiseSpec, SyntheticWorldSpec};

/// Three well-separated classes, 1000 samples each, 4 jittered prompts per class.
pub fn crossover_world() -> SyntheticWorldSpec {
    SyntheticWorldSpec {
        num_classes: 3,
        dim: 16,
        samples_per_class: vec![1000; 3],
        centroid_separation: 6.0,
        cluster_sigma: 1.0,
        prompts_per_class: 4,
        prompt_jitter_sigma: 0.5,
        seed: 0,
    }
}

pub const CROSSOVER_RATIOS: [f64; 3] = [0.2, 0.5, 0.8];
pub const CROSSOVER_NOISE_SEED: u64 = 7;

/// Symmetric noise at each crossover ratio; zero-shot and logistic
/// estimators, consistency selection.
pub fn crossover_sweep() -> SweepSpec {
    let mut spec = SweepSpec::on_world(
        crossover_world(),
        NoiseKind::Symmetric,
        CROSSOVER_RATIOS.to_vec(),
    );
    spec.estimators = vec![Estimator::Zeroshot, Estimator::Logistic];
    spec.selectors = vec![SelectorKind::Consistency];
    spec.seeds = Some(vec![CROSSOVER_NOISE_SEED]);
    spec
}

pub const MIXFIX_NOISE_RATIO: f64 = 0.5;
pub const HOLDOUT_PER_CLASS: usize = 500;
pub const HOLDOUT_SEED: u64 = 99;

/// Class sizes 1000/500/100 with overlapping clusters.
pub fn imbalanced_world() -> SyntheticWorldSpec {
    SyntheticWorldSpec {
        samples_per_class: vec![1000, 500, 100],
        centroid_separation: 3.0,
        ..crossover_world()
    }
}

pub fn imbalanced_noise() -> NoiseSpec {
    NoiseSpec::symmetric(0.4, 11)
}

/// 100 samples in each of 3 classes, small enough to commit to the repo.
pub fn smoke_world() -> SyntheticWorldSpec {
    SyntheticWorldSpec {
        dim: 8,
        samples_per_class: vec![100; 3],
        seed: 3,
        ..crossover_world()
    }
}
