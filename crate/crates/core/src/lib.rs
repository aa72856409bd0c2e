//! Clean-sample selection for noisily-labeled embedding datasets.
//!
//! The pipeline works on precomputed image embeddings plus per-class prompt
//! embeddings:
//!
//! 1. [`corpus`] loads EMB1/LAB1 files through a JSON manifest, generates
//!    synthetic worlds and injects label noise.
//! 2. Class probabilities come from the prompts ([`zeroshot`]) or from
//!    classifiers fitted on the noisy labels ([`induced`]).
//! 3. [`select`] keeps samples whose label agrees with those probabilities
//!    (consistency ratio, small-loss [`gmm`] posterior, or both).
//! 4. [`mixfix`] trains a probe on the selection and grows the training set by
//!    absorbing or relabeling confident non-selected samples.
//!
//! [`bench`] sweeps the whole pipeline over noise settings and [`cli`] backs
//! the `cleansel` binary.
//!
//! ```
//! use cleansel::bench::{estimate, select, Estimator, EstimatorSettings, SelectorKind, SelectorSettings};
//! use cleansel::corpus::{inject_noise, make_synthetic_world, NoiseSpec, SyntheticWorldSpec};
//! use cleansel::zeroshot::l2_normalize;
//!
//! # fn main() -> cleansel::Result<()> {
//! let (clean, bank) = make_synthetic_world(&SyntheticWorldSpec::balanced(3, 16, 200))?;
//! let ds = inject_noise(&clean, &NoiseSpec::symmetric(0.4, 1), None)?;
//! let ds = ds.with_embeddings(l2_normalize(ds.embeddings())?)?;
//! let probs = estimate(Estimator::Zeroshot, &ds, Some(&bank.normalized()?), &EstimatorSettings::default())?;
//! let keep = select(SelectorKind::Intersect, &probs, &ds, &SelectorSettings::default())?;
//! println!("kept {} of {}", keep.count(), ds.len());
//! # Ok(())
//! # }
//! ```

pub mod bench;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod fixtures;
pub mod gmm;
pub mod induced;
pub mod mixfix;
pub mod select;
pub mod zeroshot;

pub use corpus::{EmbeddingMatrix, LabelVector, NoisyDataset};
pub use error::{Error, Result};
pub use select::SelectionResult;
pub use zeroshot::{ClassProbabilities, PromptBank};
