//! Classifiers induced from the frozen embeddings and the noisy labels
//! themselves: a multinomial logistic probe and a cosine kNN vote.

mod knn;
mod probe;

pub use knn::{default_k, knn_probabilities, DEFAULT_MAX_K};
pub use probe::{
    load_probe, read_probe, save_probe, write_probe,
    fit_probe, predict_probe, probe_gradient, probe_objective, softmax, LinearProbe,
    ProbeConfig, ProbeGradient,
};
