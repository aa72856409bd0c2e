//! Logistic-probe and kNN class probabilities learned from noisy labels.

use cleansel::corpus::{inject_noise, make_synthetic_world, NoiseSpec, SyntheticWorldSpec};
use cleansel::induced::{default_k, fit_probe, knn_probabilities, predict_probe, ProbeConfig};
use cleansel::zeroshot::l2_normalize;

fn main() -> cleansel::Result<()> {
    let (clean, _) = make_synthetic_world(&SyntheticWorldSpec::balanced(3, 16, 400))?;
    let clean = clean.with_embeddings(l2_normalize(clean.embeddings())?)?;
    let truth = clean.noisy_labels().as_slice().to_vec();

    for ratio in [0.0, 0.3, 0.6] {
        let ds = inject_noise(&clean, &NoiseSpec::symmetric(ratio, 3), None)?;
        let probe = fit_probe(&ds, &ProbeConfig::default())?;
        let p = predict_probe(&probe, ds.embeddings())?;
        let k = default_k(&ds);
        let q = knn_probabilities(&ds, k)?;
        println!(
            "noise {ratio:.1}: probe acc {:.3} ({} steps, loss {:.4}), {k}-NN acc {:.3}",
            p.accuracy(&truth),
            probe.loss_trace.len() - 1,
            probe.loss_trace.last().unwrap(),
            q.accuracy(&truth),
        );
    }
    Ok(())
}
