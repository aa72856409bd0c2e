//! Consistency, small-loss and intersected selection on a noisy world.

use cleansel::corpus::{inject_noise, make_synthetic_world, NoiseSpec, SyntheticWorldSpec};
use cleansel::select::{consistency_select, intersect, loss_select, selection_quality, LossMode};
use cleansel::zeroshot::{l2_normalize, zeroshot_probabilities, Aggregation};

fn main() -> cleansel::Result<()> {
    let spec = SyntheticWorldSpec {
        centroid_separation: 3.0,
        ..SyntheticWorldSpec::balanced(3, 16, 500)
    };
    let (clean, bank) = make_synthetic_world(&spec)?;
    let ds = inject_noise(&clean, &NoiseSpec::symmetric(0.4, 2), None)?;
    let probs = zeroshot_probabilities(&l2_normalize(ds.embeddings())?, &bank.normalized()?, 100.0, Aggregation::Mean)?;
    let (labels, truth) = (ds.noisy_labels(), ds.true_labels().unwrap());

    let cons = consistency_select(&probs, labels, 0.8)?;
    let per_class = loss_select(&probs, labels, 0.5, LossMode::PerClass)?;
    let single = loss_select(&probs, labels, 0.5, LossMode::Single)?;
    let both = intersect(&[cons.clone(), per_class.clone()])?;

    println!("{:<40} {:>8} {:>9} {:>7} {:>7}", "selector", "selected", "precision", "recall", "auc");
    for r in [&cons, &per_class, &single, &both] {
        let q = selection_quality(r, labels, truth)?;
        println!(
            "{:<40} {:>8} {:>9.4} {:>7.4} {:>7.4}",
            r.selector,
            q.n_selected,
            q.precision.unwrap_or(f64::NAN),
            q.recall.unwrap_or(f64::NAN),
            q.roc_auc.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
