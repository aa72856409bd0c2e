//! Zero-shot class probabilities from prompt embeddings, and their
//! independence from the (noisy) labels.

use cleansel::corpus::{inject_noise, make_synthetic_world, NoiseSpec, SyntheticWorldSpec};
use cleansel::zeroshot::{l2_normalize, zeroshot_probabilities, Aggregation};

fn main() -> cleansel::Result<()> {
    let (ds, bank) = make_synthetic_world(&SyntheticWorldSpec::balanced(3, 16, 300))?;
    let images = l2_normalize(ds.embeddings())?;
    let bank = bank.normalized()?;
    let truth = ds.noisy_labels().as_slice();

    for t in [1.0, 10.0, 100.0] {
        for agg in [Aggregation::Mean, Aggregation::Sum] {
            let p = zeroshot_probabilities(&images, &bank, t, agg)?;
            println!("T={t:>5} {agg:?}: accuracy {:.3}, first row {:.3?}", p.accuracy(truth), p.row(0));
        }
    }

    let noisy = inject_noise(&ds, &NoiseSpec::symmetric(0.8, 5), None)?;
    let a = zeroshot_probabilities(&images, &bank, 100.0, Aggregation::Mean)?;
    let b = zeroshot_probabilities(&l2_normalize(noisy.embeddings())?, &bank, 100.0, Aggregation::Mean)?;
    assert_eq!(a, b);
    println!("80% label noise leaves zero-shot scores unchanged");
    Ok(())
}
