//! Train on a clean selection and let MixFix absorb and relabel the rest.

use cleansel::bench::{estimate, select, EstimatorSettings, Estimator, SelectorKind, SelectorSettings};
use cleansel::corpus::{inject_noise, NoiseSpec, SyntheticWorld};
use cleansel::fixtures;
use cleansel::induced::{fit_probe, predict_probe, ProbeConfig};
use cleansel::mixfix::{mixfix_run, MixFixConfig, Origin};
use cleansel::zeroshot::l2_normalize;

fn main() -> cleansel::Result<()> {
    let world = SyntheticWorld::generate(fixtures::crossover_world())?;
    let unit = |d: cleansel::corpus::NoisyDataset| d.with_embeddings(l2_normalize(d.embeddings()).unwrap());
    let clean = unit(world.dataset()?)?;
    let holdout = unit(world.holdout(fixtures::HOLDOUT_PER_CLASS, fixtures::HOLDOUT_SEED)?)?;
    let bank = world.prompt_bank()?.normalized()?;

    let ds = inject_noise(&clean, &NoiseSpec::symmetric(0.5, 7), None)?;
    let probs = estimate(Estimator::Zeroshot, &ds, Some(&bank), &EstimatorSettings::default())?;
    let sel = select(SelectorKind::Intersect, &probs, &ds, &SelectorSettings::default())?;
    println!("selected {} of {}", sel.count(), ds.len());

    let cfg = MixFixConfig { epochs: 10, ..MixFixConfig::default() };
    let (state, _) = mixfix_run(&ds, &sel, &cfg, Some(&holdout))?;
    for r in &state.history {
        println!(
            "epoch {:>2}: train {:>4} (+{} absorbed, +{} relabeled), label acc {:.4}, holdout {:.4}",
            r.epoch, r.n_train, r.n_absorbed, r.n_relabeled,
            r.train_label_acc.unwrap_or(f64::NAN), r.holdout_acc.unwrap_or(f64::NAN)
        );
    }
    println!("dropped: {}", state.count(Origin::Dropped));

    let truth = ds.true_labels().unwrap().as_slice();
    println!("train-set noise {:.4} (was {:.4})", state.train_noise_ratio(truth), ds.noise_rate().unwrap());
    let noisy_probe = fit_probe(&ds, &ProbeConfig::default())?;
    let oracle = fit_probe(&clean, &ProbeConfig::default())?;
    let acc = |p| predict_probe(p, holdout.embeddings()).unwrap().accuracy(holdout.noisy_labels().as_slice());
    println!("holdout: noisy-label probe {:.4}, true-label probe {:.4}", acc(&noisy_probe), acc(&oracle));
    Ok(())
}
