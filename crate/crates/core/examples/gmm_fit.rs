//! Two-component 1-D Gaussian mixture over a bimodal sample.

use cleansel::gmm::{fit_em, EmConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> cleansel::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let small = Normal::new(0.3, 0.2).unwrap();
    let large = Normal::new(2.5, 0.7).unwrap();
    let mut losses: Vec<f64> = (0..700).map(|_| small.sample(&mut rng)).collect();
    losses.extend((0..300).map(|_| large.sample(&mut rng)));

    let g = fit_em(&losses, &EmConfig::default())?;
    println!("weights {:.3?}", g.weights);
    println!("means   {:.3?}", g.means);
    println!("stds    {:.3?}", g.std_devs());
    println!("{} iterations, converged: {}", g.iterations(), g.converged);
    for v in [0.0, 1.0, 1.5, 2.0, 3.0] {
        println!("P(small | {v:.1}) = {:.4}", g.posterior_small(v));
    }
    Ok(())
}
