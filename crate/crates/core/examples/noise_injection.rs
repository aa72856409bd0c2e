//! Symmetric, asymmetric and instance-dependent label noise on one world.

use cleansel::corpus::{inject_noise, make_synthetic_world, NoiseSpec, SyntheticWorldSpec};

fn main() -> cleansel::Result<()> {
    let (ds, bank) = make_synthetic_world(&SyntheticWorldSpec::balanced(4, 16, 500))?;

    let specs = [
        ("symmetric", NoiseSpec::symmetric(0.4, 1)),
        ("asymmetric 0->1, 2->3", NoiseSpec::asymmetric(0.4, vec![1, 1, 3, 3], 1)),
        ("instance", NoiseSpec::instance(0.4, 1)),
    ];
    for (name, spec) in specs {
        let noisy = inject_noise(&ds, &spec, Some(&bank))?;
        let mut flips = [[0usize; 4]; 4];
        for (&t, &y) in ds.noisy_labels().as_slice().iter().zip(noisy.noisy_labels().as_slice()) {
            flips[t][y] += 1;
        }
        println!("{name}: realized noise {:.3}", noisy.noise_rate().unwrap());
        for (t, row) in flips.iter().enumerate() {
            println!("  true {t} -> {row:?}");
        }
    }
    Ok(())
}
