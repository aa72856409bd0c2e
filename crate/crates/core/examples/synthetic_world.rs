//! Generate a synthetic embedding world and look at its geometry.

use cleansel::corpus::{SyntheticWorld, SyntheticWorldSpec};

fn main() -> cleansel::Result<()> {
    let spec = SyntheticWorldSpec {
        samples_per_class: vec![200, 120, 40],
        ..SyntheticWorldSpec::balanced(3, 16, 0)
    };
    let world = SyntheticWorld::generate(spec)?;
    let ds = world.dataset()?;
    let bank = world.prompt_bank()?;

    println!("samples: {}  dim: {}  classes: {}", ds.len(), ds.dim(), ds.num_classes());
    println!("class counts: {:?}", ds.noisy_labels().histogram(ds.num_classes()));
    println!("prompts per class: {:?}", bank.counts());

    let c = world.centroids();
    for i in 0..c.len() {
        for j in i + 1..c.len() {
            let d: f64 = c[i].iter().zip(&c[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            println!("centroid distance {i}-{j}: {d:.2}");
        }
    }
    Ok(())
}
