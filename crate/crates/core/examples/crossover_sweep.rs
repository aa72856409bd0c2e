//! Zero-shot versus induced estimators as label noise grows. Pass an output
//! directory to also write report.csv and report.json.

use cleansel::bench::{run_sweep, Estimator, SelectorKind};
use cleansel::fixtures;

fn main() -> cleansel::Result<()> {
    let mut spec = fixtures::crossover_sweep();
    spec.estimators.push(Estimator::Knn);
    spec.selectors = vec![SelectorKind::Consistency, SelectorKind::Loss, SelectorKind::Intersect];
    let report = run_sweep(&spec)?;

    println!("{:<7} {:<9} {:<12} {:>7} {:>9} {:>7}", "ratio", "estimator", "selector", "auc", "precision", "recall");
    for r in &report.rows {
        println!(
            "{:<7} {:<9} {:<12} {:>7.4} {:>9.4} {:>7.4}",
            r.ratio,
            r.estimator.name(),
            r.selector.name(),
            r.roc_auc.unwrap_or(f64::NAN),
            r.precision.unwrap_or(f64::NAN),
            r.recall.unwrap_or(f64::NAN)
        );
    }
    if let Some(dir) = std::env::args().nth(1) {
        report.write(&dir)?;
        println!("wrote {dir}/report.csv and {dir}/report.json");
    }
    Ok(())
}
