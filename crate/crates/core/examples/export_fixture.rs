//! Regenerate the 300-sample fixture used by the CLI tests:
//! `cargo run --example export_fixture -- crates/core/tests/fixtures/world300`

use cleansel::corpus::{make_synthetic_world, save_dataset};
use cleansel::fixtures;

fn main() -> cleansel::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "crates/core/tests/fixtures/world300".into());
    let (ds, bank) = make_synthetic_world(&fixtures::smoke_world())?;
    let path = save_dataset(&dir, &ds, Some(&bank))?;
    println!("wrote {} ({} samples)", path.display(), ds.len());
    Ok(())
}
