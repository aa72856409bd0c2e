//! Write a dataset as EMB1/LAB1 files plus a JSON manifest, then load it back.

use cleansel::corpus::{load_manifest, make_synthetic_world, Manifest, SyntheticWorldSpec};
use cleansel::corpus::{save_dataset, EMBEDDINGS_MAGIC};

fn main() -> cleansel::Result<()> {
    let (ds, bank) = make_synthetic_world(&SyntheticWorldSpec::balanced(4, 8, 25))?;
    let dir = std::env::temp_dir().join("cleansel-file-formats");
    let manifest_path = save_dataset(&dir, &ds, Some(&bank))?;

    let manifest = Manifest::read(&manifest_path)?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);

    let bytes = std::fs::read(dir.join(&manifest.embeddings)).expect("embeddings written");
    println!("magic {:?}, {} bytes", std::str::from_utf8(&bytes[..4]).unwrap(), bytes.len());
    assert_eq!(&bytes[..4], EMBEDDINGS_MAGIC);

    let (back, back_bank) = load_manifest(&manifest_path)?;
    assert_eq!(back.embeddings(), ds.embeddings());
    assert_eq!(back.noisy_labels(), ds.noisy_labels());
    assert_eq!(back_bank.as_ref(), Some(&bank));
    println!("round trip ok: {} samples, {} prompt files", back.len(), manifest.prompts.len());
    Ok(())
}
