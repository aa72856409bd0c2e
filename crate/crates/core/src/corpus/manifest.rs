//! JSON manifest tying embedding, label and prompt files together.
//!
//! ```json
//! {
//!   "embeddings": "images.emb1",
//!   "labels": "noisy.lab1",
//!   "true_labels": "clean.lab1",
//!   "prompts": [{"class": "cat", "path": "prompts_0.emb1", "count": 4}],
//!   "num_classes": 3,
//!   "dim": 16
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. `prompts` entries
//! are listed in class-index order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_embeddings, load_labels, save_embeddings, save_labels, NoisyDataset};
use crate::error::{Error, Result};
use crate::zeroshot::PromptBank;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptEntry {
    pub class: String,
    pub path: PathBuf,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub embeddings: PathBuf,
    pub labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_labels: Option<PathBuf>,
    #[serde(default)]
    pub prompts: Vec<PromptEntry>,
    pub num_classes: usize,
    pub dim: usize,
    /// Only consulted when `prompts` is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

impl Manifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: bad manifest: {e}", path.display())))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    fn class_names(&self) -> Vec<String> {
        if !self.prompts.is_empty() {
            self.prompts.iter().map(|p| p.class.clone()).collect()
        } else {
            self.class_names
                .clone()
                .unwrap_or_else(|| NoisyDataset::default_class_names(self.num_classes))
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads the dataset and, if the manifest lists prompts, the prompt bank.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<(NoisyDataset, Option<PromptBank>)> {
    let path = path.as_ref();
    let m = Manifest::read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));

    let embeddings = load_embeddings(resolve(base, &m.embeddings))?;
    if embeddings.cols() != m.dim {
        return Err(Error::Validation(format!(
            "manifest declares dim {}, embeddings have {}",
            m.dim,
            embeddings.cols()
        )));
    }
    let noisy = load_labels(resolve(base, &m.labels))?;
    let truth = m
        .true_labels
        .as_ref()
        .map(|p| load_labels(resolve(base, p)))
        .transpose()?;
    let names = m.class_names();
    if names.len() != m.num_classes {
        return Err(Error::Validation(format!(
            "manifest lists {} classes but declares num_classes {}",
            names.len(),
            m.num_classes
        )));
    }
    let ds = NoisyDataset::new(embeddings, noisy, truth, m.num_classes, names.clone())?;

    let bank = if m.prompts.is_empty() {
        None
    } else {
        let mut sets = Vec::with_capacity(m.prompts.len());
        for entry in &m.prompts {
            let p = load_embeddings(resolve(base, &entry.path))?;
            if p.rows() != entry.count {
                return Err(Error::Validation(format!(
                    "class {:?}: manifest count {} but file has {} prompts",
                    entry.class,
                    entry.count,
                    p.rows()
                )));
            }
            if p.cols() != m.dim {
                return Err(Error::Validation(format!(
                    "class {:?}: prompt dim {} does not match {}",
                    entry.class,
                    p.cols(),
                    m.dim
                )));
            }
            sets.push(p);
        }
        Some(PromptBank::new(names, sets)?)
    };
    Ok((ds, bank))
}

/// Writes a dataset (and optional prompt bank) into `dir` with fixed file
/// names, returning the manifest path.
pub fn save_dataset(
    dir: impl AsRef<Path>,
    ds: &NoisyDataset,
    bank: Option<&PromptBank>,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_embeddings(ds.embeddings(), dir.join("embeddings.emb1"))?;
    save_labels(ds.noisy_labels(), dir.join("labels.lab1"))?;
    if let Some(t) = ds.true_labels() {
        save_labels(t, dir.join("true_labels.lab1"))?;
    }
    let mut prompts = Vec::new();
    if let Some(bank) = bank {
        if bank.num_classes() != ds.num_classes() || bank.dim() != ds.dim() {
            return Err(Error::Validation(
                "prompt bank does not match dataset classes/dimension".into(),
            ));
        }
        for k in 0..bank.num_classes() {
            let name = format!("prompts_{k}.emb1");
            save_embeddings(bank.class_prompts(k), dir.join(&name))?;
            prompts.push(PromptEntry {
                class: bank.class_names()[k].clone(),
                path: name.into(),
                count: bank.class_prompts(k).rows(),
            });
        }
    }
    let manifest = Manifest {
        embeddings: "embeddings.emb1".into(),
        labels: "labels.lab1".into(),
        true_labels: ds.true_labels().map(|_| "true_labels.lab1".into()),
        class_names: prompts
            .is_empty()
            .then(|| ds.class_names().to_vec()),
        prompts,
        num_classes: ds.num_classes(),
        dim: ds.dim(),
    };
    let path = dir.join("manifest.json");
    manifest.write(&path)?;
    Ok(path)
}
