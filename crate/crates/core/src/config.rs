//! Threshold presets and the JSON run configuration shared by CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Selection and MixFix thresholds for one dataset family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: &'static str,
    pub theta_consistency: f64,
    pub theta_loss: f64,
    pub theta_r: f64,
    pub theta_r_prime: f64,
}

const fn preset(name: &'static str, tc: f64, tl: f64, tr: f64, trp: f64) -> Preset {
    Preset {
        name,
        theta_consistency: tc,
        theta_loss: tl,
        theta_r: tr,
        theta_r_prime: trp,
    }
}

pub const PRESETS: &[Preset] = &[
    preset("default", 0.8, 0.5, 0.7, 0.8),
    // strict agreement: the selected label must be the top class
    preset("strict", 1.0, 0.5, 0.7, 0.8),
    preset("cifar10-sym", 0.8, 0.5, 0.8, 0.9),
    preset("cifar10-asym", 0.8, 0.5, 0.8, 0.9),
    preset("cifar100-sym", 0.8, 0.5, 0.7, 0.8),
    preset("red-mini-imagenet", 0.8, 0.5, 0.8, 0.95),
    preset("webvision", 1.0, 0.5, 0.7, 1.0),
    preset("clothing1m", 0.5, 0.0, 0.7, 1.0),
    preset("animal10n", 0.8, 0.5, 0.7, 0.99),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

pub fn find_preset(name: &str) -> Result<Preset> {
    PRESETS.iter().copied().find(|p| p.name == name).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "unknown preset {name:?}; known presets: {}",
            preset_names().join(", ")
        ))
    })
}

/// Contents of a `--config` file. Every key is optional; command-line flags
/// override whatever is set here.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub verbosity: Option<u8>,
    pub out_dir: Option<PathBuf>,
    pub theta_consistency: Option<f64>,
    pub theta_loss: Option<f64>,
    pub theta_r: Option<f64>,
    pub theta_r_prime: Option<f64>,
    pub temperature: Option<f64>,
    pub epochs: Option<usize>,
}

impl ConfigFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: bad config: {e}", path.display())))
    }
}

/// Resolved process-wide settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalConfig {
    pub seed: u64,
    /// Whether the seed came from a flag or the config file.
    pub seed_set: bool,
    pub preset: Preset,
    pub verbosity: u8,
    pub out_dir: PathBuf,
    pub file: ConfigFile,
}

impl GlobalConfig {
    /// Layers flags over the config file over built-in defaults.
    pub fn resolve(
        seed: Option<u64>,
        preset: Option<&str>,
        verbosity: u8,
        out_dir: Option<PathBuf>,
        file: ConfigFile,
    ) -> Result<Self> {
        let preset_name = preset
            .map(str::to_owned)
            .or_else(|| file.preset.clone())
            .unwrap_or_else(|| "default".into());
        Ok(Self {
            seed: seed.or(file.seed).unwrap_or(0),
            seed_set: seed.or(file.seed).is_some(),
            preset: find_preset(&preset_name)?,
            verbosity: if verbosity > 0 { verbosity } else { file.verbosity.unwrap_or(0) },
            out_dir: out_dir.or_else(|| file.out_dir.clone()).unwrap_or_else(|| ".".into()),
            file,
        })
    }

    pub fn theta_consistency(&self, flag: Option<f64>) -> f64 {
        flag.or(self.file.theta_consistency).unwrap_or(self.preset.theta_consistency)
    }

    pub fn theta_loss(&self, flag: Option<f64>) -> f64 {
        flag.or(self.file.theta_loss).unwrap_or(self.preset.theta_loss)
    }

    pub fn theta_r(&self, flag: Option<f64>) -> f64 {
        flag.or(self.file.theta_r).unwrap_or(self.preset.theta_r)
    }

    pub fn theta_r_prime(&self, flag: Option<f64>) -> f64 {
        flag.or(self.file.theta_r_prime).unwrap_or(self.preset.theta_r_prime)
    }

    /// Relative paths are taken relative to the output directory.
    pub fn output_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }
}
