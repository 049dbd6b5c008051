//! Declarative run configuration read from TOML. Every section and key is
//! optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::Context;
use qpa_core::attention::ScorerKind;
use qpa_core::data::{load_idx, split, synthetic_dataset, ImageDataset, SyntheticSpec};
use qpa_core::nn::VitConfig;
use qpa_core::quantum::NoiseChannel;
use qpa_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::usage;

/// Version stamped on every CSV row and JSON document the tool writes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: VitConfig,
    pub train: TrainConfig,
    pub compare: CompareConfig,
    pub noise: NoiseConfig,
    pub shots: ShotsConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    #[default]
    Synthetic,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Synthetic task: images per class, side length, pixel noise and seed.
    pub n_per_class: usize,
    pub size: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// IDX task: file paths (relative to the config file) and the class pair.
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub classes: [u8; 2],
    pub train_n: usize,
    pub valid_n: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            n_per_class: 140,
            size: 16,
            noise_std: 0.25,
            seed: 0,
            images: None,
            labels: None,
            classes: [0, 1],
            train_n: 200,
            valid_n: 80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub scorers: Vec<ScorerKind>,
    pub seeds: Vec<u64>,
    /// Concurrent training runs; all cores when absent.
    pub jobs: Option<usize>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { scorers: vec![ScorerKind::Qpa, ScorerKind::Dot], seeds: (0..5).collect(), jobs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub channels: Vec<NoiseChannel>,
    pub gammas: Vec<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { channels: NoiseChannel::ALL.to_vec(), gammas: (0..=5).map(|i| i as f64 * 0.02).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShotsConfig {
    pub shots: Vec<u64>,
    pub repetitions: u64,
    pub seed: u64,
}

impl Default for ShotsConfig {
    fn default() -> Self {
        Self { shots: vec![25, 100, 400, 1600], repetitions: 1000, seed: 0 }
    }
}

impl RunConfig {
    /// Parses `path`, or returns the defaults when no file is given. Relative
    /// data paths are resolved against the file's directory.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.images, &mut cfg.data.labels].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Checks everything that can be checked before training starts.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.model.validate().map_err(|e| usage(e.to_string()))?;
        self.train.validate().map_err(|e| usage(e.to_string()))?;
        if self.model.num_classes != 2 {
            return Err(usage("binary tasks need num_classes = 2"));
        }
        if self.data.source == DataSource::Synthetic
            && (self.model.image_size != self.data.size || self.model.channels != 1)
        {
            return Err(usage(format!(
                "model expects {}×{}×{} images but the synthetic task produces 1×{s}×{s}",
                self.model.channels,
                self.model.image_size,
                self.model.image_size,
                s = self.data.size
            )));
        }
        if self.noise.gammas.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(usage("noise strengths must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn dataset(&self) -> anyhow::Result<ImageDataset<f64>> {
        let d = &self.data;
        let ds = match d.source {
            DataSource::Synthetic => synthetic_dataset(&SyntheticSpec {
                n_per_class: d.n_per_class,
                size: d.size,
                noise_std: d.noise_std,
                seed: d.seed,
            })
            .map_err(|e| usage(e.to_string()))?,
            DataSource::Idx => {
                let (Some(images), Some(labels)) = (&d.images, &d.labels) else {
                    return Err(usage("data.source = \"idx\" needs data.images and data.labels"));
                };
                load_idx(images, labels, d.classes[0], d.classes[1]).map_err(|e| usage(e.to_string()))?
            }
        };
        if ds.height != self.model.image_size || ds.width != self.model.image_size || ds.channels != self.model.channels
        {
            return Err(usage(format!(
                "dataset images are {}×{}×{}, model expects {}×{}×{}",
                ds.channels, ds.height, ds.width, self.model.channels, self.model.image_size, self.model.image_size
            )));
        }
        Ok(ds)
    }

    /// Train and validation splits for `seed`; identical for every scorer.
    pub fn splits(
        &self,
        data: &ImageDataset<f64>,
        seed: u64,
    ) -> anyhow::Result<(ImageDataset<f64>, ImageDataset<f64>)> {
        split(data, self.data.train_n, self.data.valid_n, seed).map_err(|e| usage(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[model]\ndropout = 0.1\n").is_err());
        assert!(toml::from_str::<RunConfig>("[optimizer]\nlr = 1\n").is_err());
        assert!(toml::from_str::<RunConfig>("[data]\nsource = \"cifar\"\n").is_err());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg: RunConfig =
            toml::from_str("[model]\nscorer = \"dot\"\n[train]\nlr0 = 0.1\n[compare]\nseeds = [1, 2]\n").unwrap();
        assert_eq!(cfg.model.scorer, ScorerKind::Dot);
        assert_eq!(cfg.model.hidden_size, 32);
        assert_eq!((cfg.train.lr0, cfg.train.patience), (0.1, 20));
        assert_eq!(cfg.compare.seeds, vec![1, 2]);
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn depth_above_head_dim_is_a_usage_error() {
        let mut cfg = RunConfig::default();
        cfg.model.depth = 17;
        let err = cfg.validate().unwrap_err();
        assert!(err.is::<crate::Usage>());
    }
}
