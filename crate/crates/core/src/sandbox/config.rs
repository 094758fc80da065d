use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::Reduction;
use crate::spectral::KernelKind;

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    #[serde(alias = "barlow")]
    BarlowTwins,
    #[serde(alias = "spectral")]
    SpectralContrastive,
    #[serde(alias = "infonce")]
    InfoNce,
    Mae,
    #[serde(alias = "u-mae")]
    Umae,
    #[serde(alias = "m-mae")]
    Mmae,
}

impl LossFamily {
    /// Two-branch objectives; the rest train an encoder-decoder on masked views.
    pub fn is_siamese(self) -> bool {
        matches!(
            self,
            LossFamily::BarlowTwins | LossFamily::SpectralContrastive | LossFamily::InfoNce
        )
    }

    /// Weight used when the config leaves `lambda` unset.
    pub fn default_lambda(self) -> f64 {
        match self {
            LossFamily::BarlowTwins => 0.1,
            LossFamily::SpectralContrastive => 1.0,
            LossFamily::InfoNce => 0.0,
            LossFamily::Mae => 0.0,
            LossFamily::Umae | LossFamily::Mmae => 0.01,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "barlow" | "barlow-twins" | "barlowtwins" => LossFamily::BarlowTwins,
            "spectral" | "spectral-contrastive" => LossFamily::SpectralContrastive,
            "infonce" | "info-nce" => LossFamily::InfoNce,
            "mae" => LossFamily::Mae,
            "umae" | "u-mae" => LossFamily::Umae,
            "mmae" | "m-mae" => LossFamily::Mmae,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// `x = W h + noise` with a low-dimensional Gaussian latent `h`.
    LatentLinear,
    /// Mixture of Gaussian clusters in input space.
    ClusterMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Training samples.
    pub samples: usize,
    /// Held-out samples used for linear probing.
    pub test_samples: usize,
    pub patches: usize,
    pub patch_size: usize,
    pub latent_dim: usize,
    /// Latent coordinate `k` has standard deviation `latent_decay^k`.
    pub latent_decay: f64,
    pub noise: f64,
    pub clusters: usize,
    pub cluster_spread: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::LatentLinear,
            samples: 256,
            test_samples: 256,
            patches: 16,
            patch_size: 4,
            latent_dim: 6,
            latent_decay: 0.6,
            noise: 0.1,
            clusters: 4,
            cluster_spread: 1.0,
        }
    }
}

impl DatasetConfig {
    pub fn input_dim(&self) -> usize {
        self.patches * self.patch_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Affine,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub hidden: usize,
    /// Representation dimension `d`.
    pub out_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Mlp,
            hidden: 32,
            out_dim: 8,
        }
    }
}

/// How the two Siamese views are produced from one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum AugmentationKind {
    /// Add `N(0, sigma^2)` noise to every coordinate.
    AdditiveNoise(f64),
    /// Zero each coordinate independently with probability `q`.
    RandomCoordinateDropout(f64),
    /// Hide a fraction of the patches.
    PatchMask(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxConfig {
    pub seed: u64,
    pub loss: LossFamily,
    /// Loss weight; `None` picks [`LossFamily::default_lambda`].
    pub lambda: Option<f64>,
    pub mu: f64,
    pub mask_ratio: f64,
    pub temperature: f64,
    pub reduction: Reduction,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub record_every: usize,
    pub kernel: KernelKind,
    pub augmentation: AugmentationKind,
    pub dataset: DatasetConfig,
    pub encoder: EncoderConfig,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            loss: LossFamily::BarlowTwins,
            lambda: None,
            mu: 1.0,
            mask_ratio: 0.75,
            temperature: 1.0,
            reduction: Reduction::Mean,
            steps: 2000,
            batch_size: 256,
            learning_rate: 0.5,
            record_every: 50,
            kernel: KernelKind::Covariance,
            augmentation: AugmentationKind::AdditiveNoise(0.05),
            dataset: DatasetConfig::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

impl SandboxConfig {
    pub fn lambda(&self) -> f64 {
        self.lambda.unwrap_or_else(|| self.loss.default_lambda())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SandboxConfig = toml::from_str(text).map_err(|e| {
            // name the key on the offending line, or the snippet if there is none
            let field = e
                .span()
                .map(|s| {
                    let line_start = text[..s.start].rfind('\n').map_or(0, |i| i + 1);
                    let line = text[line_start..].lines().next().unwrap_or("");
                    match line.split_once('=') {
                        Some((key, _)) => key.trim().to_string(),
                        None => text[s].lines().next().unwrap_or("").trim().to_string(),
                    }
                })
                .unwrap_or_default();
            config_err(&field, e.message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks ranges and the desk-scale limits.
    pub fn validate(&self) -> Result<()> {
        let ds = &self.dataset;
        if self.encoder.out_dim == 0 || self.encoder.out_dim > 32 {
            return Err(config_err("encoder.out_dim", "must lie in 1..=32"));
        }
        if self.encoder.kind == EncoderKind::Mlp && self.encoder.hidden == 0 {
            return Err(config_err("encoder.hidden", "must be positive"));
        }
        if self.batch_size < 2 || self.batch_size > 512 {
            return Err(config_err("batch_size", "must lie in 2..=512"));
        }
        if self.batch_size > ds.samples {
            return Err(config_err("batch_size", "exceeds dataset.samples"));
        }
        if self.steps > 20_000 {
            return Err(config_err("steps", "must be at most 20000"));
        }
        if self.record_every == 0 {
            return Err(config_err("record_every", "must be positive"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(config_err("learning_rate", "must be positive"));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(config_err("mu", "must be positive"));
        }
        if !(self.lambda() >= 0.0) || !self.lambda().is_finite() {
            return Err(config_err("lambda", "must be nonnegative"));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(config_err("mask_ratio", "must lie in (0, 1)"));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(config_err("temperature", "must be positive"));
        }
        if ds.patches < 2 || ds.patch_size == 0 {
            return Err(config_err("dataset.patches", "need at least 2 patches of positive size"));
        }
        if ds.samples < 2 {
            return Err(config_err("dataset.samples", "need at least 2 samples"));
        }
        if ds.latent_dim == 0 {
            return Err(config_err("dataset.latent_dim", "must be positive"));
        }
        if ds.clusters < 2 && ds.kind == DatasetKind::ClusterMixture {
            return Err(config_err("dataset.clusters", "need at least 2 clusters"));
        }
        if !(ds.noise >= 0.0) || !(ds.latent_decay > 0.0) || !(ds.cluster_spread > 0.0) {
            return Err(config_err("dataset", "noise, latent_decay and cluster_spread must be valid"));
        }
        match self.augmentation {
            AugmentationKind::AdditiveNoise(s) if !(s >= 0.0) => {
                return Err(config_err("augmentation.value", "noise must be nonnegative"))
            }
            AugmentationKind::RandomCoordinateDropout(q) | AugmentationKind::PatchMask(q)
                if !(q > 0.0 && q < 1.0) =>
            {
                return Err(config_err("augmentation.value", "must lie in (0, 1)"))
            }
            _ => {}
        }
        Ok(())
    }
}
