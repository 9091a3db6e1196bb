//! Pipeline configuration file (TOML). Every training hyperparameter is
//! spelled out with its default so a changed value shows up as a diff.
//!
//! ```toml
//! seed = 0
//!
//! [paths]
//! plan = "plan.toml"
//! data_dir = "data"
//! weights_dir = "weights"
//! report_dir = "reports"
//!
//! [segmentation]
//! source = "ground_truth"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autoencoder::{AugmentConfig, AutoencoderConfig};
use crate::classifier::HeadConfig;
use crate::dataset::GenerateOptions;
use crate::nutrient::Texture;
use crate::seg::BaselineParams;
use crate::volume::CalibrationProfile;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub plan: PathBuf,
    /// Generated images and `manifest.jsonl`.
    pub data_dir: PathBuf,
    /// Defaults to `<data_dir>/manifest.jsonl`.
    pub manifest: Option<PathBuf>,
    pub weights_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            plan: "plan.toml".into(),
            data_dir: "data".into(),
            manifest: None,
            weights_dir: "weights".into(),
            report_dir: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    GroundTruth,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationConfig {
    pub source: MaskSource,
    pub baseline: BaselineParams,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self { source: MaskSource::GroundTruth, baseline: BaselineParams::default() }
    }
}

/// Generator settings other than the calibration, which is shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub height: usize,
    pub width: usize,
    pub plate_radius_cm: f64,
    pub noise_sigma_cm: f64,
    pub color_noise: f64,
    pub placement_attempts: usize,
    pub supersample: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        let g = GenerateOptions::default();
        Self {
            height: g.height,
            width: g.width,
            plate_radius_cm: g.plate_radius_cm,
            noise_sigma_cm: g.noise_sigma_cm,
            color_noise: g.color_noise,
            placement_attempts: g.placement_attempts,
            supersample: g.supersample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Feeds generation, augmentation and both trainings.
    pub seed: u64,
    /// Overrides every meal's prescribed texture when set.
    pub texture: Option<Texture>,
    pub paths: Paths,
    pub calibration: CalibrationProfile,
    pub generate: GenerateConfig,
    pub segmentation: SegmentationConfig,
    pub autoencoder: AutoencoderConfig,
    /// Corpus built from the manifest plates for the autoencoder.
    pub autoencoder_augment: AugmentConfig,
    pub head: HeadConfig,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            texture: None,
            paths: Paths::default(),
            calibration: CalibrationProfile::default(),
            generate: GenerateConfig::default(),
            segmentation: SegmentationConfig::default(),
            autoencoder: AutoencoderConfig::default(),
            autoencoder_augment: AugmentConfig::default(),
            head: HeadConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1),
            message: e.message().to_owned(),
        })?;
        cfg.base_dir = origin.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        cfg.validate()?;
        let seed = cfg.seed;
        Ok(cfg.with_seed(seed))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }

    /// Relative paths in the file resolve against this directory.
    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// Sets the top-level seed and copies it into both training sections,
    /// whose own `seed` keys are overwritten.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.autoencoder.seed = seed;
        self.head.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.calibration.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let g = &self.generate;
        if g.height == 0 || g.width == 0 || g.supersample == 0 {
            return Err(ConfigError::Invalid("generate dimensions and supersample must be positive".into()));
        }
        if !(g.noise_sigma_cm >= 0.0 && g.color_noise >= 0.0 && g.plate_radius_cm > 0.0) {
            return Err(ConfigError::Invalid("generate noise must be non-negative and the plate radius positive".into()));
        }
        self.autoencoder.validate(g.height, g.width).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let h = &self.head;
        if !(h.learning_rate > 0.0 && h.train_fraction > 0.0 && h.train_fraction <= 1.0) {
            return Err(ConfigError::Invalid("head learning_rate and train_fraction out of range".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn plan_path(&self) -> PathBuf {
        self.resolve(&self.paths.plan)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.resolve(&self.paths.data_dir)
    }

    pub fn manifest_path(&self) -> PathBuf {
        match &self.paths.manifest {
            Some(m) => self.resolve(m),
            None => self.data_dir().join("manifest.jsonl"),
        }
    }

    pub fn weights_dir(&self) -> PathBuf {
        self.resolve(&self.paths.weights_dir)
    }

    pub fn report_dir(&self) -> PathBuf {
        self.resolve(&self.paths.report_dir)
    }

    pub fn autoencoder_path(&self) -> PathBuf {
        self.weights_dir().join("autoencoder.bin")
    }

    pub fn heads_dir(&self) -> PathBuf {
        self.weights_dir().join("heads")
    }

    pub fn generate_options(&self) -> GenerateOptions {
        let g = &self.generate;
        GenerateOptions {
            height: g.height,
            width: g.width,
            calibration: self.calibration,
            plate_radius_cm: g.plate_radius_cm,
            noise_sigma_cm: g.noise_sigma_cm,
            color_noise: g.color_noise,
            placement_attempts: g.placement_attempts,
            supersample: g.supersample,
        }
    }

    pub fn autoencoder_config(&self) -> AutoencoderConfig {
        AutoencoderConfig { seed: self.seed, ..self.autoencoder.clone() }
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig { seed: self.seed, ..self.head.clone() }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of SHA-256 over the serialized config (paths as
    /// written, seed included).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
