//! Pipeline configuration: one JSON document with a parameter block per
//! stage. Unknown keys are rejected so typos fail loudly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crack::{FilterParams, SauvolaParams};
use crate::histoseg::PeakParams;
use crate::mission::MissionParams;
use crate::pointcloud::SurfaceExtraction;
use crate::stitch::StitchParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// Directory of survey images; lexicographic order is capture order.
    pub input_images: Option<PathBuf>,
    /// Pre-stitched mosaic; when set, the stitch stage is skipped.
    pub input_mosaic: Option<PathBuf>,
    /// ASCII XYZ scan for the planning stages.
    pub input_cloud: Option<PathBuf>,
    /// Scanner position for the cloud, if known.
    pub scan_origin: Option<[f64; 3]>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointcloudConfig {
    /// Neighbor count for the sparse-outlier filter; zero disables it.
    pub outlier_k: usize,
    pub outlier_alpha: f64,
    /// Voxel leaf size in meters; zero disables downsampling.
    pub voxel_leaf: f64,
    /// Cluster tolerance for grouping residual points into obstacles.
    pub cluster_epsilon: f64,
    pub extraction: SurfaceExtraction,
}

impl Default for PointcloudConfig {
    fn default() -> Self {
        Self {
            outlier_k: 8,
            outlier_alpha: 1.5,
            voxel_leaf: 0.0,
            cluster_epsilon: 0.25,
            extraction: SurfaceExtraction::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistosegConfig {
    pub peaks: PeakParams,
    /// Replacement intensity for removed pattern/blank pixels.
    pub beta: u8,
}

impl Default for HistosegConfig {
    fn default() -> Self {
        Self { peaks: PeakParams::default(), beta: 255 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrackConfig {
    pub sauvola: SauvolaParams,
    pub filter: FilterParams,
    /// When set, a global-threshold baseline mask is emitted alongside the
    /// locally adaptive result.
    pub global_threshold: Option<f64>,
}

impl Default for CrackConfig {
    fn default() -> Self {
        Self { sauvola: SauvolaParams::default(), filter: FilterParams::default(), global_threshold: None }
    }
}

/// Root configuration document. All randomness in a run flows from `seed`,
/// forked per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub io: IoConfig,
    pub pointcloud: PointcloudConfig,
    pub mission: MissionParams,
    pub stitch: StitchParams,
    pub histoseg: HistosegConfig,
    pub crack: CrackConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            io: IoConfig { output_dir: PathBuf::from("out"), ..Default::default() },
            pointcloud: PointcloudConfig::default(),
            mission: MissionParams::default(),
            stitch: StitchParams::default(),
            histoseg: HistosegConfig::default(),
            crack: CrackConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&json)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.crack
            .sauvola
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(0.0..1.0).contains(&self.mission.overlap) {
            return Err(ConfigError::Invalid(format!(
                "mission.overlap {} not in [0, 1)",
                self.mission.overlap
            )));
        }
        if !(0.0 < self.stitch.ratio && self.stitch.ratio < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "stitch.ratio {} not in (0, 1)",
                self.stitch.ratio
            )));
        }
        if let Some(t) = self.crack.global_threshold {
            if !(0.0..=255.0).contains(&t) {
                return Err(ConfigError::Invalid(format!(
                    "crack.global_threshold {t} outside [0, 255]"
                )));
            }
        }
        Ok(())
    }
}
