use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{derive_seed, SplitRatios, SplitSet};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tiling::GridSpec;

/// Seed stream of the split stage.
pub const SPLIT_STREAM: u64 = 1;
/// Seed stream of the train stage (initialization and batch shuffling).
pub const TRAIN_STREAM: u64 = 2;

/// Everything a pipeline run needs. Loaded from JSON; missing keys take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Either holds `manifest.jsonl` or one sub-directory of PNGs per class
    /// (`normal/`, `benign/`, `in_situ/`, `invasive/`).
    pub input_dir: Option<PathBuf>,
    pub work_dir: PathBuf,
    /// Reference image whose lαβ statistics become the normalization target.
    pub target_image: Option<PathBuf>,
    /// Precomputed target statistics (`{"mean":[..],"std":[..]}`); takes
    /// precedence over `target_image`.
    pub target_stats: Option<PathBuf>,
    pub skip_normalization: bool,
    pub grid: GridSpec,
    pub ratios: SplitRatios,
    pub seed: u64,
    /// `seed` inside this block is ignored; the train stage derives its own.
    pub model: ModelConfig,
    pub augment_validation: bool,
    /// Split whose identity patches the predict stage classifies.
    pub predict_split: SplitSet,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input_dir: None,
            work_dir: PathBuf::from("work"),
            target_image: None,
            target_stats: None,
            skip_normalization: false,
            grid: GridSpec::default(),
            ratios: SplitRatios::default(),
            seed: 0,
            model: ModelConfig::default(),
            augment_validation: true,
            predict_split: SplitSet::Test,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.ratios.validate()?;
        self.model.validate()
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, SPLIT_STREAM)
    }

    /// Model configuration with the derived training seed filled in.
    pub fn effective_model(&self) -> ModelConfig {
        ModelConfig {
            seed: derive_seed(self.seed, TRAIN_STREAM),
            ..self.model.clone()
        }
    }

    /// Resolves manifest paths: absolute paths are kept, relative ones are
    /// taken relative to the work directory.
    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.work_dir.join(p)
        }
    }
}
