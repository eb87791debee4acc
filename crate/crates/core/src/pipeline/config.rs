use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{AnalysisOptions, RegressionSpec};
use crate::models::{build_vgg_config, Family, ModelConfig, RamConfig};
use crate::stimuli::{DatasetConfig, RasterOptions, SceneGeometry, SplitCounts};
use crate::training::{TrainConfig, DEFAULT_EVAL_SEED};
use crate::{Error, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub geometry: SceneGeometry,
    pub raster: RasterOptions,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            train: SplitCounts::FULL.train,
            val: SplitCounts::FULL.val,
            test: SplitCounts::FULL.test,
            geometry: SceneGeometry::default(),
            raster: RasterOptions::default(),
        }
    }
}

/// Training recipe shared by every duration level of one family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilySection {
    pub levels: Vec<u32>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub eval_every: usize,
    pub batch_size: usize,
    /// CNN only: divides every VGG channel count.
    pub width_divisor: usize,
    /// RAM only.
    pub use_baseline: bool,
    /// RAM only.
    pub rollouts_per_image: usize,
    /// RAM only.
    pub location_std: f64,
    /// RAM only: LSTM width.
    pub hidden_dim: usize,
}

impl FamilySection {
    pub fn standard(family: Family) -> Self {
        let t = TrainConfig::standard(family);
        FamilySection {
            levels: family.levels().to_vec(),
            learning_rate: t.learning_rate,
            max_epochs: t.max_epochs,
            patience: t.patience,
            eval_every: t.eval_every,
            batch_size: t.batch_size,
            width_divisor: 8,
            use_baseline: t.use_baseline,
            rollouts_per_image: t.rollouts_per_image,
            location_std: 0.03,
            hidden_dim: 1024,
        }
    }
}

fn default_cnn() -> FamilySection {
    FamilySection::standard(Family::Cnn)
}

fn default_ram() -> FamilySection {
    FamilySection::standard(Family::Ram)
}

impl Default for FamilySection {
    fn default() -> Self {
        default_cnn()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub invariance_threshold: f64,
    pub interaction: bool,
    /// Rollout seed for RAM evaluation.
    pub eval_seed: u64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            invariance_threshold: crate::analysis::INVARIANCE_THRESHOLD,
            interaction: true,
            eval_seed: DEFAULT_EVAL_SEED,
        }
    }
}

/// Everything a run depends on. Stored as TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Shrinks per-cell counts and, with `scale_epochs`, epoch caps.
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default = "yes")]
    pub scale_epochs: bool,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default = "default_cnn")]
    pub cnn: FamilySection,
    #[serde(default = "default_ram")]
    pub ram: FamilySection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            scale: 1.0,
            scale_epochs: true,
            dataset: DatasetSection::default(),
            cnn: default_cnn(),
            ram: default_ram(),
            analysis: AnalysisSection::default(),
        }
    }
}

/// One trainable configuration of the experiment grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    pub family: Family,
    pub duration: u32,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        // Partial family sections are completed from that family's defaults.
        for (key, family) in [("cnn", Family::Cnn), ("ram", Family::Ram)] {
            if let Some(toml::Value::Table(user)) = table.get(key) {
                let mut merged = toml::Table::try_from(FamilySection::standard(family))
                    .map_err(|e| Error::Config(e.to_string()))?;
                merged.extend(user.clone());
                table.insert(key.into(), toml::Value::Table(merged));
            }
        }
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::Config(format!(
                "scale must be in (0, 1], got {}",
                self.scale
            )));
        }
        if !(0.5..=1.0).contains(&self.analysis.invariance_threshold) {
            return Err(Error::Config(
                "invariance_threshold must be in [0.5, 1]".into(),
            ));
        }
        self.dataset_config().counts.validate()?;
        self.dataset.geometry.validate()?;
        for spec in self.model_specs()? {
            spec.train.validate()?;
        }
        Ok(())
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        let base = SplitCounts {
            train: self.dataset.train,
            val: self.dataset.val,
            test: self.dataset.test,
        };
        let counts = if self.scale == 1.0 {
            base
        } else {
            base.scaled(self.scale)
        };
        DatasetConfig {
            counts,
            seed: self.seed,
            geometry: self.dataset.geometry.clone(),
            raster: self.dataset.raster,
        }
    }

    pub fn family(&self, family: Family) -> &FamilySection {
        match family {
            Family::Cnn => &self.cnn,
            Family::Ram => &self.ram,
        }
    }

    fn epochs(&self, max_epochs: usize) -> usize {
        if self.scale_epochs {
            ((max_epochs as f64 * self.scale).round() as usize).max(1)
        } else {
            max_epochs
        }
    }

    /// The configured grid, CNN levels first.
    pub fn model_specs(&self) -> Result<Vec<ModelSpec>> {
        let mut out = Vec::new();
        for family in Family::ALL {
            let sec = self.family(family);
            for &level in &sec.levels {
                let model = match family {
                    Family::Cnn => {
                        if sec.width_divisor == 0 {
                            return Err(Error::Config("width_divisor must be at least 1".into()));
                        }
                        ModelConfig::Cnn(
                            build_vgg_config(level)?.with_width_divisor(sec.width_divisor),
                        )
                    }
                    Family::Ram => ModelConfig::Ram(RamConfig {
                        location_std: sec.location_std,
                        hidden_dim: sec.hidden_dim,
                        ..RamConfig::standard(level as usize)?
                    }),
                };
                let id = format!(
                    "{}{level}",
                    if family == Family::Cnn { "vgg" } else { "ram" }
                );
                let train = TrainConfig {
                    family,
                    learning_rate: sec.learning_rate,
                    max_epochs: self.epochs(sec.max_epochs),
                    patience: sec.patience,
                    eval_every: sec.eval_every,
                    batch_size: sec.batch_size,
                    seed: model_seed(self.seed, &id),
                    use_baseline: sec.use_baseline,
                    rollouts_per_image: sec.rollouts_per_image,
                    eval_seed: self.analysis.eval_seed,
                };
                out.push(ModelSpec {
                    id,
                    family,
                    duration: level,
                    model,
                    train,
                });
            }
        }
        Ok(out)
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            invariance_threshold: self.analysis.invariance_threshold,
            regression: RegressionSpec {
                interaction: self.analysis.interaction,
                ..RegressionSpec::default()
            },
        }
    }
}

/// Per-model training seed derived from the global seed.
pub fn model_seed(global: u64, id: &str) -> u64 {
    let digest = crate::util::sha256_hex(format!("{global}/{id}").as_bytes());
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}
