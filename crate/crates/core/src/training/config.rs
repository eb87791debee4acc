use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::models::Family;
use crate::stimuli::{ImageType, StimulusRecord};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub family: Family,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without a new best validation loss before stopping.
    pub patience: usize,
    /// Validate every this many epochs.
    pub eval_every: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Learned per-step reward baseline (RAM only).
    pub use_baseline: bool,
    /// Sampled trajectories per image per update (RAM only).
    pub rollouts_per_image: usize,
    /// Rng seed for stochastic RAM validation and evaluation rollouts.
    pub eval_seed: u64,
}

impl TrainConfig {
    pub fn standard(family: Family) -> Self {
        let (learning_rate, max_epochs, eval_every) = match family {
            Family::Cnn => (1e-4, 40, 1),
            Family::Ram => (1e-5, 200, 2),
        };
        TrainConfig {
            family,
            learning_rate,
            max_epochs,
            patience: 10,
            eval_every,
            batch_size: 64,
            seed: 0,
            use_baseline: true,
            rollouts_per_image: 1,
            eval_seed: super::DEFAULT_EVAL_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config(
                "max_epochs, batch_size and eval_every must be at least 1".into(),
            ));
        }
        if self.rollouts_per_image == 0 {
            return Err(Error::Config(
                "rollouts_per_image must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn push(&mut self, point: CurvePoint) {
        if let Some(last) = self.points.last() {
            assert!(point.epoch > last.epoch, "curve epochs must increase");
        }
        self.points.push(point);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in &self.points {
            w.serialize(p)?;
        }
        if self.points.is_empty() {
            w.write_record(["epoch", "train_loss", "val_loss", "val_acc"])?;
        }
        w.into_inner().map_err(|e| Error::Data(e.to_string()))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let points = r
            .deserialize()
            .collect::<std::result::Result<Vec<CurvePoint>, _>>()?;
        Ok(LearningCurve { points })
    }
}

/// One model decision on one stimulus, joined with the stimulus attributes
/// the analysis needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub model_id: String,
    pub duration: u32,
    pub image_path: String,
    pub image_type: ImageType,
    pub ratio_small: u32,
    pub ratio_large: u32,
    pub total_dots: u32,
    pub abs_diff: u32,
    pub truth: bool,
    pub predicted: bool,
    pub correct: bool,
}

impl TrialResult {
    pub fn new(model_id: &str, duration: u32, record: &StimulusRecord, predicted: bool) -> Self {
        TrialResult {
            model_id: model_id.to_string(),
            duration,
            image_path: record.image_path.clone(),
            image_type: record.image_type,
            ratio_small: record.ratio.small(),
            ratio_large: record.ratio.large(),
            total_dots: record.total_dots,
            abs_diff: record.abs_diff,
            truth: record.truth,
            predicted,
            correct: predicted == record.truth,
        }
    }

    /// Balance of the ratio, small / large.
    pub fn ratio(&self) -> f64 {
        self.ratio_small as f64 / self.ratio_large as f64
    }
}
