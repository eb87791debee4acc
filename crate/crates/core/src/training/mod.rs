mod cnn;
mod config;
mod data;
mod eval;
mod ram;

pub use cnn::train_cnn;
pub use config::{CurvePoint, LearningCurve, TrainConfig, TrialResult};
pub use data::{load_split, LoadedSplit};
pub use eval::{evaluate, read_trials, write_trials, ModelPredictor, Predictor, DEFAULT_EVAL_SEED};
pub use ram::{ram_loss, train_ram, RamLoss};

use crate::models::Model;

/// Best-by-validation-loss model plus its learning curve.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub curve: LearningCurve,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Last epoch that was trained.
    pub stopped_epoch: usize,
}

/// Patience counted in epochs since the best validation loss.
#[derive(Clone, Debug)]
pub(crate) struct EarlyStopping {
    patience: usize,
    pub(crate) best_loss: f64,
    pub(crate) best_epoch: usize,
}

impl EarlyStopping {
    pub(crate) fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
        }
    }

    /// Returns true when `loss` is a new best.
    pub(crate) fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = epoch;
            true
        } else {
            false
        }
    }

    pub(crate) fn should_stop(&self, epoch: usize) -> bool {
        epoch >= self.best_epoch + self.patience
    }
}

pub(crate) fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(size.max(1))
}
