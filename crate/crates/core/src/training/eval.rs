use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LoadedSplit, TrialResult};
use crate::models::Model;
use crate::{Error, Result};

/// Seed of the rollout rng used whenever a RAM model is evaluated.
pub const DEFAULT_EVAL_SEED: u64 = 20_190_601;

/// Anything that maps a batch of images to truth-value decisions.
pub trait Predictor {
    fn predict(&mut self, images: &[&[u8]]) -> Result<Vec<bool>>;
}

impl<F: FnMut(&[&[u8]]) -> Vec<bool>> Predictor for F {
    fn predict(&mut self, images: &[&[u8]]) -> Result<Vec<bool>> {
        Ok(self(images))
    }
}

/// A trained model with the fixed evaluation rng.
pub struct ModelPredictor<'a> {
    model: &'a Model,
    rng: ChaCha8Rng,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(model: &'a Model, seed: u64) -> Self {
        ModelPredictor {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Predictor for ModelPredictor<'_> {
    fn predict(&mut self, images: &[&[u8]]) -> Result<Vec<bool>> {
        match self.model {
            Model::Cnn(m) => m.predict(images),
            Model::Ram(m) => Ok(m.predict(images, &mut self.rng)),
        }
    }
}

/// One trial per record of the split, in manifest order.
pub fn evaluate(
    predictor: &mut dyn Predictor,
    model_id: &str,
    duration: u32,
    data: &LoadedSplit,
    batch_size: usize,
) -> Result<Vec<TrialResult>> {
    let order: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for idx in order.chunks(batch_size.max(1)) {
        let predictions = predictor.predict(&data.image_refs(idx))?;
        if predictions.len() != idx.len() {
            return Err(Error::Data(format!(
                "predictor returned {} decisions for {} images",
                predictions.len(),
                idx.len()
            )));
        }
        for (&i, p) in idx.iter().zip(predictions) {
            out.push(TrialResult::new(model_id, duration, &data.records[i], p));
        }
    }
    Ok(out)
}

pub fn write_trials(path: &Path, trials: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in trials {
        w.serialize(t)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    crate::util::write_atomic(path, &bytes)
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialResult>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let trials = r
        .deserialize()
        .collect::<std::result::Result<Vec<TrialResult>, _>>()?;
    for t in &trials {
        if t.correct != (t.predicted == t.truth) {
            return Err(Error::Data(format!(
                "{}: inconsistent correct flag",
                t.image_path
            )));
        }
    }
    Ok(trials)
}
