mod checkpoint;
mod glimpse;
mod ram;
mod vgg;

use serde::{Deserialize, Serialize};

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use glimpse::{extract_glimpse, location_to_pixel, GlimpseInput, GlimpseNet, GlimpseTape};
pub use ram::{Ram, RamConfig, RamStep, RamStepTrace, Rollout, RolloutGrads};
pub use vgg::{build_vgg_config, CnnConfig, Vgg, VggLayer, VggTape};

use crate::nn::{Float, Param, Parameterized, Tensor4};
use crate::stimuli::CANVAS;
use crate::{Error, Result};

/// Class index of the answer "blue is not the majority".
pub const FALSE_LABEL: usize = 0;
pub const TRUE_LABEL: usize = 1;

pub fn label_of(truth: bool) -> usize {
    if truth {
        TRUE_LABEL
    } else {
        FALSE_LABEL
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Cnn,
    Ram,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Cnn, Family::Ram];

    /// Duration levels: weighted layer count for CNNs, glimpses for RAM.
    pub fn levels(self) -> [u32; 4] {
        match self {
            Family::Cnn => [7, 9, 11, 13],
            Family::Ram => [4, 8, 16, 24],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Cnn => "cnn",
            Family::Ram => "ram",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" | "vgg" => Ok(Family::Cnn),
            "ram" => Ok(Family::Ram),
            _ => Err(Error::Config(format!("unknown model family `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelConfig {
    Cnn(CnnConfig),
    Ram(RamConfig),
}

impl ModelConfig {
    pub fn family(&self) -> Family {
        match self {
            ModelConfig::Cnn(_) => Family::Cnn,
            ModelConfig::Ram(_) => Family::Ram,
        }
    }

    pub fn duration_level(&self) -> u32 {
        match self {
            ModelConfig::Cnn(c) => c.duration_level,
            ModelConfig::Ram(r) => r.n_glimpses as u32,
        }
    }
}

/// A trained network of either family, stored in single precision.
#[derive(Clone, Debug)]
pub enum Model {
    Cnn(Vgg<f32>),
    Ram(Ram<f32>),
}

impl Model {
    pub fn new<R: rand::Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        Ok(match config {
            ModelConfig::Cnn(c) => Model::Cnn(Vgg::new(c, rng)?),
            ModelConfig::Ram(r) => Model::Ram(Ram::new(r, rng)?),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Cnn(m) => ModelConfig::Cnn(m.config().clone()),
            Model::Ram(m) => ModelConfig::Ram(m.config().clone()),
        }
    }
}

impl Parameterized<f32> for Model {
    fn params(&self) -> Vec<&Param<f32>> {
        match self {
            Model::Cnn(m) => m.params(),
            Model::Ram(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f32>> {
        match self {
            Model::Cnn(m) => m.params_mut(),
            Model::Ram(m) => m.params_mut(),
        }
    }
}

/// Stacks 8-bit grayscale images into `[n, 1, side, side]`, scaled to `[0, 1]`.
pub fn images_to_tensor<T: Float>(images: &[&[u8]], side: usize) -> Result<Tensor4<T>> {
    let len = side * side;
    let mut data = Vec::with_capacity(images.len() * len);
    for (i, img) in images.iter().enumerate() {
        if img.len() != len {
            return Err(Error::Data(format!(
                "image {i} has {} pixels, expected {side}x{side}",
                img.len()
            )));
        }
        data.extend(img.iter().map(|&p| T::from_f64_lossy(p as f64 / 255.0)));
    }
    Ok(Tensor4::from_vec(images.len(), 1, side, side, data))
}

/// Side of the images every model consumes.
pub const INPUT_SIDE: usize = CANVAS;
