use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{images_to_tensor, FALSE_LABEL};
use crate::nn::{
    avg_pool, avg_pool_backward, max_pool2, max_pool2_backward, relu_backward, relu_inplace,
    Conv2d, Float, Linear, Param, Parameterized, Tensor4,
};
use crate::stimuli::CANVAS;
use crate::{Error, Result};

/// One entry of a VGG feature stack, at standard (undivided) width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VggLayer {
    Conv(usize),
    MaxPool,
}

use VggLayer::{Conv as C, MaxPool as M};

const VGG11: [VggLayer; 13] = [
    C(64),
    M,
    C(128),
    M,
    C(256),
    C(256),
    M,
    C(512),
    C(512),
    M,
    C(512),
    C(512),
    M,
];
const VGG13: [VggLayer; 15] = [
    C(64),
    C(64),
    M,
    C(128),
    C(128),
    M,
    C(256),
    C(256),
    M,
    C(512),
    C(512),
    M,
    C(512),
    C(512),
    M,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    /// 7, 9, 11 or 13; equals the number of weighted layers.
    pub duration_level: u32,
    pub layers: Vec<VggLayer>,
    /// Every conv and hidden head width is divided by this.
    pub width_divisor: usize,
    /// Hidden width of the two rectified head layers before division.
    pub head_width: usize,
    /// Feature maps are average-pooled to `pooled_side x pooled_side` before the head.
    pub pooled_side: usize,
    pub dropout: f64,
    pub input_side: usize,
}

/// VGG11/13 follow the standard layouts; VGG9 and VGG7 drop trailing conv
/// blocks from VGG11 (6 and 4 convs). All keep a three-layer head.
pub fn build_vgg_config(duration_level: u32) -> Result<CnnConfig> {
    let layers: Vec<VggLayer> = match duration_level {
        7 => VGG11[..7].to_vec(),
        9 => VGG11[..10].to_vec(),
        11 => VGG11.to_vec(),
        13 => VGG13.to_vec(),
        other => {
            return Err(Error::Config(format!(
                "VGG depth {other} is not one of 7, 9, 11, 13"
            )))
        }
    };
    Ok(CnnConfig {
        duration_level,
        layers,
        width_divisor: 1,
        head_width: 512,
        pooled_side: 2,
        dropout: 0.25,
        input_side: CANVAS,
    })
}

impl CnnConfig {
    pub fn with_width_divisor(mut self, divisor: usize) -> Self {
        self.width_divisor = divisor.max(1);
        self
    }

    pub fn conv_layers(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, VggLayer::Conv(_)))
            .count()
    }

    /// Conv layers plus the three fully connected layers.
    pub fn weighted_layers(&self) -> usize {
        self.conv_layers() + 3
    }

    fn scaled(&self, width: usize) -> usize {
        (width / self.width_divisor).max(1)
    }

    /// `(in, out)` channels of each conv layer in order.
    pub fn conv_shapes(&self) -> Vec<(usize, usize)> {
        let mut channels = 1;
        let mut shapes = Vec::new();
        for l in &self.layers {
            if let VggLayer::Conv(w) = l {
                let out = self.scaled(*w);
                shapes.push((channels, out));
                channels = out;
            }
        }
        shapes
    }

    fn feature_side(&self) -> usize {
        let pools = self
            .layers
            .iter()
            .filter(|l| **l == VggLayer::MaxPool)
            .count();
        self.input_side >> pools
    }

    pub fn validate(&self) -> Result<()> {
        let side = self.feature_side();
        if side == 0 || self.pooled_side == 0 || side % self.pooled_side != 0 {
            return Err(Error::Config(format!(
                "feature map side {side} does not pool to {}",
                self.pooled_side
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Stage<T> {
    Conv(Conv2d<T>),
    Pool,
}

/// Depth-parameterized VGG classifier producing two logits (false, true).
#[derive(Clone, Debug)]
pub struct Vgg<T> {
    config: CnnConfig,
    stages: Vec<Stage<T>>,
    fc1: Linear<T>,
    fc2: Linear<T>,
    fc3: Linear<T>,
}

/// Activations kept by a training forward pass.
pub struct VggTape<T> {
    /// Input of every stage, then the stack output.
    acts: Vec<Tensor4<T>>,
    pool_args: Vec<Vec<u32>>,
    head_in: Vec<T>,
    h1: Vec<T>,
    mask1: Option<Vec<T>>,
    x2: Vec<T>,
    h2: Vec<T>,
    mask2: Option<Vec<T>>,
    x3: Vec<T>,
}

fn dropout<T: Float, R: Rng + ?Sized>(x: &[T], p: f64, rng: &mut R) -> (Vec<T>, Vec<T>) {
    let keep = T::from_f64_lossy(1.0 / (1.0 - p));
    let mask: Vec<T> = x
        .iter()
        .map(|_| {
            if rng.gen::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let out = x.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    (out, mask)
}

impl<T: Float> Vgg<T> {
    pub fn new<R: Rng + ?Sized>(config: CnnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut stages = Vec::new();
        let mut shapes = config.conv_shapes().into_iter();
        let mut conv_index = 0;
        for l in &config.layers {
            match l {
                VggLayer::Conv(_) => {
                    let (cin, cout) = shapes.next().expect("one shape per conv");
                    stages.push(Stage::Conv(Conv2d::new(
                        &format!("features.conv{conv_index}"),
                        cin,
                        cout,
                        3,
                        1,
                        rng,
                    )));
                    conv_index += 1;
                }
                VggLayer::MaxPool => stages.push(Stage::Pool),
            }
        }
        let channels = config.conv_shapes().last().map(|s| s.1).unwrap_or(1);
        let flat = channels * config.pooled_side * config.pooled_side;
        let hidden = config.scaled(config.head_width);
        let fc1 = Linear::new("head.fc1", flat, hidden, rng);
        let fc2 = Linear::new("head.fc2", hidden, hidden, rng);
        let fc3 = Linear::new("head.fc3", hidden, 2, rng);
        Ok(Vgg {
            config,
            stages,
            fc1,
            fc2,
            fc3,
        })
    }

    pub fn config(&self) -> &CnnConfig {
        &self.config
    }

    fn pool_factor(&self) -> usize {
        self.config.feature_side() / self.config.pooled_side
    }

    /// Evaluation-mode logits, `[batch, 2]`.
    pub fn logits(&self, x: &Tensor4<T>) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut act = x.clone();
        for stage in &self.stages {
            act = match stage {
                Stage::Conv(conv) => {
                    let mut y = conv.forward(&act);
                    relu_inplace(&mut y.data);
                    y
                }
                Stage::Pool => max_pool2(&act).0,
            };
        }
        let n = x.n;
        let pooled = avg_pool(&act, self.pool_factor());
        let mut h = self.fc1.forward(&pooled.data, n);
        relu_inplace(&mut h);
        let mut h = self.fc2.forward(&h, n);
        relu_inplace(&mut h);
        Ok(self.fc3.forward(&h, n))
    }

    pub fn logits_for_images(&self, images: &[&[u8]]) -> Result<Vec<T>> {
        self.logits(&images_to_tensor(images, self.config.input_side)?)
    }

    /// Predicted truth values; a tie predicts false.
    pub fn predict(&self, images: &[&[u8]]) -> Result<Vec<bool>> {
        let logits = self.logits_for_images(images)?;
        Ok(crate::nn::argmax_rows(&logits, 2)
            .into_iter()
            .map(|c| c != FALSE_LABEL)
            .collect())
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        let side = self.config.input_side;
        if x.c != 1 || x.h != side || x.w != side {
            return Err(Error::Config(format!(
                "expected 1x{side}x{side} input, got {}x{}x{}",
                x.c, x.h, x.w
            )));
        }
        Ok(())
    }

    /// Forward pass that records activations. Dropout is applied when an rng
    /// is supplied.
    pub fn forward_train<R: Rng + ?Sized>(
        &self,
        x: &Tensor4<T>,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(Vec<T>, VggTape<T>)> {
        self.check_input(x)?;
        let mut acts = vec![x.clone()];
        let mut pool_args = Vec::new();
        for stage in &self.stages {
            let input = acts.last().expect("non-empty");
            let next = match stage {
                Stage::Conv(conv) => {
                    let mut y = conv.forward(input);
                    relu_inplace(&mut y.data);
                    y
                }
                Stage::Pool => {
                    let (y, arg) = max_pool2(input);
                    pool_args.push(arg);
                    y
                }
            };
            acts.push(next);
        }
        let n = x.n;
        let head_in = avg_pool(acts.last().expect("non-empty"), self.pool_factor()).data;
        let p = self.config.dropout;
        let mut h1 = self.fc1.forward(&head_in, n);
        relu_inplace(&mut h1);
        let (x2, mask1) = match dropout_rng.as_deref_mut() {
            Some(rng) if p > 0.0 => {
                let (o, m) = dropout(&h1, p, rng);
                (o, Some(m))
            }
            _ => (h1.clone(), None),
        };
        let mut h2 = self.fc2.forward(&x2, n);
        relu_inplace(&mut h2);
        let (x3, mask2) = match dropout_rng {
            Some(rng) if p > 0.0 => {
                let (o, m) = dropout(&h2, p, rng);
                (o, Some(m))
            }
            _ => (h2.clone(), None),
        };
        let logits = self.fc3.forward(&x3, n);
        Ok((
            logits,
            VggTape {
                acts,
                pool_args,
                head_in,
                h1,
                mask1,
                x2,
                h2,
                mask2,
                x3,
            },
        ))
    }

    /// Accumulates parameter gradients for `d loss / d logits`.
    pub fn backward(&mut self, tape: &VggTape<T>, dlogits: &[T]) {
        let n = tape.acts[0].n;
        let apply_mask = |g: &mut Vec<T>, mask: &Option<Vec<T>>| {
            if let Some(m) = mask {
                g.iter_mut().zip(m).for_each(|(g, &m)| *g = *g * m);
            }
        };
        let mut g = self.fc3.backward(&tape.x3, dlogits, n, true).expect("dx");
        apply_mask(&mut g, &tape.mask2);
        relu_backward(&tape.h2, &mut g);
        let mut g = self.fc2.backward(&tape.x2, &g, n, true).expect("dx");
        apply_mask(&mut g, &tape.mask1);
        relu_backward(&tape.h1, &mut g);
        let g = self.fc1.backward(&tape.head_in, &g, n, true).expect("dx");

        let top = tape.acts.last().expect("non-empty");
        let side = self.config.pooled_side;
        let pooled_grad = Tensor4::from_vec(n, top.c, side, side, g);
        let mut grad = avg_pool_backward(&pooled_grad, self.pool_factor());
        let mut pool_index = tape.pool_args.len();
        for (i, stage) in self.stages.iter_mut().enumerate().rev() {
            let input = &tape.acts[i];
            let output = &tape.acts[i + 1];
            grad = match stage {
                Stage::Conv(conv) => {
                    relu_backward(&output.data, &mut grad.data);
                    match conv.backward(input, &grad, i > 0) {
                        Some(dx) => dx,
                        None => break,
                    }
                }
                Stage::Pool => {
                    pool_index -= 1;
                    max_pool2_backward(
                        &grad,
                        &tape.pool_args[pool_index],
                        (input.n, input.c, input.h, input.w),
                    )
                }
            };
        }
    }
}

impl<T: Float> Parameterized<T> for Vgg<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        for s in &self.stages {
            if let Stage::Conv(c) = s {
                out.push(&c.weight);
                out.push(&c.bias);
            }
        }
        for fc in [&self.fc1, &self.fc2, &self.fc3] {
            out.push(&fc.weight);
            out.push(&fc.bias);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for s in &mut self.stages {
            if let Stage::Conv(c) = s {
                out.push(&mut c.weight);
                out.push(&mut c.bias);
            }
        }
        for fc in [&mut self.fc1, &mut self.fc2, &mut self.fc3] {
            out.push(&mut fc.weight);
            out.push(&mut fc.bias);
        }
        out
    }
}
