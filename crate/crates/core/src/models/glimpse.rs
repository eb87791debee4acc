use rand::Rng;

use super::RamConfig;
use crate::nn::{relu_backward, relu_inplace, Conv2d, Float, Linear, Param, Tensor4};
use crate::stimuli::CANVAS;
use crate::{Error, Result};

/// Multi-resolution retina sample: `n_patches` channels of `patch x patch`.
#[derive(Clone, Debug, PartialEq)]
pub struct GlimpseInput<T> {
    pub patches: Vec<T>,
    pub channels: usize,
    pub side: usize,
    pub location: [f64; 2],
}

/// Pixel index addressed by a coordinate in `[-1, 1]`: -1 is 0, +1 is 127.
pub fn location_to_pixel(coord: f64) -> i64 {
    ((coord + 1.0) * 0.5 * (CANVAS as f64 - 1.0)).round() as i64
}

/// Crops `patch * 2^p` squares centred on the addressed pixel (zero padded)
/// and average-pools each by `2^p`. `loc` is `(x, y)` = (column, row).
pub fn extract_glimpse<T: Float>(image: &[u8], loc: [f64; 2], cfg: &RamConfig) -> GlimpseInput<T> {
    let mut patches = Vec::with_capacity(cfg.n_patches * cfg.patch_size * cfg.patch_size);
    extract_into(image, loc, cfg, &mut patches);
    GlimpseInput {
        patches,
        channels: cfg.n_patches,
        side: cfg.patch_size,
        location: loc,
    }
}

pub(crate) fn extract_into<T: Float>(
    image: &[u8],
    loc: [f64; 2],
    cfg: &RamConfig,
    out: &mut Vec<T>,
) {
    debug_assert_eq!(image.len(), CANVAS * CANVAS);
    let cx = location_to_pixel(loc[0]);
    let cy = location_to_pixel(loc[1]);
    let side = cfg.patch_size as i64;
    let n = CANVAS as i64;
    for p in 0..cfg.n_patches {
        let scale = 1i64 << p;
        let extent = side * scale;
        let x0 = cx - extent / 2;
        let y0 = cy - extent / 2;
        let denom = T::from_i64((scale * scale * 255) as i64).unwrap();
        for py in 0..side {
            for px in 0..side {
                let mut sum = 0u32;
                for dy in 0..scale {
                    let y = y0 + py * scale + dy;
                    if y < 0 || y >= n {
                        continue;
                    }
                    for dx in 0..scale {
                        let x = x0 + px * scale + dx;
                        if x >= 0 && x < n {
                            sum += image[(y * n + x) as usize] as u32;
                        }
                    }
                }
                out.push(T::from_u32(sum).unwrap() / denom);
            }
        }
    }
}

/// Glimpse network: conv stack ("what") fused with a location layer ("where")
/// by elementwise product.
#[derive(Clone, Debug)]
pub struct GlimpseNet<T> {
    pub convs: Vec<Conv2d<T>>,
    pub what: Linear<T>,
    pub where_: Linear<T>,
}

pub struct GlimpseTape<T> {
    batch: usize,
    /// conv inputs followed by the last rectified conv output
    acts: Vec<Tensor4<T>>,
    what: Vec<T>,
    where_: Vec<T>,
    locations: Vec<T>,
}

impl<T: Float> GlimpseNet<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &RamConfig, rng: &mut R) -> Self {
        let mut convs = Vec::new();
        let mut channels = cfg.n_patches;
        let mut side = cfg.patch_size;
        for (i, (&filters, &kernel)) in cfg.conv_filters.iter().zip(&cfg.conv_kernels).enumerate() {
            let conv = Conv2d::new(
                &format!("glimpse.conv{i}"),
                channels,
                filters,
                kernel,
                cfg.conv_padding,
                rng,
            );
            side = conv.output_side(side);
            channels = filters;
            convs.push(conv);
        }
        let mut where_ = Linear::new("glimpse.where", 2, cfg.glimpse_dim, rng);
        // Unit bias so the gate is open at the image centre.
        where_.bias.value.iter_mut().for_each(|b| *b = T::one());
        GlimpseNet {
            convs,
            what: Linear::new("glimpse.what", channels * side * side, cfg.glimpse_dim, rng),
            where_,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.what.outputs
    }

    /// `patches` is `[batch, channels, side, side]`, `locations` is `[batch, 2]`.
    pub fn forward(&self, patches: Tensor4<T>, locations: &[T]) -> (Vec<T>, GlimpseTape<T>) {
        let batch = patches.n;
        let mut acts = vec![patches];
        for conv in &self.convs {
            let mut y = conv.forward(acts.last().expect("non-empty"));
            relu_inplace(&mut y.data);
            acts.push(y);
        }
        let mut what = self
            .what
            .forward(&acts.last().expect("non-empty").data, batch);
        relu_inplace(&mut what);
        let mut where_ = self.where_.forward(locations, batch);
        relu_inplace(&mut where_);
        let features = what.iter().zip(&where_).map(|(&a, &b)| a * b).collect();
        (
            features,
            GlimpseTape {
                batch,
                acts,
                what,
                where_,
                locations: locations.to_vec(),
            },
        )
    }

    /// Single-glimpse convenience wrapper.
    pub fn forward_one(&self, g: &GlimpseInput<T>) -> Result<Vec<T>> {
        let expected = self.convs.first().map(|c| c.in_channels).unwrap_or(0);
        if g.channels != expected || g.patches.len() != g.channels * g.side * g.side {
            return Err(Error::Config(format!(
                "glimpse has {} channels of side {}, network expects {expected} channels",
                g.channels, g.side
            )));
        }
        let loc = [
            T::from_f64_lossy(g.location[0]),
            T::from_f64_lossy(g.location[1]),
        ];
        let x = Tensor4::from_vec(1, g.channels, g.side, g.side, g.patches.clone());
        Ok(self.forward(x, &loc).0)
    }

    pub fn backward(&mut self, tape: &GlimpseTape<T>, dfeatures: &[T]) {
        let batch = tape.batch;
        let mut dwhat: Vec<T> = dfeatures
            .iter()
            .zip(&tape.where_)
            .map(|(&g, &w)| g * w)
            .collect();
        let mut dwhere: Vec<T> = dfeatures
            .iter()
            .zip(&tape.what)
            .map(|(&g, &w)| g * w)
            .collect();
        relu_backward(&tape.where_, &mut dwhere);
        self.where_.backward(&tape.locations, &dwhere, batch, false);
        relu_backward(&tape.what, &mut dwhat);
        let top = tape.acts.last().expect("non-empty");
        let dflat = self
            .what
            .backward(&top.data, &dwhat, batch, true)
            .expect("dx");
        let mut grad = Tensor4::from_vec(top.n, top.c, top.h, top.w, dflat);
        for (i, conv) in self.convs.iter_mut().enumerate().rev() {
            relu_backward(&tape.acts[i + 1].data, &mut grad.data);
            match conv.backward(&tape.acts[i], &grad, i > 0) {
                Some(dx) => grad = dx,
                None => break,
            }
        }
    }

    pub(crate) fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        for c in &self.convs {
            out.push(&c.weight);
            out.push(&c.bias);
        }
        out.extend([
            &self.what.weight,
            &self.what.bias,
            &self.where_.weight,
            &self.where_.bias,
        ]);
        out
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.extend([
            &mut self.what.weight,
            &mut self.what.bias,
            &mut self.where_.weight,
            &mut self.where_.bias,
        ]);
        out
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn pixel_mapping_endpoints() {
        assert_eq!(location_to_pixel(-1.0), 0);
        assert_eq!(location_to_pixel(1.0), 127);
        assert_eq!(location_to_pixel(0.0), 64);
    }

    #[test]
    fn uniform_image_gives_constant_channels_at_centre() {
        let cfg = RamConfig::standard(4).unwrap();
        let img = vec![51u8; 128 * 128];
        let g = extract_glimpse::<f64>(&img, [0.0, 0.0], &cfg);
        assert_eq!(g.patches.len(), 2 * 144);
        assert!(g.patches.iter().all(|&v| v == 0.2));
    }

    #[test]
    fn corner_location_is_at_least_a_quarter_padding() {
        let cfg = RamConfig::standard(4).unwrap();
        let img = vec![255u8; 128 * 128];
        let g = extract_glimpse::<f32>(&img, [1.0, 1.0], &cfg);
        for ch in g.patches.chunks(144) {
            let zeros = ch.iter().filter(|&&v| v == 0.0).count();
            assert!(zeros >= 36, "{zeros}");
        }
    }

    fn small_cfg() -> RamConfig {
        RamConfig {
            conv_filters: vec![3, 2, 2],
            glimpse_dim: 5,
            hidden_dim: 6,
            ..RamConfig::standard(4).unwrap()
        }
    }

    #[test]
    fn zero_where_path_silences_features() {
        let cfg = small_cfg();
        let mut net = GlimpseNet::<f64>::new(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
        net.where_.weight.value.iter_mut().for_each(|v| *v = 0.0);
        net.where_.bias.value.iter_mut().for_each(|v| *v = 0.0);
        let img: Vec<u8> = (0..128 * 128).map(|i| (i % 251) as u8).collect();
        let g = extract_glimpse(&img, [0.1, -0.3], &cfg);
        assert!(net.forward_one(&g).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_where_vector_passes_what_through() {
        let cfg = small_cfg();
        let mut net = GlimpseNet::<f64>::new(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        net.where_.weight.value.iter_mut().for_each(|v| *v = 0.0);
        net.where_.bias.value.iter_mut().for_each(|v| *v = 1.0);
        let img: Vec<u8> = (0..128 * 128).map(|i| (i * 13 % 256) as u8).collect();
        let g = extract_glimpse(&img, [0.2, 0.4], &cfg);
        let feats = net.forward_one(&g).unwrap();
        let x = Tensor4::from_vec(1, 2, 12, 12, g.patches.clone());
        let (_, tape) = net.forward(x, &[0.2, 0.4]);
        assert_eq!(feats, tape.what);
    }

    #[test]
    fn channel_mismatch_is_a_config_error() {
        let cfg = small_cfg();
        let net = GlimpseNet::<f64>::new(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let g = GlimpseInput {
            patches: vec![0.0; 144],
            channels: 1,
            side: 12,
            location: [0.0, 0.0],
        };
        assert!(matches!(net.forward_one(&g), Err(Error::Config(_))));
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let cfg = small_cfg();
        let mut net = GlimpseNet::<f64>::new(&cfg, &mut ChaCha8Rng::seed_from_u64(4));
        let img: Vec<u8> = (0..128 * 128).map(|i| ((i * 7919) % 256) as u8).collect();
        let locs = [[0.05, -0.1], [-0.4, 0.3]];
        let mut patches = Vec::new();
        for l in &locs {
            extract_into(&img, *l, &cfg, &mut patches);
        }
        let flat_locs: Vec<f64> = locs.iter().flatten().copied().collect();
        let probe: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
        let objective = |net: &GlimpseNet<f64>| -> f64 {
            let x = Tensor4::from_vec(2, 2, 12, 12, patches.clone());
            net.forward(x, &flat_locs)
                .0
                .iter()
                .zip(&probe)
                .map(|(a, b)| a * b)
                .sum()
        };
        let (_, tape) = net.forward(Tensor4::from_vec(2, 2, 12, 12, patches.clone()), &flat_locs);
        net.backward(&tape, &probe);
        let eps = 1e-6;
        let n_params = net.params().len();
        for pi in 0..n_params {
            let len = net.params()[pi].len();
            for idx in [0, len / 2, len - 1] {
                let analytic = net.params()[pi].grad[idx];
                let mut up = net.clone();
                up.params_mut()[pi].value[idx] += eps;
                let mut down = net.clone();
                down.params_mut()[pi].value[idx] -= eps;
                let numeric = (objective(&up) - objective(&down)) / (2.0 * eps);
                let scale = analytic.abs().max(numeric.abs()).max(1e-3);
                assert!(
                    (analytic - numeric).abs() / scale < 1e-4,
                    "param {pi}[{idx}]: {analytic} vs {numeric}"
                );
            }
        }
    }
}
