use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::glimpse::{extract_into, GlimpseNet, GlimpseTape};
use super::FALSE_LABEL;
use crate::nn::{
    argmax_rows, uniform_fan_in, Float, Linear, Lstm, LstmStep, Param, Parameterized, Tensor4,
};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamConfig {
    /// 4, 8, 16 or 24 in the duration experiment.
    pub n_glimpses: usize,
    pub n_patches: usize,
    /// Side of the finest patch; patch `p` covers `patch_size * 2^p` pixels.
    pub patch_size: usize,
    pub conv_filters: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    pub conv_padding: usize,
    pub glimpse_dim: usize,
    pub hidden_dim: usize,
    /// Fixed standard deviation of the location policy.
    pub location_std: f64,
}

impl RamConfig {
    pub fn standard(n_glimpses: usize) -> Result<Self> {
        if ![4, 8, 16, 24].contains(&n_glimpses) {
            return Err(Error::Config(format!(
                "glimpse count {n_glimpses} is not one of 4, 8, 16, 24"
            )));
        }
        Ok(RamConfig {
            n_glimpses,
            n_patches: 2,
            patch_size: 12,
            conv_filters: vec![64, 64, 128],
            conv_kernels: vec![5, 3, 3],
            conv_padding: 0,
            glimpse_dim: 512,
            hidden_dim: 1024,
            location_std: 0.03,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_glimpses == 0 {
            return Err(Error::Config("need at least one glimpse".into()));
        }
        if self.n_patches == 0 || self.patch_size == 0 {
            return Err(Error::Config(
                "glimpse needs at least one non-empty patch".into(),
            ));
        }
        if self.conv_filters.len() != self.conv_kernels.len() {
            return Err(Error::Config(
                "conv filters and kernels differ in length".into(),
            ));
        }
        let mut side = self.patch_size as i64;
        for &k in &self.conv_kernels {
            side += 2 * self.conv_padding as i64 + 1 - k as i64;
        }
        if side < 1 {
            return Err(Error::Config(
                "glimpse conv stack shrinks the patch to nothing".into(),
            ));
        }
        if !(self.location_std >= 0.0) {
            return Err(Error::Config("location std must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-step record of one rollout, summarised for one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamStepTrace {
    pub t: usize,
    /// Where glimpse `t` was taken (unclipped).
    pub glimpse_location: [f64; 2],
    /// Policy sample for step `t + 1`, clipped to `[-1, 1]`.
    pub sampled_location: [f64; 2],
    pub location_mean: [f64; 2],
    pub action_logits: [f64; 2],
    /// Euclidean norm of the core hidden state.
    pub core_norm: f64,
    pub baseline: f64,
}

pub struct RamStep<T> {
    pub glimpse_locations: Vec<[f64; 2]>,
    pub means: Vec<[f64; 2]>,
    /// Raw (unclipped) policy samples.
    pub samples: Vec<[f64; 2]>,
    pub logits: Vec<T>,
    pub baselines: Vec<f64>,
    glimpse_tape: Option<GlimpseTape<T>>,
    core: LstmStep<T>,
}

pub struct Rollout<T> {
    pub batch: usize,
    pub steps: Vec<RamStep<T>>,
}

impl<T: Float> Rollout<T> {
    pub fn final_logits(&self) -> &[T] {
        &self.steps.last().expect("at least one step").logits
    }

    pub fn predictions(&self) -> Vec<bool> {
        argmax_rows(self.final_logits(), 2)
            .into_iter()
            .map(|c| c != FALSE_LABEL)
            .collect()
    }

    pub fn traces(&self, b: usize) -> Vec<RamStepTrace> {
        self.steps
            .iter()
            .enumerate()
            .map(|(t, s)| {
                let h = &s.core.h;
                let hd = h.len() / self.batch;
                let clip = |v: f64| v.clamp(-1.0, 1.0);
                RamStepTrace {
                    t,
                    glimpse_location: s.glimpse_locations[b],
                    sampled_location: [clip(s.samples[b][0]), clip(s.samples[b][1])],
                    location_mean: s.means[b],
                    action_logits: [
                        s.logits[2 * b].to_f64_lossy(),
                        s.logits[2 * b + 1].to_f64_lossy(),
                    ],
                    core_norm: h[b * hd..(b + 1) * hd]
                        .iter()
                        .map(|v| v.to_f64_lossy().powi(2))
                        .sum::<f64>()
                        .sqrt(),
                    baseline: s.baselines[b],
                }
            })
            .collect()
    }
}

/// Loss gradients w.r.t. the rollout outputs that feed back into the network.
pub struct RolloutGrads<T> {
    /// `[batch, 2]`, final step only.
    pub d_final_logits: Vec<T>,
    /// Per step, per image; `None` skips the location head.
    pub d_means: Option<Vec<Vec<[f64; 2]>>>,
    /// Per step, per image; `None` skips the baseline head.
    pub d_baselines: Option<Vec<Vec<f64>>>,
}

/// Recurrent attention model: glimpse network, LSTM core, tanh location
/// head, action head and a per-step scalar baseline head.
#[derive(Clone, Debug)]
pub struct Ram<T> {
    config: RamConfig,
    pub glimpse: GlimpseNet<T>,
    pub core: Lstm<T>,
    pub locator: Linear<T>,
    pub classifier: Linear<T>,
    pub baseline: Linear<T>,
}

impl<T: Float> Ram<T> {
    pub fn new<R: Rng + ?Sized>(config: RamConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let hd = config.hidden_dim;
        let glimpse = GlimpseNet::new(&config, rng);
        let core = Lstm::new("core", config.glimpse_dim, hd, rng);
        let locator = Linear::from_weights("locator", hd, 2, uniform_fan_in(2 * hd, hd, rng));
        let classifier = Linear::from_weights("classifier", hd, 2, uniform_fan_in(2 * hd, hd, rng));
        let baseline = Linear::from_weights("baseline", hd, 1, vec![T::zero(); hd]);
        Ok(Ram {
            config,
            glimpse,
            core,
            locator,
            classifier,
            baseline,
        })
    }

    pub fn config(&self) -> &RamConfig {
        &self.config
    }

    /// Sampled rollout: uniform start location, Gaussian policy afterwards.
    pub fn rollout<R: Rng + ?Sized>(
        &self,
        images: &[&[u8]],
        keep_tape: bool,
        rng: &mut R,
    ) -> Rollout<T> {
        let std = self.config.location_std;
        self.run(images, keep_tape, |_, _, mean| match mean {
            None => [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)],
            Some(m) => {
                let ex: f64 = StandardNormal.sample(rng);
                let ey: f64 = StandardNormal.sample(rng);
                [m[0] + std * ex, m[1] + std * ey]
            }
        })
    }

    /// Rollout with every location given: `locations[t][b]` is where glimpse
    /// `t` of image `b` is taken; `locations[T][b]` is the trailing sample.
    pub fn rollout_fixed(&self, images: &[&[u8]], locations: &[Vec<[f64; 2]>]) -> Rollout<T> {
        assert_eq!(locations.len(), self.config.n_glimpses + 1);
        self.run(images, true, |t, b, _| locations[t][b])
    }

    /// Starts at `initial` and samples the policy afterwards.
    pub fn rollout_from<R: Rng + ?Sized>(
        &self,
        images: &[&[u8]],
        initial: &[[f64; 2]],
        rng: &mut R,
    ) -> Rollout<T> {
        let std = self.config.location_std;
        self.run(images, true, |_, b, mean| match mean {
            None => initial[b],
            Some(m) => {
                let ex: f64 = StandardNormal.sample(rng);
                let ey: f64 = StandardNormal.sample(rng);
                [m[0] + std * ex, m[1] + std * ey]
            }
        })
    }

    /// `pick(t, b, mean)` chooses the location for glimpse `t` (mean is `None`
    /// at `t = 0`) and, at index `T`, the trailing sample.
    fn run(
        &self,
        images: &[&[u8]],
        keep_tape: bool,
        mut pick: impl FnMut(usize, usize, Option<[f64; 2]>) -> [f64; 2],
    ) -> Rollout<T> {
        let batch = images.len();
        let cfg = &self.config;
        let hd = cfg.hidden_dim;
        let mut h = vec![T::zero(); batch * hd];
        let mut c = vec![T::zero(); batch * hd];
        let mut current: Vec<[f64; 2]> = (0..batch).map(|b| pick(0, b, None)).collect();
        let mut steps = Vec::with_capacity(cfg.n_glimpses);
        for t in 0..cfg.n_glimpses {
            let mut patches =
                Vec::with_capacity(batch * cfg.n_patches * cfg.patch_size * cfg.patch_size);
            for (img, loc) in images.iter().zip(&current) {
                extract_into(img, *loc, cfg, &mut patches);
            }
            let locs: Vec<T> = current
                .iter()
                .flatten()
                .map(|&v| T::from_f64_lossy(v))
                .collect();
            let x = Tensor4::from_vec(
                batch,
                cfg.n_patches,
                cfg.patch_size,
                cfg.patch_size,
                patches,
            );
            let (features, tape) = self.glimpse.forward(x, &locs);
            let core = self.core.step(&features, &h, &c, batch);
            let logits = self.classifier.forward(&core.h, batch);
            let raw = self.locator.forward(&core.h, batch);
            let means: Vec<[f64; 2]> = raw
                .chunks_exact(2)
                .map(|r| [r[0].tanh().to_f64_lossy(), r[1].tanh().to_f64_lossy()])
                .collect();
            let baselines = self
                .baseline
                .forward(&core.h, batch)
                .into_iter()
                .map(|v| v.to_f64_lossy())
                .collect();
            let samples: Vec<[f64; 2]> = means
                .iter()
                .enumerate()
                .map(|(b, m)| pick(t + 1, b, Some(*m)))
                .collect();
            h = core.h.clone();
            c = core.c.clone();
            steps.push(RamStep {
                glimpse_locations: std::mem::replace(&mut current, samples.clone()),
                means,
                samples,
                logits,
                baselines,
                glimpse_tape: keep_tape.then_some(tape),
                core,
            });
        }
        Rollout { batch, steps }
    }

    /// Single-image forward: prediction plus per-step traces.
    pub fn forward_one<R: Rng + ?Sized>(
        &self,
        image: &[u8],
        rng: &mut R,
    ) -> (bool, Vec<RamStepTrace>) {
        let rollout = self.rollout(&[image], false, rng);
        (rollout.predictions()[0], rollout.traces(0))
    }

    pub fn predict<R: Rng + ?Sized>(&self, images: &[&[u8]], rng: &mut R) -> Vec<bool> {
        self.rollout(images, false, rng).predictions()
    }

    /// Accumulates parameter gradients. Cross-entropy flows through the action
    /// head, core and glimpse network; the location and baseline heads see
    /// their own gradients only, with the hidden state held constant.
    pub fn backward(&mut self, rollout: &Rollout<T>, grads: &RolloutGrads<T>) {
        let batch = rollout.batch;
        let hd = self.config.hidden_dim;
        for (t, step) in rollout.steps.iter().enumerate() {
            if let Some(dm) = &grads.d_means {
                let dz: Vec<T> = dm[t]
                    .iter()
                    .zip(&step.means)
                    .flat_map(|(d, m)| {
                        [
                            T::from_f64_lossy(d[0] * (1.0 - m[0] * m[0])),
                            T::from_f64_lossy(d[1] * (1.0 - m[1] * m[1])),
                        ]
                    })
                    .collect();
                self.locator.backward(&step.core.h, &dz, batch, false);
            }
            if let Some(db) = &grads.d_baselines {
                let d: Vec<T> = db[t].iter().map(|&v| T::from_f64_lossy(v)).collect();
                self.baseline.backward(&step.core.h, &d, batch, false);
            }
        }
        let last = rollout.steps.last().expect("at least one step");
        let mut dh = self
            .classifier
            .backward(&last.core.h, &grads.d_final_logits, batch, true)
            .expect("dx");
        let mut dc = vec![T::zero(); batch * hd];
        for step in rollout.steps.iter().rev() {
            let (dx, dh_prev, dc_prev) = self.core.backward_step(&step.core, &dh, &dc);
            let tape = step
                .glimpse_tape
                .as_ref()
                .expect("rollout was recorded without a tape");
            self.glimpse.backward(tape, &dx);
            dh = dh_prev;
            dc = dc_prev;
        }
    }
}

impl<T: Float> Parameterized<T> for Ram<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut out = self.glimpse.params();
        out.extend([&self.core.w_input, &self.core.w_hidden, &self.core.bias]);
        for l in [&self.locator, &self.classifier, &self.baseline] {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.glimpse.params_mut();
        out.extend([
            &mut self.core.w_input,
            &mut self.core.w_hidden,
            &mut self.core.bias,
        ]);
        for l in [&mut self.locator, &mut self.classifier, &mut self.baseline] {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }
}
