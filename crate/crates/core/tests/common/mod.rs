//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

/// erfc from a positive-term series below 2.5 and a Lentz continued
/// fraction above.
pub fn erfc_oracle(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc_oracle(-x);
    }
    if x < 2.5 {
        // erf(x) = 2/sqrt(pi) exp(-x^2) sum 2^n x^(2n+1) / (1*3*...*(2n+1))
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term > 1e-18 * sum {
            n += 1.0;
            term *= 2.0 * x * x / (2.0 * n + 1.0);
            sum += term;
        }
        1.0 - 2.0 / PI.sqrt() * (-x * x).exp() * sum
    } else {
        // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        let tiny = 1e-300;
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for k in 1..300 {
            let a = k as f64 / 2.0;
            d = x + a * d;
            d = if d.abs() < tiny { tiny } else { d };
            c = x + a / c;
            c = if c.abs() < tiny { tiny } else { c };
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x * x).exp() / PI.sqrt() / f
    }
}

pub fn ans_oracle(n1: f64, n2: f64, w: f64) -> f64 {
    1.0 - 0.5 * erfc_oracle((n1 - n2) / (w * 2f64.sqrt() * (n1 * n1 + n2 * n2).sqrt()))
}

/// Glimpse by explicit zero-padded canvas, crop, then block average.
pub fn glimpse_oracle(image: &[u8], loc: [f64; 2], patch: usize, n_patches: usize) -> Vec<f64> {
    const SIDE: usize = 128;
    const PAD: usize = 200;
    let big = SIDE + 2 * PAD;
    let mut canvas = vec![0u32; big * big];
    for r in 0..SIDE {
        for c in 0..SIDE {
            canvas[(r + PAD) * big + c + PAD] = image[r * SIDE + c] as u32;
        }
    }
    let to_px = |v: f64| ((v + 1.0) / 2.0 * 127.0).round() as i64;
    let (cx, cy) = (to_px(loc[0]), to_px(loc[1]));
    let mut out = Vec::new();
    for p in 0..n_patches {
        let s = 1usize << p;
        let extent = (patch * s) as i64;
        let left = (cx - extent / 2 + PAD as i64) as usize;
        let top = (cy - extent / 2 + PAD as i64) as usize;
        let crop: Vec<Vec<u32>> = (0..extent as usize)
            .map(|r| {
                (0..extent as usize)
                    .map(|c| canvas[(top + r) * big + left + c])
                    .collect()
            })
            .collect();
        for br in 0..patch {
            for bc in 0..patch {
                let mut sum = 0u32;
                for r in br * s..(br + 1) * s {
                    for c in bc * s..(bc + 1) * s {
                        sum += crop[r][c];
                    }
                }
                out.push(sum as f64 / (s * s * 255) as f64);
            }
        }
    }
    out
}

/// Central-difference relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn log_likelihood3(x: &[[f64; 3]], y: &[f64], b: [f64; 3]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(r, &yi)| {
            let eta = r[0] * b[0] + r[1] * b[1] + r[2] * b[2];
            // log(1 + e^eta), stable
            let softplus = if eta > 0.0 {
                eta + (-eta).exp().ln_1p()
            } else {
                eta.exp().ln_1p()
            };
            yi * eta - softplus
        })
        .sum()
}

/// Maximum-likelihood logit coefficients for three predictors by a coarse
/// grid search followed by Newton steps solved with Cramer's rule.
pub fn brute_force_logit3(x: &[[f64; 3]], y: &[f64]) -> [f64; 3] {
    let mut best = ([0.0; 3], f64::NEG_INFINITY);
    let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.25).collect();
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                let ll = log_likelihood3(x, y, [a, b, c]);
                if ll > best.1 {
                    best = ([a, b, c], ll);
                }
            }
        }
    }
    let mut b = best.0;
    for _ in 0..200 {
        let mut g = [0.0; 3];
        let mut h = [[0.0; 3]; 3];
        for (r, &yi) in x.iter().zip(y) {
            let eta = r[0] * b[0] + r[1] * b[1] + r[2] * b[2];
            let mu = 1.0 / (1.0 + (-eta).exp());
            for i in 0..3 {
                g[i] += (yi - mu) * r[i];
                for j in 0..3 {
                    h[i][j] += mu * (1.0 - mu) * r[i] * r[j];
                }
            }
        }
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det(h);
        let mut step = [0.0; 3];
        for k in 0..3 {
            let mut m = h;
            for i in 0..3 {
                m[i][k] = g[i];
            }
            step[k] = det(m) / d;
        }
        // Halve until the likelihood does not drop.
        let ll0 = log_likelihood3(x, y, b);
        let mut t = 1.0;
        loop {
            let cand = [b[0] + t * step[0], b[1] + t * step[1], b[2] + t * step[2]];
            if log_likelihood3(x, y, cand) >= ll0 || t < 1e-6 {
                b = cand;
                break;
            }
            t *= 0.5;
        }
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-13 {
            break;
        }
    }
    b
}

pub mod reinforce {
    use std::collections::HashMap;

    use mostdots_core::models::{Ram, RamConfig};
    use mostdots_core::nn::Parameterized;
    use mostdots_core::training::ram_loss;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub const STD: f64 = 0.03;

    fn coord(p: i64) -> f64 {
        p as f64 / 127.0 * 2.0 - 1.0
    }

    fn phi(z: f64) -> f64 {
        0.5 * super::erfc_oracle(-z / 2f64.sqrt())
    }

    /// Two-step toy: the first glimpse is fixed, the policy picks the second.
    /// The where-path is a constant gate so reward depends only on the pixel
    /// the sampled location rounds to.
    pub struct Toy {
        pub net: Ram<f64>,
        pub image: Vec<u8>,
        pub start: [f64; 2],
        pub label: usize,
        cache: HashMap<(i64, i64), f64>,
    }

    impl Toy {
        pub fn new(seed: u64) -> Self {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = RamConfig {
                n_glimpses: 2,
                conv_filters: vec![2, 2, 3],
                glimpse_dim: 4,
                hidden_dim: 3,
                location_std: STD,
                ..RamConfig::standard(4).unwrap()
            };
            let mut net = Ram::<f64>::new(cfg, &mut rng).unwrap();
            net.glimpse
                .where_
                .weight
                .value
                .iter_mut()
                .for_each(|v| *v = 0.0);
            net.glimpse
                .where_
                .bias
                .value
                .iter_mut()
                .for_each(|v| *v = 1.0);
            net.locator.weight.value.iter_mut().for_each(|v| *v = 0.0);
            // Bright squares on a dark field give reward structure at pixel scale.
            let mut image = vec![0u8; 128 * 128];
            for _ in 0..40 {
                let (r0, c0) = (rng.gen_range(0..124), rng.gen_range(0..124));
                let v = if rng.gen_bool(0.5) { 255 } else { 128 };
                for r in r0..r0 + 4 {
                    for c in c0..c0 + 4 {
                        image[r * 128 + c] = v;
                    }
                }
            }
            Toy {
                net,
                image,
                start: [0.0, 0.0],
                label: 1,
                cache: HashMap::new(),
            }
        }

        /// Reward when the second glimpse lands on pixel `(px, py)`.
        pub fn reward(&mut self, px: i64, py: i64) -> f64 {
            if let Some(&r) = self.cache.get(&(px, py)) {
                return r;
            }
            let locs = vec![
                vec![self.start],
                vec![[coord(px), coord(py)]],
                vec![[0.0, 0.0]],
            ];
            let r = self.net.rollout_fixed(&[&self.image], &locs).predictions()[0];
            let r = if (r as usize) == self.label { 1.0 } else { 0.0 };
            self.cache.insert((px, py), r);
            r
        }

        /// Exact expected reward for a policy mean `mu`.
        pub fn expected_reward(&mut self, mu: [f64; 2]) -> f64 {
            let centre = |m: f64| ((m + 1.0) / 2.0 * 127.0).round() as i64;
            let (cx, cy) = (centre(mu[0]), centre(mu[1]));
            let prob = |p: i64, m: f64| {
                let lo = (coord(p) - 1.0 / 127.0 - m) / STD;
                let hi = (coord(p) + 1.0 / 127.0 - m) / STD;
                phi(hi) - phi(lo)
            };
            let mut total = 0.0;
            for px in cx - 14..=cx + 14 {
                let wx = prob(px, mu[0]);
                for py in cy - 14..=cy + 14 {
                    total += self.reward(px, py) * wx * prob(py, mu[1]);
                }
            }
            total
        }

        /// A mean whose neighbourhood has mixed rewards, as close to an even
        /// split as the scan finds.
        pub fn choose_mean(&mut self) -> [f64; 2] {
            let mut best = ([0.0, 0.0], f64::INFINITY);
            for px in (8..120).step_by(3) {
                for py in (8..120).step_by(3) {
                    let mu = [coord(px) + 0.004, coord(py) - 0.003];
                    let e = self.expected_reward(mu);
                    let score = (e - 0.5).abs();
                    if score < best.1 {
                        best = (mu, score);
                    }
                }
            }
            best.0
        }

        pub fn set_mean(&mut self, mu: [f64; 2]) {
            for k in 0..2 {
                self.net.locator.bias.value[k] = mu[k].atanh();
            }
        }

        /// d E[R] / d locator bias by central differences of the exact expectation.
        pub fn finite_difference(&mut self) -> [f64; 2] {
            let eps = 1e-5;
            let b = [
                self.net.locator.bias.value[0],
                self.net.locator.bias.value[1],
            ];
            let mut out = [0.0; 2];
            for k in 0..2 {
                let mut up = b;
                up[k] += eps;
                let mut down = b;
                down[k] -= eps;
                let e_up = self.expected_reward([up[0].tanh(), up[1].tanh()]);
                let e_down = self.expected_reward([down[0].tanh(), down[1].tanh()]);
                out[k] = (e_up - e_down) / (2.0 * eps);
            }
            out
        }

        /// Score-function estimate of d E[R] / d locator bias from `samples`
        /// rollouts, with the exact expected reward as a constant baseline.
        pub fn monte_carlo(&mut self, samples: usize, seed: u64) -> [f64; 2] {
            let mu = [
                self.net.locator.bias.value[0].tanh(),
                self.net.locator.bias.value[1].tanh(),
            ];
            let baseline = self.expected_reward(mu);
            let mut net = self.net.clone();
            net.baseline.weight.value.iter_mut().for_each(|v| *v = 0.0);
            net.baseline.bias.value[0] = baseline;
            net.zero_grad();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = 100;
            let rounds = samples / batch;
            for _ in 0..rounds {
                let images: Vec<&[u8]> = vec![self.image.as_slice(); batch];
                let rollout = net.rollout_from(&images, &vec![self.start; batch], &mut rng);
                let (_, mut grads) = ram_loss(&rollout, &vec![self.label; batch], STD, true);
                grads.d_final_logits.iter_mut().for_each(|g| *g = 0.0);
                grads.d_baselines = None;
                net.backward(&rollout, &grads);
            }
            let g = &net.locator.bias.grad;
            [-g[0] / rounds as f64, -g[1] / rounds as f64]
        }
    }
}

/// Measurements shared by the integration tests and the acceptance run.
pub mod checks {
    use mostdots_core::analysis::{
        ans_accuracy, fit_logistic, fit_weber, Design, RegressionSpec, WeberPoint,
    };
    use mostdots_core::models::*;
    use mostdots_core::nn::{softmax_cross_entropy, Parameterized};
    use mostdots_core::stimuli::RatioPair;
    use mostdots_core::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::{ans_oracle, brute_force_logit3, glimpse_oracle, relative_error};

    pub fn random_image(rng: &mut ChaCha8Rng) -> Vec<u8> {
        (0..128 * 128).map(|_| rng.gen()).collect()
    }

    pub struct AnsReport {
        pub equal_counts_exact: bool,
        pub worst_scaling_error: f64,
        pub worst_fit_error: f64,
        pub min_r_squared: f64,
    }

    pub fn ans_report() -> AnsReport {
        let mut equal_counts_exact = true;
        for n in 1..=30 {
            for w in [1e-3, 0.1, 0.363, 2.0] {
                equal_counts_exact &= ans_accuracy(n as f64, n as f64, w).unwrap() == 0.5;
            }
        }
        let mut worst_scaling_error: f64 = 0.0;
        for r in RatioPair::ALL {
            for w in [0.05, 0.1, 0.3, 0.5, 1.0] {
                let base = ans_accuracy(r.large() as f64, r.small() as f64, w).unwrap();
                for k in [2.0, 3.0, 10.0] {
                    let scaled =
                        ans_accuracy(k * r.large() as f64, k * r.small() as f64, w).unwrap();
                    worst_scaling_error = worst_scaling_error.max((scaled - base).abs());
                }
            }
        }
        let (mut worst_fit_error, mut min_r_squared) = (0.0f64, f64::INFINITY);
        for w in [0.05, 0.1, 0.3, 0.5] {
            let pts: Vec<WeberPoint> = RatioPair::ALL
                .iter()
                .map(|r| WeberPoint {
                    n1: r.large() as f64,
                    n2: r.small() as f64,
                    accuracy: ans_oracle(r.large() as f64, r.small() as f64, w),
                })
                .collect();
            let fit = fit_weber(&pts).unwrap();
            worst_fit_error = worst_fit_error.max((fit.w - w).abs() / w);
            min_r_squared = min_r_squared.min(fit.r_squared.unwrap_or(f64::NEG_INFINITY));
        }
        AnsReport {
            equal_counts_exact,
            worst_scaling_error,
            worst_fit_error,
            min_r_squared,
        }
    }

    /// Number of `(image, location)` cases whose glimpse differs from the oracle.
    pub fn glimpse_mismatches(cases: usize, seed: u64) -> usize {
        let cfg = RamConfig::standard(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corners = [
            [-1.0, -1.0],
            [1.0, 1.0],
            [-1.0, 1.0],
            [1.0, -1.0],
            [1.2, -1.2],
        ];
        (0..cases)
            .filter(|&i| {
                let img = random_image(&mut rng);
                let loc = if i < corners.len() {
                    corners[i]
                } else {
                    [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
                };
                extract_glimpse::<f64>(&img, loc, &cfg).patches != glimpse_oracle(&img, loc, 12, 2)
            })
            .count()
    }

    /// Worst relative error over every tenth entry of every tensor.
    fn worst_fd_error<N, L>(net: &N, loss: L) -> f64
    where
        N: Parameterized<f64> + Clone,
        L: Fn(&N) -> f64,
    {
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for pi in 0..net.params().len() {
            let len = net.params()[pi].len();
            for idx in (0..len).step_by((len / 10).max(1)) {
                let analytic = net.params()[pi].grad[idx];
                let mut up = net.clone();
                up.params_mut()[pi].value[idx] += eps;
                let mut down = net.clone();
                down.params_mut()[pi].value[idx] -= eps;
                let numeric = (loss(&up) - loss(&down)) / (2.0 * eps);
                worst = worst.max(relative_error(analytic, numeric, 1e-6));
            }
        }
        worst
    }

    /// Narrow VGG7 in double precision, cross-entropy on two random images.
    pub fn vgg_gradient_error() -> f64 {
        let cfg = build_vgg_config(7).unwrap().with_width_divisor(64);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Vgg::<f64>::new(cfg, &mut rng).unwrap();
        let imgs: Vec<Vec<u8>> = (0..2).map(|_| random_image(&mut rng)).collect();
        let refs: Vec<&[u8]> = imgs.iter().map(|v| v.as_slice()).collect();
        let x = images_to_tensor::<f64>(&refs, 128).unwrap();
        let labels = [1usize, 0];
        let (logits, tape) = net.forward_train::<ChaCha8Rng>(&x, None).unwrap();
        let (_, d) = softmax_cross_entropy(&logits, &labels, 2);
        net.backward(&tape, &d);
        worst_fd_error(&net, |n: &Vgg<f64>| {
            softmax_cross_entropy(&n.logits(&x).unwrap(), &labels, 2).0
        })
    }

    /// Narrow three-glimpse RAM in double precision with the glimpse
    /// locations held fixed. Returns the worst relative error and whether the
    /// location and baseline heads stayed free of cross-entropy gradient.
    pub fn ram_gradient_error() -> (f64, bool) {
        let cfg = RamConfig {
            n_glimpses: 3,
            conv_filters: vec![3, 3, 4],
            glimpse_dim: 6,
            hidden_dim: 5,
            ..RamConfig::standard(4).unwrap()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = Ram::<f64>::new(cfg, &mut rng).unwrap();
        let imgs: Vec<Vec<u8>> = (0..2).map(|_| random_image(&mut rng)).collect();
        let refs: Vec<&[u8]> = imgs.iter().map(|v| v.as_slice()).collect();
        let locs: Vec<Vec<[f64; 2]>> = (0..4)
            .map(|t| vec![[0.1 * t as f64 - 0.2, 0.05], [-0.3, 0.2 * t as f64 - 0.1]])
            .collect();
        let labels = [1usize, 0];
        let r = net.rollout_fixed(&refs, &locs);
        let (_, d) = softmax_cross_entropy(r.final_logits(), &labels, 2);
        net.backward(
            &r,
            &RolloutGrads {
                d_final_logits: d,
                d_means: None,
                d_baselines: None,
            },
        );
        let isolated = net
            .params()
            .iter()
            .filter(|p| p.name.starts_with("locator") || p.name.starts_with("baseline"))
            .all(|p| p.grad.iter().all(|&g| g == 0.0));
        let worst = worst_fd_error(&net, |n: &Ram<f64>| {
            softmax_cross_entropy(n.rollout_fixed(&refs, &locs).final_logits(), &labels, 2).0
        });
        (worst, isolated)
    }

    /// Norm of the Monte-Carlo minus finite-difference gradient relative to
    /// the finite-difference norm.
    pub fn reinforce_error(samples: usize) -> f64 {
        let mut toy = super::reinforce::Toy::new(21);
        let mu = toy.choose_mean();
        toy.set_mean(mu);
        let fd = toy.finite_difference();
        let mc = toy.monte_carlo(samples, 22);
        (mc[0] - fd[0]).hypot(mc[1] - fd[1]) / fd[0].hypot(fd[1])
    }

    pub fn logit_toy(seed: u64, n: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = [0.5, -1.2, 0.8];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let row = [
                1.0,
                rng.gen_range(-2.0..2.0),
                if rng.gen_bool(0.4) { 1.0 } else { 0.0 },
            ];
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            y.push(if rng.gen::<f64>() < 1.0 / (1.0 + (-eta).exp()) {
                1.0
            } else {
                0.0
            });
            x.push(row);
        }
        (x, y)
    }

    fn design3(x: &[[f64; 3]], y: &[f64]) -> Design {
        Design::new(
            vec!["(Intercept)".into(), "u".into(), "v".into()],
            x.iter().map(|r| r.to_vec()).collect(),
            y.to_vec(),
        )
    }

    /// Largest coefficient gap between IRLS and the brute-force search.
    pub fn irls_vs_brute_force(seeds: u64) -> f64 {
        let mut worst: f64 = 0.0;
        for seed in 0..seeds {
            let (x, y) = logit_toy(seed, 400);
            let rows = fit_logistic(&design3(&x, &y), &RegressionSpec::default()).unwrap();
            for (row, b) in rows.iter().zip(brute_force_logit3(&x, &y)) {
                worst = worst.max((row.estimate - b).abs());
            }
        }
        worst
    }

    /// Distance of the recovered coefficients from the planted (1, -5) in
    /// standard errors, on `n` synthetic trials.
    pub fn planted_recovery(n: usize) -> [f64; 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rows = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let ratio = RatioPair::ALL[rng.gen_range(0..9)].balance();
            let eta = 1.0 - 5.0 * ratio;
            y.push(if rng.gen::<f64>() < 1.0 / (1.0 + (-eta).exp()) {
                1.0
            } else {
                0.0
            });
            rows.push(vec![1.0, ratio]);
        }
        let design = Design::new(vec!["(Intercept)".into(), "dot_ratio".into()], rows, y);
        let fit = fit_logistic(&design, &RegressionSpec::default()).unwrap();
        [
            (fit[0].estimate - 1.0).abs() / fit[0].std_error,
            (fit[1].estimate + 5.0).abs() / fit[1].std_error,
        ]
    }

    pub fn constant_outcome_separates() -> bool {
        let (x, _) = logit_toy(1, 100);
        let y = vec![1.0; x.len()];
        matches!(
            fit_logistic(&design3(&x, &y), &RegressionSpec::default()),
            Err(Error::Separation { .. })
        )
    }
}
