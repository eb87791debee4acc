use rand::Rng;

use super::{matmul, sigmoid, uniform_fan_in, Float, MatRef, Param};

/// Long short-term memory cell with gate layout `[input | forget | cell | output]`.
#[derive(Clone, Debug)]
pub struct Lstm<T> {
    pub inputs: usize,
    pub hidden: usize,
    /// `[4H, in]`
    pub w_input: Param<T>,
    /// `[4H, H]`
    pub w_hidden: Param<T>,
    pub bias: Param<T>,
}

/// Values saved by one forward step for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmStep<T> {
    pub batch: usize,
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    /// activated gates, `[batch, 4H]`
    pub gates: Vec<T>,
    pub c: Vec<T>,
    pub tanh_c: Vec<T>,
    pub h: Vec<T>,
}

impl<T: Float> Lstm<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let mut bias = Param::zeros(format!("{name}.bias"), vec![4 * hidden]);
        // forget gate starts open
        for b in &mut bias.value[hidden..2 * hidden] {
            *b = T::one();
        }
        Lstm {
            inputs,
            hidden,
            w_input: Param::new(
                format!("{name}.w_input"),
                vec![4 * hidden, inputs],
                uniform_fan_in(4 * hidden * inputs, hidden, rng),
            ),
            w_hidden: Param::new(
                format!("{name}.w_hidden"),
                vec![4 * hidden, hidden],
                uniform_fan_in(4 * hidden * hidden, hidden, rng),
            ),
            bias,
        }
    }

    pub fn step(&self, x: &[T], h_prev: &[T], c_prev: &[T], batch: usize) -> LstmStep<T> {
        let hd = self.hidden;
        assert_eq!(x.len(), batch * self.inputs);
        assert_eq!(h_prev.len(), batch * hd);
        let mut z = Vec::with_capacity(batch * 4 * hd);
        for _ in 0..batch {
            z.extend_from_slice(&self.bias.value);
        }
        matmul(
            MatRef::new(x, batch, self.inputs),
            MatRef::new(&self.w_input.value, 4 * hd, self.inputs).t(),
            &mut z,
            T::one(),
        );
        matmul(
            MatRef::new(h_prev, batch, hd),
            MatRef::new(&self.w_hidden.value, 4 * hd, hd).t(),
            &mut z,
            T::one(),
        );
        let mut c = vec![T::zero(); batch * hd];
        let mut tanh_c = vec![T::zero(); batch * hd];
        let mut h = vec![T::zero(); batch * hd];
        for b in 0..batch {
            let g = &mut z[b * 4 * hd..(b + 1) * 4 * hd];
            for j in 0..hd {
                g[j] = sigmoid(g[j]);
                g[hd + j] = sigmoid(g[hd + j]);
                g[2 * hd + j] = g[2 * hd + j].tanh();
                g[3 * hd + j] = sigmoid(g[3 * hd + j]);
                let idx = b * hd + j;
                c[idx] = g[hd + j] * c_prev[idx] + g[j] * g[2 * hd + j];
                tanh_c[idx] = c[idx].tanh();
                h[idx] = g[3 * hd + j] * tanh_c[idx];
            }
        }
        LstmStep {
            batch,
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates: z,
            c,
            tanh_c,
            h,
        }
    }

    /// Backward through one step given gradients w.r.t. the step's `h` and `c`.
    /// Returns `(dx, dh_prev, dc_prev)`.
    pub fn backward_step(
        &mut self,
        s: &LstmStep<T>,
        dh: &[T],
        dc_next: &[T],
    ) -> (Vec<T>, Vec<T>, Vec<T>) {
        let hd = self.hidden;
        let batch = s.batch;
        let one = T::one();
        let mut dz = vec![T::zero(); batch * 4 * hd];
        let mut dc_prev = vec![T::zero(); batch * hd];
        for b in 0..batch {
            let g = &s.gates[b * 4 * hd..(b + 1) * 4 * hd];
            let d = &mut dz[b * 4 * hd..(b + 1) * 4 * hd];
            for j in 0..hd {
                let idx = b * hd + j;
                let (i, f, gg, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                let tc = s.tanh_c[idx];
                let dcell = dc_next[idx] + dh[idx] * o * (one - tc * tc);
                d[j] = dcell * gg * i * (one - i);
                d[hd + j] = dcell * s.c_prev[idx] * f * (one - f);
                d[2 * hd + j] = dcell * i * (one - gg * gg);
                d[3 * hd + j] = dh[idx] * tc * o * (one - o);
                dc_prev[idx] = dcell * f;
            }
        }
        matmul(
            MatRef::new(&dz, batch, 4 * hd).t(),
            MatRef::new(&s.x, batch, self.inputs),
            &mut self.w_input.grad,
            one,
        );
        matmul(
            MatRef::new(&dz, batch, 4 * hd).t(),
            MatRef::new(&s.h_prev, batch, hd),
            &mut self.w_hidden.grad,
            one,
        );
        for row in dz.chunks_exact(4 * hd) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![T::zero(); batch * self.inputs];
        matmul(
            MatRef::new(&dz, batch, 4 * hd),
            MatRef::new(&self.w_input.value, 4 * hd, self.inputs),
            &mut dx,
            T::zero(),
        );
        let mut dh_prev = vec![T::zero(); batch * hd];
        matmul(
            MatRef::new(&dz, batch, 4 * hd),
            MatRef::new(&self.w_hidden.value, 4 * hd, hd),
            &mut dh_prev,
            T::zero(),
        );
        (dx, dh_prev, dc_prev)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Two unrolled steps, objective = probe . h2.
    fn objective(cell: &Lstm<f64>, xs: &[Vec<f64>; 2], probe: &[f64]) -> f64 {
        let zeros = vec![0.0; 2 * cell.hidden];
        let s1 = cell.step(&xs[0], &zeros, &zeros, 2);
        let s2 = cell.step(&xs[1], &s1.h, &s1.c, 2);
        s2.h.iter().zip(probe).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn backward_through_time_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cell = Lstm::<f64>::new("core", 3, 4, &mut rng);
        let xs = [
            (0..6).map(|i| (i as f64) * 0.3 - 0.7).collect::<Vec<_>>(),
            (0..6).map(|i| 0.5 - (i as f64) * 0.2).collect::<Vec<_>>(),
        ];
        let probe: Vec<f64> = (0..8).map(|i| ((i * 5 % 3) as f64) - 1.0).collect();
        let zeros = vec![0.0; 8];
        let s1 = cell.step(&xs[0], &zeros, &zeros, 2);
        let s2 = cell.step(&xs[1], &s1.h, &s1.c, 2);
        let (dx2, dh1, dc1) = cell.backward_step(&s2, &probe, &zeros);
        let (dx1, _, _) = cell.backward_step(&s1, &dh1, &dc1);

        let eps = 1e-6;
        let check = |analytic: f64, f: &dyn Fn(f64) -> f64| {
            let numeric = (f(eps) - f(-eps)) / (2.0 * eps);
            assert!((numeric - analytic).abs() < 1e-7, "{numeric} vs {analytic}");
        };
        for i in [0, 7, 20, 47] {
            check(cell.w_hidden.grad[i], &|d| {
                let mut c = cell.clone();
                c.w_hidden.value[i] += d;
                objective(&c, &xs, &probe)
            });
            check(cell.w_input.grad[i % 48], &|d| {
                let mut c = cell.clone();
                c.w_input.value[i % 48] += d;
                objective(&c, &xs, &probe)
            });
        }
        for i in [1, 6, 12] {
            check(cell.bias.grad[i], &|d| {
                let mut c = cell.clone();
                c.bias.value[i] += d;
                objective(&c, &xs, &probe)
            });
        }
        for i in 0..6 {
            check(dx1[i], &|d| {
                let mut x = xs.clone();
                x[0][i] += d;
                objective(&cell, &x, &probe)
            });
            check(dx2[i], &|d| {
                let mut x = xs.clone();
                x[1][i] += d;
                objective(&cell, &x, &probe)
            });
        }
    }
}
