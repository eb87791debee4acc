use rand::Rng;

use super::{he_normal, matmul, Float, MatRef, Param};

/// Fully connected layer, `y = x W^T + b` over a row-major batch.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out, in]`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Float> Linear<T> {
    /// He-initialized weights, zero bias.
    pub fn new<R: Rng + ?Sized>(name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self::from_weights(
            name,
            inputs,
            outputs,
            he_normal(inputs * outputs, inputs, rng),
        )
    }

    pub fn from_weights(name: &str, inputs: usize, outputs: usize, weight: Vec<T>) -> Self {
        Linear {
            inputs,
            outputs,
            weight: Param::new(format!("{name}.weight"), vec![outputs, inputs], weight),
            bias: Param::zeros(format!("{name}.bias"), vec![outputs]),
        }
    }

    pub fn forward(&self, x: &[T], batch: usize) -> Vec<T> {
        assert_eq!(x.len(), batch * self.inputs, "linear input size mismatch");
        let mut y = Vec::with_capacity(batch * self.outputs);
        for _ in 0..batch {
            y.extend_from_slice(&self.bias.value);
        }
        matmul(
            MatRef::new(x, batch, self.inputs),
            MatRef::new(&self.weight.value, self.outputs, self.inputs).t(),
            &mut y,
            T::one(),
        );
        y
    }

    pub fn backward(&mut self, x: &[T], dy: &[T], batch: usize, want_dx: bool) -> Option<Vec<T>> {
        assert_eq!(dy.len(), batch * self.outputs);
        matmul(
            MatRef::new(dy, batch, self.outputs).t(),
            MatRef::new(x, batch, self.inputs),
            &mut self.weight.grad,
            T::one(),
        );
        for row in dy.chunks_exact(self.outputs) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        want_dx.then(|| {
            let mut dx = vec![T::zero(); batch * self.inputs];
            matmul(
                MatRef::new(dy, batch, self.outputs),
                MatRef::new(&self.weight.value, self.outputs, self.inputs),
                &mut dx,
                T::zero(),
            );
            dx
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_and_backward_small_case() {
        let mut layer = Linear::from_weights("fc", 2, 3, vec![1.0, 2.0, 0.0, -1.0, 0.5, 0.5]);
        layer.bias.value = vec![0.0, 1.0, -1.0];
        let x = [1.0f64, 2.0, -1.0, 0.0];
        assert_eq!(layer.forward(&x, 2), vec![5.0, -1.0, 0.5, -1.0, 1.0, -1.5]);
        let dy = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let dx = layer.backward(&x, &dy, 2, true).unwrap();
        assert_eq!(dx, vec![1.5, 2.5, 0.0, -1.0]);
        assert_eq!(layer.weight.grad, vec![1.0, 2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(layer.bias.grad, vec![1.0, 1.0, 1.0]);
    }
}
