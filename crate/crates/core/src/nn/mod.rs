//! Minimal dense/conv/recurrent layers with hand-written backward passes.
//!
//! Layers own their [`Param`]s. `forward` is pure; `backward` accumulates
//! into `Param::grad` and returns the input gradient when asked for it.
//! Activations are flat row-major buffers, images in NCHW order.

mod adam;
mod conv;
mod float;
mod init;
mod linear;
mod loss;
mod lstm;
mod param;
mod pool;

pub use adam::{Adam, AdamConfig};
pub use conv::Conv2d;
pub use float::{matmul, Float, MatRef};
pub use init::{he_normal, uniform_fan_in};
pub use linear::Linear;
pub use loss::{argmax_rows, softmax_cross_entropy, softmax_rows};
pub use lstm::{Lstm, LstmStep};
pub use param::{Param, Parameterized};
pub use pool::{avg_pool, avg_pool_backward, max_pool2, max_pool2_backward};

/// Image-shaped activation batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Float> Tensor4<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            n * c * h * w,
            "tensor data does not match shape"
        );
        Tensor4 { n, c, h, w, data }
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }
}

pub fn relu_inplace<T: Float>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `grad` wherever the rectified output was not positive.
pub fn relu_backward<T: Float>(output: &[T], grad: &mut [T]) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn sigmoid<T: Float>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
