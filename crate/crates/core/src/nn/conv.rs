use rand::Rng;

use super::{he_normal, matmul, Float, MatRef, Param, Tensor4};

/// Target number of output positions per GEMM call; small feature maps are
/// batched together until a call covers about this many columns.
const COLUMNS_PER_CALL: usize = 4096;

/// Square-kernel stride-1 convolution with symmetric zero padding,
/// lowered to GEMM through an im2col buffer.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    /// `[out, in * k * k]`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Float> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Conv2d {
            in_channels,
            out_channels,
            kernel,
            padding,
            weight: Param::new(
                format!("{name}.weight"),
                vec![out_channels, fan_in],
                he_normal(out_channels * fan_in, fan_in, rng),
            ),
            bias: Param::zeros(format!("{name}.bias"), vec![out_channels]),
        }
    }

    pub fn output_side(&self, side: usize) -> usize {
        side + 2 * self.padding + 1 - self.kernel
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn chunk_size(&self, n: usize, positions: usize) -> usize {
        (COLUMNS_PER_CALL / positions.max(1)).clamp(1, n.max(1))
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Tensor4<T> {
        assert_eq!(x.c, self.in_channels, "conv input channel mismatch");
        let (oh, ow) = (self.output_side(x.h), self.output_side(x.w));
        let positions = oh * ow;
        let mut y = Tensor4::zeros(x.n, self.out_channels, oh, ow);
        let chunk = self.chunk_size(x.n, positions);
        let k = self.patch_len();
        let mut cols = Vec::new();
        let mut out = Vec::new();
        let mut start = 0;
        while start < x.n {
            let count = chunk.min(x.n - start);
            let width = count * positions;
            cols.resize(k * width, T::zero());
            out.resize(self.out_channels * width, T::zero());
            self.im2col(x, start, count, oh, ow, &mut cols);
            matmul(
                MatRef::new(&self.weight.value, self.out_channels, k),
                MatRef::new(&cols, k, width),
                &mut out,
                T::zero(),
            );
            for j in 0..count {
                let dst = &mut y.data[(start + j) * self.out_channels * positions..];
                for o in 0..self.out_channels {
                    let b = self.bias.value[o];
                    let src = &out[o * width + j * positions..o * width + (j + 1) * positions];
                    for (d, &s) in dst[o * positions..(o + 1) * positions].iter_mut().zip(src) {
                        *d = s + b;
                    }
                }
            }
            start += count;
        }
        y
    }

    /// Accumulates weight/bias gradients; returns the input gradient if requested.
    pub fn backward(
        &mut self,
        x: &Tensor4<T>,
        dy: &Tensor4<T>,
        want_dx: bool,
    ) -> Option<Tensor4<T>> {
        let (oh, ow) = (dy.h, dy.w);
        assert_eq!((oh, ow), (self.output_side(x.h), self.output_side(x.w)));
        assert_eq!(dy.c, self.out_channels);
        let positions = oh * ow;
        let chunk = self.chunk_size(x.n, positions);
        let k = self.patch_len();
        let mut dx = want_dx.then(|| Tensor4::zeros(x.n, x.c, x.h, x.w));
        let mut cols = Vec::new();
        let mut dout = Vec::new();
        let mut dcols = Vec::new();
        let mut start = 0;
        while start < x.n {
            let count = chunk.min(x.n - start);
            let width = count * positions;
            dout.resize(self.out_channels * width, T::zero());
            for j in 0..count {
                let src = &dy.data[(start + j) * self.out_channels * positions..];
                for o in 0..self.out_channels {
                    dout[o * width + j * positions..o * width + (j + 1) * positions]
                        .copy_from_slice(&src[o * positions..(o + 1) * positions]);
                }
            }
            for o in 0..self.out_channels {
                let s: T = dout[o * width..(o + 1) * width].iter().copied().sum();
                self.bias.grad[o] += s;
            }
            cols.resize(k * width, T::zero());
            self.im2col(x, start, count, oh, ow, &mut cols);
            matmul(
                MatRef::new(&dout, self.out_channels, width),
                MatRef::new(&cols, k, width).t(),
                &mut self.weight.grad,
                T::one(),
            );
            if let Some(dx) = dx.as_mut() {
                dcols.resize(k * width, T::zero());
                matmul(
                    MatRef::new(&self.weight.value, self.out_channels, k).t(),
                    MatRef::new(&dout, self.out_channels, width),
                    &mut dcols,
                    T::zero(),
                );
                self.col2im(&dcols, dx, start, count, oh, ow);
            }
            start += count;
        }
        dx
    }

    /// Valid output-column range for kernel offset `kx` along an axis.
    fn valid_range(&self, offset: usize, in_side: usize, out_side: usize) -> (usize, usize) {
        let lo = self.padding.saturating_sub(offset);
        let hi = (in_side + self.padding)
            .saturating_sub(offset)
            .min(out_side);
        (lo, hi.max(lo))
    }

    fn im2col(
        &self,
        x: &Tensor4<T>,
        start: usize,
        count: usize,
        oh: usize,
        ow: usize,
        cols: &mut [T],
    ) {
        let positions = oh * ow;
        let width = count * positions;
        let ks = self.kernel;
        let pad = self.padding;
        for j in 0..count {
            let img = &x.data[(start + j) * x.item_len()..(start + j + 1) * x.item_len()];
            for c in 0..self.in_channels {
                let plane = &img[c * x.h * x.w..(c + 1) * x.h * x.w];
                for ky in 0..ks {
                    let (ylo, yhi) = self.valid_range(ky, x.h, oh);
                    for kx in 0..ks {
                        let (xlo, xhi) = self.valid_range(kx, x.w, ow);
                        let row = (c * ks + ky) * ks + kx;
                        let dst = &mut cols
                            [row * width + j * positions..row * width + (j + 1) * positions];
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        for oy in ylo..yhi {
                            let iy = oy + ky - pad;
                            let src = &plane[iy * x.w..(iy + 1) * x.w];
                            let drow = &mut dst[oy * ow..(oy + 1) * ow];
                            for ox in xlo..xhi {
                                drow[ox] = src[ox + kx - pad];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(
        &self,
        dcols: &[T],
        dx: &mut Tensor4<T>,
        start: usize,
        count: usize,
        oh: usize,
        ow: usize,
    ) {
        let positions = oh * ow;
        let width = count * positions;
        let ks = self.kernel;
        let pad = self.padding;
        let (h, w) = (dx.h, dx.w);
        let item = dx.item_len();
        for j in 0..count {
            let img = &mut dx.data[(start + j) * item..(start + j + 1) * item];
            for c in 0..self.in_channels {
                let plane = &mut img[c * h * w..(c + 1) * h * w];
                for ky in 0..ks {
                    let (ylo, yhi) = self.valid_range(ky, h, oh);
                    for kx in 0..ks {
                        let (xlo, xhi) = self.valid_range(kx, w, ow);
                        let row = (c * ks + ky) * ks + kx;
                        let src =
                            &dcols[row * width + j * positions..row * width + (j + 1) * positions];
                        for oy in ylo..yhi {
                            let iy = oy + ky - pad;
                            let drow = &mut plane[iy * w..(iy + 1) * w];
                            let srow = &src[oy * ow..(oy + 1) * ow];
                            for ox in xlo..xhi {
                                drow[ox + kx - pad] += srow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}
