use super::{Float, Tensor4};

/// 2x2 stride-2 max pooling. Returns the pooled tensor and, per output
/// element, the flat index of the winning input element.
pub fn max_pool2<T: Float>(x: &Tensor4<T>) -> (Tensor4<T>, Vec<u32>) {
    let (oh, ow) = (x.h / 2, x.w / 2);
    let mut y = Tensor4::zeros(x.n, x.c, oh, ow);
    let mut arg = vec![0u32; y.data.len()];
    for plane in 0..x.n * x.c {
        let base = plane * x.h * x.w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * x.w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * x.w + 2 * ox + dx;
                    if x.data[idx] > x.data[best] {
                        best = idx;
                    }
                }
                let o = (plane * oh + oy) * ow + ox;
                y.data[o] = x.data[best];
                arg[o] = best as u32;
            }
        }
    }
    (y, arg)
}

pub fn max_pool2_backward<T: Float>(
    dy: &Tensor4<T>,
    arg: &[u32],
    input_shape: (usize, usize, usize, usize),
) -> Tensor4<T> {
    let (n, c, h, w) = input_shape;
    let mut dx = Tensor4::zeros(n, c, h, w);
    for (&g, &i) in dy.data.iter().zip(arg) {
        dx.data[i as usize] += g;
    }
    dx
}

/// Non-overlapping average pooling with a square window of `factor`.
pub fn avg_pool<T: Float>(x: &Tensor4<T>, factor: usize) -> Tensor4<T> {
    if factor == 1 {
        return x.clone();
    }
    let (oh, ow) = (x.h / factor, x.w / factor);
    let mut y = Tensor4::zeros(x.n, x.c, oh, ow);
    let scale = T::one() / T::from_usize(factor * factor).unwrap();
    for plane in 0..x.n * x.c {
        let src = &x.data[plane * x.h * x.w..];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = T::zero();
                for dy in 0..factor {
                    let row = &src[(oy * factor + dy) * x.w + ox * factor..];
                    acc += row[..factor].iter().copied().sum::<T>();
                }
                y.data[(plane * oh + oy) * ow + ox] = acc * scale;
            }
        }
    }
    y
}

pub fn avg_pool_backward<T: Float>(dy: &Tensor4<T>, factor: usize) -> Tensor4<T> {
    if factor == 1 {
        return dy.clone();
    }
    let (h, w) = (dy.h * factor, dy.w * factor);
    let mut dx = Tensor4::zeros(dy.n, dy.c, h, w);
    let scale = T::one() / T::from_usize(factor * factor).unwrap();
    for plane in 0..dy.n * dy.c {
        for y in 0..h {
            for x in 0..w {
                dx.data[(plane * h + y) * w + x] =
                    dy.data[(plane * dy.h + y / factor) * dy.w + x / factor] * scale;
            }
        }
    }
    dx
}
