use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Predicted discrimination accuracy for sets of `n1 >= n2` items under a
/// Gaussian number-line model with Weber fraction `w`.
pub fn ans_accuracy(n1: f64, n2: f64, w: f64) -> Result<f64> {
    if !(n1 >= n2 && n2 > 0.0) || !n1.is_finite() {
        return Err(Error::Domain(format!(
            "need n1 >= n2 > 0, got n1={n1}, n2={n2}"
        )));
    }
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::Domain(format!(
            "Weber fraction must be positive, got {w}"
        )));
    }
    Ok(ans_unchecked(n1, n2, w))
}

fn ans_unchecked(n1: f64, n2: f64, w: f64) -> f64 {
    let x = (n1 - n2) / (w * std::f64::consts::SQRT_2 * n1.hypot(n2));
    1.0 - 0.5 * libm::erfc(x)
}

/// Observed accuracy for one ratio, larger count first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeberPoint {
    pub n1: f64,
    pub n2: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeberFit {
    pub w: f64,
    /// `None` when the data have no variance and the fit is not exact.
    pub r_squared: Option<f64>,
    pub sse: f64,
    /// Input points sorted from most balanced to least balanced.
    pub points: Vec<WeberPoint>,
}

impl WeberFit {
    /// Fitted accuracy at `(n1, n2)`.
    pub fn predict(&self, n1: f64, n2: f64) -> f64 {
        ans_unchecked(n1, n2, self.w)
    }

    /// Fitted curve sampled at `samples` evenly spaced Weber ratios in `[lo, hi]`.
    pub fn curve(&self, lo: f64, hi: f64, samples: usize) -> Vec<(f64, f64)> {
        (0..samples)
            .map(|i| {
                let r = lo + (hi - lo) * i as f64 / (samples.max(2) - 1) as f64;
                (r, ans_unchecked(r, 1.0, self.w))
            })
            .collect()
    }
}

pub const W_MIN: f64 = 1e-6;
pub const W_MAX: f64 = 10.0;

/// Least-squares fit of `w` on `[W_MIN, W_MAX]`: log-spaced scan to bracket
/// the minimum, then Brent refinement.
pub fn fit_weber(points: &[WeberPoint]) -> Result<WeberFit> {
    if points.len() < 2 {
        return Err(Error::Fit(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    for p in points {
        if !(0.0..=1.0).contains(&p.accuracy) {
            return Err(Error::Fit(format!(
                "accuracy {} outside [0, 1]",
                p.accuracy
            )));
        }
        if !(p.n1 >= p.n2 && p.n2 > 0.0 && p.n1.is_finite()) {
            return Err(Error::Domain(format!(
                "need n1 >= n2 > 0, got {} and {}",
                p.n1, p.n2
            )));
        }
    }
    let sse = |w: f64| -> f64 {
        points
            .iter()
            .map(|p| (ans_unchecked(p.n1, p.n2, w) - p.accuracy).powi(2))
            .sum()
    };
    let objective = |u: f64| sse(u.exp());

    const GRID: usize = 401;
    let (lo, hi) = (W_MIN.ln(), W_MAX.ln());
    let grid: Vec<f64> = (0..GRID)
        .map(|i| lo + (hi - lo) * i as f64 / (GRID - 1) as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&u| objective(u)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit(
            "objective is not finite on the search grid".into(),
        ));
    }
    let best = (0..GRID)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty grid");
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(GRID - 1)];
    let (u, f) = brent_minimize(objective, a, b, 1e-14, 200)
        .ok_or_else(|| Error::Fit("Brent refinement did not converge".into()))?;
    let (u, f) = if values[best] < f {
        (grid[best], values[best])
    } else {
        (u, f)
    };
    let w = u.exp().clamp(W_MIN, W_MAX);

    let mean = points.iter().map(|p| p.accuracy).sum::<f64>() / points.len() as f64;
    let sst: f64 = points.iter().map(|p| (p.accuracy - mean).powi(2)).sum();
    let r_squared = if sst > 0.0 {
        Some(1.0 - f / sst)
    } else if f == 0.0 {
        Some(1.0)
    } else {
        None
    };
    let mut sorted = points.to_vec();
    sorted.sort_by(|p, q| (p.n1 / p.n2).total_cmp(&(q.n1 / q.n2)));
    Ok(WeberFit {
        w,
        r_squared,
        sse: f,
        points: sorted,
    })
}

/// Brent's derivative-free minimiser on `[a, b]`. Returns `(x, f(x))`.
fn brent_minimize(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_iter: usize,
) -> Option<(f64, f64)> {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-15;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return Some((x, fx));
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    None
}
