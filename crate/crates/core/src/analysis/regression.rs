use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::stimuli::ImageType;
use crate::training::TrialResult;
use crate::{Error, Result};

pub const INVARIANCE_THRESHOLD: f64 = 0.995;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    ImageType,
    Duration,
}

/// A predictor level dropped for near-ceiling accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedCell {
    pub variable: Variable,
    pub level: String,
    pub accuracy: f64,
    pub n_trials: usize,
}

/// Drops image-type and duration levels whose pooled accuracy reaches
/// `threshold`, repeating until no remaining level qualifies.
pub fn exclude_invariant_cells(
    trials: &[TrialResult],
    threshold: f64,
) -> Result<(Vec<TrialResult>, Vec<ExcludedCell>)> {
    let mut kept: Vec<TrialResult> = trials.to_vec();
    let mut excluded = Vec::new();
    loop {
        if kept.is_empty() {
            return Err(Error::EmptyData(
                "every cell was excluded as response-invariant".into(),
            ));
        }
        let mut by_type: BTreeMap<ImageType, (usize, usize)> = BTreeMap::new();
        let mut by_duration: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
        for t in &kept {
            let e = by_type.entry(t.image_type).or_default();
            e.0 += t.correct as usize;
            e.1 += 1;
            let e = by_duration.entry(t.duration).or_default();
            e.0 += t.correct as usize;
            e.1 += 1;
        }
        let mut drop_types = BTreeSet::new();
        let mut drop_durations = BTreeSet::new();
        for (&ty, &(c, n)) in &by_type {
            let acc = c as f64 / n as f64;
            if acc >= threshold {
                drop_types.insert(ty);
                excluded.push(ExcludedCell {
                    variable: Variable::ImageType,
                    level: ty.as_str().to_string(),
                    accuracy: acc,
                    n_trials: n,
                });
            }
        }
        for (&d, &(c, n)) in &by_duration {
            let acc = c as f64 / n as f64;
            if acc >= threshold {
                drop_durations.insert(d);
                excluded.push(ExcludedCell {
                    variable: Variable::Duration,
                    level: d.to_string(),
                    accuracy: acc,
                    n_trials: n,
                });
            }
        }
        if drop_types.is_empty() && drop_durations.is_empty() {
            return Ok((kept, excluded));
        }
        kept.retain(|t| {
            !drop_types.contains(&t.image_type) && !drop_durations.contains(&t.duration)
        });
    }
}

/// Reference-coded design for one model family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    /// `None`: the most organised image type present.
    pub image_type_reference: Option<ImageType>,
    /// `None`: the largest duration level present.
    pub duration_reference: Option<u32>,
    /// Adds dot ratio x each non-reference duration level.
    pub interaction: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for RegressionSpec {
    fn default() -> Self {
        RegressionSpec {
            image_type_reference: None,
            duration_reference: None,
            interaction: true,
            max_iterations: 100,
            tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z_value: f64,
    pub p_value: f64,
}

impl CoefficientRow {
    pub fn stars(&self) -> &'static str {
        significance_stars(self.p_value)
    }
}

/// Significance codes: `***` < 0.001 <= `**` < 0.01 <= `*` < 0.05 <= `.` < 0.1.
pub fn significance_stars(p: f64) -> &'static str {
    match p {
        p if p < 0.001 => "***",
        p if p < 0.01 => "**",
        p if p < 0.05 => "*",
        p if p < 0.1 => ".",
        _ => "",
    }
}

/// Formats to `digits` significant figures.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&magnitude) {
        return format!("{:.*e}", digits.saturating_sub(1), x);
    }
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// A named design matrix with its binary outcome.
#[derive(Clone, Debug)]
pub struct Design {
    pub terms: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Design {
    pub fn new(terms: Vec<String>, rows: Vec<Vec<f64>>, y: Vec<f64>) -> Self {
        let p = terms.len();
        let n = rows.len();
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Design {
            terms,
            x,
            y: DVector::from_vec(y),
        }
    }

    /// Reference coding of `trials` per `spec`.
    pub fn from_trials(trials: &[TrialResult], spec: &RegressionSpec) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::EmptyData("no trials to regress".into()));
        }
        let types: BTreeSet<ImageType> = trials.iter().map(|t| t.image_type).collect();
        let durations: BTreeSet<u32> = trials.iter().map(|t| t.duration).collect();
        let type_ref = spec
            .image_type_reference
            .unwrap_or_else(|| *types.iter().next().expect("non-empty"));
        let duration_ref = spec
            .duration_reference
            .unwrap_or_else(|| *durations.iter().next_back().expect("non-empty"));
        let other_types: Vec<ImageType> =
            types.iter().copied().filter(|&t| t != type_ref).collect();
        let other_durations: Vec<u32> = durations
            .iter()
            .copied()
            .filter(|&d| d != duration_ref)
            .collect();

        let mut terms = vec!["(Intercept)".to_string()];
        terms.extend(
            other_types
                .iter()
                .map(|t| format!("image_type[{}]", t.as_str())),
        );
        terms.extend(other_durations.iter().map(|d| format!("duration[{d}]")));
        terms.extend(["dot_ratio", "abs_diff", "total_dots"].map(String::from));
        if spec.interaction {
            terms.extend(
                other_durations
                    .iter()
                    .map(|d| format!("dot_ratio:duration[{d}]")),
            );
        }
        let rows = trials
            .iter()
            .map(|t| {
                let mut row = vec![1.0];
                row.extend(
                    other_types
                        .iter()
                        .map(|&ty| (t.image_type == ty) as u8 as f64),
                );
                row.extend(
                    other_durations
                        .iter()
                        .map(|&d| (t.duration == d) as u8 as f64),
                );
                row.extend([t.ratio(), t.abs_diff as f64, t.total_dots as f64]);
                if spec.interaction {
                    row.extend(other_durations.iter().map(|&d| {
                        if t.duration == d {
                            t.ratio()
                        } else {
                            0.0
                        }
                    }));
                }
                row
            })
            .collect();
        let y = trials.iter().map(|t| t.correct as u8 as f64).collect();
        Ok(Design::new(terms, rows, y))
    }

    /// First column that is (numerically) a combination of earlier ones.
    fn first_dependent_column(&self) -> Option<usize> {
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for j in 0..self.x.ncols() {
            let col = self.x.column(j).into_owned();
            let norm = col.norm();
            if norm == 0.0 {
                return Some(j);
            }
            let mut r = col.clone();
            // Two passes keep the projection stable.
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dot(&r);
                    r -= q * c;
                }
            }
            let rn = r.norm();
            if rn <= 1e-10 * norm {
                return Some(j);
            }
            basis.push(r / rn);
        }
        None
    }

    /// Terms whose indicator rows all share one outcome.
    fn separating_term(&self) -> Option<usize> {
        let y = &self.y;
        let constant = |rows: &mut dyn Iterator<Item = usize>| {
            let mut seen = [false; 2];
            let mut any = false;
            for i in rows {
                seen[(y[i] > 0.5) as usize] = true;
                any = true;
            }
            any && !(seen[0] && seen[1])
        };
        if constant(&mut (0..y.len())) {
            return Some(0);
        }
        for j in 1..self.x.ncols() {
            let col = self.x.column(j);
            let binary = col.iter().all(|&v| v == 0.0 || v == 1.0);
            if binary && constant(&mut (0..y.len()).filter(|&i| col[i] == 1.0)) {
                return Some(j);
            }
        }
        None
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Maximum-likelihood logit fit by iteratively reweighted least squares with
/// Wald standard errors.
pub fn fit_logistic(design: &Design, spec: &RegressionSpec) -> Result<Vec<CoefficientRow>> {
    let (n, p) = design.x.shape();
    if n == 0 {
        return Err(Error::EmptyData("no rows to regress".into()));
    }
    let (lo, hi) = design
        .y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if lo == hi {
        return Err(Error::Separation {
            term: design.terms[0].clone(),
        });
    }
    if let Some(j) = design.first_dependent_column() {
        return Err(Error::Rank {
            term: design.terms[j].clone(),
        });
    }
    if let Some(j) = design.separating_term() {
        return Err(Error::Separation {
            term: design.terms[j].clone(),
        });
    }
    let x = &design.x;
    let y = &design.y;
    let mut beta = DVector::<f64>::zeros(p);
    let mut converged = false;
    for _ in 0..spec.max_iterations {
        let eta = x * &beta;
        let mu = eta.map(sigmoid);
        let weights = mu.map(|m| m * (1.0 - m));
        let xw = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * weights[i]);
        let info = x.transpose() * xw;
        let score = x.transpose() * (y - &mu);
        let step = info
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("information matrix is not positive definite".into()))?
            .solve(&score);
        beta += &step;
        if !beta.iter().all(|b| b.is_finite()) {
            return Err(Error::Numerical("logistic fit diverged".into()));
        }
        if step.amax() < spec.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        let (j, b) = beta
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("p > 0");
        if b.abs() > 20.0 {
            return Err(Error::Separation {
                term: design.terms[j].clone(),
            });
        }
        log::warn!(
            "logistic fit stopped after {} iterations",
            spec.max_iterations
        );
    }
    // Information at the final estimate.
    let mu = (x * &beta).map(sigmoid);
    let xw = DMatrix::from_fn(n, p, |i, j| x[(i, j)] * mu[i] * (1.0 - mu[i]));
    let info = x.transpose() * xw;
    let cov = info
        .cholesky()
        .ok_or_else(|| Error::Numerical("information matrix is not invertible".into()))?
        .inverse();
    Ok((0..p)
        .map(|j| {
            let se = cov[(j, j)].sqrt();
            let z = beta[j] / se;
            CoefficientRow {
                term: design.terms[j].clone(),
                estimate: beta[j],
                std_error: se,
                z_value: z,
                p_value: libm::erfc(z.abs() / std::f64::consts::SQRT_2),
            }
        })
        .collect())
}

/// Builds the reference-coded design from `trials` and fits it.
pub fn logistic_regression(
    trials: &[TrialResult],
    spec: &RegressionSpec,
) -> Result<Vec<CoefficientRow>> {
    fit_logistic(&Design::from_trials(trials, spec)?, spec)
}
