use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_accuracy, weber_fit_for, GroupBy};
use super::plots::{render_svg, Figure, Mark, Series};
use super::regression::{
    exclude_invariant_cells, format_significant, logistic_regression, CoefficientRow, ExcludedCell,
    RegressionSpec, INVARIANCE_THRESHOLD,
};
use crate::models::Family;
use crate::stimuli::{ImageType, RatioPair};
use crate::training::{LearningCurve, TrialResult};
use crate::util::write_atomic;
use crate::{Error, Result};

/// Test-split trials of one trained model.
#[derive(Clone, Debug)]
pub struct ModelTrials {
    pub model_id: String,
    pub family: Family,
    pub duration: u32,
    pub trials: Vec<TrialResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub invariance_threshold: f64,
    pub regression: RegressionSpec,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            invariance_threshold: INVARIANCE_THRESHOLD,
            regression: RegressionSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeberRow {
    pub model_id: String,
    /// An image type, or `all` for the pooled fit.
    pub image_type: String,
    pub w: f64,
    pub r2: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FamilyRegression {
    pub excluded: Vec<ExcludedCell>,
    pub coefficients: Vec<CoefficientRow>,
    /// Set when the model could not be estimated.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub weber: Vec<WeberRow>,
    pub regressions: BTreeMap<Family, FamilyRegression>,
    /// Written files, relative to the output directory.
    pub files: Vec<String>,
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn write_csv(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: Vec<Vec<String>>,
    files: &mut Vec<String>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    write_atomic(&dir.join(name), &bytes)?;
    files.push(name.to_string());
    Ok(())
}

fn sorted(models: &[ModelTrials]) -> Vec<&ModelTrials> {
    let mut v: Vec<&ModelTrials> = models.iter().collect();
    v.sort_by(|a, b| (a.family, a.duration, &a.model_id).cmp(&(b.family, b.duration, &b.model_id)));
    v
}

/// Writes the accuracy, Weber and regression tables into `out_dir`.
pub fn analyze_trials(
    models: &[ModelTrials],
    opts: &AnalysisOptions,
    out_dir: &Path,
) -> Result<AnalysisSummary> {
    if models.is_empty() || models.iter().all(|m| m.trials.is_empty()) {
        return Err(Error::EmptyData("no trials to analyse".into()));
    }
    let models = sorted(models);
    let mut summary = AnalysisSummary::default();
    let mut by_ratio = Vec::new();
    let mut by_type = Vec::new();
    for m in &models {
        for p in aggregate_accuracy(&m.trials, &[GroupBy::Ratio])? {
            let r = p.ratio.expect("grouped by ratio");
            by_ratio.push(vec![
                m.model_id.clone(),
                "all".into(),
                r.small().to_string(),
                r.large().to_string(),
                p.n_trials.to_string(),
                num(p.mean_accuracy),
            ]);
        }
        for p in aggregate_accuracy(&m.trials, &[GroupBy::ImageType, GroupBy::Ratio])? {
            let r = p.ratio.expect("grouped by ratio");
            by_ratio.push(vec![
                m.model_id.clone(),
                p.image_type.expect("grouped by type").as_str().into(),
                r.small().to_string(),
                r.large().to_string(),
                p.n_trials.to_string(),
                num(p.mean_accuracy),
            ]);
        }
        for p in aggregate_accuracy(&m.trials, &[GroupBy::ImageType])? {
            by_type.push(vec![
                m.model_id.clone(),
                p.image_type.expect("grouped by type").as_str().into(),
                p.n_trials.to_string(),
                num(p.mean_accuracy),
            ]);
        }
        let types: Vec<Option<ImageType>> = ImageType::ALL
            .into_iter()
            .filter(|ty| m.trials.iter().any(|t| t.image_type == *ty))
            .map(Some)
            .chain([None])
            .collect();
        for ty in types {
            let fit = weber_fit_for(&m.trials, &m.model_id, ty)?;
            summary.weber.push(WeberRow {
                model_id: m.model_id.clone(),
                image_type: ty.map_or("all", |t| t.as_str()).into(),
                w: fit.w,
                r2: fit.r_squared,
            });
        }
    }
    let files = &mut summary.files;
    write_csv(
        out_dir,
        "accuracy_by_ratio.csv",
        &[
            "model_id",
            "image_type",
            "ratio_small",
            "ratio_large",
            "n_trials",
            "accuracy",
        ],
        by_ratio,
        files,
    )?;
    write_csv(
        out_dir,
        "accuracy_by_type.csv",
        &["model_id", "image_type", "n_trials", "accuracy"],
        by_type,
        files,
    )?;
    let weber_rows = summary
        .weber
        .iter()
        .map(|r| {
            vec![
                r.model_id.clone(),
                r.image_type.clone(),
                num(r.w),
                r.r2.map(num).unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        out_dir,
        "weber_fits.csv",
        &["model_id", "image_type", "w", "r2"],
        weber_rows,
        files,
    )?;

    for family in Family::ALL {
        let pooled: Vec<TrialResult> = models
            .iter()
            .filter(|m| m.family == family)
            .flat_map(|m| m.trials.iter().cloned())
            .collect();
        if pooled.is_empty() {
            continue;
        }
        let mut outcome = FamilyRegression::default();
        let fitted = exclude_invariant_cells(&pooled, opts.invariance_threshold).and_then(
            |(kept, excluded)| {
                outcome.excluded = excluded;
                logistic_regression(&kept, &opts.regression)
            },
        );
        match fitted {
            Ok(rows) => outcome.coefficients = rows,
            Err(
                e @ (Error::Separation { .. }
                | Error::Rank { .. }
                | Error::EmptyData(_)
                | Error::Numerical(_)),
            ) => {
                log::warn!("{family} regression not estimable: {e}");
                outcome.failure = Some(e.to_string());
            }
            Err(e) => return Err(e),
        }
        let rows = outcome
            .coefficients
            .iter()
            .map(|c| {
                vec![
                    c.term.clone(),
                    num(c.estimate),
                    num(c.std_error),
                    num(c.z_value),
                    format_significant(c.p_value, 3),
                    c.stars().into(),
                ]
            })
            .collect();
        write_csv(
            out_dir,
            &format!("regression_{family}.csv"),
            &[
                "term",
                "estimate",
                "std_error",
                "z_value",
                "p_value",
                "signif",
            ],
            rows,
            &mut summary.files,
        )?;
        let rows = outcome
            .excluded
            .iter()
            .map(|e| {
                vec![
                    serde_json::to_value(e.variable)
                        .ok()
                        .and_then(|v| v.as_str().map(String::from))
                        .unwrap_or_default(),
                    e.level.clone(),
                    e.n_trials.to_string(),
                    num(e.accuracy),
                ]
            })
            .collect();
        write_csv(
            out_dir,
            &format!("excluded_{family}.csv"),
            &["variable", "level", "n_trials", "accuracy"],
            rows,
            &mut summary.files,
        )?;
        summary.regressions.insert(family, outcome);
    }
    Ok(summary)
}

fn ratio_ticks() -> Vec<String> {
    RatioPair::ALL.iter().map(|r| r.to_string()).collect()
}

/// Writes the figure set as SVG files and returns their names.
pub fn plot_figures(
    models: &[ModelTrials],
    curves: &[(String, Family, LearningCurve)],
    out_dir: &Path,
) -> Result<Vec<String>> {
    let models = sorted(models);
    let mut files = Vec::new();
    let mut emit = |fig: Figure, name: String| -> Result<()> {
        render_svg(&fig, &out_dir.join(&name))?;
        files.push(name);
        Ok(())
    };
    for family in Family::ALL {
        let fam: Vec<&&ModelTrials> = models.iter().filter(|m| m.family == family).collect();
        if fam.is_empty() {
            continue;
        }
        let mut by_ratio = Vec::new();
        let mut by_type = Vec::new();
        for (i, m) in fam.iter().enumerate() {
            let pts = aggregate_accuracy(&m.trials, &[GroupBy::Ratio])?
                .into_iter()
                .map(|p| (p.ratio.expect("grouped").index() as f64, p.mean_accuracy))
                .collect();
            by_ratio.push(Series {
                name: m.model_id.clone(),
                points: pts,
                mark: Mark::Line,
                colour: i,
            });
            let pts = aggregate_accuracy(&m.trials, &[GroupBy::ImageType])?
                .into_iter()
                .map(|p| {
                    (
                        p.image_type.expect("grouped").index() as f64,
                        p.mean_accuracy,
                    )
                })
                .collect();
            by_type.push(Series {
                name: m.model_id.clone(),
                points: pts,
                mark: Mark::Line,
                colour: i,
            });
        }
        emit(
            Figure {
                title: format!("{} accuracy by ratio", family.as_str().to_uppercase()),
                x_label: "ratio (least to most balanced)".into(),
                y_label: "accuracy".into(),
                x_range: (-0.2, 8.2),
                y_range: (0.4, 1.02),
                x_ticks: Some(ratio_ticks()),
                series: by_ratio,
            },
            format!("accuracy_by_ratio_{family}.svg"),
        )?;
        emit(
            Figure {
                title: format!("{} accuracy by image type", family.as_str().to_uppercase()),
                x_label: "image type".into(),
                y_label: "accuracy".into(),
                x_range: (-0.2, 3.2),
                y_range: (0.4, 1.02),
                x_ticks: Some(
                    ImageType::ALL
                        .iter()
                        .map(|t| t.as_str().to_string())
                        .collect(),
                ),
                series: by_type,
            },
            format!("accuracy_by_type_{family}.svg"),
        )?;

        let fam_curves: Vec<&(String, Family, LearningCurve)> = curves
            .iter()
            .filter(|c| c.1 == family && !c.2.points.is_empty())
            .collect();
        if !fam_curves.is_empty() {
            let mut series = Vec::new();
            let mut max_epoch = 1.0f64;
            let mut max_loss = 0.0f64;
            for (i, (id, _, curve)) in fam_curves.iter().enumerate() {
                let val: Vec<(f64, f64)> = curve
                    .points
                    .iter()
                    .map(|p| (p.epoch as f64, p.val_loss))
                    .collect();
                let train: Vec<(f64, f64)> = curve
                    .points
                    .iter()
                    .map(|p| (p.epoch as f64, p.train_loss))
                    .collect();
                for &(e, l) in val.iter().chain(&train) {
                    max_epoch = max_epoch.max(e);
                    if l.is_finite() {
                        max_loss = max_loss.max(l);
                    }
                }
                series.push(Series {
                    name: format!("{id} val"),
                    points: val,
                    mark: Mark::Line,
                    colour: i,
                });
                series.push(Series {
                    name: format!("{id} train"),
                    points: train,
                    mark: Mark::Dashed,
                    colour: i,
                });
            }
            emit(
                Figure {
                    title: format!("{} learning curves", family.as_str().to_uppercase()),
                    x_label: "epoch".into(),
                    y_label: "loss".into(),
                    x_range: (0.0, max_epoch + 1.0),
                    y_range: (0.0, max_loss * 1.1 + 1e-3),
                    x_ticks: None,
                    series,
                },
                format!("learning_curves_{family}.svg"),
            )?;
        }
    }
    for m in &models {
        let mut series = Vec::new();
        for ty in ImageType::ALL {
            if !m.trials.iter().any(|t| t.image_type == ty) {
                continue;
            }
            let fit = weber_fit_for(&m.trials, &m.model_id, Some(ty))?;
            let colour = ty.index();
            series.push(Series {
                name: ty.as_str().into(),
                points: fit
                    .points
                    .iter()
                    .map(|p| (p.n1 / p.n2, p.accuracy))
                    .collect(),
                mark: Mark::Points,
                colour,
            });
            series.push(Series {
                name: format!("w = {:.3}", fit.w),
                points: fit.curve(10.0 / 9.0, 2.0, 60),
                mark: Mark::Line,
                colour,
            });
        }
        emit(
            Figure {
                title: format!("{} Weber fits", m.model_id),
                x_label: "ratio (larger / smaller)".into(),
                y_label: "accuracy".into(),
                x_range: (1.05, 2.05),
                y_range: (0.4, 1.02),
                x_ticks: None,
                series,
            },
            format!("weber_{}.svg", m.model_id),
        )?;
    }
    Ok(files)
}
