use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ans::{fit_weber, WeberFit, WeberPoint};
use crate::stimuli::{ImageType, RatioPair};
use crate::training::TrialResult;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupBy {
    Model,
    Duration,
    ImageType,
    Ratio,
}

/// Accuracy over one group; `None` fields were pooled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub model_id: Option<String>,
    pub duration: Option<u32>,
    pub image_type: Option<ImageType>,
    pub ratio: Option<RatioPair>,
    pub n_correct: usize,
    pub n_trials: usize,
    pub mean_accuracy: f64,
}

type Key = (
    Option<String>,
    Option<u32>,
    Option<ImageType>,
    Option<(u32, u32)>,
);

/// Exact per-group means, ordered by (model, duration, type, ratio).
pub fn aggregate_accuracy(
    trials: &[TrialResult],
    group_by: &[GroupBy],
) -> Result<Vec<AccuracyPoint>> {
    if trials.is_empty() {
        return Err(Error::EmptyData("no trials to aggregate".into()));
    }
    let has = |g| group_by.contains(&g);
    let mut groups: BTreeMap<Key, (usize, usize)> = BTreeMap::new();
    for t in trials {
        let key = (
            has(GroupBy::Model).then(|| t.model_id.clone()),
            has(GroupBy::Duration).then_some(t.duration),
            has(GroupBy::ImageType).then_some(t.image_type),
            has(GroupBy::Ratio).then_some((t.ratio_small, t.ratio_large)),
        );
        let e = groups.entry(key).or_default();
        e.0 += t.correct as usize;
        e.1 += 1;
    }
    groups
        .into_iter()
        .map(|((model_id, duration, image_type, ratio), (c, n))| {
            Ok(AccuracyPoint {
                model_id,
                duration,
                image_type,
                ratio: ratio.map(|(s, l)| RatioPair::new(s, l)).transpose()?,
                n_correct: c,
                n_trials: n,
                mean_accuracy: c as f64 / n as f64,
            })
        })
        .collect()
}

/// Weber fit of one model on one image type (or pooled when `None`), with
/// each ratio entered as its canonical pair.
pub fn weber_fit_for(
    trials: &[TrialResult],
    model_id: &str,
    image_type: Option<ImageType>,
) -> Result<WeberFit> {
    let subset: Vec<TrialResult> = trials
        .iter()
        .filter(|t| t.model_id == model_id && image_type.map_or(true, |ty| t.image_type == ty))
        .cloned()
        .collect();
    if subset.is_empty() {
        return Err(Error::EmptyData(format!("no trials for {model_id}")));
    }
    let points: Vec<WeberPoint> = aggregate_accuracy(&subset, &[GroupBy::Ratio])?
        .into_iter()
        .map(|p| {
            let r = p.ratio.expect("grouped by ratio");
            WeberPoint {
                n1: r.large() as f64,
                n2: r.small() as f64,
                accuracy: p.mean_accuracy,
            }
        })
        .collect();
    fit_weber(&points)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}
