use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    batches, CurvePoint, EarlyStopping, LearningCurve, LoadedSplit, TrainConfig, TrainOutcome,
};
use crate::models::{
    label_of, Model, Ram, RamConfig, Rollout, RolloutGrads, FALSE_LABEL, TRUE_LABEL,
};
use crate::nn::{softmax_cross_entropy, Adam, AdamConfig, Float, Parameterized};
use crate::{Error, Result};

/// Batch-mean components of the hybrid objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RamLoss {
    pub total: f64,
    pub cross_entropy: f64,
    pub reinforce: f64,
    pub baseline: f64,
}

/// Hybrid loss for a sampled rollout and its gradients w.r.t. the final
/// logits, the location means and the baselines.
///
/// Reward is 1 when the final decision is correct. Every policy sample that
/// chose a later glimpse contributes `-log N(l | mu, std) * (R - b_t)`, with
/// the density taken up to its normalising constant; the baseline is treated
/// as a constant there and fitted by squared error.
/// With `std == 0` the policy is deterministic and the reinforce term is zero.
pub fn ram_loss<T: Float>(
    rollout: &Rollout<T>,
    labels: &[usize],
    location_std: f64,
    use_baseline: bool,
) -> (RamLoss, RolloutGrads<T>) {
    let batch = rollout.batch;
    assert_eq!(labels.len(), batch);
    let n = batch as f64;
    let (cross_entropy, d_final_logits) = softmax_cross_entropy(rollout.final_logits(), labels, 2);
    let rewards: Vec<f64> = rollout
        .predictions()
        .iter()
        .zip(labels)
        .map(|(&p, &l)| if label_of(p) == l { 1.0 } else { 0.0 })
        .collect();
    let steps = rollout.steps.len();
    let var = location_std * location_std;
    let mut reinforce = 0.0;
    let mut baseline = 0.0;
    let mut d_means = vec![vec![[0.0; 2]; batch]; steps];
    let mut d_baselines = vec![vec![0.0; batch]; steps];
    for (t, step) in rollout.steps.iter().enumerate() {
        for b in 0..batch {
            let r = rewards[b];
            let bt = if use_baseline { step.baselines[b] } else { 0.0 };
            if use_baseline {
                baseline += (bt - r).powi(2) / n;
                d_baselines[t][b] = 2.0 * (bt - r) / n;
            }
            // The final sample never selects a glimpse.
            if t + 1 == steps || var == 0.0 {
                continue;
            }
            let advantage = r - bt;
            let (mu, s) = (step.means[b], step.samples[b]);
            let mut log_density = 0.0;
            for k in 0..2 {
                let z = s[k] - mu[k];
                log_density += -z * z / (2.0 * var);
                d_means[t][b][k] = -advantage * z / var / n;
            }
            reinforce += -log_density * advantage / n;
        }
    }
    let loss = RamLoss {
        total: cross_entropy + reinforce + baseline,
        cross_entropy,
        reinforce,
        baseline,
    };
    let grads = RolloutGrads {
        d_final_logits,
        d_means: Some(d_means),
        d_baselines: use_baseline.then_some(d_baselines),
    };
    (loss, grads)
}

/// Cross-entropy and accuracy over a split with a freshly seeded rollout rng.
pub(crate) fn ram_validation(
    model: &Ram<f32>,
    data: &LoadedSplit,
    batch_size: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = (0..data.len()).collect();
    let (mut loss, mut correct) = (0.0, 0usize);
    for idx in batches(&order, batch_size) {
        let rollout = model.rollout(&data.image_refs(idx), false, &mut rng);
        let labels = data.labels(idx);
        loss += softmax_cross_entropy(rollout.final_logits(), &labels, 2).0 * idx.len() as f64;
        correct += rollout
            .predictions()
            .iter()
            .zip(&labels)
            .filter(|(&p, &l)| (if p { TRUE_LABEL } else { FALSE_LABEL }) == l)
            .count();
    }
    (loss / data.len() as f64, correct as f64 / data.len() as f64)
}

/// Trains with the hybrid loss; the curve records the hybrid training loss
/// and the cross-entropy validation loss used for early stopping.
pub fn train_ram(
    config: &RamConfig,
    train: &LoadedSplit,
    val: &LoadedSplit,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    tc.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data(
            "training needs non-empty train and val splits".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut model = Ram::<f32>::new(config.clone(), &mut rng)?;
    let mut adam = Adam::new(AdamConfig::with_learning_rate(tc.learning_rate));
    let mut stopper = EarlyStopping::new(tc.patience);
    let mut curve = LearningCurve::default();
    let mut best = model.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopped_epoch = 0;
    let mut since_eval = (0.0, 0usize);

    for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut rng);
        for idx in batches(&order, tc.batch_size) {
            let repeated: Vec<usize> = idx
                .iter()
                .flat_map(|&i| std::iter::repeat(i).take(tc.rollouts_per_image))
                .collect();
            let rollout = model.rollout(&train.image_refs(&repeated), true, &mut rng);
            let (loss, grads) = ram_loss(
                &rollout,
                &train.labels(&repeated),
                config.location_std,
                tc.use_baseline,
            );
            if !loss.total.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            since_eval.0 += loss.total * idx.len() as f64;
            since_eval.1 += idx.len();
            model.zero_grad();
            model.backward(&rollout, &grads);
            adam.step(model.params_mut());
        }
        stopped_epoch = epoch;
        if epoch % tc.eval_every != 0 && epoch != tc.max_epochs {
            continue;
        }
        let (val_loss, val_acc) = ram_validation(&model, val, tc.batch_size, tc.eval_seed);
        let train_loss = since_eval.0 / since_eval.1 as f64;
        since_eval = (0.0, 0);
        log::info!(
            "ram{} epoch {epoch}: train {train_loss:.4} val {val_loss:.4} acc {val_acc:.3}",
            config.n_glimpses
        );
        curve.push(CurvePoint {
            epoch,
            train_loss,
            val_loss,
            val_acc,
        });
        if stopper.observe(epoch, val_loss) {
            best = model.clone();
        }
        if stopper.should_stop(epoch) {
            break;
        }
    }
    Ok(TrainOutcome {
        model: Model::Ram(best),
        curve,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best_loss,
        stopped_epoch,
    })
}
