use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    batches, CurvePoint, EarlyStopping, LearningCurve, LoadedSplit, TrainConfig, TrainOutcome,
};
use crate::models::{images_to_tensor, CnnConfig, Model, Vgg};
use crate::nn::{argmax_rows, softmax_cross_entropy, Adam, AdamConfig, Parameterized};
use crate::{Error, Result};

/// Mean cross-entropy and accuracy in evaluation mode.
pub(crate) fn cnn_validation(
    model: &Vgg<f32>,
    data: &LoadedSplit,
    batch_size: usize,
) -> Result<(f64, f64)> {
    let order: Vec<usize> = (0..data.len()).collect();
    let (mut loss, mut correct) = (0.0, 0usize);
    for idx in batches(&order, batch_size) {
        let logits = model.logits_for_images(&data.image_refs(idx))?;
        let labels = data.labels(idx);
        loss += softmax_cross_entropy(&logits, &labels, 2).0 * idx.len() as f64;
        correct += argmax_rows(&logits, 2)
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

pub fn train_cnn(
    config: &CnnConfig,
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
    let mut model = Vgg::<f32>::new(config.clone(), &mut rng)?;
    let mut adam = Adam::new(AdamConfig::with_learning_rate(tc.learning_rate));
    let mut stopper = EarlyStopping::new(tc.patience);
    let mut curve = LearningCurve::default();
    let mut best = model.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopped_epoch = 0;

    for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for idx in batches(&order, tc.batch_size) {
            let x = images_to_tensor::<f32>(&train.image_refs(idx), config.input_side)?;
            let (logits, tape) = model.forward_train(&x, Some(&mut rng))?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &train.labels(idx), 2);
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            epoch_loss += loss * idx.len() as f64;
            model.zero_grad();
            model.backward(&tape, &dlogits);
            adam.step(model.params_mut());
        }
        stopped_epoch = epoch;
        if epoch % tc.eval_every != 0 && epoch != tc.max_epochs {
            continue;
        }
        let (val_loss, val_acc) = cnn_validation(&model, val, tc.batch_size)?;
        let train_loss = epoch_loss / train.len() as f64;
        log::info!(
            "vgg{} epoch {epoch}: train {train_loss:.4} val {val_loss:.4} acc {val_acc:.3}",
            config.duration_level
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
        model: Model::Cnn(best),
        curve,
        best_epoch: stopper.best_epoch,
        best_val_loss: stopper.best_loss,
        stopped_epoch,
    })
}
