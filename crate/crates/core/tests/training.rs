mod common;

use std::path::Path;

use mostdots_core::models::*;
use mostdots_core::nn::Parameterized;
use mostdots_core::stimuli::*;
use mostdots_core::training::*;

fn toy_data(dir: &Path, seed: u64) -> (LoadedSplit, LoadedSplit, LoadedSplit) {
    let counts = SplitCounts {
        train: 72,
        val: 72,
        test: 72,
    };
    let manifest = generate_dataset(&DatasetConfig::new(counts, seed), dir).unwrap();
    (
        load_split(dir, &manifest, Split::Train).unwrap(),
        load_split(dir, &manifest, Split::Val).unwrap(),
        load_split(dir, &manifest, Split::Test).unwrap(),
    )
}

fn tiny_vgg() -> CnnConfig {
    build_vgg_config(7).unwrap().with_width_divisor(16)
}

fn tiny_ram() -> RamConfig {
    RamConfig {
        conv_filters: vec![8, 8, 16],
        glimpse_dim: 32,
        hidden_dim: 32,
        ..RamConfig::standard(4).unwrap()
    }
}

/// Counts bright and mid-gray pixels; flat discs of equal size make this exact.
fn pixel_counter(images: &[&[u8]]) -> Vec<bool> {
    let levels = GrayLevels::default();
    images
        .iter()
        .map(|img| {
            let blue = img.iter().filter(|&&p| p == levels.blue).count();
            let yellow = img.iter().filter(|&&p| p == levels.yellow).count();
            blue > yellow
        })
        .collect()
}

#[test]
fn stub_predictors_score_as_expected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _, test) = toy_data(dir.path(), 1);
    let accuracy = |trials: &[TrialResult]| {
        trials.iter().filter(|t| t.correct).count() as f64 / trials.len() as f64
    };

    let perfect = evaluate(&mut pixel_counter, "perfect", 0, &test, 16).unwrap();
    assert_eq!(perfect.len(), test.len());
    assert_eq!(accuracy(&perfect), 1.0);
    for (t, r) in perfect.iter().zip(&test.records) {
        assert_eq!(t.image_path, r.image_path);
    }

    let mut invert = |imgs: &[&[u8]]| {
        pixel_counter(imgs)
            .into_iter()
            .map(|b| !b)
            .collect::<Vec<_>>()
    };
    assert_eq!(
        accuracy(&evaluate(&mut invert, "inv", 0, &test, 16).unwrap()),
        0.0
    );

    let mut yes = |imgs: &[&[u8]]| vec![true; imgs.len()];
    assert_eq!(
        accuracy(&evaluate(&mut yes, "yes", 0, &test, 7).unwrap()),
        0.5
    );
}

#[test]
fn trial_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (_, _, test) = toy_data(dir.path(), 2);
    let trials = evaluate(&mut pixel_counter, "m", 7, &test, 10).unwrap();
    let path = dir.path().join("t.csv");
    write_trials(&path, &trials).unwrap();
    let header = std::fs::read_to_string(&path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(
        header,
        "model_id,duration,image_path,image_type,ratio_small,ratio_large,total_dots,abs_diff,truth,predicted,correct"
    );
    assert_eq!(read_trials(&path).unwrap(), trials);
}

#[test]
fn toy_cnn_training_loss_falls_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (train, val, _) = toy_data(dir.path(), 3);
    let tc = TrainConfig {
        max_epochs: 3,
        batch_size: 16,
        seed: 4,
        ..TrainConfig::standard(Family::Cnn)
    };
    assert_eq!(tc.learning_rate, 1e-4);
    // Scoring the training split as the held-out split gives the dropout-free train loss.
    let out = train_cnn(&tiny_vgg(), &train, &train, &tc).unwrap();
    let losses: Vec<f64> = out.curve.points.iter().map(|p| p.val_loss).collect();
    assert_eq!(losses.len(), 3);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");

    let out = train_cnn(&tiny_vgg(), &train, &val, &tc).unwrap();
    let again = train_cnn(&tiny_vgg(), &train, &val, &tc).unwrap();
    assert_eq!(again.curve, out.curve);
    for (a, b) in out.model.params().iter().zip(again.model.params()) {
        assert_eq!(a.value, b.value);
    }
}

#[test]
fn early_stopping_halts_patience_epochs_after_the_best() {
    let dir = tempfile::tempdir().unwrap();
    let (train, val, _) = toy_data(dir.path(), 5);
    let tc = TrainConfig {
        learning_rate: 3e-3,
        max_epochs: 40,
        patience: 3,
        batch_size: 16,
        seed: 6,
        ..TrainConfig::standard(Family::Cnn)
    };
    let out = train_cnn(&tiny_vgg(), &train, &val, &tc).unwrap();
    assert!(out.stopped_epoch < tc.max_epochs, "never stopped early");
    assert_eq!(out.stopped_epoch, out.best_epoch + tc.patience);
    let best = out
        .curve
        .points
        .iter()
        .map(|p| p.val_loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best, out.best_val_loss);
    assert_eq!(out.curve.points.last().unwrap().epoch, out.stopped_epoch);
}

#[test]
fn toy_ram_loss_falls_over_the_first_five_evaluations() {
    let dir = tempfile::tempdir().unwrap();
    let (train, val, _) = toy_data(dir.path(), 7);
    let tc = TrainConfig {
        learning_rate: 1e-2,
        max_epochs: 10,
        batch_size: 64,
        rollouts_per_image: 8,
        seed: 8,
        ..TrainConfig::standard(Family::Ram)
    };
    let out = train_ram(&tiny_ram(), &train, &val, &tc).unwrap();
    let epochs: Vec<usize> = out.curve.points.iter().map(|p| p.epoch).collect();
    assert_eq!(epochs, [2, 4, 6, 8, 10]);
    let losses: Vec<f64> = out.curve.points.iter().map(|p| p.train_loss).collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn checkpointed_ram_evaluates_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (train, val, test) = toy_data(dir.path(), 9);
    let tc = TrainConfig {
        max_epochs: 2,
        batch_size: 24,
        ..TrainConfig::standard(Family::Ram)
    };
    let out = train_ram(&tiny_ram(), &train, &val, &tc).unwrap();
    let path = dir.path().join("ram.ckpt");
    save_checkpoint(
        &path,
        &out.model,
        &serde_json::json!({"epoch": out.best_epoch}),
    )
    .unwrap();
    let loaded = load_checkpoint(&path).unwrap().model;
    let a = evaluate(
        &mut ModelPredictor::new(&out.model, DEFAULT_EVAL_SEED),
        "r",
        4,
        &test,
        32,
    )
    .unwrap();
    let b = evaluate(
        &mut ModelPredictor::new(&loaded, DEFAULT_EVAL_SEED),
        "r",
        4,
        &test,
        32,
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn score_function_gradient_matches_exact_expectation() {
    let mut toy = common::reinforce::Toy::new(21);
    let mu = toy.choose_mean();
    toy.set_mean(mu);
    let fd = toy.finite_difference();
    let mc = toy.monte_carlo(10_000, 22);
    let norm = |v: [f64; 2]| v[0].hypot(v[1]);
    let err = norm([mc[0] - fd[0], mc[1] - fd[1]]) / norm(fd);
    assert!(norm(fd) > 1.0, "toy has no gradient to check: {fd:?}");
    assert!(err < 0.1, "monte carlo {mc:?} vs finite difference {fd:?}");
}
