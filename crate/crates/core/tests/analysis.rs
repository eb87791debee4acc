mod common;

use common::{ans_oracle, brute_force_logit3, erfc_oracle};
use mostdots_core::analysis::*;
use mostdots_core::stimuli::{ImageType, RatioPair};
use mostdots_core::training::TrialResult;
use mostdots_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn erfc_agrees_with_series_and_continued_fraction() {
    let mut worst: f64 = 0.0;
    for i in 0..=1200 {
        let x = -2.0 + i as f64 * 0.01;
        worst = worst.max((libm::erfc(x) - erfc_oracle(x)).abs());
    }
    assert!(worst < 1e-12, "max abs error {worst}");
}

#[test]
fn two_to_one_at_w_0_363() {
    let acc = ans_accuracy(2.0, 1.0, 0.363).unwrap();
    assert!((acc - ans_oracle(2.0, 1.0, 0.363)).abs() < 1e-12);
    assert!((acc - 0.8907).abs() < 5e-4, "{acc}");
}

#[test]
fn accuracy_decreases_with_w_and_increases_with_ratio() {
    let mut prev = 1.0;
    for i in 1..100 {
        let a = ans_accuracy(10.0, 9.0, i as f64 * 0.02).unwrap();
        assert!(a < prev && a > 0.5);
        prev = a;
    }
    let by_ratio: Vec<f64> = RatioPair::ALL
        .iter()
        .map(|r| ans_accuracy(r.large() as f64, r.small() as f64, 0.2).unwrap())
        .collect();
    assert!(by_ratio.windows(2).all(|w| w[0] > w[1]));
}

proptest! {
    #[test]
    fn accuracy_is_ratio_invariant(n2 in 1u32..50, d in 0u32..50, k in 1u32..20, w in 0.01f64..2.0) {
        let n1 = (n2 + d) as f64;
        let n2 = n2 as f64;
        let base = ans_accuracy(n1, n2, w).unwrap();
        let scaled = ans_accuracy(k as f64 * n1, k as f64 * n2, w).unwrap();
        prop_assert!((base - scaled).abs() < 1e-12);
        prop_assert!((0.5..1.0).contains(&base) || base == 1.0);
    }

    #[test]
    fn fit_recovers_planted_w(w in 0.03f64..1.5) {
        let pts: Vec<WeberPoint> = RatioPair::ALL
            .iter()
            .map(|r| WeberPoint {
                n1: r.large() as f64,
                n2: r.small() as f64,
                accuracy: ans_oracle(r.large() as f64, r.small() as f64, w),
            })
            .collect();
        let fit = fit_weber(&pts).unwrap();
        prop_assert!((fit.w - w).abs() / w < 1e-6, "{} vs {}", fit.w, w);
        prop_assert!(fit.r_squared.unwrap() >= 0.999999);
    }
}

fn trial(
    model: &str,
    duration: u32,
    ty: ImageType,
    ratio: RatioPair,
    correct: bool,
) -> TrialResult {
    TrialResult {
        model_id: model.into(),
        duration,
        image_path: String::new(),
        image_type: ty,
        ratio_small: ratio.small(),
        ratio_large: ratio.large(),
        total_dots: ratio.small() + ratio.large(),
        abs_diff: 1,
        truth: true,
        predicted: correct,
        correct,
    }
}

#[test]
fn aggregation_is_a_partition() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trials: Vec<TrialResult> = (0..500)
        .map(|_| {
            trial(
                "m",
                7,
                ImageType::ALL[rng.gen_range(0..4)],
                RatioPair::ALL[rng.gen_range(0..9)],
                rng.gen_bool(0.7),
            )
        })
        .collect();
    let groups = aggregate_accuracy(&trials, &[GroupBy::ImageType, GroupBy::Ratio]).unwrap();
    assert_eq!(groups.iter().map(|g| g.n_trials).sum::<usize>(), 500);
    for g in &groups {
        assert_eq!(g.mean_accuracy, g.n_correct as f64 / g.n_trials as f64);
    }
    let single = aggregate_accuracy(&trials[..1], &[]).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0].n_trials, 1);
    let half: Vec<TrialResult> = (0..10)
        .map(|i| {
            trial(
                "m",
                7,
                ImageType::ScatteredRandom,
                RatioPair::ALL[0],
                i % 2 == 0,
            )
        })
        .collect();
    assert_eq!(
        aggregate_accuracy(&half, &[]).unwrap()[0].mean_accuracy,
        0.5
    );
    assert!(matches!(
        aggregate_accuracy(&[], &[]),
        Err(Error::EmptyData(_))
    ));
}

#[test]
fn invariant_levels_are_excluded_until_none_remain_at_ceiling() {
    let mut trials = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for &d in &[7u32, 9, 11, 13] {
        for ty in ImageType::ALL {
            for _ in 0..200 {
                let p = if ty.is_column() || d == 13 { 1.0 } else { 0.8 };
                trials.push(trial("m", d, ty, RatioPair::ALL[0], rng.gen_bool(p)));
            }
        }
    }
    let (kept, excluded) = exclude_invariant_cells(&trials, 0.995).unwrap();
    let mut levels: Vec<&str> = excluded.iter().map(|e| e.level.as_str()).collect();
    levels.sort();
    assert_eq!(levels, ["13", "column_pairs_mixed", "column_pairs_sorted"]);
    assert!(kept
        .iter()
        .all(|t| !t.image_type.is_column() && t.duration != 13));

    let all_perfect: Vec<TrialResult> = trials
        .iter()
        .map(|t| TrialResult {
            correct: true,
            ..t.clone()
        })
        .collect();
    assert!(matches!(
        exclude_invariant_cells(&all_perfect, 0.995),
        Err(Error::EmptyData(_))
    ));
}

fn toy_problem(seed: u64, n: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = [0.5, -1.2, 0.8];
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let row = [
            1.0,
            rng.gen_range(-2.0..2.0),
            if rng.gen_bool(0.4) { 1.0 } else { 0.0 },
        ];
        let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
        y.push(if rng.gen::<f64>() < 1.0 / (1.0 + (-eta).exp()) {
            1.0
        } else {
            0.0
        });
        x.push(row);
    }
    (x, y)
}

#[test]
fn irls_matches_brute_force_likelihood_search() {
    for seed in 0..3 {
        let (x, y) = toy_problem(seed, 400);
        let design = Design::new(
            vec!["(Intercept)".into(), "u".into(), "v".into()],
            x.iter().map(|r| r.to_vec()).collect(),
            y.clone(),
        );
        let rows = fit_logistic(&design, &RegressionSpec::default()).unwrap();
        let reference = brute_force_logit3(&x, &y);
        for (row, b) in rows.iter().zip(reference) {
            assert!(
                (row.estimate - b).abs() < 1e-6,
                "{}: {} vs {b}",
                row.term,
                row.estimate
            );
            assert!((row.z_value - row.estimate / row.std_error).abs() < 1e-12);
        }
    }
}

#[test]
fn planted_coefficients_are_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 50_000;
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let ratio = RatioPair::ALL[rng.gen_range(0..9)].balance();
        let eta = 1.0 - 5.0 * ratio;
        y.push(if rng.gen::<f64>() < 1.0 / (1.0 + (-eta).exp()) {
            1.0
        } else {
            0.0
        });
        rows.push(vec![1.0, ratio]);
    }
    let design = Design::new(vec!["(Intercept)".into(), "dot_ratio".into()], rows, y);
    let fit = fit_logistic(&design, &RegressionSpec::default()).unwrap();
    assert!(
        (fit[0].estimate - 1.0).abs() < 3.0 * fit[0].std_error,
        "{:?}",
        fit[0]
    );
    assert!(
        (fit[1].estimate + 5.0).abs() < 3.0 * fit[1].std_error,
        "{:?}",
        fit[1]
    );
    assert!(fit[1].p_value < 1e-10);
}

#[test]
fn regression_on_trials_uses_reference_coding() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut trials = Vec::new();
    for &d in &[7u32, 9, 11] {
        for ty in [ImageType::ScatteredPairs, ImageType::ScatteredRandom] {
            for r in RatioPair::ALL {
                for _ in 0..60 {
                    let p = 0.97 - 0.4 * r.balance() - if d == 7 { 0.05 } else { 0.0 };
                    let mut t = trial("m", d, ty, r, rng.gen_bool(p));
                    t.total_dots = r.small() + r.large() + rng.gen_range(0..3);
                    t.abs_diff = rng.gen_range(1..4);
                    trials.push(t);
                }
            }
        }
    }
    let rows = logistic_regression(&trials, &RegressionSpec::default()).unwrap();
    let terms: Vec<&str> = rows.iter().map(|r| r.term.as_str()).collect();
    assert_eq!(
        terms,
        [
            "(Intercept)",
            "image_type[scattered_random]",
            "duration[7]",
            "duration[9]",
            "dot_ratio",
            "abs_diff",
            "total_dots",
            "dot_ratio:duration[7]",
            "dot_ratio:duration[9]",
        ]
    );
    let ratio = rows.iter().find(|r| r.term == "dot_ratio").unwrap();
    assert!(ratio.estimate < 0.0);
}

#[test]
fn constant_outcome_and_collinear_designs_fail_loudly() {
    let trials: Vec<TrialResult> = RatioPair::ALL
        .iter()
        .flat_map(|&r| (0..5).map(move |_| trial("m", 7, ImageType::ScatteredRandom, r, true)))
        .collect();
    assert!(matches!(
        logistic_regression(&trials, &RegressionSpec::default()),
        Err(Error::Separation { .. })
    ));
    let (x, y) = toy_problem(3, 200);
    let rows = x.iter().map(|r| vec![r[0], r[1], r[2], 1.0]).collect();
    let design = Design::new(
        vec!["(Intercept)".into(), "u".into(), "v".into(), "const".into()],
        rows,
        y,
    );
    match fit_logistic(&design, &RegressionSpec::default()) {
        Err(Error::Rank { term }) => assert_eq!(term, "const"),
        other => panic!("expected a rank error, got {other:?}"),
    }
}

#[test]
fn weber_fit_from_trials_uses_canonical_pairs() {
    let w = 0.25;
    let mut trials = Vec::new();
    for r in RatioPair::ALL {
        let acc = ans_oracle(r.large() as f64, r.small() as f64, w);
        let n = 10_000;
        let c = (acc * n as f64).round() as usize;
        for i in 0..n {
            trials.push(trial("m", 7, ImageType::ScatteredRandom, r, i < c));
        }
    }
    let fit = weber_fit_for(&trials, "m", Some(ImageType::ScatteredRandom)).unwrap();
    assert!((fit.w - w).abs() < 1e-3, "{}", fit.w);
    assert!(fit.points[0].n1 / fit.points[0].n2 < fit.points[8].n1 / fit.points[8].n2);
}
