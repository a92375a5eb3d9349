use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;

use rflab::grid::Grid;
use rflab::metrics::mse;
use rflab::model::{forward, ModelConfig, ModelParams};
use rflab::rng::rng_from;
use rflab::sampling::SamplerKind;
use rflab::scene::{corpus_scene, RadioMap, Scene, SynthConfig};
use rflab::train::{
    cosine_lr, evaluate, evaluate_idw, evaluate_kinds, evaluate_with, fine_tune, mse_loss, rmse_fluctuation,
    split_dataset, train, train_from, EvalOptions, SplitSpec, TrainConfig,
};

fn corpus(n: u64) -> Vec<Scene> {
    let cfg = SynthConfig::synth_a(32, 3);
    (0..n).map(|m| corpus_scene(&cfg, m, 0).unwrap()).collect()
}

fn quick_cfg(steps: usize) -> TrainConfig {
    TrainConfig {
        max_steps: steps,
        batch_size: 2,
        obs_budget: 5,
        log_every: 0,
        ..Default::default()
    }
}

#[test]
fn split_of_seven_hundred_ids() {
    let ids: Vec<u64> = (0..700).collect();
    let spec = SplitSpec::default();
    let s = split_dataset(&ids, &spec).unwrap();
    assert_eq!(s.test, (551..700).collect::<Vec<_>>());
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (509, 42, 149));
    let mut all: Vec<u64> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, ids);
    assert_eq!(split_dataset(&ids, &spec).unwrap(), s);
    let other = split_dataset(&ids, &SplitSpec { split_seed: 1, ..spec }).unwrap();
    assert_ne!(other.train, s.train);
    assert_eq!(other.test, s.test);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_partition(ids in prop::collection::btree_set(0u64..1200, 3..300), seed in any::<u64>(), a in 1u32..20, b in 1u32..5) {
        let ids: Vec<u64> = ids.into_iter().collect();
        let spec = SplitSpec { split_seed: seed, train_val_ratio: (a, b), ..Default::default() };
        if let Ok(s) = split_dataset(&ids, &spec) {
            let parts: Vec<BTreeSet<u64>> = [&s.train, &s.val, &s.test].iter().map(|p| p.iter().copied().collect()).collect();
            prop_assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), ids.len());
            prop_assert!(parts[0].is_disjoint(&parts[1]));
            prop_assert!(s.test.iter().all(|&id| id > 550));
            prop_assert!(s.train.iter().chain(&s.val).all(|&id| id <= 550));
            let n = (s.train.len() + s.val.len()) as u64;
            prop_assert_eq!(s.train.len() as u64, (a as u64 * n).div_ceil((a + b) as u64));
        }
    }

    #[test]
    fn mse_loss_is_symmetric_and_definite(seed in any::<u64>()) {
        let mut rng = rng_from(seed, &[]);
        let a = RadioMap::new(Grid::from_fn(6, 7, |_, _| rng.gen::<f64>())).unwrap();
        let b = RadioMap::new(Grid::from_fn(6, 7, |_, _| rng.gen::<f64>())).unwrap();
        prop_assert_eq!(mse_loss(&a, &b).unwrap(), mse_loss(&b, &a).unwrap());
        prop_assert!(mse_loss(&a, &b).unwrap() > 0.0);
        prop_assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
    }
}

#[test]
fn mse_loss_examples() {
    let zeros = RadioMap::constant(5, 5, 0.0).unwrap();
    let ones = RadioMap::constant(5, 5, 1.0).unwrap();
    assert_eq!(mse_loss(&zeros, &ones).unwrap(), 1.0);
    let mut rng = rng_from(8, &[]);
    let a = RadioMap::new(Grid::from_fn(13, 11, |_, _| rng.gen::<f64>())).unwrap();
    let b = RadioMap::new(Grid::from_fn(13, 11, |_, _| rng.gen::<f64>())).unwrap();
    let mut acc = 0.0;
    for (x, y) in a.values().iter().zip(b.values()) {
        acc += (x - y) * (x - y);
    }
    let want = acc / 143.0;
    assert!((mse_loss(&a, &b).unwrap() - want).abs() <= 1e-12 * want);
    assert!(mse_loss(&a, &zeros).is_err());
}

#[test]
fn cosine_midpoint_and_end() {
    assert!((cosine_lr(1e-3, 500, 1000) - 5e-4).abs() < 1e-15);
    assert_eq!(cosine_lr(1e-3, 0, 1000), 1e-3);
    assert!(cosine_lr(1e-3, 1000, 1000).abs() < 1e-18);
}

#[test]
fn training_is_reproducible() {
    let scenes = corpus(4);
    let cfg = ModelConfig::tiny();
    let a = train(&cfg, &quick_cfg(6), &scenes).unwrap();
    let b = train(&cfg, &quick_cfg(6), &scenes).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.params.tensors(), b.params.tensors());
    assert_eq!(a.losses.len(), 6);
    assert!(a.losses.iter().all(|l| l.is_finite()));
    let c = train(&cfg, &TrainConfig { seed: 1, ..quick_cfg(6) }, &scenes).unwrap();
    assert_ne!(a.losses, c.losses);
}

#[test]
fn zero_steps_leave_parameters_untouched() {
    let scenes = corpus(2);
    let p = ModelParams::<f32>::init(&ModelConfig::tiny(), 5).unwrap();
    let out = fine_tune(p.clone(), &quick_cfg(0), &scenes).unwrap();
    assert_eq!(out.params.tensors(), p.tensors());
    assert!(out.losses.is_empty());
}

#[test]
fn vanishing_learning_rate_barely_moves_parameters() {
    let scenes = corpus(1);
    let p = ModelParams::<f64>::init(&ModelConfig::tiny(), 2).unwrap();
    let lr = 1e-9;
    let cfg = TrainConfig {
        lr_init: lr,
        batch_size: 1,
        ..quick_cfg(1)
    };
    let out = train_from(p.clone(), &cfg, &scenes).unwrap();
    for (a, b) in p.tensors().iter().zip(out.params.tensors()) {
        for (x, y) in a.data.iter().zip(&b.data) {
            // an Adam step moves each coordinate by at most about lr
            assert!((x - y).abs() <= 1.01 * lr * (1.0 + x.abs()), "{}", a.name);
        }
    }
}

#[test]
fn invalid_training_configs_are_rejected() {
    let scenes = corpus(1);
    let cfg = ModelConfig::tiny();
    for bad in [
        TrainConfig { lr_init: 0.0, ..quick_cfg(1) },
        TrainConfig { batch_size: 0, ..quick_cfg(1) },
        TrainConfig { obs_budget: 0, ..quick_cfg(1) },
        TrainConfig { weight_decay: -1.0, ..quick_cfg(1) },
    ] {
        assert!(train(&cfg, &bad, &scenes).is_err());
    }
    assert!(train(&cfg, &quick_cfg(1), &[]).is_err());
}

#[test]
fn evaluation_is_deterministic_and_self_consistent() {
    let scenes = corpus(3);
    let p = ModelParams::<f32>::init(&ModelConfig::tiny(), 9).unwrap();
    let opts = EvalOptions {
        repeats: 1,
        ..Default::default()
    };
    let a = evaluate(&p, &scenes, SamplerKind::Random, 9, &opts).unwrap();
    let b = evaluate(&p, &scenes, SamplerKind::Random, 9, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.runs.len(), 1);

    // the model's own predictions as ground truth
    let opts5 = EvalOptions::default();
    let report = evaluate_with(
        |scene, obs| {
            let truth = forward(scene.building(), obs, &p)?.0;
            let again = forward(scene.building(), obs, &p)?.0;
            assert_eq!(mse(&truth, &again)?, 0.0);
            Ok(again)
        },
        &scenes,
        SamplerKind::Uniform,
        9,
        &opts5,
    )
    .unwrap();
    assert_eq!(report.runs.len(), 5);
    assert!(report.rmse >= 0.0 && (-1.0..=1.0).contains(&report.ssim));

    let self_cmp = evaluate_with(
        |scene, _| Ok(scene.radio().clone()),
        &scenes,
        SamplerKind::Random,
        9,
        &opts5,
    )
    .unwrap();
    assert_eq!(self_cmp.rmse, 0.0);
    assert!((self_cmp.ssim - 1.0).abs() < 1e-12);
    assert!(evaluate(&p, &scenes, SamplerKind::Random, 9, &EvalOptions { repeats: 0, ..opts }).is_err());
}

#[test]
fn fluctuation_matches_recomputation() {
    let scenes = corpus(4);
    let opts = EvalOptions {
        repeats: 2,
        ..Default::default()
    };
    let reports = evaluate_kinds(
        |scene, obs| rflab::metrics::idw_predict(scene.building(), obs, 2.0),
        &scenes,
        9,
        &opts,
    )
    .unwrap();
    let by_hand: Vec<f64> = SamplerKind::ALL
        .iter()
        .map(|&k| evaluate_idw(&scenes, k, 9, 2.0, &opts).unwrap().rmse)
        .collect();
    let hi = by_hand.iter().cloned().fold(f64::MIN, f64::max);
    let lo = by_hand.iter().cloned().fold(f64::MAX, f64::min);
    for r in &reports {
        assert_eq!(r.fluctuation, Some(hi - lo));
    }
    assert_eq!(rmse_fluctuation(&reports), Some(hi - lo));
    assert_eq!(rmse_fluctuation(&[]), None);
    // per-run means equal the mean over per-scene rows
    for r in &reports {
        for run in &r.runs {
            let rows: Vec<f64> = r.scenes.iter().filter(|s| s.run == run.run).map(|s| s.rmse).collect();
            assert!((rows.iter().sum::<f64>() / rows.len() as f64 - run.rmse).abs() < 1e-12);
        }
    }
}
