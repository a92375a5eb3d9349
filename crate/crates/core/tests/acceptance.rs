//! Acceptance run. Every criterion prints one `criterion N: PASS|FAIL` line
//! to stderr (bypassing the test harness capture) before asserting.
//!
//! Training-heavy criteria hold a shared lock so that wall-clock budgets are
//! measured without competing test threads.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};

use rand::Rng;

use rflab::grid::Grid;
use rflab::metrics::{mse, psnr, rmse, ssim, SsimConfig};
use rflab::model::{forward, grad_check, predict_raw, ModelConfig, ModelParams, PosEmbed};
use rflab::rng::rng_from;
use rflab::sampling::{
    sample_constrained, sample_random, sample_uniform, ConstraintBox, ObservationPoint, ObservationSet, SamplerKind,
};
use rflab::scene::{corpus_scene, synth_scene, BuildingMap, RadioMap, Scene, SourceTag, SynthConfig};
use rflab::train::{
    evaluate, evaluate_idw, fine_tune, split_dataset, train, transfer, EvalOptions, SplitSpec, TrainConfig,
    TrainOutcome,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {n}: {verdict}  {detail}");
}

fn spread(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// desk corpus and the shared K=9 model

const SIZE: usize = 64;
const CORPUS_SEED: u64 = 7;
/// Maps `0..=TEST_THRESHOLD` feed train/val, the next `TEST_MAPS` are test.
const TEST_THRESHOLD: u64 = 3999;
const TEST_MAPS: u64 = 50;
const DESK_DIM: usize = 32;
const DESK_STEPS: usize = 16_000;
const DESK_LR: f64 = 3e-3;
const BUDGET_SECS: f64 = 1800.0;

struct Desk {
    train: Vec<Scene>,
    test: Vec<Scene>,
    outcome: TrainOutcome<f32>,
}

fn desk_corpus() -> (Vec<Scene>, Vec<Scene>) {
    let synth = SynthConfig::synth_a(SIZE, CORPUS_SEED);
    let ids: Vec<u64> = (0..=TEST_THRESHOLD + TEST_MAPS).collect();
    let split = split_dataset(
        &ids,
        &SplitSpec {
            test_threshold: TEST_THRESHOLD,
            ..SplitSpec::default()
        },
    )
    .unwrap();
    let load = |ids: &[u64]| -> Vec<Scene> { ids.iter().map(|&m| corpus_scene(&synth, m, 0).unwrap()).collect() };
    (load(&split.train), load(&split.test))
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let (train_set, test) = desk_corpus();
        let model = ModelConfig {
            pos_embed: PosEmbed::Learnable,
            ..ModelConfig::desk(SIZE).with_embed_dim(DESK_DIM)
        };
        let cfg = TrainConfig {
            max_steps: DESK_STEPS,
            lr_init: DESK_LR,
            obs_budget: 9,
            // one step of headroom under the budget
            max_seconds: Some(BUDGET_SECS - 5.0),
            log_every: 0,
            ..TrainConfig::default()
        };
        let outcome = train(&model, &cfg, &train_set).unwrap();
        Desk {
            train: train_set,
            test,
            outcome,
        }
    })
}

// ---------------------------------------------------------------------------
// 1. samplers

fn random_scene(seed: u64, size: usize) -> Scene {
    let mut rng = rng_from(seed, &[0xacc]);
    let density = rng.gen_range(0.05..0.6);
    let mut g = Grid::from_fn(size, size, |_, _| u8::from(rng.gen_bool(density)));
    let tx = (rng.gen_range(0..size), rng.gen_range(0..size));
    g.set(tx.0, tx.1, 0);
    let b = BuildingMap::new(g).unwrap();
    let radio = Grid::from_fn(size, size, |r, c| if b.is_building(r, c) { 0.0 } else { rng.gen_range(0.01..1.0) });
    Scene::new(b, RadioMap::new(radio).unwrap(), tx, SourceTag::SynthA).unwrap()
}

/// Checks one draw and returns a description of the first violation.
fn sampler_violation(scene: &Scene, set: &ObservationSet, check_bounds: impl Fn(&ObservationPoint) -> bool) -> Option<String> {
    let mut seen = HashSet::new();
    for p in &set.points {
        if scene.building().is_building(p.x, p.y) {
            return Some(format!("building pixel {p:?}"));
        }
        if p.x >= scene.height() || p.y >= scene.width() || !check_bounds(p) {
            return Some(format!("bounds {p:?}"));
        }
        if p.v != scene.radio().get(p.x, p.y) || !seen.insert((p.x, p.y)) {
            return Some(format!("value or duplicate {p:?}"));
        }
    }
    None
}

#[test]
fn criterion_01_sampler_suite() {
    let start = std::time::Instant::now();
    let trials = 10_000u64;
    let mut failures: Vec<String> = Vec::new();
    for t in 0..trials {
        let size = 16 + (t % 5) as usize * 8;
        let scene = random_scene(t, size);
        let free = scene.building().free_count();
        let mut rng = rng_from(t, &[1]);

        let k = rng.gen_range(1..=free.min(64));
        let set = sample_random(&scene, k, &mut rng).unwrap();
        if set.len() != k {
            failures.push(format!("random trial {t}: {} points for k={k}", set.len()));
        }
        if let Some(v) = sampler_violation(&scene, &set, |_| true) {
            failures.push(format!("random trial {t}: {v}"));
        }

        let lo_r = rng.gen_range(0..size - 2);
        let lo_c = rng.gen_range(0..size - 2);
        let bounds = ConstraintBox {
            row_lo: lo_r,
            row_hi: rng.gen_range(lo_r + 2..=size),
            col_lo: lo_c,
            col_hi: rng.gen_range(lo_c + 2..=size),
        };
        let eligible = scene
            .building()
            .free_cells()
            .filter(|&(r, c)| bounds.contains(r, c))
            .count();
        if eligible > 0 {
            let k = rng.gen_range(1..=eligible.min(32));
            let set = sample_constrained(&scene, k, &bounds, &mut rng).unwrap();
            let strict = |p: &ObservationPoint| {
                bounds.row_lo < p.x && p.x < bounds.row_hi && bounds.col_lo < p.y && p.y < bounds.col_hi
            };
            if set.len() != k {
                failures.push(format!("constrained trial {t}: {} points for k={k}", set.len()));
            }
            if let Some(v) = sampler_violation(&scene, &set, strict) {
                failures.push(format!("constrained trial {t}: {v}"));
            }
        } else if sample_constrained(&scene, 1, &bounds, &mut rng).is_ok() {
            failures.push(format!("constrained trial {t}: drew from an empty box"));
        }

        let order = rng.gen_range(1..=4usize);
        let set = sample_uniform(&scene, order, &mut rng).unwrap();
        let hs = size as f64 / order as f64;
        let in_cell = |i: usize, r: usize, c: usize| {
            let (br, bc) = ((i / order) as f64, (i % order) as f64);
            let (x, y) = (r as f64, c as f64);
            br * hs < x && x < (br + 1.0) * hs && bc * hs < y && y < (bc + 1.0) * hs
        };
        let mut expected = 0;
        let mut points = set.points.iter();
        for i in 0..order * order {
            let nonempty = scene.building().free_cells().any(|(r, c)| in_cell(i, r, c));
            if !nonempty {
                continue;
            }
            expected += 1;
            match points.next() {
                Some(p) if in_cell(i, p.x, p.y) => {}
                other => failures.push(format!("uniform trial {t}: cell {i} got {other:?}")),
            }
        }
        if set.len() != expected || set.empty_cells != order * order - expected {
            failures.push(format!("uniform trial {t}: {} points, {expected} non-empty cells", set.len()));
        }
        if let Some(v) = sampler_violation(&scene, &set, |_| true) {
            failures.push(format!("uniform trial {t}: {v}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 60.0;
    report(
        1,
        pass,
        &format!("{trials} trials per sampler, {} violations, {secs:.1}s", failures.len()),
    );
    assert!(pass, "first violations: {:?}", &failures[..failures.len().min(5)]);
}

// ---------------------------------------------------------------------------
// 2. gradients

#[test]
fn criterion_02_gradient_check() {
    let start = std::time::Instant::now();
    let cfg = ModelConfig::tiny();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..3 {
        let scene = synth_scene(&SynthConfig::synth_a(32, seed), &mut rng_from(seed, &[])).unwrap();
        let obs = sample_random(&scene, 3, &mut rng_from(seed, &[2])).unwrap();
        let params = ModelParams::<f64>::init(&cfg, seed).unwrap();
        let r = grad_check(&params, scene.building(), &obs, scene.radio(), 1e-4, 200, seed).unwrap();
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-3 && checked >= 600 && secs < 300.0;
    report(
        2,
        pass,
        &format!("max relative error {worst:.2e} over {checked} parameters, {secs:.1}s"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 3. permutation invariance

#[test]
fn criterion_03_permutation_invariance() {
    let cfg = ModelConfig::tiny();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let scene = synth_scene(&SynthConfig::synth_a(32, seed), &mut rng_from(seed, &[3])).unwrap();
        let mut rng = rng_from(seed, &[4]);
        let k = rng.gen_range(2..=12);
        let obs = sample_random(&scene, k, &mut rng).unwrap();
        let mut shuffled = obs.points.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let params = ModelParams::<f32>::init(&cfg, rng.gen()).unwrap();
        let a = predict_raw(scene.building(), &obs, &params).unwrap();
        let b = predict_raw(scene.building(), &ObservationSet::new(shuffled), &params).unwrap();
        let d = a.iter().zip(&b).map(|(x, y)| (x - y).abs() as f64).fold(0.0, f64::max);
        worst = worst.max(d);
    }
    let pass = worst <= 1e-5;
    report(3, pass, &format!("max abs change {worst:.2e} over 20 scenes"));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 4. observation count generalization

#[test]
fn criterion_04_budget_generalization() {
    let _g = serial();
    let desk = desk();
    let params = &desk.outcome.params;
    let opts = EvalOptions {
        repeats: 1,
        ..EvalOptions::default()
    };
    let budgets = [5, 9, 25, 50, 75, 100, 250, 500, 1000];
    let (mut model, mut idw) = (Vec::new(), Vec::new());
    let mut shapes_ok = true;
    for &k in &budgets {
        let obs = rflab::train::eval_observations(&desk.test[0], 0, 0, SamplerKind::Random, k, &opts).unwrap();
        let (pred, _) = forward(desk.test[0].building(), &obs, params).unwrap();
        shapes_ok &= pred.height() == SIZE && pred.width() == SIZE && obs.len() == k;
        let m = evaluate(params, &desk.test, SamplerKind::Random, k, &opts).unwrap();
        let i = evaluate_idw(&desk.test, SamplerKind::Random, k, 2.0, &opts).unwrap();
        shapes_ok &= [m.rmse, m.ssim, m.psnr].iter().all(|v| v.is_finite());
        model.push(m.rmse);
        idw.push(i.rmse);
    }
    let (sm, si) = (spread(&model), spread(&idw));
    let pass = shapes_ok && sm < si;
    let curve: Vec<String> = budgets
        .iter()
        .zip(model.iter().zip(&idw))
        .map(|(k, (m, i))| format!("{k}:{m:.3}/{i:.3}"))
        .collect();
    report(
        4,
        pass,
        &format!("rmse spread model {sm:.4} vs idw {si:.4}  [K:model/idw {}]", curve.join(" ")),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 5. overfit

fn overfit() -> &'static (Vec<Scene>, TrainOutcome<f32>) {
    static RUN: OnceLock<(Vec<Scene>, TrainOutcome<f32>)> = OnceLock::new();
    RUN.get_or_init(|| {
        let synth = SynthConfig::synth_a(SIZE, CORPUS_SEED);
        let scenes: Vec<Scene> = (0..8).map(|m| corpus_scene(&synth, m, 0).unwrap()).collect();
        let cfg = TrainConfig {
            max_steps: 2000,
            lr_init: 3e-3,
            obs_budget: 9,
            log_every: 0,
            ..TrainConfig::default()
        };
        let out = train(&ModelConfig::desk(SIZE).with_embed_dim(32), &cfg, &scenes).unwrap();
        (scenes, out)
    })
}

#[test]
fn criterion_05_overfit() {
    let _g = serial();
    let (scenes, out) = overfit();
    let r = evaluate(&out.params, scenes, SamplerKind::Random, 9, &EvalOptions::default()).unwrap();
    let finite = out.losses.iter().all(|l| l.is_finite());
    let pass = r.rmse < 0.05 && out.losses.len() <= 2000 && out.elapsed_secs < 600.0 && finite;
    report(
        5,
        pass,
        &format!(
            "train rmse {:.4} after {} steps in {:.0}s, losses finite: {finite}",
            r.rmse,
            out.losses.len(),
            out.elapsed_secs
        ),
    );
    assert!(pass);
}

#[test]
fn overfit_windowed_loss_is_non_increasing() {
    let _g = serial();
    let (_, out) = overfit();
    let means: Vec<f64> = out
        .losses
        .chunks(500)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    assert!(means.windows(2).all(|w| w[1] <= w[0]), "window means {means:?}");
}

// ---------------------------------------------------------------------------
// 6. learning signal against IDW

#[test]
fn criterion_06_beats_idw() {
    let _g = serial();
    let desk = desk();
    let opts = EvalOptions::default();
    let m = evaluate(&desk.outcome.params, &desk.test, SamplerKind::Random, 9, &opts).unwrap();
    let i = evaluate_idw(&desk.test, SamplerKind::Random, 9, 2.0, &opts).unwrap();
    let gain = 1.0 - m.rmse / i.rmse;
    let within_budget = desk.outcome.elapsed_secs <= BUDGET_SECS;
    let pass = desk.test.len() >= 50 && gain >= 0.20 && within_budget;
    report(
        6,
        pass,
        &format!(
            "{} test scenes, rmse {:.4} vs idw {:.4} ({:.1}% better), {} steps in {:.0}s",
            desk.test.len(),
            m.rmse,
            i.rmse,
            100.0 * gain,
            desk.outcome.losses.len(),
            desk.outcome.elapsed_secs
        ),
    );
    assert!(pass);
}

#[test]
fn fine_tuning_on_the_source_stays_within_noise() {
    let _g = serial();
    let desk = desk();
    let opts = EvalOptions::default();
    let before = evaluate(&desk.outcome.params, &desk.test, SamplerKind::Random, 9, &opts).unwrap();
    let cfg = TrainConfig {
        max_steps: 300,
        lr_init: DESK_LR,
        obs_budget: 9,
        seed: 11,
        log_every: 0,
        ..TrainConfig::default()
    };
    let tuned = fine_tune(desk.outcome.params.clone(), &cfg, &desk.train).unwrap();
    let after = evaluate(&tuned.params, &desk.test, SamplerKind::Random, 9, &opts).unwrap();
    let rel = (after.rmse - before.rmse).abs() / before.rmse;
    assert!(rel <= 0.10, "rmse {:.4} -> {:.4}", before.rmse, after.rmse);
}

// ---------------------------------------------------------------------------
// 7. metrics

fn random_map(rng: &mut impl Rng, h: usize, w: usize) -> RadioMap {
    RadioMap::new(Grid::from_fn(h, w, |_, _| rng.gen_range(0.0..1.0))).unwrap()
}

/// Local SSIM at every fully covered window position, from explicit
/// Gaussian-weighted sums over each window.
fn direct_ssim(a: &RadioMap, b: &RadioMap, win: usize, sigma: f64) -> f64 {
    let half = (win / 2) as f64;
    let mut w2 = vec![vec![0.0; win]; win];
    let mut total = 0.0;
    for (i, row) in w2.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - half, j as f64 - half);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (h, w) = (a.height(), a.width());
    let mut acc = 0.0;
    let mut n = 0;
    for r in 0..=h - win {
        for c in 0..=w - win {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..win {
                for j in 0..win {
                    let g = w2[i][j] / total;
                    let (x, y) = (a.get(r + i, c + j), b.get(r + i, c + j));
                    mx += g * x;
                    my += g * y;
                    xx += g * x * x;
                    yy += g * y * y;
                    xy += g * x * y;
                }
            }
            let (vx, vy, cxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
            acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            n += 1;
        }
    }
    acc / n as f64
}

#[test]
fn criterion_07_metric_oracles() {
    let cfg = SsimConfig::default();
    let mut rng = rng_from(7, &[0x7]);
    let (mut self_ssim, mut psnr_err, mut mse_err, mut ssim_err): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..10 {
        let (h, w) = (rng.gen_range(11..40), rng.gen_range(11..40));
        let a = random_map(&mut rng, h, w);
        let b = random_map(&mut rng, h, w);
        self_ssim = self_ssim.max((ssim(&a, &a, &cfg).unwrap() - 1.0).abs());

        let brute: f64 = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .map(|(r, c)| (a.get(r, c) - b.get(r, c)).powi(2))
            .sum::<f64>()
            / (h * w) as f64;
        mse_err = mse_err.max((mse(&a, &b).unwrap() - brute).abs() / brute);
        mse_err = mse_err.max((rmse(&a, &b).unwrap() - brute.sqrt()).abs() / brute.sqrt());

        let e = rmse(&a, &b).unwrap();
        psnr_err = psnr_err.max((psnr(&a, &b, 1.0).unwrap() + 20.0 * e.log10()).abs());

        let reference = direct_ssim(&a, &b, cfg.window, cfg.window_sigma);
        ssim_err = ssim_err.max((ssim(&a, &b, &cfg).unwrap() - reference).abs());
    }
    let pass = self_ssim <= 1e-9 && psnr_err <= 1e-9 && mse_err <= 1e-12 && ssim_err <= 1e-6;
    report(
        7,
        pass,
        &format!(
            "|ssim(x,x)-1| {self_ssim:.1e}, psnr {psnr_err:.1e}, mse/rmse rel {mse_err:.1e}, ssim vs direct {ssim_err:.1e}"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 8. split protocol

#[test]
fn criterion_08_split_protocol() {
    let ids: Vec<u64> = (0..700).collect();
    let spec = SplitSpec::default();
    let s = split_dataset(&ids, &spec).unwrap();
    let again = split_dataset(&ids, &spec).unwrap();
    let expected_test: Vec<u64> = (551..700).collect();
    let mut all: Vec<u64> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort_unstable();
    let exhaustive = all == ids;
    let pass = s.test == expected_test && s.train.len() == 509 && s.val.len() == 42 && exhaustive && s == again;
    report(
        8,
        pass,
        &format!(
            "train/val/test {}/{}/{}, test {}..={}, disjoint and exhaustive: {exhaustive}, deterministic: {}",
            s.train.len(),
            s.val.len(),
            s.test.len(),
            s.test.first().unwrap(),
            s.test.last().unwrap(),
            s == again
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 9. zero-shot and fine-tune

#[test]
fn criterion_09_fine_tune_beats_zero_shot() {
    let _g = serial();
    let mut lines = Vec::new();
    let mut wins = 0;
    for seed in 0..3u64 {
        let source = SynthConfig::synth_a(SIZE, 100 + seed);
        let target = SynthConfig::synth_b(SIZE, 200 + seed);
        let src: Vec<Scene> = (0..400).map(|m| corpus_scene(&source, m, 0).unwrap()).collect();
        let tgt_train: Vec<Scene> = (0..400).map(|m| corpus_scene(&target, m, 0).unwrap()).collect();
        let tgt_test: Vec<Scene> = (1000..1050).map(|m| corpus_scene(&target, m, 0).unwrap()).collect();
        let model = ModelConfig::desk(SIZE).with_embed_dim(32);
        let pre = TrainConfig {
            max_steps: 1200,
            lr_init: 3e-3,
            obs_budget: 9,
            seed,
            log_every: 0,
            ..TrainConfig::default()
        };
        let params = train(&model, &pre, &src).unwrap().params;
        let tune = TrainConfig {
            max_steps: 400,
            seed: seed + 1000,
            ..pre
        };
        let opts = EvalOptions {
            seed: 2024 + seed,
            ..EvalOptions::default()
        };
        let r = transfer(params, &tune, &tgt_train, &tgt_test, &opts).unwrap();
        if r.fine_tuned.rmse <= r.zero_shot.rmse {
            wins += 1;
        }
        lines.push(format!("seed {seed}: {:.4} -> {:.4}", r.zero_shot.rmse, r.fine_tuned.rmse));
    }
    let pass = wins == 3;
    report(9, pass, &format!("{wins}/3 seeds improved  [{}]", lines.join(", ")));
    assert!(pass);
}

// ---------------------------------------------------------------------------
// 10. CLI pipeline

/// Builds the `rflab` binary with the profile this test was compiled under.
fn cli_binary() -> PathBuf {
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let release = !cfg!(debug_assertions);
    let mut cmd = Command::new(cargo);
    cmd.args(["build", "--quiet", "-p", "rflab-cli", "--bin", "rflab"]);
    if release {
        cmd.arg("--release");
    } else {
        cmd.args(["--profile", "test"]);
    }
    let status = cmd.status().expect("run cargo build");
    assert!(status.success(), "building the CLI failed");
    // target/<profile>/deps/acceptance-<hash> -> target/<profile>/rflab
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().join(format!("rflab{}", std::env::consts::EXE_SUFFIX))
}

fn run_cli(bin: &Path, args: &[&str], data: &Path) -> Result<(), String> {
    let out = Command::new(bin)
        .args(args)
        .env("RUST_LOG", "warn")
        .env("RFLAB_DATA_ROOT", data)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{} exited {:?}: {}",
            args[0],
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn pipeline(bin: &Path, config: &str, data: &Path, out: &Path) -> Result<(), String> {
    let o = |s: &str| out.join(s).to_string_lossy().into_owned();
    run_cli(bin, &["synth-gen", "-c", config, "-o", &o("gen")], data)?;
    run_cli(bin, &["train", "-c", config, "-o", &o("train")], data)?;
    let ckpt = o("train/model.ckpt");
    run_cli(bin, &["eval", "-c", config, "--checkpoint", &ckpt, "-o", &o("eval")], data)?;
    run_cli(bin, &["sweep-obs", "-c", config, "--checkpoint", &ckpt, "-o", &o("sweep")], data)?;
    run_cli(bin, &["attn-export", "-c", config, "--checkpoint", &ckpt, "-o", &o("attn")], data)
}

const ARTIFACTS: [&str; 12] = [
    "train/loss.csv",
    "train/run.json",
    "eval/report.csv",
    "eval/scenes.csv",
    "eval/triptych/scene0_truth.png",
    "eval/triptych/scene0_pred.png",
    "eval/triptych/scene0_error.png",
    "sweep/sweep_obs.csv",
    "sweep/sweep_obs.png",
    "attn/attention.csv",
    "attn/observations.csv",
    "attn/composite.png",
];

#[test]
fn criterion_10_cli_end_to_end() {
    let bin = cli_binary();
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    let doc = serde_json::json!({
        "data": { "size": 32, "maps": 16, "tx_per_map": 1, "seed": 3 },
        "split": { "test_threshold": 13 },
        "model": {
            "map_size": 32, "embed_dim": 16, "patch_size": 8, "mlp_ratio": 2,
            "decoder_channels": [8, 4, 2]
        },
        "train": { "max_steps": 5, "batch_size": 2, "log_every": 0 },
        "eval": { "repeats": 2 },
        "sweep": { "obs_budgets": [5, 9, 25] }
    });
    std::fs::write(&config, doc.to_string()).unwrap();
    let cfg = config.to_str().unwrap();
    let data = tmp.path().join("corpus");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));

    let mut problems = Vec::new();
    for out in [&a, &b] {
        if let Err(e) = pipeline(&bin, cfg, &data, out) {
            problems.push(e);
        }
    }
    for f in ARTIFACTS {
        if !a.join(f).is_file() {
            problems.push(format!("missing {f}"));
        }
    }
    for f in ARTIFACTS.iter().filter(|f| f.ends_with(".csv")) {
        if std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok() {
            problems.push(format!("{f} differs between reruns"));
        }
    }
    let mut worst_row: f64 = 0.0;
    if let Ok(text) = std::fs::read_to_string(a.join("attn/attention.csv")) {
        for line in text.lines().skip(1) {
            let s: f64 = line.split(',').skip(3).map(|v| v.parse::<f64>().unwrap_or(f64::NAN)).sum();
            worst_row = worst_row.max((s - 1.0).abs());
        }
    }
    if !(worst_row <= 1e-6) {
        problems.push(format!("attention row sum off by {worst_row:e}"));
    }
    let pass = problems.is_empty();
    report(
        10,
        pass,
        &format!(
            "synth-gen, train, eval, sweep-obs, attn-export twice; {} problems, max attention row error {worst_row:.1e}",
            problems.len()
        ),
    );
    assert!(pass, "{problems:?}");
}
