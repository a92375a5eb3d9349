use proptest::prelude::*;
use rand::Rng;

use rflab::grid::Grid;
use rflab::metrics::{idw_predict, mse, psnr, psnr_from_mse, rmse, ssim, SsimConfig};
use rflab::rng::rng_from;
use rflab::sampling::{ObservationPoint, ObservationSet};
use rflab::scene::{BuildingMap, RadioMap};

fn random_map(seed: u64, h: usize, w: usize) -> RadioMap {
    let mut rng = rng_from(seed, &[11]);
    RadioMap::new(Grid::from_fn(h, w, |_, _| rng.gen::<f64>())).unwrap()
}

fn map_fn(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> RadioMap {
    RadioMap::new(Grid::from_fn(h, w, f)).unwrap()
}

fn brute_mse(a: &RadioMap, b: &RadioMap) -> f64 {
    let mut s = 0.0;
    for r in 0..a.height() {
        for c in 0..a.width() {
            s += (a.get(r, c) - b.get(r, c)).powi(2);
        }
    }
    s / (a.height() * a.width()) as f64
}

/// Local SSIM summed window by window with explicit 2-D Gaussian weights.
fn direct_ssim(a: &RadioMap, b: &RadioMap) -> f64 {
    let (n, sigma, l) = (11usize, 1.5f64, 1.0f64);
    let (c1, c2) = ((0.01 * l).powi(2), (0.03 * l).powi(2));
    let half = (n / 2) as f64;
    let mut weights = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    for (i, row) in weights.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - half, j as f64 - half);
            *w = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *w;
        }
    }
    let mut acc = 0.0;
    let mut count = 0;
    for r0 in 0..=a.height() - n {
        for c0 in 0..=a.width() - n {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let w = weights[i][j] / total;
                    mx += w * a.get(r0 + i, c0 + j);
                    my += w * b.get(r0 + i, c0 + j);
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let w = weights[i][j] / total;
                    let (dx, dy) = (a.get(r0 + i, c0 + j) - mx, b.get(r0 + i, c0 + j) - my);
                    vx += w * dx * dx;
                    vy += w * dy * dy;
                    cov += w * dx * dy;
                }
            }
            acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}

#[test]
fn rmse_closed_forms() {
    let a = random_map(1, 20, 17);
    assert_eq!(rmse(&a, &a).unwrap(), 0.0);
    let zero = RadioMap::constant(8, 8, 0.0).unwrap();
    let half = RadioMap::constant(8, 8, 0.5).unwrap();
    assert_eq!(rmse(&zero, &half).unwrap(), 0.5);
    assert!(rmse(&a, &zero).is_err());
}

#[test]
fn rmse_matches_summation_oracle() {
    for seed in 0..20 {
        let (a, b) = (random_map(seed, 33, 29), random_map(seed + 100, 33, 29));
        let want = brute_mse(&a, &b).sqrt();
        let got = rmse(&a, &b).unwrap();
        assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
        assert!((mse(&a, &b).unwrap() - brute_mse(&a, &b)).abs() <= 1e-12 * want * want);
    }
}

#[test]
fn psnr_closed_forms() {
    assert!((psnr_from_mse(0.25, 1.0) - 6.020_599_913_279_624).abs() < 1e-12);
    assert_eq!(psnr_from_mse(0.0, 1.0), f64::INFINITY);
    let a = random_map(3, 16, 16);
    assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    let step = 20.0 * 2f64.log10();
    assert!((psnr_from_mse(0.01 / 4.0, 1.0) - psnr_from_mse(0.01, 1.0) - step).abs() < 1e-12);
}

#[test]
fn psnr_rmse_identity() {
    for seed in 0..50 {
        let (a, b) = (random_map(seed, 24, 24), random_map(seed + 1000, 24, 24));
        let r = rmse(&a, &b).unwrap();
        assert!((psnr(&a, &b, 1.0).unwrap() + 20.0 * r.log10()).abs() < 1e-9);
    }
}

#[test]
fn ssim_matches_direct_reference() {
    let cfg = SsimConfig::default();
    let halves = map_fn(32, 32, |_, c| if c < 16 { 0.0 } else { 1.0 });
    let inverse = map_fn(32, 32, |_, c| if c < 16 { 1.0 } else { 0.0 });
    let mut pairs = vec![(halves, inverse)];
    for seed in 0..6 {
        pairs.push((random_map(seed, 24, 30), random_map(seed + 50, 24, 30)));
    }
    let smooth = |s: f64| map_fn(28, 28, move |r, c| 0.5 + 0.4 * ((r as f64 * s).sin() * (c as f64 * 0.2).cos()));
    pairs.push((smooth(0.1), smooth(0.13)));
    pairs.push((smooth(0.3), random_map(9, 28, 28)));
    pairs.push((random_map(10, 20, 20), map_fn(20, 20, |r, _| r as f64 / 19.0)));
    assert_eq!(pairs.len(), 10);
    for (a, b) in &pairs {
        let (got, want) = (ssim(a, b, &cfg).unwrap(), direct_ssim(a, b));
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        assert!((got - ssim(b, a, &cfg).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn ssim_identity_and_range() {
    let cfg = SsimConfig::default();
    for seed in 0..100 {
        let a = random_map(seed, 16, 16);
        assert!((ssim(&a, &a, &cfg).unwrap() - 1.0).abs() < 1e-9);
        let b = random_map(seed + 7777, 16, 16);
        let s = ssim(&a, &b, &cfg).unwrap();
        assert!((-1.0..1.0).contains(&s), "{s}");
    }
    assert!(ssim(&random_map(0, 10, 40), &random_map(1, 10, 40), &cfg).is_err());
    let bad = SsimConfig { window: 10, ..cfg };
    assert!(ssim(&random_map(0, 16, 16), &random_map(1, 16, 16), &bad).is_err());
}

fn brute_idw(building: &BuildingMap, obs: &ObservationSet, p: f64) -> Vec<f64> {
    let (h, w) = (building.height(), building.width());
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            if building.is_building(r, c) {
                continue;
            }
            if let Some(o) = obs.points.iter().find(|o| o.x == r && o.y == c) {
                out[r * w + c] = o.v;
                continue;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for o in &obs.points {
                let d = ((r as f64 - o.x as f64).powi(2) + (c as f64 - o.y as f64).powi(2)).sqrt();
                let wt = 1.0 / d.powf(p);
                num += wt * o.v;
                den += wt;
            }
            out[r * w + c] = num / den;
        }
    }
    out
}

fn random_obs(seed: u64, h: usize, w: usize, building: &BuildingMap, k: usize) -> ObservationSet {
    let mut rng = rng_from(seed, &[12]);
    let mut pts: Vec<ObservationPoint> = Vec::new();
    while pts.len() < k {
        let (x, y) = (rng.gen_range(0..h), rng.gen_range(0..w));
        if building.is_building(x, y) || pts.iter().any(|p| (p.x, p.y) == (x, y)) {
            continue;
        }
        pts.push(ObservationPoint { x, y, v: rng.gen() });
    }
    ObservationSet::new(pts)
}

fn random_building(seed: u64, h: usize, w: usize) -> BuildingMap {
    let mut rng = rng_from(seed, &[13]);
    BuildingMap::new(Grid::from_fn(h, w, |_, _| u8::from(rng.gen_bool(0.25)))).unwrap()
}

#[test]
fn idw_matches_brute_force() {
    for seed in 0..10 {
        let b = random_building(seed, 30, 26);
        let obs = random_obs(seed, 30, 26, &b, 1 + seed as usize * 3);
        for p in [1.0, 2.0, 3.5] {
            let got = idw_predict(&b, &obs, p).unwrap();
            for (g, w) in got.values().iter().zip(brute_idw(&b, &obs, p)) {
                assert!((g - w).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn idw_single_observation_is_constant() {
    let b = random_building(4, 12, 12);
    let obs = random_obs(4, 12, 12, &b, 1);
    let v = obs.points[0].v;
    let m = idw_predict(&b, &obs, 2.0).unwrap();
    for r in 0..12 {
        for c in 0..12 {
            let want = if b.is_building(r, c) { 0.0 } else { v };
            assert!((m.get(r, c) - want).abs() < 1e-12);
        }
    }
    assert!(idw_predict(&b, &ObservationSet::default(), 2.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rmse_triangle_inequality(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let (a, b, c) = (random_map(s1, 9, 13), random_map(s2, 9, 13), random_map(s3, 9, 13));
        let lhs = rmse(&a, &c).unwrap();
        prop_assert!(lhs <= rmse(&a, &b).unwrap() + rmse(&b, &c).unwrap() + 1e-12);
    }

    #[test]
    fn idw_stays_in_observed_range(seed in any::<u64>(), k in 1usize..12) {
        let b = random_building(seed, 14, 14);
        prop_assume!(b.free_count() >= k);
        let obs = random_obs(seed, 14, 14, &b, k);
        let lo = obs.points.iter().map(|p| p.v).fold(f64::INFINITY, f64::min);
        let hi = obs.points.iter().map(|p| p.v).fold(f64::NEG_INFINITY, f64::max);
        let m = idw_predict(&b, &obs, 2.0).unwrap();
        for (r, c) in b.free_cells() {
            let v = m.get(r, c);
            prop_assert!(lo - 1e-12 <= v && v <= hi + 1e-12);
        }
        for p in &obs.points {
            prop_assert_eq!(m.get(p.x, p.y), p.v);
        }
    }
}
