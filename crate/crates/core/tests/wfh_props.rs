use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use woftsam_core::geometry::{estimate_homography_dlt, Homography, Point2, PointPair, Quad};
use woftsam_core::wfh::*;

const SIZE: usize = 256;

/// Homography moving each corner of the 256^2 template by at most `r` px.
fn residual(rng: &mut impl Rng, r: f64) -> Homography {
    let src = Quad::rect(0.0, 0.0, (SIZE - 1) as f64, (SIZE - 1) as f64).points;
    let pairs: Vec<PointPair> = src
        .iter()
        .map(|&p| {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let m = rng.random_range(0.0..r);
            PointPair::new(p, Point2::new(p.x + m * a.cos(), p.y + m * a.sin()))
        })
        .collect();
    estimate_homography_dlt(&pairs).unwrap()
}

fn max_err_on_grid(a: &Homography, b: &Homography) -> f64 {
    let mut worst: f64 = 0.0;
    for y in (0..SIZE).step_by(15) {
        for x in (0..SIZE).step_by(15) {
            let p = Point2::new(x as f64, y as f64);
            worst = worst.max(a.warp(p).unwrap().dist(b.warp(p).unwrap()));
        }
    }
    worst
}

/// `h` on a random `share` of pixels, uniform garbage of +-60 px elsewhere.
fn contaminated(h: &Homography, share: f64, seed: u64) -> (FlowField, Vec<bool>) {
    let mut f = FlowField::from_homography(SIZE, SIZE, h);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = vec![true; SIZE * SIZE];
    for (d, t) in f.flow.iter_mut().zip(truth.iter_mut()) {
        if rng.random::<f64>() >= share {
            *d = [rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0)];
            *t = false;
        }
    }
    (f, truth)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_flow_is_recovered(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = residual(&mut rng, 40.0);
        let f = FlowField::from_homography(SIZE, SIZE, &h);
        let r = wfh_estimate(&f, None, &WfhConfig::default(), seed).unwrap();
        prop_assert!(max_err_on_grid(&r.h_resid, &h) < 1e-3);
        prop_assert_eq!(r.inlier_fraction, 1.0);
    }

    #[test]
    fn fixed_seed_is_deterministic(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, _) = contaminated(&residual(&mut rng, 20.0), 0.6, seed);
        let cfg = WfhConfig::default();
        prop_assert_eq!(wfh_estimate(&f, None, &cfg, 9).unwrap(), wfh_estimate(&f, None, &cfg, 9).unwrap());
    }

    #[test]
    fn zero_weight_pixels_change_nothing(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = residual(&mut rng, 20.0);
        let (mut a, _) = contaminated(&h, 0.7, seed);
        for y in 0..SIZE {
            for x in 0..SIZE / 3 {
                a.weight[y * SIZE + x] = 0.0;
            }
        }
        let mut b = a.clone();
        for y in 0..SIZE {
            for x in 0..SIZE / 3 {
                b.flow[y * SIZE + x] = [rng.random_range(-90.0..90.0), rng.random_range(-90.0..90.0)];
            }
        }
        let cfg = WfhConfig::default();
        prop_assert_eq!(wfh_estimate(&a, None, &cfg, 1).unwrap(), wfh_estimate(&b, None, &cfg, 1).unwrap());
    }
}

proptest! {
    #[test]
    fn inlier_fraction_grows_with_tolerance(seed: u64, lo in 0.1..5.0f64, extra in 0.0..5.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = residual(&mut rng, 20.0);
        let pairs: Vec<PointPair> = (0..300)
            .map(|_| {
                let p = Point2::new(rng.random_range(0.0..255.0), rng.random_range(0.0..255.0));
                let q = h.warp(p).unwrap();
                let w = rng.random_range(0.0..1.0);
                PointPair::weighted(p, Point2::new(q.x + rng.random_range(-8.0..8.0), q.y + rng.random_range(-8.0..8.0)), w)
            })
            .collect();
        prop_assert!(inlier_fraction(&h, &pairs, lo) <= inlier_fraction(&h, &pairs, lo + extra));
    }
}

#[test]
fn thirty_percent_inliers_are_found() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let h = residual(&mut rng, 30.0);
        let (f, _) = contaminated(&h, 0.3, seed);
        let r = wfh_estimate(&f, None, &WfhConfig::default(), seed).unwrap();
        assert!(max_err_on_grid(&r.h_resid, &h) < 0.5, "seed {seed}");
        assert!((r.inlier_fraction - 0.3).abs() <= 0.05, "seed {seed}: {}", r.inlier_fraction);
    }
}

#[test]
fn threshold_boundaries() {
    let r = |f| WfhResult {
        h_resid: Homography::identity(),
        inlier_fraction: f,
        support_count: 0,
    };
    assert!(failure_check(&r(0.19), 0.20));
    assert!(!failure_check(&r(0.20), 0.20));
    assert!(!failure_check(&r(0.25), 0.10));
    assert!(failure_check(&r(0.25), 0.30));
}

#[test]
fn low_weight_samples_fit_but_do_not_count() {
    let h = Homography::translation(3.0, -2.0);
    let mut f = FlowField::from_homography(64, 64, &h);
    f.weight.iter_mut().for_each(|w| *w = 0.3);
    let r = wfh_estimate(&f, None, &WfhConfig::default(), 0).unwrap();
    assert!(max_err_on_grid_small(&r.h_resid, &h) < 1e-6);
    assert_eq!(r.inlier_fraction, 0.0);
}

fn max_err_on_grid_small(a: &Homography, b: &Homography) -> f64 {
    (0..64)
        .step_by(7)
        .flat_map(|y| (0..64).step_by(7).map(move |x| Point2::new(x as f64, y as f64)))
        .map(|p| a.warp(p).unwrap().dist(b.warp(p).unwrap()))
        .fold(0.0, f64::max)
}
