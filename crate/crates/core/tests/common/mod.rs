#![allow(dead_code)]

use rand::Rng;
use woftsam_core::geometry::{Point2, Quad};

/// Interior angle at each corner, degrees.
pub fn interior_angles(q: &Quad) -> [f64; 4] {
    std::array::from_fn(|i| {
        let p = q.points[i];
        let a = q.points[(i + 3) % 4] - p;
        let b = q.points[(i + 1) % 4] - p;
        (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos().to_degrees()
    })
}

pub fn min_side(q: &Quad) -> f64 {
    (0..4)
        .map(|i| q.points[i].dist(q.points[(i + 1) % 4]))
        .fold(f64::INFINITY, f64::min)
}

/// Random convex quad inside `[margin, size - margin]^2` with every side at
/// least `min_side_px` and interior angles within `[lo, hi]` degrees.
pub fn random_convex_quad(rng: &mut impl Rng, size: f64, margin: f64, min_side_px: f64, lo: f64, hi: f64) -> Quad {
    loop {
        let c = Point2::new(rng.random_range(0.35 * size..0.65 * size), rng.random_range(0.35 * size..0.65 * size));
        let base: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let pts: [Point2; 4] = std::array::from_fn(|i| {
            let ang = base + i as f64 * std::f64::consts::FRAC_PI_2 + rng.random_range(-0.35..0.35);
            let r = rng.random_range(0.15 * size..0.4 * size);
            c + Point2::new(ang.cos(), ang.sin()) * r
        });
        let q = Quad::new(pts);
        let inside = pts
            .iter()
            .all(|p| p.x >= margin && p.y >= margin && p.x <= size - margin && p.y <= size - margin);
        let angles = interior_angles(&q);
        let convex = (angles.iter().sum::<f64>() - 360.0).abs() < 1e-6;
        if inside && convex && min_side(&q) >= min_side_px && angles.iter().all(|&a| a >= lo && a <= hi) {
            return q;
        }
    }
}

/// Largest per-corner distance after matching each true corner to its
/// nearest detection; infinite if fewer than four detections.
pub fn max_corner_error(truth: &Quad, found: &[Point2]) -> f64 {
    if found.len() < 4 {
        return f64::INFINITY;
    }
    truth
        .points
        .iter()
        .map(|t| found.iter().map(|f| f.dist(*t)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

use woftsam_core::synthgen::{generate, Motion, SceneSpec, Segment, SynthSequence, Texture};

/// Axis-aligned target of `tw x th` centered in a `w x h` frame, noise
/// textured, background from a different noise seed.
pub fn centered_scene(name: &str, w: usize, h: usize, tw: f64, th: f64, seed: u64) -> SceneSpec {
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (x0, y0, x1, y1) = (cx - tw / 2.0, cy - th / 2.0, cx + tw / 2.0, cy + th / 2.0);
    SceneSpec {
        name: name.into(),
        width: w,
        height: h,
        quad: [x0, y0, x1, y0, x1, y1, x0, y1],
        texture: Texture::Noise {
            seed,
            contrast: 45.0,
            min_wavelength: 10.0,
            max_wavelength: 40.0,
        },
        background: Texture::Noise {
            seed: seed.wrapping_add(1000),
            contrast: 20.0,
            min_wavelength: 20.0,
            max_wavelength: 90.0,
        },
        trajectory: vec![],
        occluders: vec![],
        blur: vec![],
        blur_weight: 0.4,
        mask_noise: 0.0,
        flow_noise: 0.0,
        seed,
    }
}

/// Random smooth trajectory of `frames` frames (segments of 20 to 40
/// frames) that keeps the target inside the frame with a 6 px margin.
pub fn random_smooth_sequence(name: &str, w: usize, h: usize, target: f64, frames: usize, seed: u64) -> SynthSequence {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut spec = centered_scene(name, w, h, target, target * 0.8, seed);
        let mut left = frames - 1;
        while left > 0 {
            let n = rng.random_range(20..=40).min(left);
            left -= n;
            spec.trajectory.push(Segment {
                frames: n,
                motions: vec![
                    Motion::Rotate {
                        deg: rng.random_range(-0.6..0.6),
                    },
                    Motion::Scale {
                        factor: rng.random_range(0.996..1.004),
                    },
                    Motion::Translate {
                        dx: rng.random_range(-0.8..0.8),
                        dy: rng.random_range(-0.8..0.8),
                    },
                    Motion::Perspective {
                        px: rng.random_range(-2e-5..2e-5),
                        py: rng.random_range(-2e-5..2e-5),
                    },
                ],
            });
        }
        let Ok(seq) = generate(&spec) else { continue };
        let inside = (0..seq.len()).all(|t| {
            seq.quad(t)
                .points
                .iter()
                .all(|p| p.x >= 6.0 && p.y >= 6.0 && p.x <= w as f64 - 7.0 && p.y <= h as f64 - 7.0)
        });
        if inside {
            return seq;
        }
    }
}
