//! Intensity-alignment preview between the working initial-frame quad and
//! a reference frame's ground truth.

use thiserror::Error;
use woftsam_core::geometry::{alignment_error, estimate_homography_dlt, Homography, PointPair, Quad};
use woftsam_core::image::GrayImage;

#[derive(Debug, Error)]
pub enum OverlayError {
    #[error("degenerate quad: {0}")]
    DegenerateQuad(String),
}

#[derive(Clone, Debug)]
pub struct Overlay {
    /// 50/50 blend of the reference crop and the warped initial frame
    pub image: GrayImage,
    /// top-left of the crop in reference-frame pixels
    pub origin: (usize, usize),
    /// working quad to reference ground truth
    pub h: Homography,
    /// alignment error of `h` against the pose induced by the original
    /// annotation, over the original quad
    pub alignment_error: f64,
    /// mean |reference - warped| inside the reference quad, in [0, 1]
    pub mean_abs_diff: f64,
}

fn quad_homography(src: &Quad, dst: &Quad, what: &str) -> Result<Homography, OverlayError> {
    if !src.is_nondegenerate() || !dst.is_nondegenerate() {
        return Err(OverlayError::DegenerateQuad(what.into()));
    }
    let pairs: Vec<PointPair> = src.points.iter().zip(&dst.points).map(|(&s, &d)| PointPair::new(s, d)).collect();
    estimate_homography_dlt(&pairs).map_err(|e| OverlayError::DegenerateQuad(format!("{what}: {e}")))
}

/// Crop box around `q`: bounding box grown by 10% per side, clamped.
fn crop_box(q: &Quad, width: usize, height: usize) -> [usize; 4] {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in &q.points {
        (x0, y0, x1, y1) = (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y));
    }
    let (mx, my) = (0.1 * (x1 - x0), 0.1 * (y1 - y0));
    let clamp = |v: f64, hi: usize| v.clamp(0.0, (hi - 1) as f64);
    [
        clamp((x0 - mx).floor(), width) as usize,
        clamp((y0 - my).floor(), height) as usize,
        clamp((x1 + mx).ceil(), width) as usize,
        clamp((y1 + my).ceil(), height) as usize,
    ]
}

pub fn render_overlay(
    init: &GrayImage,
    reference: &GrayImage,
    working: &Quad,
    reference_quad: &Quad,
    original: &Quad,
) -> Result<Overlay, OverlayError> {
    let h = quad_homography(working, reference_quad, "working quad")?;
    let h_orig = quad_homography(original, reference_quad, "original quad")?;
    let err = alignment_error(&h, &h_orig, original).map_err(|e| OverlayError::DegenerateQuad(e.to_string()))?;
    let inv = h.inverse().map_err(|e| OverlayError::DegenerateQuad(e.to_string()))?;

    let [x0, y0, x1, y1] = crop_box(reference_quad, reference.width, reference.height);
    let (mut diff, mut n) = (0.0, 0usize);
    let image = GrayImage::from_fn(x1 - x0 + 1, y1 - y0 + 1, |cx, cy| {
        let (x, y) = (x0 + cx, y0 + cy);
        let r = reference.get(x, y);
        let p = woftsam_core::geometry::Point2::new(x as f64, y as f64);
        let Some(w) = inv.warp(p).ok().and_then(|s| init.sample_point(s)) else {
            return r;
        };
        if reference_quad.contains(p) {
            diff += f64::from((r - w).abs());
            n += 1;
        }
        0.5 * (r + w)
    });
    Ok(Overlay {
        image,
        origin: (x0, y0),
        h,
        alignment_error: err,
        mean_abs_diff: if n > 0 { diff / n as f64 / 255.0 } else { 0.0 },
    })
}
