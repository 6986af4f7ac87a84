//! Mask to quadrilateral corners: boundary contours, weighted Hough line
//! voting, least-squares line refinement and line intersections.

mod contour;
mod corners;
mod hough;
mod lines;

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use thiserror::Error;

use crate::geometry::Point2;
pub use crate::image::Mask;

pub use contour::{contour_direction, extract_contours, Contour};
pub use corners::{distance_to_foreground, intersect, quad_corners, Corner, CornerSet, DiscardReason, Discarded};
pub use hough::{find_peak_lines, hough_vote, pick_peaks, smoothed_tiled, vote_weight, DirectedPoint, HoughAccumulator};
pub use lines::{fit_line_tls, refine_lines, undirected_gap, RefinedLine};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskGeomError {
    #[error("contour has {len} points, direction needs {needed}")]
    ContourTooShort { len: usize, needed: usize },
    #[error("vote offset {0} deg outside [-10, 10]")]
    OutOfRange(f64),
    #[error("no usable line intersections")]
    NoIntersections,
}

/// Line `cos(θ) x + sin(θ) y = d` with `θ ∈ [0, 2π)` and `d ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineParams {
    pub theta: f64,
    pub d: f64,
}

impl LineParams {
    /// Normalizes so that `d ≥ 0`, rotating the normal by 180° if needed.
    pub fn new(theta: f64, d: f64) -> Self {
        let (theta, d) = if d < 0.0 { (theta + PI, -d) } else { (theta, d) };
        Self {
            theta: theta.rem_euclid(TAU),
            d,
        }
    }

    pub fn normal(&self) -> Point2 {
        Point2::new(self.theta.cos(), self.theta.sin())
    }

    /// Undirected line direction in `[0, π)`.
    pub fn direction(&self) -> f64 {
        (self.theta + FRAC_PI_2).rem_euclid(PI)
    }

    pub fn signed_distance(&self, p: Point2) -> f64 {
        self.normal().dot(p) - self.d
    }

    pub fn distance(&self, p: Point2) -> f64 {
        self.signed_distance(p).abs()
    }
}

/// Hough line search parameters. Angles in degrees, distances in pixels
/// unless the name says bins.
#[derive(Clone, Debug, PartialEq)]
pub struct HoughConfig {
    pub min_contour_len: usize,
    pub angle_bins: usize,
    pub dist_bins: usize,
    /// index gap for the chord used as contour direction
    pub direction_offset: usize,
    pub delta_alpha_deg: Vec<f64>,
    pub smoothing_sigma: f64,
    pub peak_min_distance: usize,
    pub k: usize,
    pub refine_dist_tol: f64,
    pub refine_angle_tol_deg: f64,
    /// refit lines closer than this in direction may be the same edge
    pub merge_angle_deg: f64,
    /// RMS distance of the weaker line's supporters to the stronger line
    /// below which the two are merged
    pub merge_dist_px: f64,
    /// lines with less support than this share of the best line's are dropped
    pub min_support_ratio: f64,
    /// intersections farther than this from any foreground pixel are dropped
    pub mask_gate_px: f64,
    /// line pairs with |sin(angle)| below this are not intersected
    pub parallel_sin: f64,
}

impl Default for HoughConfig {
    fn default() -> Self {
        Self {
            min_contour_len: 20,
            angle_bins: 359,
            dist_bins: 100,
            direction_offset: 4,
            delta_alpha_deg: (-5..=5).map(|i| 2.0 * f64::from(i)).collect(),
            smoothing_sigma: 4.0,
            peak_min_distance: 10,
            k: 4,
            refine_dist_tol: 15.0,
            refine_angle_tol_deg: 15.0,
            merge_angle_deg: 5.0,
            merge_dist_px: 2.0,
            min_support_ratio: 0.15,
            mask_gate_px: 15.0,
            parallel_sin: 0.02,
        }
    }
}

/// Everything the corner search produced for one mask.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadDetection {
    pub hough_lines: Vec<LineParams>,
    pub lines: Vec<RefinedLine>,
    pub corners: CornerSet,
}

/// Directed contour points in image coordinates. Points on the image border
/// are left out: they trace the frame edge, not the target.
pub fn directed_points(contours: &[Contour], width: usize, height: usize, offset: usize) -> Vec<DirectedPoint> {
    let (xmax, ymax) = ((width - 1) as f64, (height - 1) as f64);
    let mut out = Vec::new();
    for c in contours {
        for (i, &p) in c.points.iter().enumerate() {
            if p.x <= 0.0 || p.y <= 0.0 || p.x >= xmax || p.y >= ymax {
                continue;
            }
            if let Ok(alpha) = contour_direction(c, i, offset) {
                out.push(DirectedPoint { pos: p, alpha });
            }
        }
    }
    out
}

/// Full mask-to-corners search.
pub fn detect_quad(mask: &Mask, cfg: &HoughConfig) -> Result<QuadDetection, MaskGeomError> {
    let contours = extract_contours(mask, cfg.min_contour_len);
    let points = directed_points(&contours, mask.width, mask.height, cfg.direction_offset);
    if points.is_empty() {
        return Err(MaskGeomError::NoIntersections);
    }
    let n = points.len() as f64;
    let origin = points.iter().fold(Point2::default(), |a, p| a + p.pos) * (1.0 / n);
    let centered: Vec<DirectedPoint> = points
        .iter()
        .map(|p| DirectedPoint {
            pos: p.pos - origin,
            alpha: p.alpha,
        })
        .collect();
    let acc = hough_vote(&centered, origin, cfg)?;
    let hough_lines = find_peak_lines(&acc, cfg);
    let lines = refine_lines(&hough_lines, &points, cfg);
    let fitted: Vec<LineParams> = lines.iter().map(|l| l.line).collect();
    let corners = quad_corners(&fitted, mask, cfg)?;
    Ok(QuadDetection {
        hough_lines,
        lines,
        corners,
    })
}
