use std::f64::consts::{PI, TAU};

use crate::geometry::Point2;

use super::{HoughConfig, LineParams, MaskGeomError};

/// Contour point with its undirected boundary direction `alpha` in `[0, π)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectedPoint {
    pub pos: Point2,
    pub alpha: f64,
}

/// Weighted (normal angle, distance) votes.
///
/// Angle bin `a` covers normal angle `a * 2π / angle_bins`; distance bin `k`
/// covers `k * max_dist / (dist_bins - 1)`. Distances are measured from
/// `origin`, the centroid subtracted before voting.
#[derive(Clone, Debug, PartialEq)]
pub struct HoughAccumulator {
    pub angle_bins: usize,
    pub dist_bins: usize,
    pub max_dist: f64,
    pub origin: Point2,
    pub votes: Vec<f64>,
}

impl HoughAccumulator {
    pub fn new(angle_bins: usize, dist_bins: usize, max_dist: f64, origin: Point2) -> Self {
        Self {
            angle_bins,
            dist_bins,
            max_dist,
            origin,
            votes: vec![0.0; angle_bins * dist_bins],
        }
    }

    #[inline]
    pub fn get(&self, a: usize, d: usize) -> f64 {
        self.votes[a * self.dist_bins + d]
    }

    pub fn total_mass(&self) -> f64 {
        self.votes.iter().sum()
    }

    pub fn angle_step(&self) -> f64 {
        TAU / self.angle_bins as f64
    }

    pub fn dist_step(&self) -> f64 {
        if self.dist_bins > 1 {
            self.max_dist / (self.dist_bins - 1) as f64
        } else {
            0.0
        }
    }

    /// Bin indices of the line through `p` (relative to origin) with
    /// direction `phi`.
    pub fn bin_of(&self, p: Point2, phi: f64) -> (usize, usize) {
        let mut theta = phi + 0.5 * PI;
        let mut d = p.x * theta.cos() + p.y * theta.sin();
        if d < 0.0 {
            theta += PI;
            d = -d;
        }
        let theta = theta.rem_euclid(TAU);
        let a = (theta / self.angle_step()).round() as usize % self.angle_bins;
        let step = self.dist_step();
        let k = if step > 0.0 {
            ((d / step).round() as usize).min(self.dist_bins - 1)
        } else {
            0
        };
        (a, k)
    }
}

/// Linear vote ramp: full weight at the measured direction, half at ±10°.
pub fn vote_weight(delta_alpha_deg: f64) -> Result<f64, MaskGeomError> {
    if !(delta_alpha_deg.abs() <= 10.0) {
        return Err(MaskGeomError::OutOfRange(delta_alpha_deg));
    }
    Ok(1.0 - delta_alpha_deg.abs() / 20.0)
}

/// Every point votes for the lines through it at `alpha + Δα` for each
/// configured offset. Points must already be centered on `origin`.
pub fn hough_vote(points: &[DirectedPoint], origin: Point2, cfg: &HoughConfig) -> Result<HoughAccumulator, MaskGeomError> {
    let max_dist = points.iter().map(|p| p.pos.norm()).fold(0.0, f64::max);
    let mut acc = HoughAccumulator::new(cfg.angle_bins, cfg.dist_bins, max_dist, origin);
    let offsets: Vec<(f64, f64)> = cfg
        .delta_alpha_deg
        .iter()
        .map(|&da| Ok((da.to_radians(), vote_weight(da)?)))
        .collect::<Result<_, MaskGeomError>>()?;
    for p in points {
        for &(da, w) in &offsets {
            let (a, k) = acc.bin_of(p.pos, p.alpha + da);
            acc.votes[a * acc.dist_bins + k] += w;
        }
    }
    Ok(acc)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).round().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Half-sample symmetric boundary, as in `scipy.ndimage` "reflect".
fn reflect(i: i64, n: i64) -> usize {
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m - 1 }) as usize
}

/// Accumulator tiled three times along the angle axis and smoothed with an
/// isotropic Gaussian. Returned row-major `(3 * angle_bins) x dist_bins`.
pub fn smoothed_tiled(acc: &HoughAccumulator, sigma: f64) -> Vec<f64> {
    let (na, nd) = (3 * acc.angle_bins, acc.dist_bins);
    let mut tiled = vec![0.0; na * nd];
    for a in 0..na {
        let src = a % acc.angle_bins;
        tiled[a * nd..(a + 1) * nd].copy_from_slice(&acc.votes[src * nd..(src + 1) * nd]);
    }
    if sigma <= 0.0 {
        return tiled;
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    // distance axis
    let mut tmp = vec![0.0; na * nd];
    for a in 0..na {
        let row = &tiled[a * nd..(a + 1) * nd];
        for d in 0..nd {
            let mut s = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                s += kv * row[reflect(d as i64 + j as i64 - r, nd as i64)];
            }
            tmp[a * nd + d] = s;
        }
    }
    // angle axis; the tiling supplies the periodic neighbors
    let mut out = vec![0.0; na * nd];
    for a in 0..na as i64 {
        for (j, &kv) in k.iter().enumerate() {
            let src = a + j as i64 - r;
            if src < 0 || src >= na as i64 {
                continue;
            }
            let (dst_row, src_row) = (a as usize * nd, src as usize * nd);
            for d in 0..nd {
                out[dst_row + d] += kv * tmp[src_row + d];
            }
        }
    }
    out
}

/// Greedy 2-D peak picking: local maxima sorted by value, each suppressing
/// others closer than `min_distance` bins in Chebyshev distance. Returns
/// `(angle_index, dist_index, value)` in the tiled grid.
pub fn pick_peaks(grid: &[f64], rows: usize, cols: usize, min_distance: usize) -> Vec<(usize, usize, f64)> {
    let mut cands = Vec::new();
    for a in 0..rows {
        for d in 0..cols {
            let v = grid[a * cols + d];
            if v <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'n: for da in -1i64..=1 {
                for dd in -1i64..=1 {
                    if da == 0 && dd == 0 {
                        continue;
                    }
                    let (na, nd) = (a as i64 + da, d as i64 + dd);
                    if na < 0 || nd < 0 || na >= rows as i64 || nd >= cols as i64 {
                        continue;
                    }
                    if grid[na as usize * cols + nd as usize] > v {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                cands.push((a, d, v));
            }
        }
    }
    cands.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let mut kept: Vec<(usize, usize, f64)> = Vec::new();
    for c in cands {
        let close = kept
            .iter()
            .any(|k| k.0.abs_diff(c.0).max(k.1.abs_diff(c.1)) < min_distance);
        if !close {
            kept.push(c);
        }
    }
    kept
}

/// Top-`k` lines from the smoothed, periodically unwrapped accumulator,
/// sorted by normal angle and expressed in image coordinates.
pub fn find_peak_lines(acc: &HoughAccumulator, cfg: &HoughConfig) -> Vec<LineParams> {
    if acc.total_mass() <= 0.0 {
        return Vec::new();
    }
    let rows = 3 * acc.angle_bins;
    let grid = smoothed_tiled(acc, cfg.smoothing_sigma);
    let mut peaks: Vec<_> = pick_peaks(&grid, rows, acc.dist_bins, cfg.peak_min_distance)
        .into_iter()
        .filter(|p| p.0 >= acc.angle_bins && p.0 < 2 * acc.angle_bins)
        .collect();
    peaks.truncate(cfg.k);
    let mut lines: Vec<LineParams> = peaks
        .into_iter()
        .map(|(a, d, _)| {
            let theta = (a - acc.angle_bins) as f64 * acc.angle_step();
            let dist = d as f64 * acc.dist_step();
            let n = Point2::new(theta.cos(), theta.sin());
            LineParams::new(theta, dist + n.dot(acc.origin))
        })
        .collect();
    lines.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    lines
}
