use std::f64::consts::{FRAC_PI_2, PI};

use crate::geometry::Point2;

use super::hough::DirectedPoint;
use super::{HoughConfig, LineParams};

/// A refit line and the number of contour points that supported it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefinedLine {
    pub line: LineParams,
    pub support: usize,
}

/// Undirected angle gap in `[0, π/2]`.
pub fn undirected_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Assigns every point to the nearest line that passes both the distance and
/// direction gates, then refits each line by total least squares through its
/// supporters. Lines with fewer than two supporters, or with less than
/// `min_support_ratio` of the best line's support, are dropped.
pub fn refine_lines(lines: &[LineParams], points: &[DirectedPoint], cfg: &HoughConfig) -> Vec<RefinedLine> {
    let angle_tol = cfg.refine_angle_tol_deg.to_radians();
    let mut support: Vec<Vec<Point2>> = vec![Vec::new(); lines.len()];
    for p in points {
        let mut best: Option<(usize, f64)> = None;
        for (j, l) in lines.iter().enumerate() {
            let dist = l.distance(p.pos);
            if dist > cfg.refine_dist_tol || undirected_gap(p.alpha, l.direction()) > angle_tol {
                continue;
            }
            if best.is_none_or(|(_, bd)| dist < bd) {
                best = Some((j, dist));
            }
        }
        if let Some((j, _)) = best {
            support[j].push(p.pos);
        }
    }
    let mut fitted: Vec<(LineParams, Vec<Point2>)> = lines
        .iter()
        .zip(support)
        .filter(|(_, s)| s.len() >= 2)
        .filter_map(|(l, s)| fit_line_tls(&s, l.normal()).map(|line| (line, s)))
        .collect();
    merge_duplicates(&mut fitted, cfg);
    let strongest = fitted.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    let floor = cfg.min_support_ratio * strongest as f64;
    fitted
        .into_iter()
        .filter(|(_, s)| s.len() as f64 >= floor)
        .map(|(line, s)| RefinedLine { line, support: s.len() })
        .collect()
}

fn rms_distance(line: &LineParams, pts: &[Point2]) -> f64 {
    (pts.iter().map(|&p| line.distance(p).powi(2)).sum::<f64>() / pts.len() as f64).sqrt()
}

/// Folds a line into a stronger one when both trace the same edge: nearly
/// parallel, and the weaker line's supporters lie on the stronger line.
/// A spare Hough peak on a target with fewer than four visible edges
/// otherwise refits onto a visible edge and yields phantom corners.
fn merge_duplicates(fitted: &mut Vec<(LineParams, Vec<Point2>)>, cfg: &HoughConfig) {
    let angle_tol = cfg.merge_angle_deg.to_radians();
    loop {
        let mut pair = None;
        'search: for i in 0..fitted.len() {
            for j in 0..fitted.len() {
                let (strong, weak) = (&fitted[i], &fitted[j]);
                if i == j || strong.1.len() < weak.1.len() || (strong.1.len() == weak.1.len() && i > j) {
                    continue;
                }
                if undirected_gap(strong.0.direction(), weak.0.direction()) <= angle_tol
                    && rms_distance(&strong.0, &weak.1) <= cfg.merge_dist_px
                {
                    pair = Some((i, j));
                    break 'search;
                }
            }
        }
        let Some((i, j)) = pair else { return };
        let weak = fitted[j].1.clone();
        let hint = fitted[i].0.normal();
        fitted[i].1.extend(weak);
        if let Some(line) = fit_line_tls(&fitted[i].1, hint) {
            fitted[i].0 = line;
        }
        fitted.remove(j);
    }
}

/// Orthogonal-regression line through `pts`; the normal is oriented to
/// agree with `hint` before the non-negative-distance flip.
pub fn fit_line_tls(pts: &[Point2], hint: Point2) -> Option<LineParams> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let c = pts.iter().fold(Point2::default(), |a, &p| a + p) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    if sxx + syy <= 0.0 {
        return None;
    }
    // principal axis angle of the scatter matrix
    let dir = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let mut normal = Point2::new((dir + FRAC_PI_2).cos(), (dir + FRAC_PI_2).sin());
    if normal.dot(hint) < 0.0 {
        normal = normal * -1.0;
    }
    let theta = normal.y.atan2(normal.x);
    Some(LineParams::new(theta, normal.dot(c)))
}
