use crate::geometry::{polygon_signed_area, Point2};
use crate::image::Mask;

use super::{HoughConfig, LineParams, MaskGeomError};

/// Intersection of lines `lines.0` and `lines.1` (indices into the
/// θ-sorted line list).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corner {
    pub point: Point2,
    pub lines: (usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiscardReason {
    NearParallel,
    FarFromMask,
    NotInBestQuad,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Discarded {
    pub lines: (usize, usize),
    pub point: Option<Point2>,
    pub reason: DiscardReason,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CornerSet {
    pub corners: Vec<Corner>,
    pub discarded: Vec<Discarded>,
}

pub fn intersect(a: &LineParams, b: &LineParams) -> Option<Point2> {
    let (na, nb) = (a.normal(), b.normal());
    let det = na.cross(nb);
    if det == 0.0 {
        return None;
    }
    Some(Point2::new(
        (a.d * nb.y - b.d * na.y) / det,
        (na.x * b.d - nb.x * a.d) / det,
    ))
}

/// Euclidean distance from `p` to the nearest foreground pixel center,
/// searched up to `limit`; `None` when nothing is that close.
pub fn distance_to_foreground(mask: &Mask, p: Point2, limit: f64) -> Option<f64> {
    let r = limit.ceil() as i64 + 1;
    let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
    let mut best: Option<f64> = None;
    for y in (cy - r)..=(cy + r) {
        for x in (cx - r)..=(cx + r) {
            if !mask.get_signed(x, y) {
                continue;
            }
            let d = p.dist(Point2::new(x as f64, y as f64));
            if d <= limit && best.is_none_or(|b| d < b) {
                best = Some(d);
            }
        }
    }
    best
}

/// Pairwise intersections near the mask; at most four survive. With more
/// than four, the subset spanning the largest convex quad wins. Output is
/// ordered by increasing polar angle about the centroid, rotated so the
/// corner of the two lowest-θ lines (lexicographically smallest pair) leads.
pub fn quad_corners(lines: &[LineParams], mask: &Mask, cfg: &HoughConfig) -> Result<CornerSet, MaskGeomError> {
    let mut order: Vec<usize> = (0..lines.len()).collect();
    order.sort_by(|&a, &b| lines[a].theta.total_cmp(&lines[b].theta));
    let sorted: Vec<LineParams> = order.iter().map(|&i| lines[i]).collect();

    let mut set = CornerSet::default();
    let mut kept = Vec::new();
    for i in 0..sorted.len() {
        for j in (i + 1)..sorted.len() {
            let sin = sorted[i].normal().cross(sorted[j].normal());
            if sin.abs() < cfg.parallel_sin {
                set.discarded.push(Discarded {
                    lines: (i, j),
                    point: None,
                    reason: DiscardReason::NearParallel,
                });
                continue;
            }
            let Some(p) = intersect(&sorted[i], &sorted[j]) else { continue };
            if distance_to_foreground(mask, p, cfg.mask_gate_px).is_none() {
                set.discarded.push(Discarded {
                    lines: (i, j),
                    point: Some(p),
                    reason: DiscardReason::FarFromMask,
                });
                continue;
            }
            kept.push(Corner { point: p, lines: (i, j) });
        }
    }
    if kept.is_empty() {
        return Err(MaskGeomError::NoIntersections);
    }
    if kept.len() > 4 {
        let best = best_convex_subset(&kept);
        for (i, c) in kept.iter().enumerate() {
            if !best.contains(&i) {
                set.discarded.push(Discarded {
                    lines: c.lines,
                    point: Some(c.point),
                    reason: DiscardReason::NotInBestQuad,
                });
            }
        }
        kept = best.iter().map(|&i| kept[i]).collect();
    }
    set.corners = order_corners(kept);
    Ok(set)
}

fn by_polar_angle(pts: &mut [Corner]) {
    let n = pts.len() as f64;
    let c = pts.iter().fold(Point2::default(), |a, p| a + p.point) * (1.0 / n);
    pts.sort_by(|a, b| {
        let ta = (a.point.y - c.y).atan2(a.point.x - c.x);
        let tb = (b.point.y - c.y).atan2(b.point.x - c.x);
        ta.total_cmp(&tb)
    });
}

fn order_corners(mut corners: Vec<Corner>) -> Vec<Corner> {
    if corners.len() < 2 {
        return corners;
    }
    by_polar_angle(&mut corners);
    let lead = corners
        .iter()
        .enumerate()
        .min_by_key(|(_, c)| c.lines)
        .map(|(i, _)| i)
        .unwrap_or(0);
    corners.rotate_left(lead);
    corners
}

fn is_convex(pts: &[Point2]) -> bool {
    let n = pts.len();
    let mut sign = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let c = pts[(i + 2) % n];
        let z = (b - a).cross(c - b);
        if z.abs() < 1e-12 {
            return false;
        }
        if sign == 0.0 {
            sign = z.signum();
        } else if z.signum() != sign {
            return false;
        }
    }
    true
}

fn best_convex_subset(cands: &[Corner]) -> [usize; 4] {
    let n = cands.len();
    let mut best = ([0, 1, 2, 3], f64::NEG_INFINITY, false);
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                for d in (c + 1)..n {
                    let mut sub = [cands[a], cands[b], cands[c], cands[d]];
                    by_polar_angle(&mut sub);
                    let pts = sub.map(|s| s.point);
                    let convex = is_convex(&pts);
                    let area = polygon_signed_area(&pts).abs();
                    // convex subsets always beat non-convex ones
                    if (convex, area) > (best.2, best.1) {
                        best = ([a, b, c, d], area, convex);
                    }
                }
            }
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn square_lines() -> Vec<LineParams> {
        // square [10, 50]^2
        vec![
            LineParams::new(0.0, 50.0),
            LineParams::new(FRAC_PI_2, 50.0),
            LineParams::new(PI, -10.0),
            LineParams::new(1.5 * PI, -10.0),
        ]
    }

    #[test]
    fn intersection_of_axis_lines() {
        let p = intersect(&LineParams::new(0.0, 3.0), &LineParams::new(FRAC_PI_2, 4.0)).unwrap();
        assert!((p.x - 3.0).abs() < 1e-12 && (p.y - 4.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_lines_give_no_intersections() {
        let mask = Mask::from_fn(64, 64, |x, y| (10..=50).contains(&x) && (10..=50).contains(&y));
        let lines = [LineParams::new(0.0, 50.0), LineParams::new(PI, 10.0)];
        assert_eq!(
            quad_corners(&lines, &mask, &HoughConfig::default()),
            Err(MaskGeomError::NoIntersections)
        );
    }

    #[test]
    fn square_corners_and_order() {
        let mask = Mask::from_fn(64, 64, |x, y| (10..=50).contains(&x) && (10..=50).contains(&y));
        let set = quad_corners(&square_lines(), &mask, &HoughConfig::default()).unwrap();
        assert_eq!(set.corners.len(), 4);
        // opposite sides share a normal angle in image coordinates
        assert_eq!(set.corners[0].lines, (0, 2));
        let pts: Vec<_> = set.corners.iter().map(|c| c.point).collect();
        assert!(polygon_signed_area(&pts) > 0.0);
        for expect in [(10.0, 10.0), (50.0, 10.0), (50.0, 50.0), (10.0, 50.0)] {
            assert!(pts
                .iter()
                .any(|p| p.dist(Point2::new(expect.0, expect.1)) < 1e-9));
        }
    }

    #[test]
    fn extra_line_far_from_mask_is_discarded() {
        let mask = Mask::from_fn(200, 200, |x, y| (10..=50).contains(&x) && (10..=50).contains(&y));
        let mut lines = square_lines();
        // steep line crossing the square's edge lines far outside the mask
        lines.push(LineParams::new(0.3, 150.0));
        let set = quad_corners(&lines, &mask, &HoughConfig::default()).unwrap();
        assert_eq!(set.corners.len(), 4);
        assert!(set
            .discarded
            .iter()
            .any(|d| d.reason == DiscardReason::FarFromMask));
    }

    #[test]
    fn max_area_subset_prefers_the_outline() {
        let pts = [
            (0.0, 0.0),
            (10.0, 0.0),
            (10.0, 10.0),
            (0.0, 10.0),
            (5.0, 5.0),
        ];
        let cands: Vec<_> = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Corner {
                point: Point2::new(x, y),
                lines: (i, i + 1),
            })
            .collect();
        let mut best = best_convex_subset(&cands);
        best.sort();
        assert_eq!(best, [0, 1, 2, 3]);
    }

    #[test]
    fn foreground_distance() {
        let mut m = Mask::new(40, 40);
        m.set(20, 20, true);
        assert_eq!(distance_to_foreground(&m, Point2::new(23.0, 24.0), 15.0), Some(5.0));
        assert_eq!(distance_to_foreground(&m, Point2::new(39.0, 39.0), 15.0), None);
        // off-image queries still find the mask
        assert!(distance_to_foreground(&m, Point2::new(20.0, 34.0), 15.0).is_some());
    }
}
