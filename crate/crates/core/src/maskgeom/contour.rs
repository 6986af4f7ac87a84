use std::collections::VecDeque;

use crate::geometry::Point2;
use crate::image::Mask;

use super::MaskGeomError;

/// Closed boundary polyline of one 8-connected foreground component.
/// Consecutive points are 8-neighbors; the last point connects back to the
/// first. Traced clockwise on screen.
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    pub points: Vec<Point2>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

// Clockwise on screen (y down), starting west.
const MOORE: [(i64, i64); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn dir_index(dx: i64, dy: i64) -> usize {
    MOORE
        .iter()
        .position(|&d| d == (dx, dy))
        .expect("offset is an 8-neighbor")
}

/// Outer boundary of each 8-connected component via Moore-neighbor tracing
/// with Jacob's stopping criterion. Contours with fewer than `min_len`
/// points are dropped. Holes are ignored.
pub fn extract_contours(mask: &Mask, min_len: usize) -> Vec<Contour> {
    let (w, h) = (mask.width, mask.height);
    let mut labeled = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            if !mask.bits[idx] || labeled[idx] {
                continue;
            }
            // flood the component so later raster hits skip it
            labeled[idx] = true;
            queue.push_back((x as i64, y as i64));
            while let Some((cx, cy)) = queue.pop_front() {
                for &(dx, dy) in &MOORE {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if mask.get_signed(nx, ny) {
                        let ni = ny as usize * w + nx as usize;
                        if !labeled[ni] {
                            labeled[ni] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            let contour = trace_from(mask, (x as i64, y as i64));
            if contour.len() >= min_len {
                out.push(contour);
            }
        }
    }
    out
}

/// `start` must be the raster-first pixel of its component, so its west
/// neighbor is background.
fn trace_from(mask: &Mask, start: (i64, i64)) -> Contour {
    let limit = 4 * mask.width * mask.height + 8;
    let mut points = vec![Point2::new(start.0 as f64, start.1 as f64)];
    let mut cur = start;
    let mut back = 0usize; // direction from cur to the background pixel we came from
    let mut first_step: Option<(i64, i64)> = None;
    loop {
        let mut next = None;
        for i in 1..=8 {
            let d = (back + i) % 8;
            let cand = (cur.0 + MOORE[d].0, cur.1 + MOORE[d].1);
            if mask.get_signed(cand.0, cand.1) {
                let prev_d = (d + 7) % 8;
                let prev = (cur.0 + MOORE[prev_d].0, cur.1 + MOORE[prev_d].1);
                next = Some((cand, dir_index(prev.0 - cand.0, prev.1 - cand.1)));
                break;
            }
        }
        let Some((n, nb)) = next else {
            break; // isolated pixel
        };
        match first_step {
            None => first_step = Some(n),
            Some(f) if cur == start && n == f => break,
            _ => {}
        }
        if points.len() >= limit {
            break;
        }
        points.push(Point2::new(n.0 as f64, n.1 as f64));
        cur = n;
        back = nb;
    }
    // the walk re-enters the start pixel before stopping
    if points.len() > 1 && points.last() == points.first() {
        points.pop();
    }
    Contour { points }
}

/// Undirected boundary direction at `i`: angle of the chord from
/// `x[i-offset]` to `x[i+offset]`, reduced to `[0, π)`.
pub fn contour_direction(c: &Contour, i: usize, offset: usize) -> Result<f64, MaskGeomError> {
    let n = c.len();
    if n < 2 * offset + 1 {
        return Err(MaskGeomError::ContourTooShort { len: n, needed: 2 * offset + 1 });
    }
    let a = c.points[(i + n - offset % n) % n];
    let b = c.points[(i + offset) % n];
    let ang = (b.y - a.y).atan2(b.x - a.x);
    Ok(ang.rem_euclid(std::f64::consts::PI))
}
