//! Projective geometry: points, quads, homographies and their estimators.
//!
//! Homographies map template (frame 0) coordinates to current-frame
//! coordinates. `compose(a, b)` applies `b` first, then `a`.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest admissible magnitude of the projective denominator.
pub const WARP_EPS: f64 = 1e-12;
/// Smallest admissible |det| of a canonicalized homography.
pub const DET_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point maps to infinity (denominator {0:e})")]
    DegenerateWarp(f64),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("non-finite input")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// A point in pixel coordinates (x right, y down).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2-D cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self - o).norm()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// A correspondence between a template point and a current-frame point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointPair {
    pub src: Point2,
    pub dst: Point2,
    pub weight: f64,
}

impl PointPair {
    pub fn new(src: Point2, dst: Point2) -> Self {
        Self { src, dst, weight: 1.0 }
    }

    pub fn weighted(src: Point2, dst: Point2, weight: f64) -> Self {
        Self { src, dst, weight }
    }

    fn is_valid(&self) -> bool {
        self.src.is_finite() && self.dst.is_finite() && self.weight.is_finite() && self.weight >= 0.0
    }
}

/// Four control points with per-point visibility.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    pub points: [Point2; 4],
    pub visible: [bool; 4],
}

impl Quad {
    pub fn new(points: [Point2; 4]) -> Self {
        Self {
            points,
            visible: [true; 4],
        }
    }

    pub fn from_flat(v: [f64; 8]) -> Self {
        Self::new([
            Point2::new(v[0], v[1]),
            Point2::new(v[2], v[3]),
            Point2::new(v[4], v[5]),
            Point2::new(v[6], v[7]),
        ])
    }

    pub fn to_flat(&self) -> [f64; 8] {
        let p = &self.points;
        [p[0].x, p[0].y, p[1].x, p[1].y, p[2].x, p[2].y, p[3].x, p[3].y]
    }

    /// Axis-aligned rectangle with corners listed top-left, top-right,
    /// bottom-right, bottom-left.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new([
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    pub fn all_visible(&self) -> bool {
        self.visible.iter().all(|&v| v)
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    /// Shoelace signed area (positive for x-right/y-up counter-clockwise,
    /// i.e. clockwise on screen).
    pub fn signed_area(&self) -> f64 {
        polygon_signed_area(&self.points)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        (0..4)
            .map(|i| self.points[i].dist(self.points[(i + 1) % 4]))
            .sum()
    }

    pub fn centroid(&self) -> Point2 {
        let s = self.points.iter().fold(Point2::default(), |a, &p| a + p);
        s * 0.25
    }

    /// Cyclic relabeling: `out[i] = self[(i + k) % 4]`.
    pub fn shifted(&self, k: usize) -> Quad {
        Quad {
            points: cyclic_shift(&self.points, k),
            visible: cyclic_shift(&self.visible, k),
        }
    }

    /// Distinct points, no three collinear (triangle area above 1e-6).
    pub fn is_nondegenerate(&self) -> bool {
        let p = &self.points;
        if !p.iter().all(Point2::is_finite) {
            return false;
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                if p[i].dist(p[j]) <= 1e-9 {
                    return false;
                }
            }
        }
        for (a, b, c) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
            if 0.5 * (p[b] - p[a]).cross(p[c] - p[a]).abs() <= 1e-6 {
                return false;
            }
        }
        true
    }

    pub fn warp(&self, h: &Homography) -> Result<Quad> {
        let mut out = *self;
        for p in out.points.iter_mut() {
            *p = h.warp(*p)?;
        }
        Ok(out)
    }

    /// Whether `p` lies inside (or on) a convex or simple quad.
    pub fn contains(&self, p: Point2) -> bool {
        point_in_polygon(&self.points, p)
    }
}

pub fn cyclic_shift<T: Copy>(v: &[T; 4], k: usize) -> [T; 4] {
    std::array::from_fn(|i| v[(i + k) % 4])
}

pub fn polygon_signed_area(pts: &[Point2]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        s += pts[i].cross(pts[(i + 1) % n]);
    }
    0.5 * s
}

/// Even-odd rule; boundary points count as inside for convex polygons.
pub fn point_in_polygon(poly: &[Point2], p: Point2) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// 3x3 projective transform, stored canonically (m22 = 1 when possible).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Default for Homography {
    fn default() -> Self {
        Self::identity()
    }
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    /// `x' = s R(angle) x + t`.
    pub fn similarity(scale: f64, angle: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            m: Matrix3::new(scale * c, -scale * s, tx, scale * s, scale * c, ty, 0.0, 0.0, 1.0),
        }
    }

    /// Validates invertibility and canonicalizes the scale.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let m = canonicalize(m).ok_or(GeometryError::SingularMatrix)?;
        if m.determinant().abs() <= DET_EPS {
            return Err(GeometryError::SingularMatrix);
        }
        Ok(Self { m })
    }

    pub fn from_row_major(v: [f64; 9]) -> Result<Self> {
        Self::from_matrix(Matrix3::from_row_slice(&v))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn warp(&self, p: Point2) -> Result<Point2> {
        let m = &self.m;
        let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
        if w.abs() <= WARP_EPS {
            return Err(GeometryError::DegenerateWarp(w));
        }
        let x = (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w;
        let y = (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w;
        Ok(Point2::new(x, y))
    }

    /// `self ∘ other`: warps by `other` first.
    pub fn compose(&self, other: &Homography) -> Homography {
        let m = self.m * other.m;
        Homography {
            m: canonicalize(m).unwrap_or(m),
        }
    }

    pub fn inverse(&self) -> Result<Homography> {
        let inv = self.m.try_inverse().ok_or(GeometryError::SingularMatrix)?;
        Self::from_matrix(inv)
    }

    /// Jacobian determinant of the warp at `p`; positive when orientation
    /// is preserved locally.
    pub fn local_det(&self, p: Point2) -> f64 {
        let m = &self.m;
        let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
        m.determinant() / (w * w * w)
    }
}

fn canonicalize(m: Matrix3<f64>) -> Option<Matrix3<f64>> {
    let fro = m.norm();
    if fro == 0.0 || !fro.is_finite() {
        return None;
    }
    let h22 = m[(2, 2)];
    if h22.abs() > 1e-12 * fro {
        Some(m / h22)
    } else {
        Some(m / fro)
    }
}

pub fn warp_point(h: &Homography, p: Point2) -> Result<Point2> {
    h.warp(p)
}

pub fn compose(a: &Homography, b: &Homography) -> Homography {
    a.compose(b)
}

pub fn invert(h: &Homography) -> Result<Homography> {
    h.inverse()
}

/// Similarity normalizing a point set: centroid to origin, mean distance √2.
fn normalizing_transform(pts: impl Iterator<Item = (Point2, f64)> + Clone) -> Option<Matrix3<f64>> {
    let (mut sw, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for (p, w) in pts.clone() {
        sw += w;
        cx += w * p.x;
        cy += w * p.y;
    }
    if sw <= 0.0 {
        return None;
    }
    let c = Point2::new(cx / sw, cy / sw);
    let mean_dist = pts.map(|(p, w)| w * p.dist(c)).sum::<f64>() / sw;
    if mean_dist <= 1e-300 {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0))
}

fn apply(m: &Matrix3<f64>, p: Point2) -> Point2 {
    let v = m * Vector3::new(p.x, p.y, 1.0);
    Point2::new(v.x / v.z, v.y / v.z)
}

/// Weighted, normalized DLT without nonlinear refinement.
pub fn estimate_homography_dlt(pairs: &[PointPair]) -> Result<Homography> {
    if pairs.iter().any(|p| !p.is_valid()) {
        return Err(GeometryError::NonFinite);
    }
    let active: Vec<&PointPair> = pairs.iter().filter(|p| p.weight > 0.0).collect();
    if active.len() < 4 {
        return Err(GeometryError::InsufficientPoints {
            needed: 4,
            got: active.len(),
        });
    }
    let t_src = normalizing_transform(active.iter().map(|p| (p.src, p.weight)))
        .ok_or(GeometryError::DegenerateConfiguration("coincident source points"))?;
    let t_dst = normalizing_transform(active.iter().map(|p| (p.dst, p.weight)))
        .ok_or(GeometryError::DegenerateConfiguration("coincident destination points"))?;

    let src_n: Vec<Point2> = active.iter().map(|p| apply(&t_src, p.src)).collect();
    if is_collinear(&src_n) {
        return Err(GeometryError::DegenerateConfiguration("collinear source points"));
    }

    let rows = (2 * active.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, s)) in active.iter().zip(&src_n).enumerate() {
        let d = apply(&t_dst, p.dst);
        let w = p.weight;
        let r0 = [-s.x, -s.y, -1.0, 0.0, 0.0, 0.0, d.x * s.x, d.x * s.y, d.x];
        let r1 = [0.0, 0.0, 0.0, -s.x, -s.y, -1.0, d.y * s.x, d.y * s.y, d.y];
        for c in 0..9 {
            a[(2 * i, c)] = w * r0[c];
            a[(2 * i + 1, c)] = w * r1[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::DegenerateConfiguration("svd failed"))?;
    let sv = &svd.singular_values;
    // nalgebra does not guarantee ordering; pick the smallest explicitly.
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let (smallest, second) = (order[0], order[1]);
    let largest = order[order.len() - 1];
    if sv[second] <= 1e-10 * sv[largest] {
        return Err(GeometryError::DegenerateConfiguration("rank-deficient design matrix"));
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    if (hn / hn.norm()).determinant().abs() <= 1e-10 {
        return Err(GeometryError::DegenerateConfiguration("singular solution"));
    }
    let t_dst_inv = t_dst.try_inverse().ok_or(GeometryError::SingularMatrix)?;
    Homography::from_matrix(t_dst_inv * hn * t_src)
        .map_err(|_| GeometryError::DegenerateConfiguration("singular solution"))
}

fn is_collinear(pts: &[Point2]) -> bool {
    let n = pts.len() as f64;
    let c = pts.iter().fold(Point2::default(), |a, &p| a + p) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    // ratio of the small to the large eigenvalue of the scatter matrix
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let lmax = 0.5 * tr + disc;
    let lmin = 0.5 * tr - disc;
    lmax <= 0.0 || lmin <= 1e-12 * lmax
}

/// Weighted DLT followed by Levenberg-Marquardt on the one-way
/// reprojection error when the system is overdetermined.
pub fn estimate_homography(pairs: &[PointPair]) -> Result<Homography> {
    let h = estimate_homography_dlt(pairs)?;
    if pairs.iter().filter(|p| p.weight > 0.0).count() > 4 {
        Ok(refine_homography(&h, pairs, 20))
    } else {
        Ok(h)
    }
}

fn reprojection_cost(h: &[f64; 9], pairs: &[PointPair]) -> f64 {
    let mut cost = 0.0;
    for p in pairs {
        let w = h[6] * p.src.x + h[7] * p.src.y + h[8];
        if w.abs() <= WARP_EPS {
            return f64::INFINITY;
        }
        let u = (h[0] * p.src.x + h[1] * p.src.y + h[2]) / w - p.dst.x;
        let v = (h[3] * p.src.x + h[4] * p.src.y + h[5]) / w - p.dst.y;
        cost += p.weight * (u * u + v * v);
    }
    cost
}

/// Levenberg-Marquardt over the 8 entries with m22 fixed at 1.
pub fn refine_homography(h: &Homography, pairs: &[PointPair], max_iter: usize) -> Homography {
    let mut cur = h.to_row_major();
    if (cur[8] - 1.0).abs() > 1e-12 {
        return *h;
    }
    let mut cost = reprojection_cost(&cur, pairs);
    let mut lambda = 1e-3;
    for _ in 0..max_iter {
        if cost <= 1e-30 {
            break;
        }
        let mut jtj = nalgebra::SMatrix::<f64, 8, 8>::zeros();
        let mut jtr = nalgebra::SVector::<f64, 8>::zeros();
        for p in pairs.iter().filter(|p| p.weight > 0.0) {
            let (x, y) = (p.src.x, p.src.y);
            let w = cur[6] * x + cur[7] * y + cur[8];
            let u = (cur[0] * x + cur[1] * y + cur[2]) / w;
            let v = (cur[3] * x + cur[4] * y + cur[5]) / w;
            let ju = [x / w, y / w, 1.0 / w, 0.0, 0.0, 0.0, -u * x / w, -u * y / w];
            let jv = [0.0, 0.0, 0.0, x / w, y / w, 1.0 / w, -v * x / w, -v * y / w];
            let (ru, rv) = (u - p.dst.x, v - p.dst.y);
            for r in 0..8 {
                jtr[r] += p.weight * (ju[r] * ru + jv[r] * rv);
                for c in 0..8 {
                    jtj[(r, c)] += p.weight * (ju[r] * ju[c] + jv[r] * jv[c]);
                }
            }
        }
        let mut improved = false;
        for _ in 0..10 {
            let mut damped = jtj;
            for d in 0..8 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = damped.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut cand = cur;
            for r in 0..8 {
                cand[r] += step[r];
            }
            let c = reprojection_cost(&cand, pairs);
            if c < cost {
                cur = cand;
                cost = c;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Homography::from_row_major(cur).unwrap_or(*h)
}

/// Closed-form weighted 4-DoF similarity (rotation, single scale,
/// translation), solved as complex linear least squares `d = a s + b`.
pub fn estimate_similarity(pairs: &[PointPair]) -> Result<Homography> {
    if pairs.iter().any(|p| !p.is_valid()) {
        return Err(GeometryError::NonFinite);
    }
    let active: Vec<&PointPair> = pairs.iter().filter(|p| p.weight > 0.0).collect();
    if active.len() < 2 {
        return Err(GeometryError::InsufficientPoints {
            needed: 2,
            got: active.len(),
        });
    }
    let sw: f64 = active.iter().map(|p| p.weight).sum();
    let sc = active.iter().fold(Point2::default(), |a, p| a + p.src * p.weight) * (1.0 / sw);
    let dc = active.iter().fold(Point2::default(), |a, p| a + p.dst * p.weight) * (1.0 / sw);
    let (mut den, mut re, mut im) = (0.0, 0.0, 0.0);
    for p in &active {
        let s = p.src - sc;
        let d = p.dst - dc;
        den += p.weight * s.norm_sq();
        re += p.weight * (d.x * s.x + d.y * s.y);
        im += p.weight * (d.y * s.x - d.x * s.y);
    }
    if den <= 1e-18 {
        return Err(GeometryError::DegenerateConfiguration("coincident source points"));
    }
    let (ar, ai) = (re / den, im / den);
    if (ar * ar + ai * ai).sqrt() <= 1e-12 {
        return Err(GeometryError::DegenerateConfiguration("zero scale"));
    }
    let tx = dc.x - (ar * sc.x - ai * sc.y);
    let ty = dc.y - (ai * sc.x + ar * sc.y);
    Homography::from_matrix(Matrix3::new(ar, -ai, tx, ai, ar, ty, 0.0, 0.0, 1.0))
}

pub fn estimate_translation(pair: &PointPair) -> Homography {
    let d = pair.dst - pair.src;
    Homography::translation(d.x, d.y)
}

/// RMSE over the four template control points warped by `h` and `h_star`.
pub fn alignment_error(h: &Homography, h_star: &Homography, template: &Quad) -> Result<f64> {
    let mut acc = 0.0;
    for &x in &template.points {
        let a = h_star.warp(x)?;
        let b = h.warp(x)?;
        let (dx, dy) = (a.x - b.x, a.y - b.y);
        acc += dx * dx + dy * dy;
    }
    Ok((acc / 4.0).sqrt())
}

/// Maximum one-way reprojection error of `h` over `pairs`.
pub fn max_reprojection_error(h: &Homography, pairs: &[PointPair]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in pairs {
        worst = worst.max(h.warp(p.src)?.dist(p.dst));
    }
    Ok(worst)
}
