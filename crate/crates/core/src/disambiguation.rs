//! Cyclic corner-labeling ambiguity: four detected corners can be matched
//! to the four template corners in four cyclic orders. Normal tracking uses
//! a zero-velocity motion model; re-detection compares appearance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureMap, FeatureProvider, CROP_SIZE};
use crate::geometry::{cyclic_shift, estimate_homography_dlt, GeometryError, Point2, PointPair, Quad};
use crate::image::GrayImage;
use crate::provider::ProviderError;

#[derive(Debug, Error)]
pub enum DisambiguationError {
    #[error("need 4 candidate corners, got {0}")]
    IncompleteCandidates(usize),
    #[error("candidate corners do not form a proper quad")]
    DegenerateCandidateQuad,
    #[error("feature provider failed: {0}")]
    ProviderFailure(#[from] ProviderError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Motion,
    Appearance,
}

/// `shift` relabels candidates as `aligned[i] = candidates[(i + shift) % 4]`.
/// Motion scores are squared distances (lower wins), appearance scores are
/// similarities (higher wins).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShiftDecision {
    pub shift: usize,
    pub score: f64,
    pub regime: Regime,
}

impl ShiftDecision {
    pub fn apply(&self, candidates: &[Point2; 4]) -> [Point2; 4] {
        cyclic_shift(candidates, self.shift)
    }
}

fn as_four(candidates: &[Point2]) -> Result<[Point2; 4], DisambiguationError> {
    candidates
        .try_into()
        .map_err(|_| DisambiguationError::IncompleteCandidates(candidates.len()))
}

/// Zero-velocity model: the cyclic shift that puts each candidate closest
/// to the previous position of the same corner.
pub fn motion_shift(prev: &Quad, candidates: &[Point2]) -> Result<ShiftDecision, DisambiguationError> {
    let c = as_four(candidates)?;
    let mut best = ShiftDecision {
        shift: 0,
        score: f64::INFINITY,
        regime: Regime::Motion,
    };
    for k in 0..4 {
        let score: f64 = (0..4).map(|i| (prev.points[i] - c[(i + k) % 4]).norm_sq()).sum();
        if score < best.score {
            best.shift = k;
            best.score = score;
        }
    }
    Ok(best)
}

/// A stored view of the target: an image and the target's corners in it,
/// labeled like the initial quad.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateView {
    pub image: GrayImage,
    pub quad: Quad,
}

impl TemplateView {
    pub fn area(&self) -> f64 {
        self.quad.area()
    }
}

/// Pixel grid of the object crop in frame coordinates: the candidate
/// bounding box grown by 10% and clamped to the frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl CropBox {
    pub fn around(points: &[Point2], width: usize, height: usize) -> Option<Self> {
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let (gx, gy) = (0.05 * (x1 - x0), 0.05 * (y1 - y0));
        let b = Self {
            x0: (x0 - gx).max(0.0),
            y0: (y0 - gy).max(0.0),
            x1: (x1 + gx).min((width - 1) as f64),
            y1: (y1 + gy).min((height - 1) as f64),
        };
        (b.x1 - b.x0 >= 1.0 && b.y1 - b.y0 >= 1.0).then_some(b)
    }

    /// Frame position of crop pixel `(u, v)`.
    pub fn position(&self, u: usize, v: usize) -> Point2 {
        let s = CROP_SIZE as f64;
        Point2::new(
            self.x0 + (u as f64 + 0.5) * (self.x1 - self.x0) / s,
            self.y0 + (v as f64 + 0.5) * (self.y1 - self.y0) / s,
        )
    }
}

/// Cells of a 224-px crop that are at least half covered by valid pixels.
fn valid_cells(valid: &[bool], grid: usize) -> Vec<bool> {
    let cell = CROP_SIZE / grid;
    (0..grid * grid)
        .map(|i| {
            let (cx, cy) = (i % grid, i / grid);
            let mut n = 0;
            for v in cy * cell..(cy + 1) * cell {
                for u in cx * cell..(cx + 1) * cell {
                    n += usize::from(valid[v * CROP_SIZE + u]);
                }
            }
            2 * n >= cell * cell
        })
        .collect()
}

/// Mean cell dot product over cells that are valid and nonzero in both maps.
pub fn feature_similarity(a: &FeatureMap, b: &FeatureMap, valid: Option<&[bool]>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for i in 0..a.cells().min(b.cells()) {
        if valid.is_some_and(|v| !v[i]) || a.is_zero_cell(i) || b.is_zero_cell(i) {
            continue;
        }
        sum += a.cell_dot(b, i);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Similarities closer than this are ties, resolved to the smaller shift.
pub const APPEARANCE_TIE_EPS: f64 = 1e-9;

/// Compares the current object crop against the template warped onto each
/// of the four cyclic relabelings of `candidates`.
pub fn appearance_shift(
    template: &TemplateView,
    frame: &GrayImage,
    candidates: &[Point2],
    provider: &mut dyn FeatureProvider,
) -> Result<ShiftDecision, DisambiguationError> {
    let scores = appearance_scores(template, frame, candidates, provider)?;
    let mut best = ShiftDecision {
        shift: 0,
        score: scores[0],
        regime: Regime::Appearance,
    };
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > best.score + APPEARANCE_TIE_EPS {
            best.shift = k;
            best.score = s;
        }
    }
    Ok(best)
}

/// Similarity for each shift `k = 0..4`.
pub fn appearance_scores(
    template: &TemplateView,
    frame: &GrayImage,
    candidates: &[Point2],
    provider: &mut dyn FeatureProvider,
) -> Result<[f64; 4], DisambiguationError> {
    let c = as_four(candidates)?;
    if !Quad::new(c).is_nondegenerate() {
        return Err(DisambiguationError::DegenerateCandidateQuad);
    }
    let bx = CropBox::around(&c, frame.width, frame.height).ok_or(DisambiguationError::DegenerateCandidateQuad)?;
    let n = CROP_SIZE * CROP_SIZE;
    let positions: Vec<Point2> = (0..n).map(|i| bx.position(i % CROP_SIZE, i / CROP_SIZE)).collect();
    let mut current = GrayImage::new(CROP_SIZE, CROP_SIZE);
    let mut valid = vec![false; n];
    for (i, &p) in positions.iter().enumerate() {
        if !crate::geometry::point_in_polygon(&c, p) {
            continue;
        }
        if let Some(v) = frame.sample_point(p) {
            current.data[i] = v;
            valid[i] = true;
        }
    }
    let cur_feat = provider.extract(&current)?.normalized();
    let grid = cur_feat.hf;
    let mut scores = [0.0; 4];
    for (k, score) in scores.iter_mut().enumerate() {
        let aligned = cyclic_shift(&c, k);
        let pairs: Vec<PointPair> = (0..4).map(|i| PointPair::new(template.quad.points[i], aligned[i])).collect();
        let inv = estimate_homography_dlt(&pairs)?.inverse()?;
        let mut warped = GrayImage::new(CROP_SIZE, CROP_SIZE);
        let mut valid_k = valid.clone();
        for (i, &p) in positions.iter().enumerate() {
            if !valid_k[i] {
                continue;
            }
            match inv.warp(p).ok().and_then(|q| template.image.sample_point(q)) {
                Some(v) => warped.data[i] = v,
                None => valid_k[i] = false,
            }
        }
        let feat = provider.extract(&warped)?.normalized();
        let cells = if feat.hf == grid && feat.wf == grid && CROP_SIZE.is_multiple_of(grid) {
            Some(valid_cells(&valid_k, grid))
        } else {
            None
        };
        *score = feature_similarity(&feat, &cur_feat, cells.as_deref());
    }
    Ok(scores)
}

/// The shift agreed on by the last `theta_r` appearance decisions, if any.
pub fn confirm_redetection(history: &[usize], theta_r: usize) -> Option<usize> {
    if theta_r == 0 || history.len() < theta_r {
        return None;
    }
    let tail = &history[history.len() - theta_r..];
    tail.iter().all(|&s| s == tail[0]).then_some(tail[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplatePolicy {
    InitOnly,
    BiggestSoFar,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedetectConfig {
    pub theta_r: usize,
    pub template_policy: TemplatePolicy,
}

impl Default for RedetectConfig {
    fn default() -> Self {
        Self {
            theta_r: 5,
            template_policy: TemplatePolicy::BiggestSoFar,
        }
    }
}

/// Appearance template. Under `BiggestSoFar` it follows the largest fully
/// visible view until a corner is lost or a re-detection happens.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateState {
    pub view: TemplateView,
    pub frozen: bool,
    pub policy: TemplatePolicy,
}

impl TemplateState {
    pub fn new(image: GrayImage, quad: Quad, policy: TemplatePolicy) -> Self {
        Self {
            view: TemplateView { image, quad },
            frozen: policy == TemplatePolicy::InitOnly,
            policy,
        }
    }

    /// Returns whether the stored view was replaced.
    pub fn update(&mut self, frame: &GrayImage, quad: &Quad) -> bool {
        if self.frozen {
            return false;
        }
        if !quad.all_visible() {
            self.frozen = true;
            return false;
        }
        if quad.area() > self.view.area() {
            self.view = TemplateView {
                image: frame.clone(),
                quad: *quad,
            };
            return true;
        }
        false
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }
}
