//! Mask-to-homography tracker. Each frame the segmentation mask is reduced
//! to quad corners, the corners are labeled against the template, and a
//! pose is fit with as many degrees of freedom as the visible corners allow.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disambiguation::{
    appearance_shift, confirm_redetection, motion_shift, DisambiguationError, RedetectConfig, TemplateState,
};
use crate::features::FeatureProvider;
use crate::geometry::{
    cyclic_shift, estimate_homography, estimate_similarity, estimate_translation, polygon_signed_area, GeometryError,
    Homography, Point2, PointPair, Quad,
};
use crate::image::{read_mask, GrayImage, Mask};
use crate::maskgeom::{detect_quad, HoughConfig};
use crate::provider::{frame_file_name, ProviderError};

#[derive(Debug, Error)]
pub enum SamHError {
    #[error("initial quad is degenerate")]
    DegenerateInit,
    #[error("mask is {got:?}, frame is {want:?}")]
    MaskSize { got: (usize, usize), want: (usize, usize) },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Source of per-frame target masks.
pub trait SegmentationProvider: Send {
    fn init(&mut self, frame0: &GrayImage, quad0: &Quad) -> Result<(), ProviderError>;
    fn next(&mut self, t: usize, frame: &GrayImage) -> Result<Mask, ProviderError>;
}

/// Replays `frame_%06d.pgm` (or `.pbm`) masks from a directory.
#[derive(Clone, Debug)]
pub struct DirectoryMaskProvider {
    pub dir: PathBuf,
}

impl DirectoryMaskProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl SegmentationProvider for DirectoryMaskProvider {
    fn init(&mut self, _frame0: &GrayImage, _quad0: &Quad) -> Result<(), ProviderError> {
        Ok(())
    }

    fn next(&mut self, t: usize, _frame: &GrayImage) -> Result<Mask, ProviderError> {
        let mut path = self.dir.join(frame_file_name(t, "pgm"));
        if !path.exists() {
            path = self.dir.join(frame_file_name(t, "pbm"));
        }
        if !path.exists() {
            return Err(ProviderError::MissingFrame(t));
        }
        read_mask(&path).map_err(|e| ProviderError::format(&path, e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamHConfig {
    #[serde(skip)]
    pub hough: HoughConfig,
    pub redetect: RedetectConfig,
    /// corners closer than this to the frame edge are not visible
    pub visibility_margin: f64,
    /// partial-match gate as a fraction of the mean predicted side length
    pub match_gate: f64,
}

impl Default for SamHConfig {
    fn default() -> Self {
        Self {
            hough: HoughConfig::default(),
            redetect: RedetectConfig::default(),
            visibility_margin: 2.0,
            match_gate: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dof {
    Eight,
    Four,
    Two,
    Hold,
}

impl Dof {
    pub fn count(self) -> usize {
        match self {
            Dof::Eight => 8,
            Dof::Four => 4,
            Dof::Two => 2,
            Dof::Hold => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamHOutput {
    pub h: Homography,
    /// template corners matched to an intersection this frame
    pub corners_found: usize,
    pub dof_used: Dof,
    pub redetected: bool,
    pub lost: bool,
    /// `W(h, X_0)` with this frame's visibility
    pub quad: Quad,
}

/// Per-sequence tracker state.
pub struct SamH {
    pub cfg: SamHConfig,
    /// template corners `X_0`
    pub x0: Quad,
    pub h_prev: Homography,
    pub x_prev: Quad,
    pub lost: bool,
    pub redetect_history: Vec<usize>,
    pub template: TemplateState,
    /// labeled candidate corners of the last lost frame, for consistent
    /// ordering of appearance decisions across frames
    lost_reference: Option<[Point2; 4]>,
    features: Box<dyn FeatureProvider>,
}

/// Corners at least `margin` px inside `[0, w-1] x [0, h-1]`.
pub fn is_inside_frame(p: Point2, width: usize, height: usize, margin: f64) -> bool {
    p.x >= margin && p.y >= margin && p.x <= (width - 1) as f64 - margin && p.y <= (height - 1) as f64 - margin
}

/// Visibility of each template corner given the intersections matched to
/// it: visible iff matched and inside the frame by `margin`.
pub fn corner_visibility(matched: &[Option<Point2>; 4], width: usize, height: usize, margin: f64) -> [bool; 4] {
    matched.map(|m| m.is_some_and(|p| is_inside_frame(p, width, height, margin)))
}

/// Greedy nearest matching of detections to predicted corners within
/// `gate` px; each side is used at most once.
pub fn match_partial(predicted: &[Point2; 4], detections: &[Point2], gate: f64) -> [Option<Point2>; 4] {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in predicted.iter().enumerate() {
        for (j, d) in detections.iter().enumerate() {
            let dist = p.dist(*d);
            if dist <= gate {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = [None; 4];
    let mut used = vec![false; detections.len()];
    for (_, i, j) in pairs {
        if out[i].is_none() && !used[j] {
            out[i] = Some(detections[j]);
            used[j] = true;
        }
    }
    out
}

/// Reverses the cyclic order when its winding disagrees with `like`.
fn orient_like(c: [Point2; 4], like: &[Point2; 4]) -> [Point2; 4] {
    if polygon_signed_area(&c).signum() == polygon_signed_area(like).signum() {
        c
    } else {
        [c[0], c[3], c[2], c[1]]
    }
}

impl SamH {
    pub fn new(
        cfg: SamHConfig,
        frame0: &GrayImage,
        quad0: Quad,
        features: Box<dyn FeatureProvider>,
    ) -> Result<Self, SamHError> {
        if !quad0.is_nondegenerate() {
            return Err(SamHError::DegenerateInit);
        }
        let template = TemplateState::new(frame0.clone(), quad0, cfg.redetect.template_policy);
        Ok(Self {
            cfg,
            x0: quad0,
            h_prev: Homography::identity(),
            x_prev: quad0,
            lost: false,
            redetect_history: Vec::new(),
            template,
            lost_reference: None,
            features,
        })
    }

    fn hold(&mut self, corners_found: usize) -> SamHOutput {
        if !self.lost {
            self.lost_reference = Some(self.x_prev.points);
        }
        self.lost = true;
        self.template.freeze();
        self.x_prev.visible = [false; 4];
        SamHOutput {
            h: self.h_prev,
            corners_found,
            dof_used: Dof::Hold,
            redetected: false,
            lost: true,
            quad: self.x_prev,
        }
    }

    fn accept(&mut self, h: Homography, visible: [bool; 4], dof: Dof, redetected: bool) -> SamHOutput {
        let mut quad = self.x0.warp(&h).unwrap_or(self.x_prev);
        quad.visible = visible;
        self.h_prev = h;
        self.x_prev = quad;
        self.lost = false;
        SamHOutput {
            h,
            corners_found: visible.iter().filter(|&&v| v).count(),
            dof_used: dof,
            redetected,
            lost: false,
            quad,
        }
    }

    /// Full 8-DoF pose from four corners labeled like `X_0`; `None` when the
    /// fit fails or the warped template collapses.
    pub fn pose_from_corners(&self, aligned: &[Point2; 4]) -> Option<Homography> {
        let pairs: Vec<PointPair> = (0..4).map(|i| PointPair::new(self.x0.points[i], aligned[i])).collect();
        let h = estimate_homography(&pairs).ok()?;
        let q = self.x0.warp(&h).ok()?;
        q.is_nondegenerate().then_some(h)
    }

    /// One tracking step on `frame` with its segmentation `mask`.
    pub fn step(&mut self, frame: &GrayImage, mask: &Mask) -> Result<SamHOutput, SamHError> {
        if (mask.width, mask.height) != (frame.width, frame.height) {
            return Err(SamHError::MaskSize {
                got: (mask.width, mask.height),
                want: (frame.width, frame.height),
            });
        }
        if mask.is_empty() {
            self.redetect_history.clear();
            return Ok(self.hold(0));
        }
        let detections: Vec<Point2> = detect_quad(mask, &self.cfg.hough)
            .map(|d| d.corners.corners.iter().map(|c| c.point).collect())
            .unwrap_or_default();
        let margin = self.cfg.visibility_margin;
        let inside: Vec<Point2> = detections
            .into_iter()
            .filter(|&p| is_inside_frame(p, frame.width, frame.height, margin))
            .collect();

        if self.lost {
            return self.redetect(frame, &inside);
        }

        if inside.len() == 4 {
            let cands = orient_like(inside.clone().try_into().unwrap(), &self.x_prev.points);
            let shift = motion_shift(&self.x_prev, &cands).map(|d| d.shift).unwrap_or(0);
            let aligned = cyclic_shift(&cands, shift);
            if let Some(h) = self.pose_from_corners(&aligned) {
                let out = self.accept(h, [true; 4], Dof::Eight, false);
                self.template.update(frame, &out.quad);
                return Ok(out);
            }
        }

        let predicted = self.x_prev.points;
        let gate = self.cfg.match_gate * self.x_prev.perimeter() / 4.0;
        let matched = match_partial(&predicted, &inside, gate);
        let visible = corner_visibility(&matched, frame.width, frame.height, margin);
        let pairs: Vec<PointPair> = (0..4)
            .filter(|&i| visible[i])
            .map(|i| PointPair::new(predicted[i], matched[i].unwrap()))
            .collect();
        self.template.freeze();
        let (delta, dof) = match pairs.len() {
            0 => return Ok(self.hold(0)),
            1 => (estimate_translation(&pairs[0]), Dof::Two),
            _ => match estimate_similarity(&pairs) {
                Ok(d) => (d, Dof::Four),
                Err(_) => (estimate_translation(&pairs[0]), Dof::Two),
            },
        };
        let h = delta.compose(&self.h_prev);
        Ok(self.accept(h, visible, dof, false))
    }

    /// Lost regime: appearance decisions on full four-corner detections,
    /// accepted after `theta_r` agreeing frames.
    fn redetect(&mut self, frame: &GrayImage, inside: &[Point2]) -> Result<SamHOutput, SamHError> {
        if inside.len() != 4 {
            self.redetect_history.clear();
            return Ok(self.hold(inside.len()));
        }
        let reference = self.lost_reference.unwrap_or(self.x_prev.points);
        let raw: [Point2; 4] = inside.try_into().unwrap();
        let cands = orient_like(raw, &reference);
        // keep labels stable from one lost frame to the next
        let pre = motion_shift(&Quad::new(reference), &cands).map(|d| d.shift).unwrap_or(0);
        let cands = cyclic_shift(&cands, pre);
        self.lost_reference = Some(cands);
        let decision = match appearance_shift(&self.template.view, frame, &cands, self.features.as_mut()) {
            Ok(d) => d,
            Err(DisambiguationError::ProviderFailure(e)) => return Err(SamHError::Provider(e)),
            Err(_) => {
                self.redetect_history.clear();
                return Ok(self.hold(4));
            }
        };
        self.redetect_history.push(decision.shift);
        let Some(shift) = confirm_redetection(&self.redetect_history, self.cfg.redetect.theta_r) else {
            return Ok(self.hold(4));
        };
        let aligned = cyclic_shift(&cands, shift);
        let Some(h) = self.pose_from_corners(&aligned) else {
            self.redetect_history.clear();
            return Ok(self.hold(4));
        };
        self.redetect_history.clear();
        self.lost_reference = None;
        self.template.freeze();
        Ok(self.accept(h, [true; 4], Dof::Eight, true))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::GridFeatureProvider;
    use crate::geometry::alignment_error;

    fn tracker(quad: Quad, size: usize) -> SamH {
        SamH::new(
            SamHConfig::default(),
            &GrayImage::new(size, size),
            quad,
            Box::new(GridFeatureProvider),
        )
        .unwrap()
    }

    #[test]
    fn exact_mask_gives_full_pose() {
        let q0 = Quad::rect(100.0, 100.0, 300.0, 260.0);
        let mut s = tracker(q0, 400);
        let h = Homography::similarity(1.05, 0.1, 5.0, -4.0);
        let q1 = q0.warp(&h).unwrap();
        let frame = GrayImage::new(400, 400);
        let out = s.step(&frame, &Mask::from_quad(400, 400, &q1)).unwrap();
        assert_eq!(out.dof_used, Dof::Eight);
        assert_eq!(out.corners_found, 4);
        assert!(alignment_error(&out.h, &h, &q0).unwrap() < 1.5);
    }

    #[test]
    fn empty_mask_holds() {
        let q0 = Quad::rect(100.0, 100.0, 300.0, 260.0);
        let mut s = tracker(q0, 400);
        let frame = GrayImage::new(400, 400);
        let a = s.step(&frame, &Mask::new(400, 400)).unwrap();
        let b = s.step(&frame, &Mask::new(400, 400)).unwrap();
        assert_eq!(a.dof_used, Dof::Hold);
        assert!(a.lost && b.lost);
        assert_eq!(a.h, Homography::identity());
        assert_eq!(a.h, b.h);
        assert_eq!(s.x_prev.visible, [false; 4]);
    }

    #[test]
    fn mask_size_mismatch() {
        let mut s = tracker(Quad::rect(10.0, 10.0, 30.0, 30.0), 40);
        assert!(matches!(
            s.step(&GrayImage::new(40, 40), &Mask::new(20, 20)),
            Err(SamHError::MaskSize { .. })
        ));
    }

    #[test]
    fn visibility_margin_rule() {
        let m = [
            Some(Point2::new(10.0, 10.0)),
            Some(Point2::new(98.0, 50.0)),
            None,
            Some(Point2::new(50.0, 97.0)),
        ];
        assert_eq!(corner_visibility(&m, 100, 100, 2.0), [true, false, false, true]);
    }

    #[test]
    fn partial_matching_is_greedy_and_gated() {
        let pred = Quad::rect(0.0, 0.0, 100.0, 100.0).points;
        let det = [Point2::new(99.0, 2.0), Point2::new(3.0, 1.0), Point2::new(50.0, 50.0)];
        let m = match_partial(&pred, &det, 25.0);
        assert_eq!(m, [Some(det[1]), Some(det[0]), None, None]);
    }

    #[test]
    fn winding_is_matched() {
        let q = Quad::rect(0.0, 0.0, 10.0, 10.0).points;
        let rev = [q[0], q[3], q[2], q[1]];
        assert_eq!(orient_like(rev, &q), q);
        assert_eq!(orient_like(q, &q), q);
    }
}
