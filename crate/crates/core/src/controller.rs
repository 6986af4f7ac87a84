//! Two-attempt fusion tracker. Flow is first tried from the previous pose;
//! if too few correspondences agree it is retried from the mask-based pose,
//! and if that also fails the mask-based pose is used as is.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureProvider;
use crate::geometry::{GeometryError, Homography, Point2, Quad};
use crate::image::{GrayImage, Mask};
use crate::provider::ProviderError;
use crate::samh::{SamH, SamHConfig, SamHError, SamHOutput, SegmentationProvider};
use crate::wfh::{failure_check, wfh_estimate, FlowField, FlowProvider, FlowRequest, WfhConfig, WfhResult};

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error(transparent)]
    SamH(#[from] SamHError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub inlier_threshold: f64,
    pub wfh: WfhConfig,
    pub samh: SamHConfig,
    /// base seed for the per-frame robust fits
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: 0.20,
            wfh: WfhConfig::default(),
            samh: SamHConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathTaken {
    /// frame 0, pose given
    Init,
    Attempt1,
    Attempt2,
    Fallback,
    /// mask-based pose only, no flow
    Samh,
}

impl PathTaken {
    pub fn as_str(self) -> &'static str {
        match self {
            PathTaken::Init => "init",
            PathTaken::Attempt1 => "attempt1",
            PathTaken::Attempt2 => "attempt2",
            PathTaken::Fallback => "fallback",
            PathTaken::Samh => "samh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "init" => PathTaken::Init,
            "attempt1" => PathTaken::Attempt1,
            "attempt2" => PathTaken::Attempt2,
            "fallback" => PathTaken::Fallback,
            "samh" => PathTaken::Samh,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult {
    pub t: usize,
    pub h: Homography,
    pub path: PathTaken,
    pub h_sam: Homography,
    pub samh: Option<SamHOutput>,
    pub attempt1: Option<f64>,
    pub attempt2: Option<f64>,
    /// provider or fit failures seen this frame
    pub diagnostics: Vec<String>,
}

/// Resamples `frame` onto the template grid: output pixel `q` reads the
/// frame at `h(q)`. Returns the image and the in-frame validity mask.
pub fn prewarp(frame: &GrayImage, h: &Homography, width: usize, height: usize) -> Result<(GrayImage, Mask), GeometryError> {
    h.inverse()?;
    let m = h.to_row_major();
    let mut out = GrayImage::new(width, height);
    let mut valid = Mask::new(width, height);
    for y in 0..height {
        let fy = y as f64;
        for x in 0..width {
            let fx = x as f64;
            let w = m[6] * fx + m[7] * fy + m[8];
            if w.abs() <= crate::geometry::WARP_EPS {
                continue;
            }
            let u = (m[0] * fx + m[1] * fy + m[2]) / w;
            let v = (m[3] * fx + m[4] * fy + m[5]) / w;
            if let Some(val) = frame.sample(u, v) {
                out.set(x, y, val);
                valid.set(x, y, true);
            }
        }
    }
    Ok((out, valid))
}

/// Per-sequence tracker.
pub struct Woftsam {
    pub cfg: TrackerConfig,
    pub template: GrayImage,
    pub x0: Quad,
    pub h_prev: Homography,
    pub samh: SamH,
    seg: Box<dyn SegmentationProvider>,
    flow: Box<dyn FlowProvider>,
    t: usize,
}

fn mix(seed: u64, t: usize, attempt: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ (t as u64).rotate_left(20) ^ attempt.rotate_left(52));
    r.random()
}

impl Woftsam {
    pub fn new(
        cfg: TrackerConfig,
        frame0: &GrayImage,
        quad0: Quad,
        mut seg: Box<dyn SegmentationProvider>,
        flow: Box<dyn FlowProvider>,
        features: Box<dyn FeatureProvider>,
    ) -> Result<Self, ControllerError> {
        seg.init(frame0, &quad0)?;
        let samh = SamH::new(cfg.samh.clone(), frame0, quad0, features)?;
        Ok(Self {
            cfg,
            template: frame0.clone(),
            x0: quad0,
            h_prev: Homography::identity(),
            samh,
            seg,
            flow,
            t: 0,
        })
    }

    /// Result row for frame 0.
    pub fn init_result(&self) -> FrameResult {
        FrameResult {
            t: 0,
            h: Homography::identity(),
            path: PathTaken::Init,
            h_sam: Homography::identity(),
            samh: None,
            attempt1: None,
            attempt2: None,
            diagnostics: Vec::new(),
        }
    }

    fn attempt(&mut self, frame: &GrayImage, h_pre: &Homography, k: u64) -> Result<WfhResult, String> {
        let (w, h) = (self.template.width, self.template.height);
        let (warped, valid) = prewarp(frame, h_pre, w, h).map_err(|e| e.to_string())?;
        let req = FlowRequest {
            t: self.t,
            template: &self.template,
            prewarped: &warped,
            prewarp: h_pre,
        };
        let mut f: FlowField = self.flow.flow(&req).map_err(|e| e.to_string())?;
        if (f.width, f.height) != (w, h) {
            return Err(format!("flow is {}x{}, template is {w}x{h}", f.width, f.height));
        }
        for (wt, &ok) in f.weight.iter_mut().zip(&valid.bits) {
            if !ok {
                *wt = 0.0;
            }
        }
        wfh_estimate(&f, Some(&self.x0), &self.cfg.wfh, mix(self.cfg.seed, self.t, k)).map_err(|e| e.to_string())
    }

    /// Tracks the next frame.
    pub fn step(&mut self, frame: &GrayImage) -> FrameResult {
        self.t += 1;
        let t = self.t;
        let mut diagnostics = Vec::new();
        let mask = match self.seg.next(t, frame) {
            Ok(m) => m,
            Err(e) => {
                diagnostics.push(format!("segmentation: {e}"));
                Mask::new(frame.width, frame.height)
            }
        };
        let samh = match self.samh.step(frame, &mask) {
            Ok(o) => Some(o),
            Err(e) => {
                diagnostics.push(format!("samh: {e}"));
                None
            }
        };
        let h_sam = samh.map_or(self.samh.h_prev, |o| o.h);

        let h_prev = self.h_prev;
        let mut result = FrameResult {
            t,
            h: h_sam,
            path: PathTaken::Fallback,
            h_sam,
            samh,
            attempt1: None,
            attempt2: None,
            diagnostics,
        };
        match self.attempt(frame, &h_prev, 1) {
            Ok(r) => {
                result.attempt1 = Some(r.inlier_fraction);
                if !failure_check(&r, self.cfg.inlier_threshold) {
                    result.h = h_prev.compose(&r.h_resid);
                    result.path = PathTaken::Attempt1;
                }
            }
            Err(e) => result.diagnostics.push(format!("attempt 1: {e}")),
        }
        if result.path != PathTaken::Attempt1 {
            match self.attempt(frame, &h_sam, 2) {
                Ok(r) => {
                    result.attempt2 = Some(r.inlier_fraction);
                    if !failure_check(&r, self.cfg.inlier_threshold) {
                        result.h = h_sam.compose(&r.h_resid);
                        result.path = PathTaken::Attempt2;
                    }
                }
                Err(e) => result.diagnostics.push(format!("attempt 2: {e}")),
            }
        }
        self.h_prev = result.h;
        result
    }
}

/// Runs a tracker over frames `0..n`, returning one result per frame.
pub fn run_tracker(
    cfg: TrackerConfig,
    n: usize,
    frame: impl Fn(usize) -> GrayImage,
    quad0: Quad,
    seg: Box<dyn SegmentationProvider>,
    flow: Box<dyn FlowProvider>,
    features: Box<dyn FeatureProvider>,
) -> Result<Vec<FrameResult>, ControllerError> {
    let f0 = frame(0);
    let mut tr = Woftsam::new(cfg, &f0, quad0, seg, flow, features)?;
    let mut out = vec![tr.init_result()];
    for t in 1..n {
        out.push(tr.step(&frame(t)));
    }
    Ok(out)
}

/// Runs the mask-based tracker alone.
pub fn run_samh(
    cfg: SamHConfig,
    n: usize,
    frame: impl Fn(usize) -> GrayImage,
    quad0: Quad,
    mut seg: Box<dyn SegmentationProvider>,
    features: Box<dyn FeatureProvider>,
) -> Result<Vec<FrameResult>, ControllerError> {
    let f0 = frame(0);
    seg.init(&f0, &quad0)?;
    let mut s = SamH::new(cfg, &f0, quad0, features)?;
    let mut out = vec![FrameResult {
        t: 0,
        h: Homography::identity(),
        path: PathTaken::Init,
        h_sam: Homography::identity(),
        samh: None,
        attempt1: None,
        attempt2: None,
        diagnostics: Vec::new(),
    }];
    for t in 1..n {
        let img = frame(t);
        let mask = seg.next(t, &img)?;
        let o = s.step(&img, &mask)?;
        out.push(FrameResult {
            t,
            h: o.h,
            path: PathTaken::Samh,
            h_sam: o.h,
            samh: Some(o),
            attempt1: None,
            attempt2: None,
            diagnostics: Vec::new(),
        });
    }
    Ok(out)
}

/// Wraps a flow provider and replaces a fraction of its output with
/// uniform random displacements on the frames in `frames`.
pub struct FaultInjectingFlow<F> {
    pub inner: F,
    pub frames: std::ops::RangeInclusive<usize>,
    /// share of pixels replaced by garbage, in `[0, 1]`
    pub corrupt_fraction: f64,
    /// garbage displacements are uniform in `[-amplitude, amplitude]`
    pub amplitude: f64,
    pub seed: u64,
}

impl<F: FlowProvider> FlowProvider for FaultInjectingFlow<F> {
    fn flow(&mut self, req: &FlowRequest<'_>) -> Result<FlowField, ProviderError> {
        let mut f = self.inner.flow(req)?;
        if !self.frames.contains(&req.t) {
            return Ok(f);
        }
        // the same garbage for both attempts of a frame
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (req.t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let a = self.amplitude;
        for (d, w) in f.flow.iter_mut().zip(f.weight.iter_mut()) {
            let corrupt = rng.random::<f64>() < self.corrupt_fraction;
            let g = [rng.random_range(-a..=a) as f32, rng.random_range(-a..=a) as f32];
            if corrupt {
                *d = g;
                if *w == 0.0 {
                    *w = 1.0;
                }
            }
        }
        Ok(f)
    }
}

/// Flow provider that reports nothing usable: zero flow, zero weight.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullFlow;

impl FlowProvider for NullFlow {
    fn flow(&mut self, req: &FlowRequest<'_>) -> Result<FlowField, ProviderError> {
        let mut f = FlowField::zeros(req.template.width, req.template.height);
        f.weight.iter_mut().for_each(|w| *w = 0.0);
        Ok(f)
    }
}

/// Corner positions `W(h, X_0)` of a result.
pub fn result_corners(r: &FrameResult, x0: &Quad) -> Option<[Point2; 4]> {
    x0.warp(&r.h).ok().map(|q| q.points)
}
