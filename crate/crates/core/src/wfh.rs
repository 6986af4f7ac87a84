//! Weighted flow homography: robust residual homography from a dense flow
//! field with per-pixel reliability weights.

use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    estimate_homography, estimate_homography_dlt, point_in_polygon, Homography, Point2, PointPair, Quad,
};
use crate::image::{decode_pgm, GrayImage};
use crate::provider::{frame_file_name, ProviderError};

pub const FLO_MAGIC: f32 = 202021.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WfhError {
    #[error("need at least 4 weighted samples, got {0}")]
    InsufficientSamples(usize),
    #[error("no nondegenerate homography fits the samples")]
    DegenerateFit,
}

/// Per-pixel displacement `(dx, dy)` from the template grid with a
/// reliability weight in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub flow: Vec<[f32; 2]>,
    pub weight: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            flow: vec![[0.0; 2]; width * height],
            weight: vec![1.0; width * height],
        }
    }

    /// Flow induced by `h` on every pixel, unit weight.
    pub fn from_homography(width: usize, height: usize, h: &Homography) -> Self {
        let mut f = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let p = Point2::new(x as f64, y as f64);
                let i = y * width + x;
                match h.warp(p) {
                    Ok(q) => f.flow[i] = [(q.x - p.x) as f32, (q.y - p.y) as f32],
                    Err(_) => f.weight[i] = 0.0,
                }
            }
        }
        f
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> ([f32; 2], f32) {
        let i = y * self.width + x;
        (self.flow[i], self.weight[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WfhConfig {
    pub sample_stride: usize,
    pub inlier_px: f64,
    pub min_iterations: usize,
    pub max_iterations: usize,
    /// probability of having drawn one all-inlier sample before stopping
    pub confidence: f64,
    pub refit_rounds: usize,
}

impl Default for WfhConfig {
    fn default() -> Self {
        Self {
            sample_stride: 4,
            inlier_px: 3.0,
            min_iterations: 500,
            max_iterations: 10_000,
            confidence: 0.99999,
            refit_rounds: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WfhResult {
    pub h_resid: Homography,
    pub inlier_fraction: f64,
    pub support_count: usize,
}

/// True when the estimate should be rejected.
pub fn failure_check(r: &WfhResult, threshold: f64) -> bool {
    r.inlier_fraction < threshold
}

/// Stride-grid correspondences `(p, p + flow(p))` inside `region`.
pub fn sample_correspondences(flow: &FlowField, region: Option<&Quad>, stride: usize) -> Vec<PointPair> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    for y in (0..flow.height).step_by(stride) {
        for x in (0..flow.width).step_by(stride) {
            let p = Point2::new(x as f64, y as f64);
            if region.is_some_and(|q| !point_in_polygon(&q.points, p)) {
                continue;
            }
            let ([dx, dy], w) = flow.at(x, y);
            if !(dx.is_finite() && dy.is_finite() && w.is_finite()) {
                continue;
            }
            out.push(PointPair::weighted(
                p,
                Point2::new(p.x + f64::from(dx), p.y + f64::from(dy)),
                f64::from(w.clamp(0.0, 1.0)),
            ));
        }
    }
    out
}

#[inline]
fn reprojection(m: &[f64; 9], p: &PointPair) -> f64 {
    let (x, y) = (p.src.x, p.src.y);
    let w = m[6] * x + m[7] * y + m[8];
    if w.abs() <= crate::geometry::WARP_EPS {
        return f64::INFINITY;
    }
    let u = (m[0] * x + m[1] * y + m[2]) / w - p.dst.x;
    let v = (m[3] * x + m[4] * y + m[5]) / w - p.dst.y;
    (u * u + v * v).sqrt()
}

/// Fraction of samples with weight >= 0.5 that `h` maps within `inlier_px`.
pub fn inlier_fraction(h: &Homography, pairs: &[PointPair], inlier_px: f64) -> f64 {
    let m = h.to_row_major();
    let (mut n, mut hit) = (0usize, 0usize);
    for p in pairs.iter().filter(|p| p.weight >= 0.5) {
        n += 1;
        hit += usize::from(reprojection(&m, p) < inlier_px);
    }
    if n == 0 {
        0.0
    } else {
        hit as f64 / n as f64
    }
}

fn inlier_set(m: &[f64; 9], pairs: &[PointPair], inlier_px: f64) -> (Vec<usize>, f64) {
    let mut idx = Vec::new();
    let mut score = 0.0;
    for (i, p) in pairs.iter().enumerate() {
        if reprojection(m, p) < inlier_px {
            idx.push(i);
            score += p.weight;
        }
    }
    (idx, score)
}

/// RANSAC with weight-proportional minimal samples, then weighted refits
/// on the inlier set. Runs at least `min_iterations`; more are added while
/// the current inlier ratio says the confidence target is not yet met.
pub fn wfh_estimate(flow: &FlowField, region: Option<&Quad>, cfg: &WfhConfig, seed: u64) -> Result<WfhResult, WfhError> {
    let all = sample_correspondences(flow, region, cfg.sample_stride);
    let fit: Vec<PointPair> = all.iter().copied().filter(|p| p.weight > 0.0).collect();
    if fit.len() < 4 {
        return Err(WfhError::InsufficientSamples(fit.len()));
    }
    let dist = WeightedIndex::new(fit.iter().map(|p| p.weight)).map_err(|_| WfhError::DegenerateFit)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<([f64; 9], f64, usize)> = None;
    let mut needed = cfg.min_iterations;
    let mut it = 0;
    while it < needed.min(cfg.max_iterations.max(cfg.min_iterations)) {
        it += 1;
        let mut pick = [0usize; 4];
        let mut n = 0;
        let mut tries = 0;
        while n < 4 && tries < 64 {
            tries += 1;
            let i = dist.sample(&mut rng);
            if !pick[..n].contains(&i) {
                pick[n] = i;
                n += 1;
            }
        }
        if n < 4 {
            continue;
        }
        let sample: Vec<PointPair> = pick.iter().map(|&i| PointPair::new(fit[i].src, fit[i].dst)).collect();
        let Ok(h) = estimate_homography_dlt(&sample) else { continue };
        let m = h.to_row_major();
        let (idx, score) = inlier_set(&m, &fit, cfg.inlier_px);
        if best.as_ref().is_none_or(|b| score > b.1) {
            let ratio = idx.len() as f64 / fit.len() as f64;
            best = Some((m, score, idx.len()));
            let p_good = ratio.powi(4);
            needed = if p_good >= 1.0 {
                cfg.min_iterations
            } else if p_good <= 0.0 {
                cfg.max_iterations
            } else {
                let k = (1.0 - cfg.confidence).ln() / (1.0 - p_good).ln();
                (k.ceil() as usize).clamp(cfg.min_iterations, cfg.max_iterations.max(cfg.min_iterations))
            };
        }
    }
    let (mut m, _, _) = best.ok_or(WfhError::DegenerateFit)?;
    let (mut idx, _) = inlier_set(&m, &fit, cfg.inlier_px);
    for _ in 0..cfg.refit_rounds {
        if idx.len() < 4 {
            break;
        }
        let inl: Vec<PointPair> = idx.iter().map(|&i| fit[i]).collect();
        let Ok(h) = estimate_homography(&inl) else { break };
        let cand = h.to_row_major();
        let (next, _) = inlier_set(&cand, &fit, cfg.inlier_px);
        if next.len() < idx.len() {
            break;
        }
        m = cand;
        let same = next == idx;
        idx = next;
        if same {
            break;
        }
    }
    let h_resid = Homography::from_row_major(m).map_err(|_| WfhError::DegenerateFit)?;
    Ok(WfhResult {
        h_resid,
        inlier_fraction: inlier_fraction(&h_resid, &all, cfg.inlier_px),
        support_count: idx.len(),
    })
}

/// Middlebury `.flo`: magic float, i32 width and height, then interleaved
/// f32 `(dx, dy)` rows, all little-endian.
pub fn encode_flo(width: usize, height: usize, flow: &[[f32; 2]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * flow.len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(width as i32).to_le_bytes());
    out.extend_from_slice(&(height as i32).to_le_bytes());
    for [dx, dy] in flow {
        out.extend_from_slice(&dx.to_le_bytes());
        out.extend_from_slice(&dy.to_le_bytes());
    }
    out
}

pub fn decode_flo(bytes: &[u8]) -> Result<(usize, usize, Vec<[f32; 2]>), String> {
    if bytes.len() < 12 {
        return Err("truncated header".into());
    }
    let f = |i: usize| f32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let n = |i: usize| i32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if f(0) != FLO_MAGIC {
        return Err(format!("bad magic {}", f(0)));
    }
    let (w, h) = (n(4), n(8));
    if w <= 0 || h <= 0 {
        return Err(format!("bad dimensions {w}x{h}"));
    }
    let (w, h) = (w as usize, h as usize);
    if bytes.len() != 12 + 8 * w * h {
        return Err(format!("expected {} payload bytes, got {}", 8 * w * h, bytes.len() - 12));
    }
    let flow = bytes[12..]
        .chunks_exact(8)
        .map(|c| [f32::from_le_bytes(c[..4].try_into().unwrap()), f32::from_le_bytes(c[4..].try_into().unwrap())])
        .collect();
    Ok((w, h, flow))
}

pub fn read_flo(path: &Path) -> Result<(usize, usize, Vec<[f32; 2]>), ProviderError> {
    let bytes = fs::read(path).map_err(|e| ProviderError::io(path, e))?;
    decode_flo(&bytes).map_err(|m| ProviderError::format(path, m))
}

pub fn write_flo(path: &Path, width: usize, height: usize, flow: &[[f32; 2]]) -> Result<(), ProviderError> {
    fs::write(path, encode_flo(width, height, flow)).map_err(|e| ProviderError::io(path, e))
}

/// Everything a flow source may look at for one estimation attempt.
pub struct FlowRequest<'a> {
    pub t: usize,
    pub template: &'a GrayImage,
    pub prewarped: &'a GrayImage,
    /// the pre-warp: template coordinates to frame coordinates
    pub prewarp: &'a Homography,
}

/// Flow from template pixels to positions in the pre-warped frame.
pub trait FlowProvider: Send {
    fn flow(&mut self, req: &FlowRequest<'_>) -> Result<FlowField, ProviderError>;
}

impl<F: FlowProvider + ?Sized> FlowProvider for Box<F> {
    fn flow(&mut self, req: &FlowRequest<'_>) -> Result<FlowField, ProviderError> {
        (**self).flow(req)
    }
}

/// Reads raw template-to-frame flow `frame_%06d.flo` (and optional
/// weights `weight_%06d.pgm`) and re-expresses it against the pre-warp.
#[derive(Clone, Debug)]
pub struct DirectoryFlowProvider {
    pub dir: PathBuf,
}

impl DirectoryFlowProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn weight_file_name(t: usize) -> String {
        format!("weight_{t:06}.pgm")
    }
}

/// Rewrites template-to-frame flow as template-to-prewarped flow:
/// `r(q) = H_pre^-1(q + f(q)) - q`.
pub fn relative_to_prewarp(raw: &FlowField, prewarp: &Homography) -> FlowField {
    let inv = prewarp.inverse().ok();
    let mut out = raw.clone();
    for y in 0..raw.height {
        for x in 0..raw.width {
            let i = y * raw.width + x;
            let [dx, dy] = raw.flow[i];
            let q = Point2::new(x as f64 + f64::from(dx), y as f64 + f64::from(dy));
            match inv.as_ref().and_then(|h| h.warp(q).ok()) {
                Some(r) => out.flow[i] = [(r.x - x as f64) as f32, (r.y - y as f64) as f32],
                None => out.weight[i] = 0.0,
            }
        }
    }
    out
}

impl FlowProvider for DirectoryFlowProvider {
    fn flow(&mut self, req: &FlowRequest<'_>) -> Result<FlowField, ProviderError> {
        let path = self.dir.join(frame_file_name(req.t, "flo"));
        let (w, h, flow) = read_flo(&path)?;
        let wpath = self.dir.join(Self::weight_file_name(req.t));
        let weight = if wpath.exists() {
            let bytes = fs::read(&wpath).map_err(|e| ProviderError::io(&wpath, e))?;
            let img = decode_pgm(&bytes).map_err(|e| ProviderError::format(&wpath, e.to_string()))?;
            if (img.width, img.height) != (w, h) {
                return Err(ProviderError::format(&wpath, "weight size differs from flow size"));
            }
            img.data.iter().map(|&v| (v / 255.0).clamp(0.0, 1.0)).collect()
        } else {
            vec![1.0; w * h]
        };
        let raw = FlowField {
            width: w,
            height: h,
            flow,
            weight,
        };
        Ok(relative_to_prewarp(&raw, req.prewarp))
    }
}
