//! Synthetic planar scenes with exact ground truth: a textured quad moved by
//! a scripted homography trajectory over a static background, optional
//! rectangular occluders, and noisy mask and flow observations.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Homography, Point2, Quad};
use crate::image::{write_mask, write_pgm, GrayImage, ImageError, Mask};
use crate::provider::{frame_file_name, ProviderError};
use crate::samh::SegmentationProvider;
use crate::wfh::{write_flo, DirectoryFlowProvider, FlowField, FlowProvider, FlowRequest};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    SpecInvalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Texture {
    Checkerboard {
        cell: f64,
        #[serde(default = "default_low")]
        low: f32,
        #[serde(default = "default_high")]
        high: f32,
    },
    /// Sum of random plane waves with wavelengths in `[min_wavelength, max_wavelength]`.
    Noise {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_contrast")]
        contrast: f32,
        #[serde(default = "default_min_wavelength")]
        min_wavelength: f64,
        #[serde(default = "default_max_wavelength")]
        max_wavelength: f64,
    },
    Flat {
        value: f32,
    },
}

fn default_low() -> f32 {
    40.0
}
fn default_high() -> f32 {
    215.0
}
fn default_contrast() -> f32 {
    40.0
}
fn default_min_wavelength() -> f64 {
    12.0
}
fn default_max_wavelength() -> f64 {
    64.0
}

/// Per-frame incremental motion about the current target centroid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Motion {
    Rotate { deg: f64 },
    Scale { factor: f64 },
    Translate { dx: f64, dy: f64 },
    Perspective { px: f64, py: f64 },
    Hold,
}

impl Motion {
    fn tag(&self) -> Option<&'static str> {
        match self {
            Motion::Rotate { .. } => Some("rotation"),
            Motion::Scale { .. } => Some("scale"),
            Motion::Translate { .. } => Some("translation"),
            Motion::Perspective { .. } => Some("perspective"),
            Motion::Hold => None,
        }
    }

    fn matrix(&self) -> Homography {
        match *self {
            Motion::Rotate { deg } => Homography::similarity(1.0, deg.to_radians(), 0.0, 0.0),
            Motion::Scale { factor } => Homography::similarity(factor, 0.0, 0.0, 0.0),
            Motion::Translate { dx, dy } => Homography::translation(dx, dy),
            Motion::Perspective { px, py } => {
                Homography::from_row_major([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, px, py, 1.0]).unwrap_or_default()
            }
            Motion::Hold => Homography::identity(),
        }
    }
}

/// `frames` consecutive frames, each applying all `motions` in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub frames: usize,
    pub motions: Vec<Motion>,
}

/// Axis-aligned occluder drawn over frames `from..=to`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub rect: [f64; 4],
    pub from: usize,
    pub to: usize,
    #[serde(default = "default_occluder_value")]
    pub value: f32,
}

fn default_occluder_value() -> f32 {
    20.0
}

impl Occluder {
    fn active(&self, t: usize) -> bool {
        (self.from..=self.to).contains(&t)
    }

    fn covers(&self, x: f64, y: f64) -> bool {
        let [x0, y0, x1, y1] = self.rect;
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub name: String,
    pub width: usize,
    pub height: usize,
    /// initial corners `x1 y1 ... x4 y4` in frame 0
    pub quad: [f64; 8],
    pub texture: Texture,
    #[serde(default = "default_background")]
    pub background: Texture,
    pub trajectory: Vec<Segment>,
    #[serde(default)]
    pub occluders: Vec<Occluder>,
    /// frame ranges tagged as blurred; flow weights drop to `blur_weight`
    #[serde(default)]
    pub blur: Vec<[usize; 2]>,
    #[serde(default = "default_blur_weight")]
    pub blur_weight: f32,
    #[serde(default)]
    pub mask_noise: f64,
    #[serde(default)]
    pub flow_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_background() -> Texture {
    Texture::Noise {
        seed: 7,
        contrast: 25.0,
        min_wavelength: 16.0,
        max_wavelength: 80.0,
    }
}

fn default_blur_weight() -> f32 {
    0.4
}

impl SceneSpec {
    pub fn frame_count(&self) -> usize {
        1 + self.trajectory.iter().map(|s| s.frames).sum::<usize>()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::SpecInvalid(m.to_string()));
        if self.width < 2 || self.height < 2 {
            return bad("frame must be at least 2x2");
        }
        if !Quad::from_flat(self.quad).is_nondegenerate() {
            return bad("initial quad is degenerate");
        }
        if !(self.mask_noise >= 0.0 && self.flow_noise >= 0.0) {
            return bad("noise levels must be nonnegative");
        }
        for s in &self.trajectory {
            for m in &s.motions {
                let ok = match *m {
                    Motion::Rotate { deg } => deg.is_finite(),
                    Motion::Scale { factor } => factor.is_finite() && factor > 0.0,
                    Motion::Translate { dx, dy } => dx.is_finite() && dy.is_finite(),
                    Motion::Perspective { px, py } => px.is_finite() && py.is_finite(),
                    Motion::Hold => true,
                };
                if !ok {
                    return bad("motion rates must be finite (scale positive)");
                }
            }
        }
        if let Texture::Checkerboard { cell, .. } = self.texture {
            if !(cell > 0.0) {
                return bad("checkerboard cell must be positive");
            }
        }
        for tex in [&self.texture, &self.background] {
            if let Texture::Noise {
                min_wavelength,
                max_wavelength,
                ..
            } = *tex
            {
                if !(min_wavelength > 0.0 && max_wavelength >= min_wavelength) {
                    return bad("noise wavelengths must satisfy 0 < min <= max");
                }
            }
        }
        Ok(())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG stream for `(seed, frame, purpose)`.
pub fn frame_rng(seed: u64, t: usize, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ splitmix(stream)) ^ t as u64))
}

/// Random plane waves `sum a_k cos(w_k . p + phi_k)` normalized to unit
/// standard deviation.
#[derive(Clone, Debug)]
struct Waves {
    k: Vec<(f64, f64, f64)>,
    amp: f64,
}

impl Waves {
    fn new(rng: &mut impl Rng, n: usize, min_wl: f64, max_wl: f64) -> Self {
        let k = (0..n)
            .map(|_| {
                let wl = rng.random_range(min_wl..=max_wl);
                let dir = rng.random_range(0.0..std::f64::consts::TAU);
                let w = std::f64::consts::TAU / wl;
                (w * dir.cos(), w * dir.sin(), rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        Self {
            k,
            amp: (2.0 / n as f64).sqrt(),
        }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        self.amp * self.k.iter().map(|&(wx, wy, ph)| (wx * x + wy * y + ph).cos()).sum::<f64>()
    }
}

/// Texture rasterized on an axis-aligned window, sampled bilinearly with
/// edge clamping.
#[derive(Clone, Debug)]
struct Raster {
    ox: f64,
    oy: f64,
    img: GrayImage,
}

impl Raster {
    fn render(tex: &Texture, ox: f64, oy: f64, w: usize, h: usize) -> Self {
        let img = match *tex {
            Texture::Flat { value } => GrayImage::from_fn(w, h, |_, _| value),
            Texture::Checkerboard { cell, low, high } => GrayImage::from_fn(w, h, |x, y| {
                let cx = ((x as f64 + ox) / cell).floor() as i64;
                let cy = ((y as f64 + oy) / cell).floor() as i64;
                if (cx + cy).rem_euclid(2) == 0 {
                    low
                } else {
                    high
                }
            }),
            Texture::Noise {
                seed,
                contrast,
                min_wavelength,
                max_wavelength,
            } => {
                let waves = Waves::new(&mut frame_rng(seed, 0, 1), 24, min_wavelength, max_wavelength);
                GrayImage::from_fn(w, h, |x, y| {
                    let v = 127.5 + f64::from(contrast) * waves.eval(x as f64 + ox, y as f64 + oy);
                    v.clamp(0.0, 255.0) as f32
                })
            }
        };
        Self { ox, oy, img }
    }

    fn sample(&self, p: Point2) -> f32 {
        let x = (p.x - self.ox).clamp(0.0, (self.img.width - 1) as f64);
        let y = (p.y - self.oy).clamp(0.0, (self.img.height - 1) as f64);
        self.img.sample(x, y).unwrap_or(0.0)
    }
}

/// A generated sequence. Frames, masks and flows are rendered on demand.
#[derive(Clone, Debug)]
pub struct SynthSequence {
    pub spec: SceneSpec,
    pub x0: Quad,
    poses: Vec<Homography>,
    tags: Vec<BTreeSet<&'static str>>,
    texture: Raster,
    background: Raster,
}

/// Signed distance to the polygon boundary, positive inside.
fn signed_distance(poly: &[Point2; 4], p: Point2) -> f64 {
    let mut d = f64::INFINITY;
    for i in 0..4 {
        let (a, b) = (poly[i], poly[(i + 1) % 4]);
        let ab = b - a;
        let t = ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
        d = d.min(p.dist(a + ab * t));
    }
    if crate::geometry::point_in_polygon(poly, p) {
        d
    } else {
        -d
    }
}

pub fn generate(spec: &SceneSpec) -> Result<SynthSequence, SynthError> {
    spec.validate()?;
    let x0 = Quad::from_flat(spec.quad);
    let mut poses = vec![Homography::identity()];
    let mut motion_tags: Vec<BTreeSet<&'static str>> = vec![BTreeSet::new()];
    let mut h = Homography::identity();
    for seg in &spec.trajectory {
        for _ in 0..seg.frames {
            let mut tags = BTreeSet::new();
            for m in &seg.motions {
                let c = x0.warp(&h).map_err(|e| SynthError::SpecInvalid(e.to_string()))?.centroid();
                let d = Homography::translation(c.x, c.y)
                    .compose(&m.matrix())
                    .compose(&Homography::translation(-c.x, -c.y));
                h = d.compose(&h);
                tags.extend(m.tag());
            }
            if x0.warp(&h).map(|q| !q.is_nondegenerate()).unwrap_or(true) {
                return Err(SynthError::SpecInvalid(format!("target degenerates at frame {}", poses.len())));
            }
            poses.push(h);
            motion_tags.push(tags);
        }
    }

    let (mut bx0, mut by0, mut bx1, mut by1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &x0.points {
        bx0 = bx0.min(p.x);
        by0 = by0.min(p.y);
        bx1 = bx1.max(p.x);
        by1 = by1.max(p.y);
    }
    let (ox, oy) = (bx0.floor() - 2.0, by0.floor() - 2.0);
    let texture = Raster::render(
        &spec.texture,
        ox,
        oy,
        (bx1 - ox).ceil() as usize + 3,
        (by1 - oy).ceil() as usize + 3,
    );
    let background = Raster::render(&spec.background, 0.0, 0.0, spec.width, spec.height);

    let mut seq = SynthSequence {
        spec: spec.clone(),
        x0,
        poses,
        tags: motion_tags,
        texture,
        background,
    };
    for t in 0..seq.len() {
        let q = seq.quad(t);
        let (w, hgt) = (spec.width as f64, spec.height as f64);
        if q.points.iter().any(|p| p.x < 0.0 || p.y < 0.0 || p.x > w - 1.0 || p.y > hgt - 1.0) {
            seq.tags[t].insert("out-of-view");
        }
        if spec.occluders.iter().any(|o| o.active(t)) {
            seq.tags[t].insert("occlusion");
        }
        if spec.blur.iter().any(|b| (b[0]..=b[1]).contains(&t)) {
            seq.tags[t].insert("blur");
        }
    }
    Ok(seq)
}

impl SynthSequence {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.spec.width, self.spec.height)
    }

    /// Ground-truth `H*_t` (template to frame `t`).
    pub fn gt(&self, t: usize) -> Homography {
        self.poses[t]
    }

    pub fn poses(&self) -> &[Homography] {
        &self.poses
    }

    pub fn quad(&self, t: usize) -> Quad {
        self.x0.warp(&self.poses[t]).expect("poses are validated at generation")
    }

    pub fn frame_tags(&self, t: usize) -> Vec<&'static str> {
        self.tags[t].iter().copied().collect()
    }

    /// Union of all per-frame tags.
    pub fn sequence_tags(&self) -> Vec<&'static str> {
        let all: BTreeSet<&'static str> = self.tags.iter().flatten().copied().collect();
        all.into_iter().collect()
    }

    fn occluded(&self, t: usize, x: f64, y: f64) -> Option<f32> {
        self.spec
            .occluders
            .iter()
            .find(|o| o.active(t) && o.covers(x, y))
            .map(|o| o.value)
    }

    /// Target support without noise or occluders.
    pub fn target_mask(&self, t: usize) -> Mask {
        Mask::from_quad(self.spec.width, self.spec.height, &self.quad(t))
    }

    /// Exact mask: rasterized quad minus active occluders.
    pub fn clean_mask(&self, t: usize) -> Mask {
        let mut m = self.target_mask(t);
        self.subtract_occluders(t, &mut m);
        m
    }

    fn subtract_occluders(&self, t: usize, m: &mut Mask) {
        if !self.spec.occluders.iter().any(|o| o.active(t)) {
            return;
        }
        for y in 0..m.height {
            for x in 0..m.width {
                if m.get(x, y) && self.occluded(t, x as f64, y as f64).is_some() {
                    m.set(x, y, false);
                }
            }
        }
    }

    /// Observed mask: the boundary is displaced by a smooth random field of
    /// standard deviation `mask_noise` px, then occluders are removed.
    pub fn mask(&self, t: usize) -> Mask {
        let sigma = self.spec.mask_noise;
        if sigma <= 0.0 {
            return self.clean_mask(t);
        }
        let q = self.quad(t);
        let field = Waves::new(&mut frame_rng(self.spec.seed, t, 2), 12, 20.0, 80.0);
        let band = 5.0 * sigma + 2.0;
        let mut m = self.target_mask(t);
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &q.points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let (mw, mh) = ((m.width - 1) as f64, (m.height - 1) as f64);
        let clampx = |v: f64| v.clamp(0.0, mw) as usize;
        let clampy = |v: f64| v.clamp(0.0, mh) as usize;
        for y in clampy((y0 - band).floor())..=clampy((y1 + band).ceil()) {
            for x in clampx((x0 - band).floor())..=clampx((x1 + band).ceil()) {
                let p = Point2::new(x as f64, y as f64);
                let d = signed_distance(&q.points, p);
                if d.abs() > band {
                    continue;
                }
                m.set(x, y, d + sigma * field.eval(p.x, p.y) > 0.0);
            }
        }
        self.subtract_occluders(t, &mut m);
        m
    }

    /// Rendered frame, quantized to integer gray levels.
    pub fn frame(&self, t: usize) -> GrayImage {
        let (w, h) = self.dims();
        let inside = self.target_mask(t);
        let inv = self.poses[t].inverse().expect("poses are validated at generation");
        GrayImage::from_fn(w, h, |x, y| {
            let (fx, fy) = (x as f64, y as f64);
            let v = if let Some(v) = self.occluded(t, fx, fy) {
                v
            } else if inside.get(x, y) {
                match inv.warp(Point2::new(fx, fy)) {
                    Ok(q) => self.texture.sample(q),
                    Err(_) => self.background.img.get(x, y),
                }
            } else {
                self.background.img.get(x, y)
            };
            v.round().clamp(0.0, 255.0)
        })
    }

    fn blurred(&self, t: usize) -> bool {
        self.tags[t].contains("blur")
    }

    /// Template-to-frame flow `H*_t(q) - q` plus Gaussian noise, restricted
    /// to `window` (other pixels get weight 0).
    pub fn flow_window(&self, t: usize, window: Option<[usize; 4]>) -> FlowField {
        let (w, h) = self.dims();
        let [x0, y0, x1, y1] = window.unwrap_or([0, 0, w - 1, h - 1]);
        let mut f = FlowField::zeros(w, h);
        f.weight.iter_mut().for_each(|v| *v = 0.0);
        let hstar = self.poses[t];
        let normal = Normal::new(0.0, self.spec.flow_noise.max(0.0)).expect("nonnegative sigma");
        let mut rng = frame_rng(self.spec.seed, t, 3);
        let wgt = if self.blurred(t) { self.spec.blur_weight } else { 1.0 };
        // noise is drawn for every pixel so any window sees the same values
        let noisy = self.spec.flow_noise > 0.0;
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = if noisy {
                    (normal.sample(&mut rng), normal.sample(&mut rng))
                } else {
                    (0.0, 0.0)
                };
                if x < x0 || x > x1 || y < y0 || y > y1 {
                    continue;
                }
                let p = Point2::new(x as f64, y as f64);
                let i = y * w + x;
                if let Ok(q) = hstar.warp(p) {
                    f.flow[i] = [(q.x - p.x + nx) as f32, (q.y - p.y + ny) as f32];
                    f.weight[i] = wgt;
                }
            }
        }
        f
    }

    pub fn flow(&self, t: usize) -> FlowField {
        self.flow_window(t, None)
    }

    /// Pixel window covering the template quad.
    pub fn template_window(&self) -> [usize; 4] {
        let (w, h) = self.dims();
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.x0.points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        [
            x0.floor().clamp(0.0, (w - 1) as f64) as usize,
            y0.floor().clamp(0.0, (h - 1) as f64) as usize,
            x1.ceil().clamp(0.0, (w - 1) as f64) as usize,
            y1.ceil().clamp(0.0, (h - 1) as f64) as usize,
        ]
    }

    /// Writes `frames/`, `masks/`, `flows/`, `gt.csv`, `annot.txt` and
    /// `spec.json` under `dir`. Blurred frames also get a flow weight map.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        for sub in ["frames", "masks", "flows"] {
            fs::create_dir_all(dir.join(sub))?;
        }
        let (w, h) = self.dims();
        let mut gt = String::from("frame,h00,h01,h02,h10,h11,h12,h20,h21,h22,x1,y1,x2,y2,x3,y3,x4,y4,tags\n");
        let mut annot = String::new();
        for t in 0..self.len() {
            write_pgm(dir.join("frames").join(frame_file_name(t, "pgm")), &self.frame(t))?;
            write_mask(dir.join("masks").join(frame_file_name(t, "pgm")), &self.mask(t))?;
            let f = self.flow(t);
            write_flo(&dir.join("flows").join(frame_file_name(t, "flo")), w, h, &f.flow)?;
            if self.blurred(t) {
                let img = GrayImage::from_fn(w, h, |x, y| 255.0 * f.weight[y * w + x]);
                write_pgm(dir.join("flows").join(DirectoryFlowProvider::weight_file_name(t)), &img)?;
            }
            let row: Vec<String> = self.poses[t]
                .to_row_major()
                .iter()
                .chain(self.quad(t).to_flat().iter())
                .map(|v| format!("{v:.12e}"))
                .collect();
            gt.push_str(&format!("{t},{},{}\n", row.join(","), self.frame_tags(t).join(";")));
            let flat: Vec<String> = self.quad(t).to_flat().iter().map(|v| format!("{v:.6}")).collect();
            annot.push_str(&flat.join(" "));
            annot.push('\n');
        }
        fs::write(dir.join("gt.csv"), gt)?;
        fs::write(dir.join("annot.txt"), annot)?;
        let echo = serde_json::to_string_pretty(&self.spec).map_err(|e| SynthError::SpecInvalid(e.to_string()))?;
        fs::write(dir.join("spec.json"), echo)?;
        Ok(())
    }
}

/// Replays the sequence's observed masks.
#[derive(Clone, Debug)]
pub struct SynthMaskProvider {
    pub seq: Arc<SynthSequence>,
}

impl SegmentationProvider for SynthMaskProvider {
    fn init(&mut self, _frame0: &GrayImage, _quad0: &crate::geometry::Quad) -> Result<(), ProviderError> {
        Ok(())
    }

    fn next(&mut self, t: usize, _frame: &GrayImage) -> Result<crate::image::Mask, ProviderError> {
        if t >= self.seq.len() {
            return Err(ProviderError::MissingFrame(t));
        }
        Ok(self.seq.mask(t))
    }
}

/// Analytic flow from the ground truth, expressed against the pre-warp:
/// `H_pre^-1(H*_t(q) + noise) - q`. Only the template quad window is filled.
#[derive(Clone, Debug)]
pub struct OracleFlowProvider {
    pub seq: Arc<SynthSequence>,
}

impl FlowProvider for OracleFlowProvider {
    fn flow(&mut self, req: &FlowRequest<'_>) -> Result<FlowField, ProviderError> {
        if req.t >= self.seq.len() {
            return Err(ProviderError::MissingFrame(req.t));
        }
        let raw = self.seq.flow_window(req.t, Some(self.seq.template_window()));
        let mut out = crate::wfh::relative_to_prewarp(&raw, req.prewarp);
        for (o, r) in out.weight.iter_mut().zip(&raw.weight) {
            *o = o.min(*r);
        }
        Ok(out)
    }
}

/// Mask, flow and feature providers replaying the sequence's ground truth.
pub fn oracle_providers(
    seq: &Arc<SynthSequence>,
) -> (SynthMaskProvider, OracleFlowProvider, crate::features::GridFeatureProvider) {
    (
        SynthMaskProvider { seq: Arc::clone(seq) },
        OracleFlowProvider { seq: Arc::clone(seq) },
        crate::features::GridFeatureProvider,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn basic_spec() -> SceneSpec {
        SceneSpec {
            name: "basic".into(),
            width: 160,
            height: 120,
            quad: [40.0, 30.0, 120.0, 30.0, 120.0, 90.0, 40.0, 90.0],
            texture: Texture::Noise {
                seed: 1,
                contrast: 40.0,
                min_wavelength: 12.0,
                max_wavelength: 40.0,
            },
            background: Texture::Flat { value: 100.0 },
            trajectory: vec![Segment {
                frames: 9,
                motions: vec![Motion::Hold],
            }],
            occluders: vec![],
            blur: vec![],
            blur_weight: 0.4,
            mask_noise: 0.0,
            flow_noise: 0.0,
            seed: 3,
        }
    }

    #[test]
    fn hold_trajectory_is_static() {
        let seq = generate(&basic_spec()).unwrap();
        assert_eq!(seq.len(), 10);
        let m0 = seq.mask(0);
        for t in 0..10 {
            assert_eq!(seq.gt(t), Homography::identity());
            assert_eq!(seq.mask(t), m0);
        }
    }

    #[test]
    fn scale_rate_squares_area() {
        let mut spec = basic_spec();
        spec.width = 2000;
        spec.height = 2000;
        spec.quad = [900.0, 900.0, 1000.0, 900.0, 1000.0, 980.0, 900.0, 980.0];
        spec.texture = Texture::Flat { value: 50.0 };
        spec.trajectory = vec![Segment {
            frames: 100,
            motions: vec![Motion::Scale { factor: 1.01 }],
        }];
        let seq = generate(&spec).unwrap();
        let ratio = seq.quad(100).area() / seq.quad(0).area();
        assert!((ratio - 1.01f64.powi(200)).abs() < 1e-6, "{ratio}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = basic_spec();
        spec.quad = [0.0; 8];
        assert!(matches!(generate(&spec), Err(SynthError::SpecInvalid(_))));
        let mut spec = basic_spec();
        spec.mask_noise = -1.0;
        assert!(matches!(generate(&spec), Err(SynthError::SpecInvalid(_))));
        let mut spec = basic_spec();
        spec.trajectory[0].motions = vec![Motion::Scale { factor: 0.0 }];
        assert!(matches!(generate(&spec), Err(SynthError::SpecInvalid(_))));
    }

    #[test]
    fn seed_determinism() {
        let mut spec = basic_spec();
        spec.mask_noise = 1.5;
        spec.flow_noise = 0.5;
        let (a, b) = (generate(&spec).unwrap(), generate(&spec).unwrap());
        assert_eq!(a.frame(4), b.frame(4));
        assert_eq!(a.mask(4), b.mask(4));
        assert_eq!(a.flow(4), b.flow(4));
    }

    #[test]
    fn occluder_removes_mask_and_paints_frame() {
        let mut spec = basic_spec();
        spec.occluders = vec![Occluder {
            rect: [30.0, 20.0, 70.0, 60.0],
            from: 2,
            to: 4,
            value: 9.0,
        }];
        let seq = generate(&spec).unwrap();
        assert!(seq.mask(1).get(50, 40));
        assert!(!seq.mask(3).get(50, 40));
        assert_eq!(seq.frame(3).get(50, 40), 9.0);
        assert!(seq.frame_tags(3).contains(&"occlusion"));
        assert!(!seq.frame_tags(5).contains(&"occlusion"));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = basic_spec();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<SceneSpec>(&text).unwrap(), spec);
    }

    #[test]
    fn signed_distance_sign() {
        let q = Quad::rect(0.0, 0.0, 10.0, 10.0).points;
        assert!((signed_distance(&q, Point2::new(5.0, 2.0)) - 2.0).abs() < 1e-12);
        assert!((signed_distance(&q, Point2::new(13.0, 5.0)) + 3.0).abs() < 1e-12);
    }
}
