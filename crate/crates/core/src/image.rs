//! Grayscale rasters, binary masks and PGM/PBM file I/O.
//!
//! Pixel `(x, y)` sits at integer coordinates; origin top-left, y down.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::geometry::{Point2, Quad};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed netpbm data: {0}")]
    Format(String),
    #[error("image dimensions must be positive, got {0}x{1}")]
    EmptyDimensions(usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear lookup; `None` outside `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<f32> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64) {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let p00 = self.get(x0, y0);
        if fx == 0.0 && fy == 0.0 {
            return Some(p00);
        }
        let p10 = self.get(x1, y0);
        let p01 = self.get(x0, y1);
        let p11 = self.get(x1, y1);
        let a = p00 + fx * (p10 - p00);
        let b = p01 + fx * (p11 - p01);
        Some(a + fy * (b - a))
    }

    pub fn sample_point(&self, p: Point2) -> Option<f32> {
        self.sample(p.x, p.y)
    }

    /// Quantized to 8 bits with rounding.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Self {
        Self {
            width,
            height,
            data: bytes.iter().map(|&b| f32::from(b)).collect(),
        }
    }
}

/// Binary raster of target support.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-bounds reads as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.bits[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Pixels whose centers fall inside `quad`.
    pub fn from_quad(width: usize, height: usize, quad: &Quad) -> Self {
        let mut m = Self::new(width, height);
        m.fill_polygon(&quad.points, true);
        m
    }

    /// Scanline fill of a simple polygon; sets pixels whose centers lie inside.
    pub fn fill_polygon(&mut self, poly: &[Point2], value: bool) {
        let n = poly.len();
        let ymin = poly.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let ymax = poly
            .iter()
            .map(|p| p.y)
            .fold(f64::NEG_INFINITY, f64::max)
            .floor()
            .min(self.height as f64 - 1.0);
        if ymin > ymax {
            return;
        }
        let mut xs = Vec::with_capacity(n);
        for y in (ymin as usize)..=(ymax as usize) {
            let yf = y as f64;
            xs.clear();
            for i in 0..n {
                let a = poly[i];
                let b = poly[(i + 1) % n];
                if (a.y <= yf && b.y > yf) || (b.y <= yf && a.y > yf) {
                    xs.push(a.x + (yf - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
            xs.sort_by(f64::total_cmp);
            for span in xs.chunks_exact(2) {
                let x0 = span[0].ceil().max(0.0);
                let x1 = span[1].floor().min(self.width as f64 - 1.0);
                if x0 > x1 {
                    continue;
                }
                for x in (x0 as usize)..=(x1 as usize) {
                    self.bits[y * self.width + x] = value;
                }
            }
        }
    }
}

fn next_token<'a>(data: &'a [u8], pos: &mut usize) -> Result<&'a [u8], ImageError> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImageError::Format("unexpected end of header".into()));
    }
    Ok(&data[start..*pos])
}

fn header_usize(data: &[u8], pos: &mut usize) -> Result<usize, ImageError> {
    let tok = next_token(data, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImageError::Format(format!("bad header field {:?}", String::from_utf8_lossy(tok))))
}

enum Pnm {
    Gray { width: usize, height: usize, maxval: usize, samples: Vec<u16> },
    Bitmap { width: usize, height: usize, bits: Vec<bool> },
}

fn parse_pnm(data: &[u8]) -> Result<Pnm, ImageError> {
    let mut pos = 0;
    let magic = next_token(data, &mut pos)?;
    let width = header_usize(data, &mut pos)?;
    let height = header_usize(data, &mut pos)?;
    if width == 0 || height == 0 {
        return Err(ImageError::EmptyDimensions(width, height));
    }
    match magic {
        b"P5" => {
            let maxval = header_usize(data, &mut pos)?;
            if maxval == 0 || maxval > 65535 {
                return Err(ImageError::Format(format!("maxval {maxval} out of range")));
            }
            pos += 1; // single whitespace after the header
            let bps = if maxval < 256 { 1 } else { 2 };
            let need = width * height * bps;
            let payload = data
                .get(pos..pos + need)
                .ok_or_else(|| ImageError::Format("truncated P5 payload".into()))?;
            let samples = if bps == 1 {
                payload.iter().map(|&b| u16::from(b)).collect()
            } else {
                payload.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
            };
            Ok(Pnm::Gray { width, height, maxval, samples })
        }
        b"P2" => {
            let maxval = header_usize(data, &mut pos)?;
            let mut samples = Vec::with_capacity(width * height);
            for _ in 0..width * height {
                samples.push(header_usize(data, &mut pos)? as u16);
            }
            Ok(Pnm::Gray { width, height, maxval, samples })
        }
        b"P4" => {
            pos += 1;
            let stride = width.div_ceil(8);
            let payload = data
                .get(pos..pos + stride * height)
                .ok_or_else(|| ImageError::Format("truncated P4 payload".into()))?;
            let mut bits = Vec::with_capacity(width * height);
            for y in 0..height {
                for x in 0..width {
                    let byte = payload[y * stride + x / 8];
                    bits.push(byte & (0x80 >> (x % 8)) != 0);
                }
            }
            Ok(Pnm::Bitmap { width, height, bits })
        }
        b"P1" => {
            let mut bits = Vec::with_capacity(width * height);
            while bits.len() < width * height {
                let tok = next_token(data, &mut pos)?;
                for &c in tok {
                    bits.push(c == b'1');
                }
            }
            bits.truncate(width * height);
            Ok(Pnm::Bitmap { width, height, bits })
        }
        other => Err(ImageError::Format(format!(
            "unsupported magic {:?}",
            String::from_utf8_lossy(other)
        ))),
    }
}

pub fn decode_pgm(data: &[u8]) -> Result<GrayImage, ImageError> {
    match parse_pnm(data)? {
        Pnm::Gray { width, height, maxval, samples } => {
            let scale = 255.0 / maxval as f32;
            Ok(GrayImage {
                width,
                height,
                data: samples.iter().map(|&s| f32::from(s) * scale).collect(),
            })
        }
        Pnm::Bitmap { width, height, bits } => Ok(GrayImage {
            width,
            height,
            // PBM: 1 = black
            data: bits.iter().map(|&b| if b { 0.0 } else { 255.0 }).collect(),
        }),
    }
}

/// PGM: nonzero is foreground. PBM: a set bit is foreground.
pub fn decode_mask(data: &[u8]) -> Result<Mask, ImageError> {
    match parse_pnm(data)? {
        Pnm::Gray { width, height, samples, .. } => Ok(Mask {
            width,
            height,
            bits: samples.iter().map(|&s| s != 0).collect(),
        }),
        Pnm::Bitmap { width, height, bits } => Ok(Mask { width, height, bits }),
    }
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_u8());
    out
}

pub fn encode_mask(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend(mask.bits.iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    decode_pgm(&fs::read(path)?)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask, ImageError> {
    decode_mask(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<(), ImageError> {
    fs::File::create(path)?.write_all(&encode_pgm(img))?;
    Ok(())
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<(), ImageError> {
    fs::File::create(path)?.write_all(&encode_mask(mask))?;
    Ok(())
}
