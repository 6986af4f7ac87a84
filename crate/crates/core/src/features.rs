//! Dense per-cell appearance descriptors and their providers.

use std::fs;
use std::path::{Path, PathBuf};

use crate::image::GrayImage;
use crate::provider::ProviderError;

/// Side of the square view handed to feature providers.
pub const CROP_SIZE: usize = 224;

/// `hf x wf` grid of `c`-channel vectors, row-major, channel-last.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub hf: usize,
    pub wf: usize,
    pub c: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(hf: usize, wf: usize, c: usize) -> Self {
        Self {
            hf,
            wf,
            c,
            data: vec![0.0; hf * wf * c],
        }
    }

    pub fn cells(&self) -> usize {
        self.hf * self.wf
    }

    pub fn cell(&self, i: usize) -> &[f32] {
        &self.data[i * self.c..(i + 1) * self.c]
    }

    pub fn cell_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.c..(i + 1) * self.c]
    }

    pub fn cell_norm(&self, i: usize) -> f64 {
        self.cell(i).iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    /// Scale every nonzero cell to unit L2 norm.
    pub fn normalize(&mut self) {
        for i in 0..self.cells() {
            let n = self.cell_norm(i);
            if n > 0.0 {
                self.cell_mut(i).iter_mut().for_each(|v| *v = (f64::from(*v) / n) as f32);
            }
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    pub fn is_zero_cell(&self, i: usize) -> bool {
        self.cell(i).iter().all(|&v| v == 0.0)
    }

    pub fn cell_dot(&self, other: &FeatureMap, i: usize) -> f64 {
        self.cell(i)
            .iter()
            .zip(other.cell(i))
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }

    /// Header `hf, wf, c` as u32 LE, then `hf * wf * c` f32 LE values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.data.len());
        for v in [self.hf, self.wf, self.c] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < 12 {
            return Err(format!("{} bytes is shorter than the header", bytes.len()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
        let (hf, wf, c) = (word(0), word(1), word(2));
        let n = hf
            .checked_mul(wf)
            .and_then(|v| v.checked_mul(c))
            .ok_or("header overflows")?;
        if bytes.len() != 12 + 4 * n {
            return Err(format!("expected {} payload bytes, got {}", 4 * n, bytes.len() - 12));
        }
        let data = bytes[12..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(Self { hf, wf, c, data })
    }
}

pub fn read_feature_map(path: &Path) -> Result<FeatureMap, ProviderError> {
    let bytes = fs::read(path).map_err(|e| ProviderError::io(path, e))?;
    FeatureMap::from_bytes(&bytes).map_err(|m| ProviderError::format(path, m))
}

pub fn write_feature_map(path: &Path, map: &FeatureMap) -> Result<(), ProviderError> {
    fs::write(path, map.to_bytes()).map_err(|e| ProviderError::io(path, e))
}

/// Turns a `CROP_SIZE`-square view into a feature map with unit cells.
pub trait FeatureProvider: Send {
    fn extract(&mut self, crop: &GrayImage) -> Result<FeatureMap, ProviderError>;
}

/// Deterministic stand-in extractor: 16x16 cells of 14x14 pixels. Each
/// cell holds the 7x7 grid of 2x2 block means (centered at mid-gray) and
/// the cell's mean horizontal and vertical gradients.
#[derive(Clone, Copy, Debug, Default)]
pub struct GridFeatureProvider;

impl GridFeatureProvider {
    pub const GRID: usize = 16;
    pub const CELL: usize = 14;
    pub const CHANNELS: usize = 51;

    pub fn describe(crop: &GrayImage) -> FeatureMap {
        let (g, cell) = (Self::GRID, Self::CELL);
        let mut map = FeatureMap::zeros(g, g, Self::CHANNELS);
        let at = |x: usize, y: usize| -> f64 {
            let xs = (x * crop.width / (g * cell)).min(crop.width - 1);
            let ys = (y * crop.height / (g * cell)).min(crop.height - 1);
            f64::from(crop.get(xs, ys))
        };
        for cy in 0..g {
            for cx in 0..g {
                let (x0, y0) = (cx * cell, cy * cell);
                let v = map.cell_mut(cy * g + cx);
                for by in 0..7 {
                    for bx in 0..7 {
                        let (x, y) = (x0 + 2 * bx, y0 + 2 * by);
                        let m = 0.25 * (at(x, y) + at(x + 1, y) + at(x, y + 1) + at(x + 1, y + 1));
                        v[by * 7 + bx] = (m - 127.5) as f32;
                    }
                }
                let (mut gx, mut gy) = (0.0, 0.0);
                for y in y0..y0 + cell {
                    for x in x0..x0 + cell - 1 {
                        gx += at(x + 1, y) - at(x, y);
                    }
                }
                for y in y0..y0 + cell - 1 {
                    for x in x0..x0 + cell {
                        gy += at(x, y + 1) - at(x, y);
                    }
                }
                let n = (cell * (cell - 1)) as f64;
                // gradients get the weight of a few intensity channels
                v[49] = (4.0 * gx / n) as f32;
                v[50] = (4.0 * gy / n) as f32;
            }
        }
        map.normalized()
    }
}

impl FeatureProvider for GridFeatureProvider {
    fn extract(&mut self, crop: &GrayImage) -> Result<FeatureMap, ProviderError> {
        Ok(Self::describe(crop))
    }
}

/// Replays precomputed maps `feat_000000.bin`, `feat_000001.bin`, ... in
/// call order, normalizing each on load.
#[derive(Clone, Debug)]
pub struct DirectoryFeatureProvider {
    dir: PathBuf,
    next: usize,
}

impl DirectoryFeatureProvider {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            next: 0,
        }
    }

    pub fn file_name(i: usize) -> String {
        format!("feat_{i:06}.bin")
    }
}

impl FeatureProvider for DirectoryFeatureProvider {
    fn extract(&mut self, _crop: &GrayImage) -> Result<FeatureMap, ProviderError> {
        let path = self.dir.join(Self::file_name(self.next));
        self.next += 1;
        Ok(read_feature_map(&path)?.normalized())
    }
}
