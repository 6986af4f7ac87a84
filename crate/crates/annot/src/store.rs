//! On-disk dataset: `<root>/<seq>/frames/frame_%06d.pgm` plus the original
//! `annot.txt`. Re-annotations go to a sibling `reannot.txt`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;
use woftsam_core::evalharness::{format_quad_line, parse_annotation, EvalError};
use woftsam_core::geometry::Quad;
use woftsam_core::image::{decode_pgm, GrayImage, ImageError};
use woftsam_core::provider::frame_file_name;

pub const ANNOTATION_FILE: &str = "annot.txt";
pub const REANNOTATION_FILE: &str = "reannot.txt";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Annotation {
        path: PathBuf,
        #[source]
        source: EvalError,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ImageError,
    },
    #[error("{0}: first frame has no usable annotation")]
    NoInitialQuad(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug)]
pub struct SequenceEntry {
    pub id: String,
    pub dir: PathBuf,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// original ground truth, one entry per annotated frame
    pub quads: Vec<Option<Quad>>,
}

impl SequenceEntry {
    pub fn frame_path(&self, t: usize) -> PathBuf {
        self.dir.join("frames").join(frame_file_name(t, "pgm"))
    }

    pub fn frame_bytes(&self, t: usize) -> Result<Vec<u8>, StoreError> {
        let p = self.frame_path(t);
        fs::read(&p).map_err(io_err(&p))
    }

    pub fn frame(&self, t: usize) -> Result<GrayImage, StoreError> {
        let p = self.frame_path(t);
        decode_pgm(&self.frame_bytes(t)?).map_err(|source| StoreError::Image { path: p, source })
    }

    pub fn initial_quad(&self) -> Quad {
        self.quads[0].expect("checked at load")
    }

    pub fn gt(&self, t: usize) -> Option<Quad> {
        self.quads.get(t).copied().flatten()
    }

    /// Frame with the largest ground-truth quad (shoelace area), lowest
    /// index on ties.
    pub fn default_reference(&self) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (t, q) in self.quads.iter().enumerate().take(self.frames) {
            if let Some(q) = q {
                if q.area() > best.1 {
                    best = (t, q.area());
                }
            }
        }
        best.0
    }

    pub fn reannotation(&self) -> Result<Option<Quad>, StoreError> {
        let p = self.dir.join(REANNOTATION_FILE);
        let text = match fs::read_to_string(&p) {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&p)(e)),
        };
        let quads = parse_annotation(&text).map_err(|source| StoreError::Annotation { path: p, source })?;
        Ok(quads.first().copied().flatten())
    }

    /// Writes the initial-frame line to a temporary file in the sequence
    /// directory and renames it over `reannot.txt`.
    pub fn save_reannotation(&self, quad: &Quad) -> Result<(), StoreError> {
        let target = self.dir.join(REANNOTATION_FILE);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io_err(&self.dir))?;
        writeln!(tmp, "{}", format_quad_line(Some(quad))).map_err(io_err(tmp.path()))?;
        tmp.as_file().sync_all().map_err(io_err(&target))?;
        tmp.persist(&target).map_err(|e| io_err(&target)(e.error))?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub root: PathBuf,
    pub sequences: BTreeMap<String, SequenceEntry>,
}

impl Dataset {
    /// Every subdirectory holding `annot.txt` and `frames/frame_000000.pgm`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let mut sequences = BTreeMap::new();
        for entry in fs::read_dir(&root).map_err(io_err(&root))? {
            let dir = entry.map_err(io_err(&root))?.path();
            let annot = dir.join(ANNOTATION_FILE);
            if !annot.is_file() || !dir.join("frames").join(frame_file_name(0, "pgm")).is_file() {
                continue;
            }
            let id = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let text = fs::read_to_string(&annot).map_err(io_err(&annot))?;
            let quads = parse_annotation(&text).map_err(|source| StoreError::Annotation { path: annot, source })?;
            if !matches!(quads.first(), Some(Some(q)) if q.is_nondegenerate()) {
                return Err(StoreError::NoInitialQuad(id));
            }
            let frames = (0..).take_while(|&t| dir.join("frames").join(frame_file_name(t, "pgm")).is_file()).count();
            let mut e = SequenceEntry {
                id: id.clone(),
                dir,
                frames,
                width: 0,
                height: 0,
                quads,
            };
            let f0 = e.frame(0)?;
            (e.width, e.height) = (f0.width, f0.height);
            log::info!("sequence {id}: {frames} frames, {}x{}", e.width, e.height);
            sequences.insert(id, e);
        }
        Ok(Self { root, sequences })
    }

    pub fn get(&self, id: &str) -> Option<&SequenceEntry> {
        self.sequences.get(id)
    }
}
