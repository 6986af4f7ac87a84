//! Sequence directories on disk and the providers that feed the tracker.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use woftsam_core::controller::{FaultInjectingFlow, FrameResult, TrackerConfig, Woftsam};
use woftsam_core::evalharness::parse_annotation;
use woftsam_core::features::{DirectoryFeatureProvider, FeatureProvider, GridFeatureProvider};
use woftsam_core::geometry::Quad;
use woftsam_core::image::{read_pgm, GrayImage};
use woftsam_core::provider::frame_file_name;
use woftsam_core::samh::{DirectoryMaskProvider, SegmentationProvider};
use woftsam_core::synthgen::{generate, OracleFlowProvider, SceneSpec, SynthMaskProvider, SynthSequence};
use woftsam_core::wfh::{DirectoryFlowProvider, FlowProvider};

/// Where masks or flow come from.
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    /// the sequence's own `masks/` or `flows/`
    Files,
    Dir(PathBuf),
    /// regenerated from `spec.json`, noise and blur included
    Synthetic,
    /// regenerated from `spec.json` without flow noise or blur
    Oracle,
}

impl FromStr for Source {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "files" => Source::Files,
            "synthetic" => Source::Synthetic,
            "oracle" => Source::Oracle,
            other => Source::Dir(other.into()),
        })
    }
}

/// Uniform garbage over a frame range.
#[derive(Clone, Debug)]
pub struct Fault {
    pub first: usize,
    pub last: usize,
    pub fraction: f64,
    pub amplitude: f64,
}

/// Parses `50-60` or `50`.
pub fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('-').unwrap_or((s, s));
    let a: usize = a.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
    if b < a {
        return Err(format!("{s:?}: empty range"));
    }
    Ok((a, b))
}

pub struct SequenceDir {
    pub dir: PathBuf,
    pub frames: usize,
}

impl SequenceDir {
    pub fn open(dir: &Path) -> Result<Self> {
        let frames = (0..).take_while(|&t| dir.join("frames").join(frame_file_name(t, "pgm")).is_file()).count();
        if frames == 0 {
            bail!("{}: no frames/frame_000000.pgm", dir.display());
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            frames,
        })
    }

    pub fn name(&self) -> String {
        self.dir.file_name().unwrap_or_default().to_string_lossy().into_owned()
    }

    pub fn frame(&self, t: usize) -> Result<GrayImage> {
        let p = self.dir.join("frames").join(frame_file_name(t, "pgm"));
        read_pgm(&p).with_context(|| format!("reading {}", p.display()))
    }

    /// First-frame quad from `file`, or from `annot.txt`.
    pub fn initial_quad(&self, file: Option<&Path>) -> Result<Quad> {
        let p = file.map(Path::to_path_buf).unwrap_or_else(|| self.dir.join("annot.txt"));
        let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        match parse_annotation(&text).with_context(|| p.display().to_string())?.first() {
            Some(Some(q)) if q.is_nondegenerate() => Ok(*q),
            _ => bail!("{}: first line is not a usable quad", p.display()),
        }
    }

    fn synth(&self, exact_flow: bool) -> Result<Arc<SynthSequence>> {
        let p = self.dir.join("spec.json");
        let text = std::fs::read_to_string(&p).with_context(|| format!("synthetic providers need {}", p.display()))?;
        let mut spec: SceneSpec = serde_json::from_str(&text).with_context(|| p.display().to_string())?;
        if exact_flow {
            spec.flow_noise = 0.0;
            spec.blur.clear();
        }
        Ok(Arc::new(generate(&spec)?))
    }

    pub fn masks(&self, src: &Source) -> Result<Box<dyn SegmentationProvider>> {
        Ok(match src {
            Source::Files => Box::new(DirectoryMaskProvider::new(self.dir.join("masks"))),
            Source::Dir(d) => Box::new(DirectoryMaskProvider::new(d)),
            Source::Synthetic | Source::Oracle => Box::new(SynthMaskProvider { seq: self.synth(false)? }),
        })
    }

    pub fn flow(&self, src: &Source, fault: Option<&Fault>, seed: u64) -> Result<Box<dyn FlowProvider>> {
        let base: Box<dyn FlowProvider> = match src {
            Source::Files => Box::new(DirectoryFlowProvider::new(self.dir.join("flows"))),
            Source::Dir(d) => Box::new(DirectoryFlowProvider::new(d)),
            Source::Synthetic => Box::new(OracleFlowProvider { seq: self.synth(false)? }),
            Source::Oracle => Box::new(OracleFlowProvider { seq: self.synth(true)? }),
        };
        Ok(match fault {
            None => base,
            Some(f) => Box::new(FaultInjectingFlow {
                inner: base,
                frames: f.first..=f.last,
                corrupt_fraction: f.fraction,
                amplitude: f.amplitude,
                seed,
            }),
        })
    }

    pub fn features(&self, dir: Option<&Path>) -> Box<dyn FeatureProvider> {
        match dir {
            Some(d) => Box::new(DirectoryFeatureProvider::new(d)),
            None => Box::new(GridFeatureProvider),
        }
    }
}

pub struct Providers {
    pub masks: Source,
    pub flow: Source,
    pub features: Option<PathBuf>,
    pub fault: Option<Fault>,
}

/// Runs the tracker over every frame, reading frames lazily.
pub fn track(seq: &SequenceDir, quad0: Quad, cfg: TrackerConfig, p: &Providers) -> Result<Vec<FrameResult>> {
    let frame0 = seq.frame(0)?;
    let mut tracker = Woftsam::new(
        cfg.clone(),
        &frame0,
        quad0,
        seq.masks(&p.masks)?,
        seq.flow(&p.flow, p.fault.as_ref(), cfg.seed)?,
        seq.features(p.features.as_deref()),
    )?;
    let mut out = Vec::with_capacity(seq.frames);
    out.push(tracker.init_result());
    for t in 1..seq.frames {
        let r = tracker.step(&seq.frame(t)?);
        for d in &r.diagnostics {
            log::warn!("{} frame {t}: {d}", seq.name());
        }
        out.push(r);
    }
    Ok(out)
}
