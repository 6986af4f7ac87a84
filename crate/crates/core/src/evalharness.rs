//! Benchmark evaluation: annotation ingestion, alignment errors, precision,
//! success curves, per-attribute tables, EMA time plots, the per-sequence
//! oracle combiner and the inlier-threshold sweep.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{FrameResult, PathTaken};
use crate::geometry::{alignment_error, estimate_homography_dlt, Homography, PointPair, Quad};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no frames with ground truth")]
    EmptyDenominator,
    #[error("sequence sets differ: {0}")]
    MismatchedSequences(String),
    #[error("frame 0 annotation is absent or degenerate")]
    DegenerateFirstFrame,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("EMA coefficient {0} outside (0, 1]")]
    InvalidCoefficient(f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EvalError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Error thresholds of the success curve: 0.5, 1.0, ..., 20.0 px.
pub fn success_thresholds() -> Vec<f64> {
    (1..=40).map(|i| i as f64 * 0.5).collect()
}

/// Maximum length of an EMA time plot.
pub const EMA_TRUNCATE: usize = 500;

/// Parses one annotation line: eight reals separated by whitespace or
/// commas. A line with any NaN token marks an absent frame.
pub fn parse_quad_line(line: &str) -> Result<Option<Quad>, String> {
    let toks: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
    if toks.len() != 8 {
        return Err(format!("expected 8 values, found {}", toks.len()));
    }
    let mut v = [0.0; 8];
    for (dst, tok) in v.iter_mut().zip(&toks) {
        *dst = tok.parse::<f64>().map_err(|e| format!("{tok:?}: {e}"))?;
    }
    if v.iter().any(|x| x.is_nan()) {
        return Ok(None);
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err("infinite coordinate".into());
    }
    Ok(Some(Quad::from_flat(v)))
}

pub fn format_quad_line(q: Option<&Quad>) -> String {
    match q {
        Some(q) => q.to_flat().iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" "),
        None => ["NaN"; 8].join(" "),
    }
}

pub fn parse_annotation(text: &str) -> Result<Vec<Option<Quad>>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_quad_line(l).map_err(|msg| EvalError::Parse { line: i + 1, msg }))
        .collect()
}

pub fn format_annotation(quads: &[Option<Quad>]) -> String {
    let mut s = String::new();
    for q in quads {
        s.push_str(&format_quad_line(q.as_ref()));
        s.push('\n');
    }
    s
}

/// `name tag1,tag2` per line.
pub fn parse_attributes(text: &str) -> HashMap<String, Vec<String>> {
    let mut out = HashMap::new();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        let Some(name) = it.next() else { continue };
        let tags = it
            .flat_map(|s| s.split(','))
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        out.insert(name.to_string(), tags);
    }
    out
}

pub fn format_attributes(rows: &[(String, Vec<String>)]) -> String {
    rows.iter().map(|(n, t)| format!("{n} {}\n", t.join(","))).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceAnnotation {
    pub name: String,
    pub quads: Vec<Option<Quad>>,
    pub attributes: Vec<String>,
}

impl SequenceAnnotation {
    pub fn frame_count(&self) -> usize {
        self.quads.len()
    }

    pub fn x0(&self) -> Result<Quad, EvalError> {
        match self.quads.first() {
            Some(Some(q)) if q.is_nondegenerate() => Ok(*q),
            _ => Err(EvalError::DegenerateFirstFrame),
        }
    }
}

/// Loads every `<gt>/<seq>/annot.txt`, with tags from `<gt>/attributes.txt`
/// when present. Sorted by name.
pub fn load_dataset(gt: &Path) -> Result<Vec<SequenceAnnotation>, EvalError> {
    let attr_path = gt.join("attributes.txt");
    let attrs = match std::fs::read_to_string(&attr_path) {
        Ok(s) => parse_attributes(&s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => HashMap::new(),
        Err(e) => return Err(EvalError::io(&attr_path, e)),
    };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(gt).map_err(|e| EvalError::io(gt, e))? {
        let entry = entry.map_err(|e| EvalError::io(gt, e))?;
        let path = entry.path().join("annot.txt");
        if !path.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let text = std::fs::read_to_string(&path).map_err(|e| EvalError::io(&path, e))?;
        let quads = parse_annotation(&text)?;
        out.push(SequenceAnnotation {
            attributes: attrs.get(&name).cloned().unwrap_or_default(),
            name,
            quads,
        });
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

/// Ground-truth poses by exact 4-point DLT from frame 0. Absent or
/// degenerate frames give `None`.
pub fn gt_homographies(annot: &SequenceAnnotation) -> Result<Vec<Option<Homography>>, EvalError> {
    let x0 = annot.x0()?;
    Ok(annot
        .quads
        .iter()
        .enumerate()
        .map(|(t, q)| {
            let q = q.as_ref()?;
            if !q.is_nondegenerate() {
                log::warn!("{}: frame {t} ground truth is degenerate, skipped", annot.name);
                return None;
            }
            let pairs: Vec<PointPair> = x0.points.iter().zip(&q.points).map(|(a, b)| PointPair::new(*a, *b)).collect();
            match estimate_homography_dlt(&pairs) {
                Ok(h) => Some(h),
                Err(e) => {
                    log::warn!("{}: frame {t} ground truth rejected: {e}", annot.name);
                    None
                }
            }
        })
        .collect())
}

/// Per-frame alignment error. Frames without ground truth are `None`; a
/// missing or unusable prediction counts as an infinite error.
pub fn alignment_errors(pred: &[Homography], gt: &[Option<Homography>], x0: &Quad) -> Vec<Option<f64>> {
    gt.iter()
        .enumerate()
        .map(|(t, g)| {
            let g = g.as_ref()?;
            Some(
                pred.get(t)
                    .and_then(|h| alignment_error(h, g, x0).ok())
                    .unwrap_or(f64::INFINITY),
            )
        })
        .collect()
}

/// Fraction of frames with error strictly below `tau`.
pub fn precision(errors: &[Option<f64>], tau: f64) -> Result<f64, EvalError> {
    let (hits, n) = hit_count(errors, tau);
    if n == 0 {
        return Err(EvalError::EmptyDenominator);
    }
    Ok(hits as f64 / n as f64)
}

fn hit_count(errors: &[Option<f64>], tau: f64) -> (usize, usize) {
    errors.iter().flatten().fold((0, 0), |(h, n), &e| (h + usize::from(e < tau), n + 1))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionAt {
    pub tau: f64,
    pub value: f64,
}

pub fn success_curve(errors: &[Option<f64>]) -> Result<Vec<PrecisionAt>, EvalError> {
    success_thresholds()
        .into_iter()
        .map(|tau| Ok(PrecisionAt { tau, value: precision(errors, tau)? }))
        .collect()
}

/// `y_0 = x_0`, `y_t = coeff x_t + (1 - coeff) y_{t-1}`, at most
/// [`EMA_TRUNCATE`] samples.
pub fn ema(x: &[f64], coeff: f64) -> Result<Vec<f64>, EvalError> {
    if !(coeff > 0.0 && coeff <= 1.0) {
        return Err(EvalError::InvalidCoefficient(coeff));
    }
    let mut out = Vec::with_capacity(x.len().min(EMA_TRUNCATE));
    for &v in x.iter().take(EMA_TRUNCATE) {
        let y = match out.last() {
            None => v,
            Some(&p) => coeff * v + (1.0 - coeff) * p,
        };
        out.push(y);
    }
    Ok(out)
}

/// Averages per-sequence hit indicators over the sequences alive at each
/// time index (absent ground truth does not count), then smooths. A time
/// index where no sequence contributes repeats the previous average.
pub fn ema_timeplot(indicators: &[Vec<Option<bool>>], coeff: f64) -> Result<Vec<f64>, EvalError> {
    let len = indicators.iter().map(Vec::len).max().unwrap_or(0).min(EMA_TRUNCATE);
    let mut x = Vec::with_capacity(len);
    for t in 0..len {
        let (s, n) = indicators
            .iter()
            .filter_map(|seq| seq.get(t).copied().flatten())
            .fold((0.0, 0usize), |(s, n), hit| (s + f64::from(u8::from(hit)), n + 1));
        if n > 0 {
            x.push(s / n as f64);
        } else if let Some(&p) = x.last() {
            x.push(p);
        }
    }
    ema(&x, coeff)
}

/// Evaluated errors of one tracker on one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub name: String,
    pub errors: Vec<Option<f64>>,
    pub attributes: Vec<String>,
}

impl SequenceResult {
    pub fn from_poses(annot: &SequenceAnnotation, pred: &[Homography]) -> Result<Self, EvalError> {
        let gt = gt_homographies(annot)?;
        Ok(Self {
            name: annot.name.clone(),
            errors: alignment_errors(pred, &gt, &annot.x0()?),
            attributes: annot.attributes.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub name: String,
    pub frames: usize,
    /// `None` when the sequence has no ground-truth frames
    pub precision: Vec<Option<PrecisionAt>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeRow {
    pub attribute: String,
    pub sequences: usize,
    pub frames: usize,
    pub precision: Vec<PrecisionAt>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub thresholds: Vec<f64>,
    pub sequences: Vec<SequenceMetrics>,
    /// pooled over all frames of all sequences
    pub aggregate: Vec<PrecisionAt>,
    pub success_curve: Vec<PrecisionAt>,
    pub attributes: Vec<AttributeRow>,
    pub ema_coeff: f64,
    pub ema_tau: f64,
    pub ema: Vec<f64>,
}

fn pooled(results: &[&SequenceResult]) -> Vec<Option<f64>> {
    results.iter().flat_map(|r| r.errors.iter().copied()).collect()
}

fn precision_row(errors: &[Option<f64>], thresholds: &[f64]) -> Result<Vec<PrecisionAt>, EvalError> {
    thresholds
        .iter()
        .map(|&tau| Ok(PrecisionAt { tau, value: precision(errors, tau)? }))
        .collect()
}

/// One row per attribute plus `All`. Each sequence counts toward every tag
/// it carries.
pub fn attribute_report(results: &[SequenceResult], thresholds: &[f64]) -> Result<Vec<AttributeRow>, EvalError> {
    let mut groups: BTreeMap<&str, Vec<&SequenceResult>> = BTreeMap::new();
    for r in results {
        let mut tags: Vec<&str> = r.attributes.iter().map(String::as_str).filter(|t| *t != "All").collect();
        tags.sort_unstable();
        tags.dedup();
        for t in tags {
            groups.entry(t).or_default().push(r);
        }
    }
    let all: Vec<&SequenceResult> = results.iter().collect();
    std::iter::once(("All", all))
        .chain(groups)
        .map(|(name, seqs)| {
            let errs = pooled(&seqs);
            Ok(AttributeRow {
                attribute: name.to_string(),
                sequences: seqs.len(),
                frames: errs.iter().flatten().count(),
                precision: precision_row(&errs, thresholds)?,
            })
        })
        .collect()
}

pub fn evaluate(results: &[SequenceResult], thresholds: &[f64], ema_coeff: f64, ema_tau: f64) -> Result<MetricReport, EvalError> {
    let sequences = results
        .par_iter()
        .map(|r| SequenceMetrics {
            name: r.name.clone(),
            frames: r.errors.iter().flatten().count(),
            precision: thresholds
                .iter()
                .map(|&tau| precision(&r.errors, tau).ok().map(|value| PrecisionAt { tau, value }))
                .collect(),
        })
        .collect();
    let all = pooled(&results.iter().collect::<Vec<_>>());
    let indicators: Vec<Vec<Option<bool>>> = results
        .iter()
        .map(|r| r.errors.iter().map(|e| e.map(|e| e < ema_tau)).collect())
        .collect();
    Ok(MetricReport {
        thresholds: thresholds.to_vec(),
        sequences,
        aggregate: precision_row(&all, thresholds)?,
        success_curve: success_curve(&all)?,
        attributes: attribute_report(results, thresholds)?,
        ema_coeff,
        ema_tau,
        ema: ema_timeplot(&indicators, ema_coeff)?,
    })
}

/// Picks, per sequence, the tracker with the higher `p@tau` (ties and
/// empty sequences go to `a`).
pub fn oracle_combine(a: &[SequenceResult], b: &[SequenceResult], tau: f64) -> Result<Vec<SequenceResult>, EvalError> {
    let by_name: HashMap<&str, &SequenceResult> = b.iter().map(|r| (r.name.as_str(), r)).collect();
    if by_name.len() != a.len() || b.len() != a.len() {
        return Err(EvalError::MismatchedSequences(format!("{} vs {} sequences", a.len(), b.len())));
    }
    a.iter()
        .map(|ra| {
            let rb = by_name
                .get(ra.name.as_str())
                .ok_or_else(|| EvalError::MismatchedSequences(format!("{} missing from second set", ra.name)))?;
            let pa = precision(&ra.errors, tau).unwrap_or(0.0);
            let pb = precision(&rb.errors, tau).unwrap_or(0.0);
            Ok(if pb > pa { (*rb).clone() } else { ra.clone() })
        })
        .collect()
}

pub const POSES_HEADER: &str = "frame,h00,h01,h02,h10,h11,h12,h20,h21,h22,path,inlier1,inlier2";

/// One row per frame: index, row-major H, path and attempt inlier
/// fractions (empty when the attempt did not run).
pub fn format_poses_csv(rows: &[FrameResult]) -> String {
    let mut s = String::from(POSES_HEADER);
    s.push('\n');
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in rows {
        let h = r.h.to_row_major();
        let hs: Vec<String> = h.iter().map(|x| format!("{x}")).collect();
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.t,
            hs.join(","),
            r.path.as_str(),
            opt(r.attempt1),
            opt(r.attempt2)
        ));
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseRow {
    pub t: usize,
    pub h: Homography,
    pub path: Option<PathTaken>,
}

/// Reads rows written by [`format_poses_csv`]. Only the frame index and the
/// nine entries are required.
pub fn parse_poses_csv(text: &str) -> Result<Vec<PoseRow>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("frame") {
            continue;
        }
        let err = |msg: String| EvalError::Parse { line: i + 1, msg };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() < 10 {
            return Err(err(format!("expected at least 10 columns, found {}", cols.len())));
        }
        let t = cols[0].parse().map_err(|e| err(format!("frame index: {e}")))?;
        let mut m = [0.0; 9];
        for (k, c) in cols[1..10].iter().enumerate() {
            m[k] = c.parse().map_err(|e| err(format!("h entry {k}: {e}")))?;
        }
        let h = Homography::from_row_major(m).map_err(|e| err(e.to_string()))?;
        out.push(PoseRow {
            t,
            h,
            path: cols.get(10).and_then(|p| PathTaken::parse(p)),
        });
    }
    Ok(out)
}

/// Dense per-frame poses from parsed rows; frames without a row hold the
/// previous pose.
pub fn poses_from_rows(rows: &[PoseRow], n: usize) -> Vec<Homography> {
    let mut by_t: BTreeMap<usize, Homography> = BTreeMap::new();
    for r in rows {
        by_t.insert(r.t, r.h);
    }
    let mut cur = Homography::identity();
    (0..n)
        .map(|t| {
            if let Some(h) = by_t.get(&t) {
                cur = *h;
            }
            cur
        })
        .collect()
}

/// One tracked sequence of a threshold sweep.
#[derive(Clone, Debug)]
pub struct TrackedSequence {
    pub result: SequenceResult,
    pub paths: Vec<PathTaken>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub threshold: f64,
    pub p5: f64,
    pub p15: f64,
    pub frames: usize,
    pub attempt1: usize,
    pub attempt2: usize,
    pub fallback: usize,
}

#[derive(Clone, Debug)]
pub struct AblationRun {
    pub row: AblationRow,
    pub sequences: Vec<TrackedSequence>,
}

/// Runs the tracker once per threshold and emits one metric row per run.
pub fn threshold_ablation(
    thresholds: &[f64],
    mut run: impl FnMut(f64) -> Vec<TrackedSequence>,
) -> Result<Vec<AblationRun>, EvalError> {
    thresholds
        .iter()
        .map(|&threshold| {
            let sequences = run(threshold);
            let errs = pooled(&sequences.iter().map(|s| &s.result).collect::<Vec<_>>());
            let count = |p: PathTaken| sequences.iter().flat_map(|s| &s.paths).filter(|&&q| q == p).count();
            Ok(AblationRun {
                row: AblationRow {
                    threshold,
                    p5: precision(&errs, 5.0)?,
                    p15: precision(&errs, 15.0)?,
                    frames: errs.iter().flatten().count(),
                    attempt1: count(PathTaken::Attempt1),
                    attempt2: count(PathTaken::Attempt2),
                    fallback: count(PathTaken::Fallback),
                },
                sequences,
            })
        })
        .collect()
}

pub fn format_success_csv(curve: &[PrecisionAt]) -> String {
    let mut s = String::from("tau,precision\n");
    for p in curve {
        s.push_str(&format!("{},{}\n", p.tau, p.value));
    }
    s
}

pub fn format_timeplot_csv(series: &[f64]) -> String {
    let mut s = String::from("frame,ema\n");
    for (t, y) in series.iter().enumerate() {
        s.push_str(&format!("{t},{y}\n"));
    }
    s
}
