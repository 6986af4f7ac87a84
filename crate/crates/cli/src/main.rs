mod sequence;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;
use woftsam_core::controller::TrackerConfig;
use woftsam_core::evalharness::{
    evaluate, format_attributes, format_poses_csv, format_success_csv, format_timeplot_csv, load_dataset, parse_poses_csv,
    poses_from_rows, threshold_ablation, SequenceAnnotation, SequenceResult, TrackedSequence,
};
use woftsam_core::synthgen::{generate, SceneSpec};

use sequence::{parse_range, track, Fault, Providers, SequenceDir, Source};

#[derive(Parser)]
#[command(name = "woftsam", version, about = "Planar tracking with mask-based fallback")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic sequences with ground truth, masks and flow.
    Synth {
        /// scene list as JSON or TOML
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track one sequence and write per-frame poses.
    Track {
        #[arg(long)]
        seq: PathBuf,
        /// initial quad file, defaults to `<seq>/annot.txt`
        #[arg(long)]
        init: Option<PathBuf>,
        #[command(flatten)]
        tracker: TrackerArgs,
        #[arg(long)]
        inlier_threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted poses against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        /// holds `<seq>.csv` or `<seq>/poses.csv`
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "5,15")]
        thresholds: Vec<f64>,
        #[arg(long, default_value_t = 0.1)]
        ema: f64,
        /// error threshold of the success indicator fed to the EMA
        #[arg(long, default_value_t = 5.0)]
        ema_tau: f64,
        /// `report.json` path, or a directory to receive it and the CSVs
        #[arg(long)]
        out: PathBuf,
    },
    /// Track a dataset once per inlier threshold.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3")]
        thresholds: Vec<f64>,
        #[command(flatten)]
        tracker: TrackerArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the annotation API.
    AnnotServe {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// allowed browser origin, any when omitted
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

#[derive(Args)]
struct TrackerArgs {
    /// `files`, `synthetic` or a directory of masks
    #[arg(long, default_value = "files")]
    provider_masks: Source,
    /// `files`, `synthetic`, `oracle` or a directory of flow files
    #[arg(long, default_value = "files")]
    provider_flow: Source,
    /// `grid` or a directory of feature files
    #[arg(long, default_value = "grid")]
    provider_features: String,
    /// tracker configuration in TOML
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// frame range such as `50-60` whose flow is partly replaced by garbage
    #[arg(long, value_parser = parse_range)]
    fault_frames: Option<(usize, usize)>,
    #[arg(long, default_value_t = 0.5)]
    fault_fraction: f64,
    #[arg(long, default_value_t = 40.0)]
    fault_amplitude: f64,
}

impl TrackerArgs {
    fn config(&self) -> Result<TrackerConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| p.display().to_string())?
            }
            None => TrackerConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    fn providers(&self) -> Providers {
        Providers {
            masks: self.provider_masks.clone(),
            flow: self.provider_flow.clone(),
            features: (self.provider_features != "grid").then(|| PathBuf::from(&self.provider_features)),
            fault: self.fault_frames.map(|(first, last)| Fault {
                first,
                last,
                fraction: self.fault_fraction,
                amplitude: self.fault_amplitude,
            }),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SceneFile {
    Scenes { scenes: Vec<SceneSpec> },
    List(Vec<SceneSpec>),
    One(Box<SceneSpec>),
}

fn read_scenes(path: &Path) -> Result<Vec<SceneSpec>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: SceneFile = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| path.display().to_string())?
    } else {
        serde_json::from_str(&text).with_context(|| path.display().to_string())?
    };
    Ok(match file {
        SceneFile::Scenes { scenes } | SceneFile::List(scenes) => scenes,
        SceneFile::One(s) => vec![*s],
    })
}

fn synth(spec: &Path, out: &Path) -> Result<()> {
    let mut scenes = read_scenes(spec)?;
    for (i, s) in scenes.iter_mut().enumerate() {
        if s.name.is_empty() {
            s.name = format!("seq{i:03}");
        }
    }
    fs::create_dir_all(out)?;
    let tags = scenes
        .par_iter()
        .map(|s| {
            let seq = generate(s).with_context(|| format!("scene {}", s.name))?;
            seq.write(&out.join(&s.name)).with_context(|| format!("writing {}", s.name))?;
            log::info!("{}: {} frames", s.name, seq.len());
            Ok((s.name.clone(), seq.sequence_tags().into_iter().map(str::to_string).collect()))
        })
        .collect::<Result<Vec<(String, Vec<String>)>>>()?;
    fs::write(out.join("attributes.txt"), format_attributes(&tags))?;
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run_track(seq: &Path, init: Option<&Path>, args: &TrackerArgs, threshold: Option<f64>, out: &Path) -> Result<()> {
    let seq = SequenceDir::open(seq)?;
    let mut cfg = args.config()?;
    if let Some(t) = threshold {
        cfg.inlier_threshold = t;
    }
    let rows = track(&seq, seq.initial_quad(init)?, cfg, &args.providers())?;
    write_file(out, &format_poses_csv(&rows))
}

fn prediction_for(pred: &Path, annot: &SequenceAnnotation) -> Result<SequenceResult> {
    let candidates = [pred.join(format!("{}.csv", annot.name)), pred.join(&annot.name).join("poses.csv")];
    let Some(path) = candidates.iter().find(|p| p.is_file()) else {
        log::warn!("{}: no prediction, every frame counts as a miss", annot.name);
        return Ok(SequenceResult {
            name: annot.name.clone(),
            errors: annot.quads.iter().map(|q| q.map(|_| f64::INFINITY)).collect(),
            attributes: annot.attributes.clone(),
        });
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = parse_poses_csv(&text).with_context(|| path.display().to_string())?;
    Ok(SequenceResult::from_poses(annot, &poses_from_rows(&rows, annot.frame_count()))?)
}

fn eval(gt: &Path, pred: &Path, thresholds: &[f64], ema: f64, ema_tau: f64, out: &Path) -> Result<()> {
    let dataset = load_dataset(gt)?;
    if dataset.is_empty() {
        bail!("{}: no sequences with annot.txt", gt.display());
    }
    let results = dataset
        .iter()
        .map(|a| prediction_for(pred, a))
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&results, thresholds, ema, ema_tau)?;
    let (json, dir) = if out.extension().is_some_and(|e| e == "json") {
        (out.to_path_buf(), out.parent().unwrap_or(Path::new(".")).to_path_buf())
    } else {
        (out.join("report.json"), out.to_path_buf())
    };
    write_file(&json, &serde_json::to_string_pretty(&report)?)?;
    write_file(&dir.join("success_curve.csv"), &format_success_csv(&report.success_curve))?;
    write_file(&dir.join("timeplot.csv"), &format_timeplot_csv(&report.ema))?;
    for p in &report.aggregate {
        println!("p@{} = {:.4}", p.tau, p.value);
    }
    Ok(())
}

fn ablate(data: &Path, thresholds: &[f64], args: &TrackerArgs, out: &Path) -> Result<()> {
    let dataset = load_dataset(data)?;
    if dataset.is_empty() {
        bail!("{}: no sequences with annot.txt", data.display());
    }
    let base = args.config()?;
    let providers = args.providers();
    let mut failure = None;
    let runs = threshold_ablation(thresholds, |threshold| {
        let cfg = TrackerConfig {
            inlier_threshold: threshold,
            ..base.clone()
        };
        let tracked: Result<Vec<_>> = dataset
            .par_iter()
            .map(|annot| {
                let seq = SequenceDir::open(&data.join(&annot.name))?;
                let rows = track(&seq, annot.x0()?, cfg.clone(), &providers)?;
                let poses: Vec<_> = rows.iter().map(|r| r.h).collect();
                let csv = format_poses_csv(&rows);
                write_file(&out.join(format!("threshold_{threshold}")).join(format!("{}.csv", annot.name)), &csv)?;
                Ok(TrackedSequence {
                    result: SequenceResult::from_poses(annot, &poses)?,
                    paths: rows.iter().map(|r| r.path).collect(),
                })
            })
            .collect();
        tracked.unwrap_or_else(|e| {
            failure.get_or_insert(e);
            Vec::new()
        })
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let rows: Vec<_> = runs.into_iter().map(|r| r.row).collect();
    let mut csv = String::from("threshold,p5,p15,frames,attempt1,attempt2,fallback\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.threshold, r.p5, r.p15, r.frames, r.attempt1, r.attempt2, r.fallback
        ));
        println!(
            "threshold {}: p@5 {:.4} p@15 {:.4} attempt1 {} attempt2 {} fallback {}",
            r.threshold, r.p5, r.p15, r.attempt1, r.attempt2, r.fallback
        );
    }
    write_file(&out.join("ablation.csv"), &csv)?;
    write_file(&out.join("ablation.json"), &serde_json::to_string_pretty(&rows)?)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Command::Synth { spec, out } => synth(&spec, &out),
        Command::Track {
            seq,
            init,
            tracker,
            inlier_threshold,
            out,
        } => run_track(&seq, init.as_deref(), &tracker, inlier_threshold, &out),
        Command::Eval {
            gt,
            pred,
            thresholds,
            ema,
            ema_tau,
            out,
        } => eval(&gt, &pred, &thresholds, ema, ema_tau, &out),
        Command::Ablate {
            data,
            thresholds,
            tracker,
            out,
        } => ablate(&data, &thresholds, &tracker, &out),
        Command::AnnotServe { data, port, cors_origin } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(woftsam_annot::serve(data, port, cors_origin))?;
            Ok(())
        }
    }
}
