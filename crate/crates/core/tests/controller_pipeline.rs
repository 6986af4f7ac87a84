mod common;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use woftsam_core::controller::*;
use woftsam_core::features::GridFeatureProvider;
use woftsam_core::geometry::{alignment_error, Quad};
use woftsam_core::image::{GrayImage, Mask};
use woftsam_core::provider::ProviderError;
use woftsam_core::samh::{SamHConfig, SegmentationProvider};
use woftsam_core::synthgen::{oracle_providers, SynthSequence};
use woftsam_core::wfh::{relative_to_prewarp, FlowField, FlowProvider, FlowRequest};

/// Random rectangles unrelated to the target.
struct GarbageMasks(ChaCha8Rng);

impl SegmentationProvider for GarbageMasks {
    fn init(&mut self, _: &GrayImage, _: &Quad) -> Result<(), ProviderError> {
        Ok(())
    }

    fn next(&mut self, _: usize, frame: &GrayImage) -> Result<Mask, ProviderError> {
        let (w, h) = (frame.width as f64, frame.height as f64);
        let x0 = self.0.random_range(0.0..w / 2.0);
        let y0 = self.0.random_range(0.0..h / 2.0);
        let q = Quad::rect(x0, y0, x0 + self.0.random_range(10.0..w / 2.0), y0 + self.0.random_range(10.0..h / 2.0));
        Ok(Mask::from_quad(frame.width, frame.height, &q))
    }
}

/// Uniform garbage on the first request of every frame, the wrapped flow
/// on any later request.
struct FirstAttemptFault<F> {
    inner: F,
    last_t: Option<usize>,
}

impl<F: FlowProvider> FlowProvider for FirstAttemptFault<F> {
    fn flow(&mut self, req: &FlowRequest<'_>) -> Result<FlowField, ProviderError> {
        let mut f = self.inner.flow(req)?;
        if self.last_t != Some(req.t) {
            self.last_t = Some(req.t);
            let mut rng = ChaCha8Rng::seed_from_u64(req.t as u64);
            for d in &mut f.flow {
                *d = [rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0)];
            }
        }
        Ok(f)
    }
}

fn track(seq: &Arc<SynthSequence>, cfg: TrackerConfig, seg: Box<dyn SegmentationProvider>, flow: Box<dyn FlowProvider>) -> Vec<FrameResult> {
    let s = Arc::clone(seq);
    run_tracker(cfg, seq.len(), move |t| s.frame(t), seq.x0, seg, flow, Box::new(GridFeatureProvider)).unwrap()
}

fn err(seq: &SynthSequence, r: &FrameResult) -> f64 {
    alignment_error(&r.h, &seq.gt(r.t), &seq.x0).unwrap()
}

#[test]
fn oracle_run_stays_on_attempt_one() {
    let seq = Arc::new(common::random_smooth_sequence("smooth", 320, 240, 120.0, 80, 31));
    let (m, f, _) = oracle_providers(&seq);
    let out = track(&seq, TrackerConfig::default(), Box::new(m), Box::new(f));
    for r in &out[1..] {
        assert_eq!(r.path, PathTaken::Attempt1, "frame {}", r.t);
        assert!(err(&seq, r) < 0.5, "frame {}", r.t);
        assert!(r.diagnostics.is_empty());
    }
}

#[test]
fn null_flow_falls_back_to_the_mask_tracker_every_frame() {
    let seq = Arc::new(common::random_smooth_sequence("null", 320, 240, 120.0, 50, 32));
    let (m, _, _) = oracle_providers(&seq);
    let out = track(&seq, TrackerConfig::default(), Box::new(m.clone()), Box::new(NullFlow));
    let s = Arc::clone(&seq);
    let alone = run_samh(SamHConfig::default(), seq.len(), move |t| s.frame(t), seq.x0, Box::new(m), Box::new(GridFeatureProvider)).unwrap();
    for (r, a) in out[1..].iter().zip(&alone[1..]) {
        assert_eq!(r.path, PathTaken::Fallback);
        assert_eq!(r.h, r.h_sam);
        assert_eq!(r.h.to_row_major(), a.h.to_row_major());
    }
}

#[test]
fn passing_attempt_one_ignores_mask_quality() {
    let seq = Arc::new(common::random_smooth_sequence("masks", 320, 240, 120.0, 50, 33));
    let noisy = |seq: &Arc<SynthSequence>| FaultInjectingFlow {
        inner: oracle_providers(seq).1,
        frames: 0..=usize::MAX,
        corrupt_fraction: 0.5,
        amplitude: 40.0,
        seed: 3,
    };
    let (m, _, _) = oracle_providers(&seq);
    let good = track(&seq, TrackerConfig::default(), Box::new(m), Box::new(noisy(&seq)));
    let bad = track(&seq, TrackerConfig::default(), Box::new(GarbageMasks(ChaCha8Rng::seed_from_u64(1))), Box::new(noisy(&seq)));
    for (a, b) in good[1..].iter().zip(&bad[1..]) {
        assert_eq!(a.path, PathTaken::Attempt1);
        assert_eq!(b.path, PathTaken::Attempt1);
        let frac = a.attempt1.unwrap();
        assert!((0.4..0.6).contains(&frac), "frame {}: {frac}", a.t);
        assert_eq!(a.h.to_row_major(), b.h.to_row_major(), "frame {}", a.t);
        assert!(err(&seq, a) < 0.5);
    }
}

#[test]
fn second_attempt_composes_onto_the_mask_pose() {
    let seq = Arc::new(common::random_smooth_sequence("second", 320, 240, 120.0, 40, 34));
    let (m, f, _) = oracle_providers(&seq);
    let flow = FirstAttemptFault { inner: f, last_t: None };
    let out = track(&seq, TrackerConfig::default(), Box::new(m), Box::new(flow));
    for r in &out[1..] {
        assert_eq!(r.path, PathTaken::Attempt2, "frame {}", r.t);
        assert!(r.attempt1.unwrap() < 0.2);
        assert!(err(&seq, r) < 1e-3, "frame {}: {}", r.t, err(&seq, r));
        assert_ne!(r.h, r.h_sam);
    }
}

#[test]
fn garbage_flow_window_recovers() {
    let seq = Arc::new(common::random_smooth_sequence("fault", 320, 240, 120.0, 80, 35));
    let (m, f, _) = oracle_providers(&seq);
    let flow = FaultInjectingFlow {
        inner: f,
        frames: 50..=60,
        corrupt_fraction: 1.0,
        amplitude: 40.0,
        seed: 9,
    };
    let out = track(&seq, TrackerConfig::default(), Box::new(m), Box::new(flow));
    for r in &out[50..=60] {
        assert!(matches!(r.path, PathTaken::Attempt2 | PathTaken::Fallback), "frame {}", r.t);
        if r.path == PathTaken::Fallback {
            assert_eq!(r.h, r.h_sam);
        }
    }
    assert!(out[61..=62].iter().any(|r| r.path == PathTaken::Attempt1));
    for r in &out[62..] {
        assert_eq!(r.path, PathTaken::Attempt1, "frame {}", r.t);
        assert!(err(&seq, r) < 3.0, "frame {}", r.t);
    }
}

#[test]
fn true_pose_prewarp_leaves_little_residual() {
    let seq = common::random_smooth_sequence("residual", 320, 240, 120.0, 30, 36);
    let template = seq.frame(0);
    let win = seq.template_window();
    for t in [5, 15, 29] {
        let h = seq.gt(t);
        let (warped, valid) = prewarp(&seq.frame(t), &h, 320, 240).unwrap();
        let rel = relative_to_prewarp(&seq.flow_window(t, Some(win)), &h);
        let (mut sum, mut n, mut diff) = (0.0, 0usize, 0.0);
        for y in win[1]..=win[3] {
            for x in win[0]..=win[2] {
                let p = woftsam_core::geometry::Point2::new(x as f64, y as f64);
                if !seq.x0.contains(p) || !valid.get(x, y) {
                    continue;
                }
                let [dx, dy] = rel.flow[y * 320 + x];
                sum += f64::from(dx).hypot(f64::from(dy));
                diff += f64::from((warped.get(x, y) - template.get(x, y)).abs());
                n += 1;
            }
        }
        assert!(n > 1000);
        assert!(sum / (n as f64) < 0.5, "frame {t}");
        assert!(diff / (n as f64) < 4.0, "frame {t}: {}", diff / n as f64);
    }
}
