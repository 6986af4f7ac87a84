mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use woftsam_core::controller::{FrameResult, PathTaken};
use woftsam_core::evalharness::*;
use woftsam_core::geometry::{alignment_error, Homography};
use woftsam_core::synthgen::{Motion, Segment};

fn error_value() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![
        1 => Just(None),
        1 => Just(Some(f64::INFINITY)),
        2 => (0u32..50).prop_map(|k| Some(k as f64 * 0.5)),
        6 => (0.0..30.0f64).prop_map(Some),
    ]
}

fn errors() -> impl Strategy<Value = Vec<Option<f64>>> {
    proptest::collection::vec(error_value(), 1..80).prop_filter("needs a scored frame", |v| v.iter().any(Option::is_some))
}

fn brute_precision(errors: &[Option<f64>], tau: f64) -> f64 {
    let scored: Vec<f64> = errors.iter().filter_map(|e| *e).collect();
    scored.iter().filter(|&&e| e < tau).count() as f64 / scored.len() as f64
}

fn result(name: &str, errors: Vec<Option<f64>>, tags: &[&str]) -> SequenceResult {
    SequenceResult {
        name: name.into(),
        errors,
        attributes: tags.iter().map(|s| s.to_string()).collect(),
    }
}

proptest! {
    #[test]
    fn success_curve_is_monotone(errs in errors()) {
        let curve = success_curve(&errs).unwrap();
        prop_assert_eq!(curve.len(), 40);
        prop_assert_eq!(curve[0].tau, 0.5);
        prop_assert_eq!(curve[39].tau, 20.0);
        for w in curve.windows(2) {
            prop_assert!(w[0].value <= w[1].value);
        }
        for p in &curve {
            prop_assert!((0.0..=1.0).contains(&p.value));
            prop_assert_eq!(p.value, brute_precision(&errs, p.tau));
        }
    }

    #[test]
    fn precision_is_a_strict_count(errs in errors(), k in 0u32..50) {
        let tau = k as f64 * 0.5;
        prop_assert_eq!(precision(&errs, tau).unwrap(), brute_precision(&errs, tau));
    }

    #[test]
    fn ema_matches_the_closed_form(x in proptest::collection::vec(0.0..1.0f64, 1..700), coeff in 0.01..1.0f64) {
        let y = ema(&x, coeff).unwrap();
        prop_assert_eq!(y.len(), x.len().min(EMA_TRUNCATE));
        let (lo, hi) = x[..y.len()].iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        for (t, &v) in y.iter().enumerate() {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            if t < 60 {
                // y_t = (1-a)^t x_0 + sum_{k=1..t} a (1-a)^(t-k) x_k
                let d = 1.0 - coeff;
                let closed = d.powi(t as i32) * x[0]
                    + (1..=t).map(|k| coeff * d.powi((t - k) as i32) * x[k]).sum::<f64>();
                prop_assert!((v - closed).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn all_row_is_the_pooled_dataset(seqs in proptest::collection::vec((errors(), proptest::sample::subsequence(vec!["blur", "occlusion", "scale"], 0..=3)), 1..6)) {
        let results: Vec<SequenceResult> = seqs
            .iter()
            .enumerate()
            .map(|(i, (e, tags))| result(&format!("s{i}"), e.clone(), tags))
            .collect();
        let thresholds = [5.0, 15.0];
        let rows = attribute_report(&results, &thresholds).unwrap();
        prop_assert_eq!(&rows[0].attribute, "All");
        prop_assert_eq!(rows[0].sequences, results.len());
        let pooled: Vec<Option<f64>> = results.iter().flat_map(|r| r.errors.clone()).collect();
        for p in &rows[0].precision {
            prop_assert_eq!(p.value, brute_precision(&pooled, p.tau));
        }
        let names: Vec<&str> = rows[1..].iter().map(|r| r.attribute.as_str()).collect();
        let mut sorted = names.clone();
        sorted.sort_unstable();
        prop_assert_eq!(&names, &sorted);
        for row in &rows[1..] {
            let members: Vec<Option<f64>> = results
                .iter()
                .filter(|r| r.attributes.contains(&row.attribute))
                .flat_map(|r| r.errors.clone())
                .collect();
            prop_assert_eq!(row.frames, members.iter().flatten().count());
            for p in &row.precision {
                prop_assert_eq!(p.value, brute_precision(&members, p.tau));
            }
        }
        let report = evaluate(&results, &thresholds, 0.1, 5.0).unwrap();
        prop_assert_eq!(&report.aggregate, &rows[0].precision);
    }
}

#[test]
fn oracle_combination_dominates_both_trackers() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..100 {
        let n_seq = rng.random_range(1..8);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for s in 0..n_seq {
            let len = rng.random_range(5..60);
            let present: Vec<bool> = (0..len).map(|t| t == 0 || rng.random::<f64>() > 0.1).collect();
            let draw = |rng: &mut ChaCha8Rng| -> Vec<Option<f64>> {
                let scale = rng.random_range(1.0..40.0);
                present.iter().map(|&p| p.then(|| rng.random_range(0.0..scale))).collect()
            };
            let ea = draw(&mut rng);
            let eb = draw(&mut rng);
            a.push(result(&format!("seq{s}"), ea, &[]));
            b.push(result(&format!("seq{s}"), eb, &[]));
        }
        b.reverse();
        for tau in [5.0, 15.0] {
            let c = oracle_combine(&a, &b, tau).unwrap();
            for (ra, rc) in a.iter().zip(&c) {
                let rb = b.iter().find(|r| r.name == ra.name).unwrap();
                let (pa, pb, pc) = (
                    precision(&ra.errors, tau).unwrap(),
                    precision(&rb.errors, tau).unwrap(),
                    precision(&rc.errors, tau).unwrap(),
                );
                assert!(pc >= pa.max(pb), "trial {trial}");
            }
            let pool = |r: &[SequenceResult]| {
                let all: Vec<Option<f64>> = r.iter().flat_map(|s| s.errors.clone()).collect();
                precision(&all, tau).unwrap()
            };
            assert!(pool(&c) >= pool(&a).max(pool(&b)), "trial {trial}");
        }
    }
}

#[test]
fn oracle_combination_rejects_mismatched_sets() {
    let a = vec![result("x", vec![Some(1.0)], &[])];
    let b = vec![result("y", vec![Some(1.0)], &[])];
    assert!(matches!(oracle_combine(&a, &b, 5.0), Err(EvalError::MismatchedSequences(_))));
    assert!(oracle_combine(&a, &[], 5.0).is_err());
}

#[test]
fn timeplot_averages_live_sequences() {
    let ind = vec![
        vec![Some(true), Some(true), Some(false), None],
        vec![Some(false), None, Some(false)],
        vec![Some(true)],
    ];
    let y = ema_timeplot(&ind, 1.0).unwrap();
    assert_eq!(y, vec![2.0 / 3.0, 1.0, 0.0, 0.0]);
    let z = ema_timeplot(&ind, 0.5).unwrap();
    assert!((z[1] - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    let long = vec![vec![Some(true); 900]];
    assert_eq!(ema_timeplot(&long, 0.1).unwrap().len(), EMA_TRUNCATE);
}

#[test]
fn synthetic_ground_truth_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut seqs = Vec::new();
    for (i, seed) in [3u64, 4].into_iter().enumerate() {
        let mut spec = common::centered_scene(&format!("seq{i}"), 240, 180, 90.0, 70.0, seed);
        spec.trajectory = vec![Segment {
            frames: 24,
            motions: vec![
                Motion::Rotate { deg: 1.1 },
                Motion::Scale { factor: 1.004 },
                Motion::Perspective { px: 2e-5, py: -1e-5 },
            ],
        }];
        let seq = woftsam_core::synthgen::generate(&spec).unwrap();
        seq.write(&dir.path().join(&spec.name)).unwrap();
        seqs.push(seq);
    }
    let rows: Vec<(String, Vec<String>)> = seqs
        .iter()
        .map(|s| (s.spec.name.clone(), s.sequence_tags().iter().map(|t| t.to_string()).collect()))
        .collect();
    std::fs::write(dir.path().join("attributes.txt"), format_attributes(&rows)).unwrap();

    let data = load_dataset(dir.path()).unwrap();
    assert_eq!(data.len(), 2);
    let mut results = Vec::new();
    for (annot, seq) in data.iter().zip(&seqs) {
        assert_eq!(annot.name, seq.spec.name);
        assert_eq!(annot.attributes, rows.iter().find(|r| r.0 == annot.name).unwrap().1);
        let gt = gt_homographies(annot).unwrap();
        for (t, g) in gt.iter().enumerate() {
            assert!(alignment_error(g.as_ref().unwrap(), &seq.gt(t), &seq.x0).unwrap() < 1e-6, "frame {t}");
        }
        results.push(SequenceResult::from_poses(annot, seq.poses()).unwrap());
    }
    let report = evaluate(&results, &[5.0, 15.0], 0.1, 5.0).unwrap();
    assert!(report.aggregate.iter().all(|p| p.value == 1.0));
    assert!(report.ema.iter().all(|&v| v == 1.0));
    let rows = attribute_report(&results, &[5.0]).unwrap();
    assert_eq!(rows[0].frames, 50);
}

#[test]
fn missing_prediction_counts_as_a_miss() {
    let x0 = woftsam_core::geometry::Quad::rect(0.0, 0.0, 10.0, 10.0);
    let gt = vec![Some(Homography::identity()), None, Some(Homography::identity())];
    let e = alignment_errors(&[Homography::identity()], &gt, &x0);
    assert_eq!(e, vec![Some(0.0), None, Some(f64::INFINITY)]);
    assert_eq!(precision(&e, 20.0).unwrap(), 0.5);
    assert!(matches!(precision(&[None, None], 5.0), Err(EvalError::EmptyDenominator)));
}

#[test]
fn poses_csv_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let paths = [PathTaken::Init, PathTaken::Attempt1, PathTaken::Attempt2, PathTaken::Fallback, PathTaken::Samh];
    let frames: Vec<FrameResult> = (0..25)
        .map(|t| {
            let h = Homography::similarity(rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0), rng.random_range(-50.0..50.0), 1.0 / 3.0);
            FrameResult {
                t,
                h,
                path: paths[t % 5],
                h_sam: h,
                samh: None,
                attempt1: (t % 5 > 0).then(|| rng.random()),
                attempt2: None,
                diagnostics: Vec::new(),
            }
        })
        .collect();
    let text = format_poses_csv(&frames);
    assert!(text.starts_with(POSES_HEADER));
    let rows = parse_poses_csv(&text).unwrap();
    for (r, f) in rows.iter().zip(&frames) {
        assert_eq!(r.t, f.t);
        assert_eq!(r.h.to_row_major(), f.h.to_row_major());
        assert_eq!(r.path, Some(f.path));
    }
    let sparse: Vec<PoseRow> = rows.iter().filter(|r| r.t % 3 == 0).cloned().collect();
    let dense = poses_from_rows(&sparse, 25);
    assert_eq!(dense[4], frames[3].h);
    assert_eq!(dense[24], frames[24].h);
    assert!(parse_poses_csv("0,1,0,0,0,1\n").is_err());
}

#[test]
fn ablation_rows_count_paths() {
    let runs = threshold_ablation(&[0.1, 0.3], |th| {
        let fallback = th > 0.2;
        vec![TrackedSequence {
            result: result("a", vec![Some(0.0), Some(if fallback { 9.0 } else { 1.0 }), Some(20.0)], &[]),
            paths: vec![PathTaken::Init, if fallback { PathTaken::Fallback } else { PathTaken::Attempt1 }, PathTaken::Attempt2],
        }]
    })
    .unwrap();
    let (lo, hi) = (&runs[0].row, &runs[1].row);
    assert_eq!((lo.attempt1, lo.attempt2, lo.fallback, lo.frames), (1, 1, 0, 3));
    assert_eq!((hi.attempt1, hi.attempt2, hi.fallback), (0, 1, 1));
    assert!((lo.p5 - 2.0 / 3.0).abs() < 1e-12);
    assert!((hi.p5 - 1.0 / 3.0).abs() < 1e-12);
    assert!((hi.p15 - 2.0 / 3.0).abs() < 1e-12);
}
