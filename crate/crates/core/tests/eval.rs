mod common;

use std::path::Path;

use lungdet::eval::{
    confusion, emit_report, evaluate, pr_curve, read_curve_csv, roc_curve, scalar_metrics,
    ConfusionCounts,
};
use lungdet::geometry::{BBox, ScoredBox};
use lungdet::postprocess::Detection;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn det(conf: f32, b: [f32; 4]) -> Detection {
    ScoredBox {
        bbox: BBox::new(b[0], b[1], b[2], b[3]),
        confidence: conf,
        class_id: 0,
    }
}

type GroundTruth = Vec<Vec<(usize, BBox<f32>)>>;

/// Image 0: a hit. Image 1: positive with only a miss scoring 0.3.
/// Image 2: negative scoring 0.6. Image 3: negative with nothing.
fn golden_case() -> (Vec<Vec<Detection>>, GroundTruth) {
    let gt = BBox::new(0.0, 0.0, 10.0, 10.0);
    (
        vec![
            vec![det(0.9, [0.0, 0.0, 10.0, 10.0])],
            vec![det(0.3, [20.0, 20.0, 30.0, 30.0])],
            vec![det(0.6, [0.0, 0.0, 5.0, 5.0])],
            vec![],
        ],
        vec![vec![(0, gt)], vec![(0, gt)], vec![], vec![]],
    )
}

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn report_files_match_golden() {
    let (dets, gts) = golden_case();
    let report = evaluate(&dets, &gts, 0.5, 0.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    for name in ["metrics.json", "roc.csv", "pr.csv"] {
        let got = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(got, golden(name), "{name}");
    }
    assert_eq!(
        read_curve_csv(&golden("roc.csv")).unwrap(),
        report.roc_points
    );
    assert_eq!(read_curve_csv(&golden("pr.csv")).unwrap(), report.pr_points);
}

#[test]
fn counts_match_naive_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let scores: Vec<f32> = (0..n)
            .map(|_| rng.random_range(0..11) as f32 / 10.0)
            .collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let c = confusion(&scores, &labels, 0.5).unwrap();
        let count = |l: bool, called: bool| {
            (0..n)
                .filter(|&i| labels[i] == l && (scores[i] > 0.5) == called)
                .count()
        };
        assert_eq!(
            c,
            ConfusionCounts {
                tp: count(true, true),
                fp: count(false, true),
                tn: count(false, false),
                fn_: count(true, false),
            }
        );
        assert_eq!(c.total(), n);
    }
}

#[test]
fn f1_and_accuracy_identities_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    for _ in 0..1000 {
        let c = ConfusionCounts {
            tp: rng.random_range(1..50),
            fp: rng.random_range(0..50),
            tn: rng.random_range(1..50),
            fn_: rng.random_range(0..50),
        };
        let m = scalar_metrics(&c);
        let (p, r) = (m.precision.unwrap(), m.recall.unwrap());
        assert_eq!(m.f1.unwrap(), 2.0 * p * r / (p + r));
        let pos = (c.tp + c.fn_) as f64;
        let neg = (c.tn + c.fp) as f64;
        let weighted = (m.sensitivity.unwrap() * pos + m.specificity.unwrap() * neg) / (pos + neg);
        assert!((m.accuracy.unwrap() - weighted).abs() <= 4.0 * f64::EPSILON);
    }
    let m = scalar_metrics(&ConfusionCounts {
        tp: 47,
        fp: 0,
        tn: 0,
        fn_: 3,
    });
    assert_eq!(m.sensitivity, Some(0.94));
    assert_eq!(m.specificity, None);
}

#[test]
fn roc_auc_equals_mann_whitney() {
    let mut rng = ChaCha8Rng::seed_from_u64(302);
    for _ in 0..200 {
        let n = rng.random_range(2..60);
        let scores: Vec<f32> = (0..n)
            .map(|_| rng.random_range(0..20) as f32 / 20.0)
            .collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let auc = roc_curve(&scores, &labels).unwrap().area;
        assert!((auc - common::mann_whitney(&scores, &labels)).abs() < 1e-12);
    }
}

#[test]
fn random_scores_give_chance_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let scores: Vec<f32> = (0..10_000).map(|_| rng.random()).collect();
    let labels: Vec<bool> = (0..10_000).map(|_| rng.random_bool(0.5)).collect();
    let auc = roc_curve(&scores, &labels).unwrap().area;
    assert!((0.45..=0.55).contains(&auc), "{auc}");
}

#[test]
fn average_precision_equals_riemann_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    for _ in 0..50 {
        let n = rng.random_range(1..40);
        let dets: Vec<(f32, bool)> = (0..n)
            .map(|_| (rng.random::<f32>(), rng.random_bool(0.5)))
            .collect();
        let hits = dets.iter().filter(|d| d.1).count();
        let total_gt = hits + rng.random_range(0..5);
        if total_gt == 0 {
            continue;
        }
        let ap = pr_curve(&dets, total_gt).unwrap().area;
        assert!((ap - common::riemann_ap(&dets, total_gt)).abs() < 1e-4);
    }
}
