use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use hybridloc::illuminant::Illuminant;
use hybridloc::imaging::{Image, Transfer};
use hybridloc::landmark::Pixel;
use hybridloc::pipeline::{
    corner_scores, eligible_truth, emit_overlay, run_benchmark, run_pipeline, BenchConfig, Diagnostics,
    EstimatorChoice, PipelineConfig,
};
use hybridloc::radiomap::{build_radio_map, FixSource, PositionFix, RadioMap, RssiVector};
use hybridloc::synthscene::{radio_setup, random_hallway, render, GroundTruth, HallwayParams, SceneSpec};

struct Case {
    spec: SceneSpec,
    image: Image,
    truth: GroundTruth,
    map: RadioMap,
    observed: RssiVector,
}

fn case(seed: u64, light: Illuminant) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = HallwayParams {
        illuminant: light,
        ..HallwayParams::default()
    };
    let spec = random_hallway(&mut rng, &params);
    let (image, truth) = render(&spec).unwrap();
    let (aps, area) = radio_setup(&spec);
    let map = build_radio_map(&aps, area, 1.0, 10, &mut rng).unwrap();
    let observed = RssiVector::observe(&aps, spec.true_pose.position, &mut rng);
    Case {
        spec,
        image,
        truth,
        map,
        observed,
    }
}

fn config(c: &Case, estimator: EstimatorChoice) -> PipelineConfig {
    PipelineConfig {
        estimator,
        camera: c.spec.camera,
        ..PipelineConfig::default()
    }
}

fn run(c: &Case, cfg: &PipelineConfig) -> (PositionFix, Diagnostics) {
    run_pipeline(cfg, &c.truth.plan, &c.map, &c.image, &c.observed).unwrap()
}

fn error(fix: &PositionFix, c: &Case) -> f64 {
    fix.position.distance(&c.truth.pose.position)
}

#[test]
fn white_light_scene_fuses_close_to_truth() {
    let c = case(3, Illuminant::white());
    let (fix, diag) = run(&c, &config(&c, EstimatorChoice::GreyWorld));
    assert_eq!(fix.source, FixSource::Fused, "{:?}", diag.vision_failure);
    assert!(error(&fix, &c) <= 0.25, "{}", error(&fix, &c));
}

#[test]
fn suppressed_corners_fall_back_to_wlan() {
    let c = case(3, Illuminant::white());
    let mut cfg = config(&c, EstimatorChoice::GreyWorld);
    cfg.corners.tau = f64::INFINITY;
    let (fix, diag) = run(&c, &cfg);
    assert_eq!(fix.source, FixSource::Wlan);
    assert!(diag.corners.is_empty());
    assert!(diag.vision_failure.is_some());
    assert_eq!(Some(fix.position), diag.wlan.map(|w| w.position));
}

#[test]
fn grey_world_finds_at_least_as_many_corners_under_colored_light() {
    let light = Illuminant::new([1.0, 0.55, 0.25]).unwrap();
    let mut wins = 0;
    for seed in 0..5 {
        let c = case(40 + seed, light);
        let eligible = eligible_truth(&c.truth.corners, &c.spec.camera, &PipelineConfig::default().floor);
        let matched = |e| {
            let (_, diag) = run(&c, &config(&c, e));
            let px: Vec<Pixel> = diag.corners.iter().map(|k| k.position).collect();
            corner_scores(&px, &eligible, 3.0).matched
        };
        if matched(EstimatorChoice::GreyWorld) >= matched(EstimatorChoice::None) {
            wins += 1;
        }
    }
    assert!(wins >= 4, "{wins}/5");
}

#[test]
fn diagnostics_are_consistent() {
    let c = case(5, Illuminant::white());
    let (_, diag) = run(&c, &config(&c, EstimatorChoice::GreyWorld));
    let labels = diag.labels.as_ref().unwrap();
    let floor = diag.floor_region.unwrap();
    for k in &diag.corners {
        let p = k.position;
        let near_floor = (-1..=1)
            .any(|dy| (-1..=1).any(|dx| labels.label_at(Pixel::new(p.x + dx, p.y + dy)) == Some(floor)));
        assert!(near_floor, "{p:?}");
    }
    assert_eq!(diag.ground_points.len(), diag.corners.len());
    let h = diag.hypothesis.as_ref().unwrap();
    assert!(h.inlier_detections.iter().all(|&i| i < diag.corners.len()));
    assert!(h.inliers.iter().all(|&id| c.truth.plan.landmark(id).is_some()));
}

#[test]
fn benchmark_grid_has_one_record_per_scene_and_estimator() {
    let bench = BenchConfig {
        trials: 5,
        seed: 11,
        ..BenchConfig::default()
    };
    assert_eq!(bench.estimators.len(), 5);
    let r = run_benchmark(&PipelineConfig::default(), &bench);
    assert_eq!(r.records.len(), 25);
    let cases: Vec<usize> = r.records.iter().map(|x| x.case).collect();
    assert_eq!(cases, (0..25).collect::<Vec<_>>());
    assert_eq!(r.per_estimator.len(), 5);
}

fn middle(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn report_medians_match_the_raw_records() {
    let bench = BenchConfig {
        trials: 4,
        seed: 12,
        estimators: vec![EstimatorChoice::GreyWorld, EstimatorChoice::None],
        ..BenchConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    run_benchmark(&PipelineConfig::default(), &bench).write(dir.path()).unwrap();

    let mut reader = csv::Reader::from_path(dir.path().join("report.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (est, wlan, fused, ang) = (col("estimator"), col("wlan_error"), col("fused_error"), col("angular_error"));
    let mut by_est: BTreeMap<String, [Vec<f64>; 3]> = BTreeMap::new();
    let mut all: [Vec<f64>; 3] = Default::default();
    for row in reader.records() {
        let row = row.unwrap();
        let entry = by_est.entry(row[est].to_string()).or_default();
        for (k, c) in [wlan, fused, ang].into_iter().enumerate() {
            if let Ok(v) = row[c].parse::<f64>() {
                entry[k].push(v);
                all[k].push(v);
            }
        }
    }

    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    let keys = ["median_wlan_error", "median_fused_error", "median_angular_error"];
    let check = |agg: &serde_json::Value, cols: &[Vec<f64>; 3]| {
        for (k, key) in keys.iter().enumerate() {
            let reported = agg[key].as_f64().unwrap();
            assert!((reported - middle(cols[k].clone())).abs() < 1e-12, "{key}");
        }
    };
    check(&json["overall"], &all);
    assert_eq!(json["per_estimator"].as_object().unwrap().len(), by_est.len());
    for (name, cols) in &by_est {
        check(&json["per_estimator"][name], cols);
    }
}

const GOLDEN_OVERLAY_SHA256: &str = "ab6abf70c7409e74a1503d2e9f06f56aba7ac674bb21ca3ff8692c65636e4780";

#[test]
fn overlay_matches_the_frozen_golden_file() {
    let c = case(3, Illuminant::white());
    let (_, diag) = run(&c, &config(&c, EstimatorChoice::GreyWorld));
    let px: Vec<Pixel> = diag.corners.iter().map(|k| k.position).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("overlay.ppm");
    emit_overlay(&c.image, &px, &path, Transfer::Srgb).unwrap();
    let digest = Sha256::digest(std::fs::read(&path).unwrap());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(hex, GOLDEN_OVERLAY_SHA256);
}
