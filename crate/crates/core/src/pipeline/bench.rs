use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_pipeline, EstimatorChoice, FloorFilterConfig, PipelineConfig};
use crate::geomatch::CameraModel;
use crate::illuminant::Illuminant;
use crate::imaging::angular_error;
use crate::landmark::Pixel;
use crate::radiomap::{build_radio_map, FixSource, RssiVector};
use crate::synthscene::{radio_setup, random_hallway, render, CornerTruth, HallwayParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Number of generated scenes ("locations").
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorChoice>,
    pub hallway: HallwayParams,
    /// When set, each scene gets a random light whose channels are drawn
    /// from `[min, 1]` before normalization; otherwise `hallway.illuminant`.
    pub random_light_min: Option<f64>,
    pub survey_spacing: f64,
    pub survey_samples: usize,
    /// Corner match radius for precision and recall, pixels.
    pub match_radius: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            trials: 5,
            seed: 0,
            estimators: EstimatorChoice::standard_set(),
            hallway: HallwayParams::default(),
            random_light_min: Some(0.5),
            survey_spacing: 1.0,
            survey_samples: 10,
            match_radius: 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CornerScore {
    pub true_corners: usize,
    pub detected: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Ground-truth corners a detector could report: below the horizon band and
/// away from the border.
pub fn eligible_truth(truth: &[CornerTruth], camera: &CameraModel, floor: &FloorFilterConfig) -> Vec<CornerTruth> {
    let min_row = camera.horizon_row() + floor.horizon_margin;
    let m = f64::from(floor.border_margin);
    truth
        .iter()
        .filter(|c| {
            c.v > min_row && c.u >= m && c.v >= m && c.u < camera.width as f64 - m && c.v < camera.rows as f64 - m
        })
        .copied()
        .collect()
}

/// Greedy one-to-one matching within `radius` pixels, closest pairs first.
/// An empty detection set has precision 1; an empty truth set has recall 1.
pub fn corner_scores(detected: &[Pixel], truth: &[CornerTruth], radius: f64) -> CornerScore {
    let mut pairs = Vec::new();
    for (i, d) in detected.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let dist = (f64::from(d.x) - t.u).hypot(f64::from(d.y) - t.v);
            if dist <= radius {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut ud, mut ut) = (vec![false; detected.len()], vec![false; truth.len()]);
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !ud[i] && !ut[j] {
            ud[i] = true;
            ut[j] = true;
            matched += 1;
        }
    }
    let ratio = |n: usize, d: usize| if d == 0 { 1.0 } else { n as f64 / d as f64 };
    CornerScore {
        true_corners: truth.len(),
        detected: detected.len(),
        matched,
        precision: ratio(matched, detected.len()),
        recall: ratio(matched, truth.len()),
    }
}

/// One scene under one estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case: usize,
    pub scene: usize,
    pub estimator: String,
    pub angular_error: Option<f64>,
    pub true_corners: usize,
    pub detected_corners: usize,
    pub matched_corners: usize,
    pub precision: f64,
    pub recall: f64,
    pub wlan_error: Option<f64>,
    pub fused_error: Option<f64>,
    pub source: Option<FixSource>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub cases: usize,
    pub failures: usize,
    pub median_angular_error: f64,
    pub mean_angular_error: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub median_wlan_error: f64,
    pub mean_wlan_error: f64,
    pub median_fused_error: f64,
    pub mean_fused_error: f64,
    pub fused_fraction: f64,
}

/// Fraction of cases whose error is at most `threshold` meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfSample {
    pub threshold: f64,
    pub wlan: f64,
    pub fused: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<CaseRecord>,
    pub overall: Aggregates,
    pub per_estimator: BTreeMap<String, Aggregates>,
    pub cdf: Vec<CdfSample>,
}

/// Median with the mean of the two middle values for even counts; 0 when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

impl Aggregates {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a CaseRecord>) -> Self {
        let records: Vec<&CaseRecord> = records.into_iter().collect();
        let col = |f: &dyn Fn(&CaseRecord) -> Option<f64>| -> Vec<f64> { records.iter().filter_map(|r| f(r)).collect() };
        let ang = col(&|r| r.angular_error);
        let prec = col(&|r| Some(r.precision));
        let rec = col(&|r| Some(r.recall));
        let wlan = col(&|r| r.wlan_error);
        let fused = col(&|r| r.fused_error);
        let n_fused = records.iter().filter(|r| r.source == Some(FixSource::Fused)).count();
        Self {
            cases: records.len(),
            failures: records.iter().filter(|r| r.error.is_some()).count(),
            median_angular_error: median(&ang),
            mean_angular_error: mean(&ang),
            mean_precision: mean(&prec),
            mean_recall: mean(&rec),
            median_wlan_error: median(&wlan),
            mean_wlan_error: mean(&wlan),
            median_fused_error: median(&fused),
            mean_fused_error: mean(&fused),
            fused_fraction: if records.is_empty() { 0.0 } else { n_fused as f64 / records.len() as f64 },
        }
    }
}

const CDF_THRESHOLDS: [f64; 9] = [0.1, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 20.0];

impl EvalReport {
    pub fn from_records(records: Vec<CaseRecord>) -> Self {
        let overall = Aggregates::from_records(&records);
        let mut groups: BTreeMap<String, Vec<&CaseRecord>> = BTreeMap::new();
        for r in &records {
            groups.entry(r.estimator.clone()).or_default().push(r);
        }
        let per_estimator = groups
            .into_iter()
            .map(|(k, v)| (k, Aggregates::from_records(v)))
            .collect();
        let frac = |vals: &[f64], t: f64| {
            if vals.is_empty() {
                0.0
            } else {
                vals.iter().filter(|v| **v <= t).count() as f64 / vals.len() as f64
            }
        };
        let wlan: Vec<f64> = records.iter().filter_map(|r| r.wlan_error).collect();
        let fused: Vec<f64> = records.iter().filter_map(|r| r.fused_error).collect();
        let cdf = if records.is_empty() {
            vec![]
        } else {
            CDF_THRESHOLDS
                .iter()
                .map(|&t| CdfSample {
                    threshold: t,
                    wlan: frac(&wlan, t),
                    fused: frac(&fused, t),
                })
                .collect()
        };
        Self {
            records,
            overall,
            per_estimator,
            cdf,
        }
    }

    pub fn records_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Aggregates and CDF as JSON; the per-case records go to the CSV.
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "overall": self.overall,
            "per_estimator": self.per_estimator,
            "cdf": self.cdf,
        }))
        .expect("report serializes")
    }

    /// Writes `report.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let csv = self.records_csv().map_err(std::io::Error::other)?;
        std::fs::write(dir.join("report.csv"), csv)?;
        std::fs::write(dir.join("report.json"), self.summary_json())
    }
}

fn random_light<R: Rng + ?Sized>(rng: &mut R, min: f64) -> Illuminant {
    let min = min.clamp(0.01, 1.0);
    let rgb = [0; 3].map(|_| rng.random_range(min..=1.0));
    Illuminant::new(rgb).expect("positive components")
}

fn failed(case: usize, scene: usize, estimator: &EstimatorChoice, message: String) -> CaseRecord {
    CaseRecord {
        case,
        scene,
        estimator: estimator.to_string(),
        angular_error: None,
        true_corners: 0,
        detected_corners: 0,
        matched_corners: 0,
        precision: 0.0,
        recall: 0.0,
        wlan_error: None,
        fused_error: None,
        source: None,
        error: Some(message),
    }
}

fn run_scene(config: &PipelineConfig, bench: &BenchConfig, scene_idx: usize) -> Vec<CaseRecord> {
    let n_est = bench.estimators.len();
    let case = |k: usize| scene_idx * n_est + k;
    let mut rng = ChaCha8Rng::seed_from_u64(bench.seed);
    rng.set_stream(scene_idx as u64);
    let mut hallway = bench.hallway.clone();
    if let Some(min) = bench.random_light_min {
        hallway.illuminant = random_light(&mut rng, min);
    }
    let spec = random_hallway(&mut rng, &hallway);
    let fail_all = |msg: String| -> Vec<CaseRecord> {
        bench
            .estimators
            .iter()
            .enumerate()
            .map(|(k, e)| failed(case(k), scene_idx, e, msg.clone()))
            .collect()
    };
    let (image, truth) = match render(&spec) {
        Ok(r) => r,
        Err(e) => return fail_all(format!("render: {e}")),
    };
    let (aps, area) = radio_setup(&spec);
    let map = match build_radio_map(&aps, area, bench.survey_spacing, bench.survey_samples, &mut rng) {
        Ok(m) => m,
        Err(e) => return fail_all(format!("radio map: {e}")),
    };
    let observed = RssiVector::observe(&aps, spec.true_pose.position, &mut rng);
    let pipeline_seed: u64 = rng.random();
    let eligible = eligible_truth(&truth.corners, &spec.camera, &config.floor);
    bench
        .estimators
        .iter()
        .enumerate()
        .map(|(k, est)| {
            let cfg = PipelineConfig {
                estimator: *est,
                camera: spec.camera,
                seed: pipeline_seed,
                ..config.clone()
            };
            match run_pipeline(&cfg, &truth.plan, &map, &image, &observed) {
                Ok((fix, diag)) => {
                    let pixels: Vec<Pixel> = diag.corners.iter().map(|c| c.position).collect();
                    let score = corner_scores(&pixels, &eligible, bench.match_radius);
                    CaseRecord {
                        case: case(k),
                        scene: scene_idx,
                        estimator: est.to_string(),
                        angular_error: diag.illuminant.map(|e| angular_error(&e, &truth.illuminant)),
                        true_corners: score.true_corners,
                        detected_corners: score.detected,
                        matched_corners: score.matched,
                        precision: score.precision,
                        recall: score.recall,
                        wlan_error: diag.wlan.map(|w| w.position.distance(&truth.pose.position)),
                        fused_error: Some(fix.position.distance(&truth.pose.position)),
                        source: Some(fix.source),
                        error: diag.vision_failure.map(|e| e.to_string()),
                    }
                }
                Err(e) => failed(case(k), scene_idx, est, e.to_string()),
            }
        })
        .collect()
}

/// Generates `bench.trials` scenes and runs every configured estimator on
/// each. Scenes run in parallel; each draws from its own stream of the
/// seeded generator, so the report depends only on the inputs.
pub fn run_benchmark(config: &PipelineConfig, bench: &BenchConfig) -> EvalReport {
    let records: Vec<CaseRecord> = (0..bench.trials)
        .into_par_iter()
        .flat_map_iter(|s| run_scene(config, bench, s))
        .collect();
    EvalReport::from_records(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(pts: &[(f64, f64)]) -> Vec<CornerTruth> {
        pts.iter()
            .enumerate()
            .map(|(i, &(u, v))| CornerTruth {
                u,
                v,
                landmark_id: i as u32,
            })
            .collect()
    }

    #[test]
    fn scores_are_one_to_one() {
        let t = truth(&[(10.0, 10.0), (30.0, 10.0)]);
        let d = [Pixel::new(11, 10), Pixel::new(10, 11), Pixel::new(50, 50)];
        let s = corner_scores(&d, &t, 3.0);
        assert_eq!(s.matched, 1);
        assert!((s.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.recall - 0.5).abs() < 1e-12);
        let empty = corner_scores(&[], &[], 3.0);
        assert_eq!((empty.precision, empty.recall), (1.0, 1.0));
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[]), 0.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn zero_trials_give_empty_report() {
        let bench = BenchConfig {
            trials: 0,
            ..BenchConfig::default()
        };
        let r = run_benchmark(&PipelineConfig::default(), &bench);
        assert!(r.records.is_empty());
        assert_eq!(r.overall, Aggregates::default());
        assert!(r.per_estimator.is_empty());
    }
}
