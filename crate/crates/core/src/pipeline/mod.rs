//! End-to-end positioning: color constancy, floor corners, plan registration
//! and fusion with the WLAN fix, plus batch evaluation and overlays.

mod bench;
mod overlay;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geomatch::{
    fit_edge_lines, fuse, generate_hypotheses, inverse_perspective, ransac_match, CameraModel, FloorPlan,
    GroundPoint, HypothesisParams, MatchHypothesis,
};
use crate::illuminant::{
    apply_correction, diagonal_map, estimate_grey_edge, estimate_grey_world, estimate_iic, estimate_shades_of_grey,
    estimate_white_patch, GreyEdgeParams, IicOptions, Illuminant, MinkowskiNorm,
};
use crate::imaging::Image;
use crate::landmark::{
    detect_corners, floor_region, mean_shift_segment, select_floor_corners, CornerParams, CornerPoint,
    FloorCornerFilter, MeanShiftParams, SegmentLabels,
};
use crate::radiomap::{wlan_locate, PositionFix, RadioMap, RssiVector};

pub use bench::{corner_scores, eligible_truth, median, run_benchmark, Aggregates, BenchConfig, CaseRecord, CornerScore, EvalReport};
pub use overlay::{draw_crosses, emit_overlay};

/// Illuminant estimator and its parameters. `None` skips correction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorChoice {
    None,
    GreyWorld,
    WhitePatch {
        #[serde(default = "one")]
        clip: f64,
    },
    ShadesOfGrey {
        p: f64,
    },
    /// `p = 0` selects the maximum norm.
    GreyEdge {
        order: u32,
        p: f64,
        sigma: f64,
    },
    Iic,
}

fn one() -> f64 {
    1.0
}

impl EstimatorChoice {
    /// The five estimators compared in benchmarks.
    pub fn standard_set() -> Vec<EstimatorChoice> {
        vec![
            EstimatorChoice::GreyWorld,
            EstimatorChoice::WhitePatch { clip: 1.0 },
            EstimatorChoice::ShadesOfGrey { p: 6.0 },
            EstimatorChoice::GreyEdge {
                order: 1,
                p: 6.0,
                sigma: 1.0,
            },
            EstimatorChoice::Iic,
        ]
    }

    pub fn estimate(&self, img: &Image) -> Result<Option<Illuminant>, crate::illuminant::IlluminantError> {
        Ok(Some(match *self {
            EstimatorChoice::None => return Ok(None),
            EstimatorChoice::GreyWorld => estimate_grey_world(img)?,
            EstimatorChoice::WhitePatch { clip } => estimate_white_patch(img, clip)?,
            EstimatorChoice::ShadesOfGrey { p } => estimate_shades_of_grey(img, p)?,
            EstimatorChoice::GreyEdge { order, p, sigma } => {
                let norm = if p == 0.0 { MinkowskiNorm::Infinity } else { MinkowskiNorm::finite(p)? };
                estimate_grey_edge(img, &GreyEdgeParams::new(order, norm, sigma)?)?
            }
            EstimatorChoice::Iic => estimate_iic(img, &IicOptions::default())?,
        }))
    }
}

impl fmt::Display for EstimatorChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorChoice::None => write!(f, "none"),
            EstimatorChoice::GreyWorld => write!(f, "grey_world"),
            EstimatorChoice::WhitePatch { clip } => write!(f, "white_patch:{clip}"),
            EstimatorChoice::ShadesOfGrey { p } => write!(f, "shades_of_grey:{p}"),
            EstimatorChoice::GreyEdge { order, p, sigma } => {
                let p = if *p == 0.0 { "inf".to_string() } else { p.to_string() };
                write!(f, "grey_edge:{order},{p},{sigma}")
            }
            EstimatorChoice::Iic => write!(f, "iic"),
        }
    }
}

/// Parses `name` or `name:args`, e.g. `shades_of_grey:6` or
/// `grey_edge:1,inf,2`. Missing arguments take the usual defaults.
impl FromStr for EstimatorChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = args
            .split(',')
            .filter(|a| !a.is_empty())
            .map(|a| match a.trim() {
                "inf" | "infinity" => Ok(0.0),
                t => t.parse::<f64>().map_err(|e| format!("bad estimator argument {t:?}: {e}")),
            })
            .collect::<Result<_, _>>()?;
        let arg = |i: usize, d: f64| nums.get(i).copied().unwrap_or(d);
        let choice = match name.trim() {
            "none" => EstimatorChoice::None,
            "grey_world" => EstimatorChoice::GreyWorld,
            "white_patch" => EstimatorChoice::WhitePatch { clip: arg(0, 1.0) },
            "shades_of_grey" => EstimatorChoice::ShadesOfGrey { p: arg(0, 6.0) },
            "grey_edge" => EstimatorChoice::GreyEdge {
                order: arg(0, 1.0) as u32,
                p: arg(1, 6.0),
                sigma: arg(2, 1.0),
            },
            "iic" => EstimatorChoice::Iic,
            other => return Err(format!("unknown estimator {other:?}")),
        };
        Ok(choice)
    }
}

/// Rules for forwarding corners to plan matching.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FloorFilterConfig {
    /// Rows below the horizon that are still ignored.
    pub horizon_margin: f64,
    pub border_margin: i32,
    pub merge_radius: f64,
    /// Ground points farther than this, meters, are not matched.
    pub max_range: f64,
}

impl Default for FloorFilterConfig {
    fn default() -> Self {
        Self {
            horizon_margin: 4.0,
            border_margin: 3,
            merge_radius: 3.0,
            max_range: 12.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub count: usize,
    pub inlier_tol: f64,
    pub min_inliers: usize,
    pub distance_gate: f64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            count: 200,
            inlier_tol: 0.3,
            min_inliers: 4,
            distance_gate: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub estimator: EstimatorChoice,
    pub segmentation: MeanShiftParams,
    pub corners: CornerParams,
    pub floor: FloorFilterConfig,
    pub camera: CameraModel,
    pub plan_path: Option<PathBuf>,
    pub radio_map_path: Option<PathBuf>,
    pub ransac: RansacConfig,
    pub wlan_k: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorChoice::GreyWorld,
            segmentation: MeanShiftParams::default(),
            corners: CornerParams::default(),
            floor: FloorFilterConfig::default(),
            camera: crate::synthscene::HallwayParams::default().camera,
            plan_path: None,
            radio_map_path: None,
            ransac: RansacConfig::default(),
            wlan_k: 3,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::config(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.camera.validate().map_err(|e| PipelineError::config(e.to_string()))?;
        let s = &self.segmentation;
        if !(s.hs > 0.0 && s.hr > 0.0) {
            return Err(PipelineError::config("segmentation bandwidths must be positive"));
        }
        if self.corners.k == 0 || self.corners.tau.is_nan() {
            return Err(PipelineError::config("corner support k must be at least 1"));
        }
        if self.wlan_k == 0 {
            return Err(PipelineError::config("wlan_k must be at least 1"));
        }
        let r = &self.ransac;
        if !(r.inlier_tol >= 0.0 && r.distance_gate >= 0.0) {
            return Err(PipelineError::config("RANSAC tolerances must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Illuminant,
    Correction,
    Segmentation,
    Corners,
    Projection,
    Wlan,
    Hypotheses,
    Ransac,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(String::from));
        write!(f, "{}", s.unwrap_or_default())
    }
}

#[derive(Clone, Debug, PartialEq, Error, Serialize, Deserialize)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self {
            stage,
            message: message.to_string(),
        }
    }

    fn config(message: impl fmt::Display) -> Self {
        Self::new(Stage::Config, message)
    }
}

/// Every intermediate product of one pipeline run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub illuminant: Option<Illuminant>,
    pub clamped_values: usize,
    pub region_count: usize,
    pub floor_region: Option<usize>,
    /// Floor corners forwarded to matching, ordered by row then column.
    pub corners: Vec<CornerPoint>,
    /// Back-projection of `corners`, index by index.
    pub ground_points: Vec<GroundPoint>,
    pub wlan: Option<PositionFix>,
    pub candidates: usize,
    pub hypothesis: Option<MatchHypothesis>,
    /// First failing vision stage; the result then falls back to WLAN.
    pub vision_failure: Option<PipelineError>,
    #[serde(skip)]
    pub corrected: Option<Image>,
    #[serde(skip)]
    pub labels: Option<SegmentLabels>,
}

/// Correction target: the canonical white light.
pub fn canonical_white() -> Illuminant {
    Illuminant::white()
}

/// Color constancy, segmentation and floor corner detection.
pub fn detect_floor_corners(config: &PipelineConfig, image: &Image, diag: &mut Diagnostics) -> Result<(), PipelineError> {
    let estimate = config
        .estimator
        .estimate(image)
        .map_err(|e| PipelineError::new(Stage::Illuminant, e))?;
    diag.illuminant = estimate;
    let corrected = match estimate {
        Some(e) => {
            let map = diagonal_map(&e, &canonical_white()).map_err(|e| PipelineError::new(Stage::Correction, e))?;
            let (img, clamped) = apply_correction(image, &map);
            diag.clamped_values = clamped;
            img
        }
        None => image.clone(),
    };
    if corrected.is_empty() {
        return Err(PipelineError::new(Stage::Segmentation, "empty image"));
    }
    let labels = mean_shift_segment(&corrected, &config.segmentation);
    let floor = floor_region(&labels);
    diag.region_count = labels.region_count();
    diag.floor_region = Some(floor);
    let all = detect_corners(&labels, &config.corners);
    let filter = FloorCornerFilter {
        min_row: config.camera.horizon_row() + config.floor.horizon_margin,
        border_margin: config.floor.border_margin,
        merge_radius: config.floor.merge_radius,
    };
    diag.corners = select_floor_corners(&labels, &all, floor, &filter);
    diag.corrected = Some(corrected);
    diag.labels = Some(labels);
    Ok(())
}

fn match_to_plan(
    config: &PipelineConfig,
    plan: &FloorPlan,
    wlan: &PositionFix,
    diag: &mut Diagnostics,
) -> Result<MatchHypothesis, PipelineError> {
    let mut kept = Vec::new();
    for c in &diag.corners {
        let g = inverse_perspective(&config.camera, f64::from(c.position.x), f64::from(c.position.y))
            .map_err(|e| PipelineError::new(Stage::Projection, e))?;
        if g.y <= config.floor.max_range {
            kept.push((*c, g));
        }
    }
    diag.corners = kept.iter().map(|k| k.0).collect();
    diag.ground_points = kept.iter().map(|k| k.1).collect();
    let (left, right) = fit_edge_lines(&diag.ground_points).map_err(|e| PipelineError::new(Stage::Hypotheses, e))?;
    let params = HypothesisParams {
        count: config.ransac.count,
        distance_gate: config.ransac.distance_gate,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let candidates = generate_hypotheses(&left, &right, plan, wlan, &params, &mut rng)
        .map_err(|e| PipelineError::new(Stage::Hypotheses, e))?;
    diag.candidates = candidates.len();
    ransac_match(&candidates, &diag.ground_points, plan, wlan, config.ransac.inlier_tol)
        .map_err(|e| PipelineError::new(Stage::Ransac, e))
}

/// Runs every stage on one frame and one WLAN observation. A failing vision
/// stage is recorded in the diagnostics and the WLAN fix is returned; only
/// configuration and WLAN failures are errors.
pub fn run_pipeline(
    config: &PipelineConfig,
    plan: &FloorPlan,
    map: &RadioMap,
    image: &Image,
    observed: &RssiVector,
) -> Result<(PositionFix, Diagnostics), PipelineError> {
    config.validate()?;
    let mut diag = Diagnostics::default();
    let vision = detect_floor_corners(config, image, &mut diag);
    let wlan = wlan_locate(map, observed, config.wlan_k).map_err(|e| PipelineError::new(Stage::Wlan, e))?;
    diag.wlan = Some(wlan);
    let matched = vision.and_then(|_| match_to_plan(config, plan, &wlan, &mut diag));
    let fix = match matched {
        Ok(m) => {
            let fix = fuse(&wlan, Some(&m), config.ransac.min_inliers);
            diag.hypothesis = Some(m);
            fix
        }
        Err(e) => {
            diag.vision_failure = Some(e);
            fuse(&wlan, None, config.ransac.min_inliers)
        }
    };
    Ok((fix, diag))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimator_names_round_trip() {
        for e in EstimatorChoice::standard_set().into_iter().chain([
            EstimatorChoice::None,
            EstimatorChoice::GreyEdge {
                order: 0,
                p: 0.0,
                sigma: 0.0,
            },
        ]) {
            assert_eq!(e.to_string().parse::<EstimatorChoice>().unwrap(), e);
        }
        assert_eq!("grey_edge".parse::<EstimatorChoice>().unwrap().to_string(), "grey_edge:1,6,1");
        assert!("nope".parse::<EstimatorChoice>().is_err());
    }

    #[test]
    fn config_json_defaults_fill_in() {
        let c: PipelineConfig = serde_json::from_str(r#"{"estimator": {"kind": "iic"}, "seed": 4}"#).unwrap();
        assert_eq!(c.estimator, EstimatorChoice::Iic);
        assert_eq!(c.seed, 4);
        assert_eq!(c.ransac, RansacConfig::default());
        assert!(c.validate().is_ok());
    }
}
