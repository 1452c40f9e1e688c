//! Synthetic hallway scenes with analytic ground truth.
//!
//! A hallway is an axis-aligned box along plan +y: floor, two side walls with
//! doors, end walls and a ceiling. Pixels follow a two-term reflection model,
//! a shaded body term `m · (albedo ⊙ e)` plus a floor highlight
//! `m_s · s · e`, with the light scaled so its largest channel is 1.

mod generate;
mod render;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geomatch::{CameraModel, EdgeLine, FloorPlan, Landmark, LandmarkKind, Pose2D, Side};
use crate::illuminant::Illuminant;

pub use generate::{
    balance_grey_world, highlight_scene, radio_setup, random_hallway, white_panel_scene, HallwayParams, Palette,
};
pub use render::render;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("camera sees no floor")]
    DegenerateCamera,
    #[error("scene could clip: peak value {0:.3} exceeds 1")]
    ClippingRisk(f64),
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Door {
    pub side: Side,
    /// Distance of the near jamb from the hallway start, meters.
    pub offset: f64,
    pub width: f64,
}

/// Rectangular surface patch on a side wall.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub side: Side,
    pub offset: f64,
    pub width: f64,
    pub bottom: f64,
    pub top: f64,
    pub albedo: [f64; 3],
}

/// Elliptical glossy floor patch; highlight strength falls off as a Gaussian
/// of the normalized elliptical radius and is cut at three radii.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gloss {
    pub x: f64,
    pub y: f64,
    pub sx: f64,
    pub sy: f64,
}

impl Gloss {
    pub fn strength(&self, x: f64, y: f64) -> f64 {
        let q = ((x - self.x) / self.sx).powi(2) + ((y - self.y) / self.sy).powi(2);
        if q > 9.0 {
            0.0
        } else {
            (-0.5 * q).exp()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shading {
    Flat,
    /// `m = exp(-rate · distance)` with distance from the camera in meters.
    Falloff { rate: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub hallway_width: f64,
    /// Hallway length along +y, meters.
    pub visible_depth: f64,
    #[serde(default = "default_wall_height")]
    pub wall_height: f64,
    #[serde(default = "default_door_height")]
    pub door_height: f64,
    pub floor_albedo: [f64; 3],
    pub wall_albedo: [f64; 3],
    pub door_albedo: [f64; 3],
    #[serde(default = "default_ceiling")]
    pub ceiling_albedo: [f64; 3],
    #[serde(default)]
    pub doors: Vec<Door>,
    #[serde(default)]
    pub panels: Vec<Panel>,
    pub illuminant: Illuminant,
    #[serde(default)]
    pub specular_strength: f64,
    /// Glossy floor patch; defaults to the floor point under the optical axis.
    #[serde(default)]
    pub gloss: Option<Gloss>,
    pub shading: Shading,
    pub camera: CameraModel,
    pub true_pose: Pose2D,
}

fn default_wall_height() -> f64 {
    2.6
}

fn default_door_height() -> f64 {
    2.0
}

fn default_ceiling() -> [f64; 3] {
    [0.8, 0.8, 0.8]
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::InvalidSpec(m));
        if !(self.hallway_width > 0.0 && self.visible_depth > 0.0 && self.wall_height > 0.0) {
            return bad("hallway dimensions must be positive".into());
        }
        if !(self.door_height > 0.0 && self.door_height <= self.wall_height) {
            return bad("door height must lie in (0, wall height]".into());
        }
        let albedos = [self.floor_albedo, self.wall_albedo, self.door_albedo, self.ceiling_albedo]
            .into_iter()
            .chain(self.panels.iter().map(|p| p.albedo));
        for a in albedos {
            if a.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return bad(format!("albedo {a:?} outside [0, 1]"));
            }
        }
        for d in &self.doors {
            if !(d.width > 0.0 && d.offset > 0.0 && d.offset + d.width < self.visible_depth) {
                return bad(format!("door {d:?} not inside the hallway"));
            }
        }
        for p in &self.panels {
            if !(p.width > 0.0 && p.offset >= 0.0 && p.offset + p.width <= self.visible_depth && p.bottom < p.top) {
                return bad(format!("panel {p:?} not inside the hallway"));
            }
        }
        if !(0.0..=1.0).contains(&self.specular_strength) {
            return bad("specular strength outside [0, 1]".into());
        }
        if let Shading::Falloff { rate } = self.shading {
            if !(rate >= 0.0 && rate.is_finite()) {
                return bad("falloff rate must be non-negative".into());
            }
        }
        self.camera.validate().map_err(|e| SceneError::InvalidSpec(e.to_string()))?;
        let p = self.true_pose.position;
        let half = self.hallway_width / 2.0;
        if !(p.x.abs() < half && p.y > 0.0 && p.y < self.visible_depth && self.camera.height < self.wall_height) {
            return bad("camera must be inside the hallway".into());
        }
        let peak = self.floor_albedo.iter().fold(0.0f64, |m, v| m.max(*v)) + self.specular_strength;
        if peak > 1.0 + 1e-12 {
            return Err(SceneError::ClippingRisk(peak));
        }
        Ok(())
    }

    /// The highlight patch in effect when `specular_strength > 0`.
    pub fn effective_gloss(&self) -> Gloss {
        self.gloss.unwrap_or_else(|| {
            let ahead = self.camera.height / self.camera.pitch.tan();
            let c = self.true_pose.to_plan(crate::Point2::new(0.0, ahead));
            Gloss {
                x: c.x,
                y: c.y,
                sx: 0.35 * self.hallway_width,
                sy: 0.8,
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let spec: SceneSpec = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<(), SceneError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// A plan landmark projected into the rendered image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerTruth {
    pub u: f64,
    pub v: f64,
    pub landmark_id: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub illuminant: Illuminant,
    pub corners: Vec<CornerTruth>,
    /// Row-major floor membership per pixel.
    #[serde(skip)]
    pub floor_mask: Vec<bool>,
    pub plan: FloorPlan,
    pub pose: Pose2D,
}

/// Wall-floor corners at both hallway ends, then two jambs per door, with
/// sequential ids; one edge line per side running along +y.
pub fn make_plan(spec: &SceneSpec) -> FloorPlan {
    let half = spec.hallway_width / 2.0;
    let len = spec.visible_depth;
    let side_x = |s: Side| if s == Side::Left { -half } else { half };
    let mut landmarks = Vec::new();
    let mut push = |x: f64, y: f64, kind: LandmarkKind| {
        let id = landmarks.len() as u32;
        landmarks.push(Landmark { id, x, y, kind });
    };
    for y in [0.0, len] {
        push(-half, y, LandmarkKind::WallFloor);
        push(half, y, LandmarkKind::WallFloor);
    }
    for d in &spec.doors {
        push(side_x(d.side), d.offset, LandmarkKind::DoorFloor);
        push(side_x(d.side), d.offset + d.width, LandmarkKind::DoorFloor);
    }
    let line = |side: Side| EdgeLine {
        side,
        x1: side_x(side),
        y1: 0.0,
        x2: side_x(side),
        y2: len,
    };
    FloorPlan {
        landmarks,
        edge_lines: vec![line(Side::Left), line(Side::Right)],
        hallways: vec![vec![[-half, 0.0], [half, 0.0], [half, len], [-half, len]]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec() -> SceneSpec {
        SceneSpec {
            hallway_width: 2.4,
            visible_depth: 10.0,
            wall_height: 2.6,
            door_height: 2.0,
            floor_albedo: [0.3, 0.3, 0.35],
            wall_albedo: [0.75, 0.7, 0.6],
            door_albedo: [0.45, 0.25, 0.15],
            ceiling_albedo: [0.8, 0.8, 0.8],
            doors: vec![
                Door {
                    side: Side::Left,
                    offset: 3.0,
                    width: 0.9,
                },
                Door {
                    side: Side::Left,
                    offset: 5.5,
                    width: 0.9,
                },
                Door {
                    side: Side::Right,
                    offset: 4.0,
                    width: 1.0,
                },
            ],
            panels: vec![],
            illuminant: Illuminant::white(),
            specular_strength: 0.0,
            gloss: None,
            shading: Shading::Flat,
            camera: CameraModel {
                focal: 170.0,
                cx: 119.5,
                cy: 89.5,
                height: 1.5,
                pitch: 20f64.to_radians(),
                width: 240,
                rows: 180,
            },
            true_pose: Pose2D::new(crate::Point2::new(0.1, 0.6), 0.03),
        }
    }

    #[test]
    fn plan_without_doors_has_only_wall_corners() {
        let s = SceneSpec { doors: vec![], ..spec() };
        let p = make_plan(&s);
        assert_eq!(p.edge_lines.len(), 2);
        assert!(p.landmarks.iter().all(|l| l.kind == LandmarkKind::WallFloor));
        assert!(p.validate().is_ok());
    }

    #[test]
    fn two_left_doors_give_four_left_jambs() {
        let s = SceneSpec {
            doors: spec().doors[..2].to_vec(),
            ..spec()
        };
        let p = make_plan(&s);
        let jambs: Vec<_> = p.landmarks.iter().filter(|l| l.kind == LandmarkKind::DoorFloor).collect();
        assert_eq!(jambs.len(), 4);
        assert!(jambs.iter().all(|l| l.x < 0.0));
    }

    #[test]
    fn landmarks_lie_on_edge_lines() {
        let p = make_plan(&spec());
        for l in &p.landmarks {
            let d = p.edge_lines.iter().map(|e| e.distance(l.position())).fold(f64::MAX, f64::min);
            assert!(d < 1e-9);
        }
    }

    #[test]
    fn validation() {
        assert!(spec().validate().is_ok());
        let s = SceneSpec {
            floor_albedo: [0.8, 0.5, 0.5],
            specular_strength: 0.4,
            ..spec()
        };
        assert!(matches!(s.validate(), Err(SceneError::ClippingRisk(_))));
        let mut s = spec();
        s.doors[0].offset = 9.5;
        assert!(s.validate().is_err());
        let s = SceneSpec {
            true_pose: Pose2D::new(crate::Point2::new(3.0, 1.0), 0.0),
            ..spec()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = SceneSpec {
            shading: Shading::Falloff { rate: 0.1 },
            ..spec()
        };
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"kind\":\"falloff\""));
        let back: SceneSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
