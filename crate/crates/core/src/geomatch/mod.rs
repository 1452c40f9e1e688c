//! Registration of ground-plane corner detections against a floor plan.
//!
//! Corners are back-projected through a calibrated pinhole camera, split into
//! left and right floor edges, and matched to plan landmarks near the WLAN fix
//! with a 2-D rigid RANSAC.

mod camera;
mod hypotheses;
mod lines;
mod plan;
mod rigid;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Point2;

pub use camera::{inverse_perspective, project_ground, CameraModel};
pub use hypotheses::{generate_hypotheses, unconstrained_assignments, Candidate, HypothesisParams};
pub use lines::{fit_edge_lines, EdgeFit};
pub use plan::{EdgeLine, FloorPlan, Landmark, LandmarkKind, Side};
pub use rigid::{estimate_rigid_2d, fuse, match_inliers, ransac_match, rigid_residual, MatchHypothesis};

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("pixel ({u}, {v}) does not see the floor")]
    AboveHorizon { u: f64, v: f64 },
    #[error("{side:?} side has {found} points, need 2")]
    InsufficientPoints { side: Side, found: usize },
    #[error("no plan landmark within the WLAN radius")]
    NoCandidates,
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("no hypothesis produced a pose")]
    NoHypothesis,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid floor plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Floor point in the camera frame: x right, y forward, meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
}

impl GroundPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn point(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// Camera placement in the plan: a plan point is `R(heading) · g + position`
/// for a camera-frame ground point `g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub position: Point2,
    pub heading: f64,
}

impl Pose2D {
    pub fn new(position: Point2, heading: f64) -> Self {
        Self {
            position,
            heading: crate::wrap_angle(heading),
        }
    }

    pub fn identity() -> Self {
        Self::new(Point2::default(), 0.0)
    }

    pub fn to_plan(&self, g: Point2) -> Point2 {
        g.rotate(self.heading).add(&self.position)
    }

    pub fn to_camera(&self, p: Point2) -> Point2 {
        p.sub(&self.position).rotate(-self.heading)
    }

    /// Absolute heading difference in radians, in [0, π].
    pub fn heading_error(&self, other: &Pose2D) -> f64 {
        crate::wrap_angle(self.heading - other.heading).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_transforms_are_inverse() {
        let pose = Pose2D::new(Point2::new(3.0, -2.0), 2.5);
        let g = Point2::new(0.7, 4.1);
        let back = pose.to_camera(pose.to_plan(g));
        assert!(back.distance(&g) < 1e-12);
    }

    #[test]
    fn heading_is_wrapped() {
        let pose = Pose2D::new(Point2::default(), 3.0 * std::f64::consts::PI);
        assert!((pose.heading - std::f64::consts::PI).abs() < 1e-12);
    }
}
