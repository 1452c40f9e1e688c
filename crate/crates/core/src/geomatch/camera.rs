use serde::{Deserialize, Serialize};

use super::{GeoError, GroundPoint};

/// Calibrated pinhole camera at `height` above a flat floor, pitched down by
/// `pitch`, with zero roll.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    /// Focal length in pixels.
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    /// Meters above the floor.
    pub height: f64,
    /// Radians below horizontal.
    pub pitch: f64,
    pub width: usize,
    pub rows: usize,
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), GeoError> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(self.focal > 0.0 && self.height > 0.0 && self.pitch > 0.0 && self.pitch < half_pi) {
            return Err(GeoError::InvalidCamera(format!(
                "need focal > 0, height > 0 and 0 < pitch < pi/2, got {self:?}"
            )));
        }
        if self.width == 0 || self.rows == 0 || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(GeoError::InvalidCamera("empty image or non-finite principal point".into()));
        }
        Ok(())
    }

    /// Image row of the horizon line.
    pub fn horizon_row(&self) -> f64 {
        self.cy - self.focal * self.pitch.tan()
    }

    /// Viewing ray of pixel `(u, v)` in the camera's level frame
    /// (x right, y forward, z up); not normalized.
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        let (s, c) = self.pitch.sin_cos();
        let a = (u - self.cx) / self.focal;
        let b = (v - self.cy) / self.focal;
        [a, c - b * s, -s - b * c]
    }
}

/// Intersects the viewing ray of `(u, v)` with the floor.
pub fn inverse_perspective(cam: &CameraModel, u: f64, v: f64) -> Result<GroundPoint, GeoError> {
    let [dx, dy, dz] = cam.ray(u, v);
    if dz >= -1e-12 {
        return Err(GeoError::AboveHorizon { u, v });
    }
    let t = cam.height / -dz;
    let g = GroundPoint::new(t * dx, t * dy);
    if g.y <= 0.0 {
        return Err(GeoError::AboveHorizon { u, v });
    }
    Ok(g)
}

/// Pixel coordinates of a floor point, or `None` behind the image plane.
pub fn project_ground(cam: &CameraModel, g: GroundPoint) -> Option<(f64, f64)> {
    let (s, c) = cam.pitch.sin_cos();
    let depth = g.y * c + cam.height * s;
    if depth <= 1e-9 {
        return None;
    }
    let down = -g.y * s + cam.height * c;
    Some((cam.cx + cam.focal * g.x / depth, cam.cy + cam.focal * down / depth))
}
