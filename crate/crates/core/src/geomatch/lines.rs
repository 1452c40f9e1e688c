use serde::{Deserialize, Serialize};

use super::{GeoError, GroundPoint, Side};
use crate::Point2;

/// Total-least-squares line through one side's ground points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeFit {
    pub side: Side,
    /// Centroid of the supporting points.
    pub origin: Point2,
    /// Unit direction, oriented away from the camera (non-negative y).
    pub direction: Point2,
    /// Supporting points ordered by forward distance.
    pub points: Vec<GroundPoint>,
    /// RMS perpendicular distance of the points to the line.
    pub residual_rms: f64,
}

fn fit_side(side: Side, mut points: Vec<GroundPoint>) -> Result<EdgeFit, GeoError> {
    if points.len() < 2 {
        return Err(GeoError::InsufficientPoints {
            side,
            found: points.len(),
        });
    }
    points.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));
    let n = points.len() as f64;
    let origin = points
        .iter()
        .fold(Point2::default(), |acc, p| acc.add(&p.point()))
        .scale(1.0 / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in &points {
        let d = p.point().sub(&origin);
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let mut direction = Point2::new(angle.cos(), angle.sin());
    if direction.y < 0.0 || (direction.y == 0.0 && direction.x < 0.0) {
        direction = direction.scale(-1.0);
    }
    let residual_rms = (points
        .iter()
        .map(|p| direction.cross(&p.point().sub(&origin)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(EdgeFit {
        side,
        origin,
        direction,
        points,
        residual_rms,
    })
}

/// Splits points at the camera axis (`x < 0` left) and fits one line per side.
pub fn fit_edge_lines(points: &[GroundPoint]) -> Result<(EdgeFit, EdgeFit), GeoError> {
    let (left, right): (Vec<GroundPoint>, Vec<GroundPoint>) = points.iter().partition(|p| p.x < 0.0);
    Ok((fit_side(Side::Left, left)?, fit_side(Side::Right, right)?))
}
