use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GeoError;
use crate::Point2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkKind {
    DoorFloor,
    WallFloor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub kind: LandmarkKind,
}

impl Landmark {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

/// Floor edge of a hallway wall. `side` is relative to walking from
/// `(x1, y1)` towards `(x2, y2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeLine {
    pub side: Side,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl EdgeLine {
    pub fn start(&self) -> Point2 {
        Point2::new(self.x1, self.y1)
    }

    pub fn end(&self) -> Point2 {
        Point2::new(self.x2, self.y2)
    }

    pub fn length(&self) -> f64 {
        self.start().distance(&self.end())
    }

    pub fn direction(&self) -> Point2 {
        let d = self.end().sub(&self.start());
        d.scale(1.0 / d.norm())
    }

    /// Distance along the line from its start to the foot of `p`.
    pub fn param(&self, p: Point2) -> f64 {
        p.sub(&self.start()).dot(&self.direction())
    }

    /// Distance from `p` to the segment.
    pub fn distance(&self, p: Point2) -> f64 {
        let t = self.param(p).clamp(0.0, self.length());
        self.start().add(&self.direction().scale(t)).distance(&p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorPlan {
    pub landmarks: Vec<Landmark>,
    pub edge_lines: Vec<EdgeLine>,
    /// Hallway outlines as closed polygons of `[x, y]` vertices.
    pub hallways: Vec<Vec<[f64; 2]>>,
}

impl FloorPlan {
    pub fn validate(&self) -> Result<(), GeoError> {
        let mut ids = BTreeSet::new();
        for l in &self.landmarks {
            if !ids.insert(l.id) {
                return Err(GeoError::InvalidPlan(format!("duplicate landmark id {}", l.id)));
            }
            if !self.hallways.iter().any(|h| polygon_contains(h, l.position(), 1e-6)) {
                return Err(GeoError::InvalidPlan(format!("landmark {} lies outside every hallway", l.id)));
            }
        }
        if let Some(e) = self.edge_lines.iter().find(|e| !(e.length() > 0.0)) {
            return Err(GeoError::InvalidPlan(format!("edge line {e:?} has zero length")));
        }
        Ok(())
    }

    pub fn landmark(&self, id: u32) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.id == id)
    }

    /// Landmarks within `radius` of `center`, in plan order.
    pub fn landmarks_within(&self, center: Point2, radius: f64) -> Vec<&Landmark> {
        self.landmarks
            .iter()
            .filter(|l| l.position().distance(&center) <= radius)
            .collect()
    }

    /// Index of the edge line nearest to `p`; ties go to the lower index.
    pub fn nearest_edge(&self, p: Point2) -> Option<usize> {
        (0..self.edge_lines.len()).min_by(|&a, &b| {
            self.edge_lines[a]
                .distance(p)
                .total_cmp(&self.edge_lines[b].distance(p))
                .then(a.cmp(&b))
        })
    }

    pub fn load(path: &Path) -> Result<Self, GeoError> {
        let plan: FloorPlan = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn save(&self, path: &Path) -> Result<(), GeoError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Even-odd point-in-polygon test that also accepts points within `tol` of
/// an edge.
fn polygon_contains(poly: &[[f64; 2]], p: Point2, tol: f64) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let a = Point2::new(poly[i][0], poly[i][1]);
        let b = Point2::new(poly[(i + 1) % n][0], poly[(i + 1) % n][1]);
        let ab = b.sub(&a);
        let len2 = ab.dot(&ab);
        let t = if len2 > 0.0 { (p.sub(&a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        if a.add(&ab.scale(t)).distance(&p) <= tol {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x) {
            inside = !inside;
        }
    }
    inside
}
