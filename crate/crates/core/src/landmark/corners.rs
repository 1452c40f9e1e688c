use serde::{Deserialize, Serialize};

use super::{extract_boundaries, CornerPoint, LandmarkError, Pixel, SegmentLabels};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CornerParams {
    /// Support half-width in boundary points.
    pub k: usize,
    /// Minimum cornerity.
    pub tau: f64,
    /// Non-maximum suppression half-window in boundary points.
    pub nms_window: usize,
}

impl Default for CornerParams {
    fn default() -> Self {
        Self {
            k: 5,
            tau: 0.25,
            nms_window: 5,
        }
    }
}

/// Normalized chord deviation of every boundary point: the distance from
/// `b_i` to the chord `b_{i-k} b_{i+k}` (cyclic) divided by `k`, capped at 1.
///
/// The cap only bites where the support folds back on itself (one-pixel
/// spurs), where the chord degenerates.
pub fn cornerity(points: &[Pixel], k: usize) -> Result<Vec<f64>, LandmarkError> {
    let n = points.len();
    if k == 0 || n <= 2 * k {
        return Err(LandmarkError::TooShort { len: n, k });
    }
    let kf = k as f64;
    Ok((0..n)
        .map(|i| {
            let a = points[(i + n - k) % n];
            let c = points[(i + k) % n];
            let b = points[i];
            let (cx, cy) = (f64::from(c.x - a.x), f64::from(c.y - a.y));
            let (bx, by) = (f64::from(b.x - a.x), f64::from(b.y - a.y));
            let chord = cx.hypot(cy);
            let d = if chord < 1e-12 {
                bx.hypot(by)
            } else {
                (cx * by - cy * bx).abs() / chord
            };
            (d / kf).min(1.0)
        })
        .collect())
}

/// Indices that reach `tau` and are the maximum within `±window` (cyclic);
/// among equal values the smaller index wins.
fn local_maxima(values: &[f64], tau: f64, window: usize) -> Vec<usize> {
    let n = values.len();
    let w = window.min((n.saturating_sub(1)) / 2);
    (0..n)
        .filter(|&i| {
            let v = values[i];
            v >= tau
                && (1..=w).all(|off| {
                    [(i + off) % n, (i + n - off) % n]
                        .iter()
                        .all(|&j| values[j] < v || (values[j] == v && j > i))
                })
        })
        .collect()
}

/// Corner points on every traced region boundary.
pub fn detect_corners(labels: &SegmentLabels, params: &CornerParams) -> Vec<CornerPoint> {
    let mut out = Vec::new();
    for b in extract_boundaries(labels) {
        let Ok(score) = cornerity(b.points(), params.k) else { continue };
        for i in local_maxima(&score, params.tau, params.nms_window) {
            out.push(CornerPoint {
                position: b.points()[i],
                cornerity: score[i],
                region_id: b.region_id,
            });
        }
    }
    out
}

/// Rules for forwarding corners to plan matching.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorCornerFilter {
    /// Corners must lie strictly below this image row (the horizon plus a margin).
    pub min_row: f64,
    /// Corners closer than this to the image border are dropped.
    pub border_margin: i32,
    /// Corners within this pixel radius of a stronger corner are merged into it.
    pub merge_radius: f64,
}

/// Keeps corners that lie on, or touch, the floor region below `min_row` and
/// away from the image border, then merges near-duplicates reported by the
/// regions meeting at the same junction. Output is ordered by row, then column.
pub fn select_floor_corners(
    labels: &SegmentLabels,
    corners: &[CornerPoint],
    floor: usize,
    filter: &FloorCornerFilter,
) -> Vec<CornerPoint> {
    let (w, h) = (labels.width() as i32, labels.height() as i32);
    let m = filter.border_margin;
    let touches_floor = |p: Pixel| {
        (-1..=1).any(|dy| (-1..=1).any(|dx| labels.label_at(Pixel::new(p.x + dx, p.y + dy)) == Some(floor)))
    };
    let mut kept: Vec<CornerPoint> = corners
        .iter()
        .filter(|c| {
            let p = c.position;
            p.x >= m && p.y >= m && p.x < w - m && p.y < h - m && f64::from(p.y) > filter.min_row && touches_floor(p)
        })
        .copied()
        .collect();
    kept.sort_by(|a, b| {
        b.cornerity
            .total_cmp(&a.cornerity)
            .then(a.position.y.cmp(&b.position.y))
            .then(a.position.x.cmp(&b.position.x))
    });
    let mut merged: Vec<CornerPoint> = Vec::new();
    for c in kept {
        if merged.iter().all(|m| m.position.distance(&c.position) > filter.merge_radius) {
            merged.push(c);
        }
    }
    merged.sort_by_key(|c| (c.position.y, c.position.x));
    merged
}
