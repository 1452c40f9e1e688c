//! Segmentation and corner micro-landmark extraction.
//!
//! A corrected frame is segmented with mean shift, every region's outer
//! boundary is traced, and boundary points whose chord deviation (cornerity)
//! peaks above a threshold become corner candidates. Only corners touching
//! the floor are forwarded to plan matching.

mod boundary;
mod corners;
mod meanshift;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boundary::{extract_boundaries, Boundary};
pub use corners::{cornerity, detect_corners, select_floor_corners, CornerParams, FloorCornerFilter};
pub use meanshift::{mean_shift_segment, MeanShiftParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LandmarkError {
    #[error("boundary of {len} points is too short for support k = {k}")]
    TooShort { len: usize, k: usize },
    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),
}

/// Integer pixel coordinate, x right and y down.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub x: i32,
    pub y: i32,
}

impl Pixel {
    pub fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn is_8_adjacent(&self, other: &Pixel) -> bool {
        let (dx, dy) = ((self.x - other.x).abs(), (self.y - other.y).abs());
        dx <= 1 && dy <= 1 && (dx, dy) != (0, 0)
    }

    pub fn distance(&self, other: &Pixel) -> f64 {
        f64::from(self.x - other.x).hypot(f64::from(self.y - other.y))
    }
}

/// Dense region labelling of an image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentLabels {
    width: usize,
    height: usize,
    labels: Vec<usize>,
    region_count: usize,
}

impl SegmentLabels {
    /// Panics unless labels are exactly `0..region_count` and cover the image.
    pub fn new(width: usize, height: usize, labels: Vec<usize>, region_count: usize) -> Self {
        assert_eq!(labels.len(), width * height, "label map size mismatch");
        let mut seen = vec![false; region_count];
        for &l in &labels {
            assert!(l < region_count, "label {l} out of range");
            seen[l] = true;
        }
        assert!(seen.iter().all(|s| *s), "labels are not dense");
        Self {
            width,
            height,
            labels,
            region_count,
        }
    }

    /// Relabels an arbitrary id map densely in raster order of first occurrence.
    pub fn from_ids(width: usize, height: usize, ids: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels: Vec<usize> = ids
            .iter()
            .map(|id| {
                let next = map.len();
                *map.entry(*id).or_insert(next)
            })
            .collect();
        let count = map.len();
        Self::new(width, height, labels, count)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn region_count(&self) -> usize {
        self.region_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, x: usize, y: usize) -> usize {
        self.labels[y * self.width + x]
    }

    /// Label at a signed coordinate, `None` outside the image.
    pub fn label_at(&self, p: Pixel) -> Option<usize> {
        if p.x < 0 || p.y < 0 || p.x as usize >= self.width || p.y as usize >= self.height {
            None
        } else {
            Some(self.label(p.x as usize, p.y as usize))
        }
    }

    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.region_count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// A boundary point whose cornerity peaked above the detection threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerPoint {
    pub position: Pixel,
    pub cornerity: f64,
    pub region_id: usize,
}

/// Region with the most pixels on the bottom image row; ties go to the larger
/// region, then the smaller label.
pub fn floor_region(labels: &SegmentLabels) -> usize {
    let mut bottom = vec![0usize; labels.region_count()];
    let y = labels.height() - 1;
    for x in 0..labels.width() {
        bottom[labels.label(x, y)] += 1;
    }
    let sizes = labels.region_sizes();
    (0..labels.region_count())
        .max_by(|&a, &b| {
            bottom[a]
                .cmp(&bottom[b])
                .then(sizes[a].cmp(&sizes[b]))
                .then(b.cmp(&a))
        })
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_region_picks_bottom_region() {
        let ids: Vec<usize> = (0..8 * 6).map(|i| usize::from(i / 8 >= 3)).collect();
        let labels = SegmentLabels::from_ids(8, 6, &ids);
        assert_eq!(floor_region(&labels), 1);
        let uniform = SegmentLabels::from_ids(8, 6, &[0; 48]);
        assert_eq!(floor_region(&uniform), 0);
    }

    #[test]
    fn floor_region_tie_breaks_by_area_then_label() {
        // bottom row split 2/2; region 1 is larger overall
        let ids = [0, 1, 1, 1, 0, 0, 1, 1];
        let labels = SegmentLabels::from_ids(4, 2, &ids);
        assert_eq!(floor_region(&labels), 1);
        let ids = [0, 0, 1, 1, 0, 0, 1, 1];
        let labels = SegmentLabels::from_ids(4, 2, &ids);
        assert_eq!(floor_region(&labels), 0);
    }

    #[test]
    #[should_panic(expected = "not dense")]
    fn sparse_labels_are_rejected() {
        SegmentLabels::new(2, 1, vec![0, 2], 3);
    }
}
