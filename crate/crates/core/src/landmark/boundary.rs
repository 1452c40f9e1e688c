//! Moore-neighbour tracing of region outer boundaries.

use super::{LandmarkError, Pixel, SegmentLabels};

/// Neighbour offsets in clockwise screen order, starting west.
const RING: [(i32, i32); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

/// Closed outer contour of one region, counterclockwise as displayed
/// (x right, y down), starting at the region's first pixel in raster order.
#[derive(Clone, Debug, PartialEq)]
pub struct Boundary {
    pub region_id: usize,
    points: Vec<Pixel>,
}

impl Boundary {
    pub fn new(region_id: usize, points: Vec<Pixel>) -> Result<Self, LandmarkError> {
        if points.len() < 4 {
            return Err(LandmarkError::InvalidBoundary(format!("{} points, need 4", points.len())));
        }
        let n = points.len();
        for i in 0..n {
            if !points[i].is_8_adjacent(&points[(i + 1) % n]) {
                return Err(LandmarkError::InvalidBoundary(format!(
                    "points {i} and {} are not 8-adjacent",
                    (i + 1) % n
                )));
            }
        }
        Ok(Self { region_id, points })
    }

    pub fn points(&self) -> &[Pixel] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn ring_index(from: Pixel, to: Pixel) -> usize {
    let d = (to.x - from.x, to.y - from.y);
    RING.iter().position(|r| *r == d).expect("backtrack must be an 8-neighbour")
}

/// Traces the outer boundary of `region` starting at `start`, its first
/// pixel in raster order. The raw trace runs clockwise on screen and stops
/// when it leaves the start pixel towards the second point again, which also
/// terminates on one-pixel-wide spurs.
fn trace(labels: &SegmentLabels, region: usize, start: Pixel) -> Vec<Pixel> {
    let inside = |p: Pixel| labels.label_at(p) == Some(region);
    let mut points = vec![start];
    let (mut cur, mut back) = (start, Pixel::new(start.x - 1, start.y));
    let limit = 4 * labels.width() * labels.height() + 8;
    for _ in 0..limit {
        let d0 = ring_index(cur, back);
        let mut next = None;
        for i in 1..=8 {
            let d = (d0 + i) % 8;
            let q = Pixel::new(cur.x + RING[d].0, cur.y + RING[d].1);
            if inside(q) {
                let prev = (d + 7) % 8;
                next = Some((q, Pixel::new(cur.x + RING[prev].0, cur.y + RING[prev].1)));
                break;
            }
        }
        let Some((q, nb)) = next else { break };
        if cur == start && points.len() > 2 && q == points[1] {
            points.pop();
            break;
        }
        points.push(q);
        cur = q;
        back = nb;
    }
    points
}

/// One outer boundary per region (regions whose trace has fewer than four
/// points are skipped). Out-of-image pixels count as background, so regions
/// touching the border are traced along it.
pub fn extract_boundaries(labels: &SegmentLabels) -> Vec<Boundary> {
    let mut first: Vec<Option<Pixel>> = vec![None; labels.region_count()];
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            let l = labels.label(x, y);
            if first[l].is_none() {
                first[l] = Some(Pixel::new(x as i32, y as i32));
            }
        }
    }
    first
        .iter()
        .enumerate()
        .filter_map(|(region, start)| {
            let mut pts = trace(labels, region, (*start)?);
            // reverse while keeping the start point first
            pts[1..].reverse();
            Boundary::new(region, pts).ok()
        })
        .collect()
}
