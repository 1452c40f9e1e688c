//! Joint spatial-range mean shift with a flat kernel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imaging::Image;

use super::SegmentLabels;

const MAX_ITERATIONS: usize = 100;
const CONVERGENCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeanShiftParams {
    /// Spatial bandwidth in pixels.
    pub hs: f64,
    /// Range bandwidth in RGB units.
    pub hr: f64,
    /// Regions below this many pixels are merged into a neighbour.
    pub min_region: usize,
}

impl Default for MeanShiftParams {
    fn default() -> Self {
        Self {
            hs: 8.0,
            hr: 0.08,
            min_region: 100,
        }
    }
}

/// Converged joint-domain point `[x, y, r, g, b]` for one seed pixel.
fn seek_mode(img: &Image, x0: usize, y0: usize, hs: f64, hr: f64) -> [f64; 5] {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let reach = hs.floor() as i64;
    let p = img.pixel(x0, y0);
    let mut mode = [x0 as f64, y0 as f64, p[0], p[1], p[2]];
    let (hs2, hr2) = (hs * hs, hr * hr);
    for _ in 0..MAX_ITERATIONS {
        let cx = mode[0].round() as i64;
        let cy = mode[1].round() as i64;
        let mut acc = [0.0f64; 5];
        let mut n = 0usize;
        for y in (cy - reach - 1).max(0)..=(cy + reach + 1).min(h - 1) {
            let dy = y as f64 - mode[1];
            for x in (cx - reach - 1).max(0)..=(cx + reach + 1).min(w - 1) {
                let dx = x as f64 - mode[0];
                if dx * dx + dy * dy > hs2 {
                    continue;
                }
                let q = img.pixel(x as usize, y as usize);
                let dc = (q[0] - mode[2]).powi(2) + (q[1] - mode[3]).powi(2) + (q[2] - mode[4]).powi(2);
                if dc > hr2 {
                    continue;
                }
                acc[0] += x as f64;
                acc[1] += y as f64;
                acc[2] += q[0];
                acc[3] += q[1];
                acc[4] += q[2];
                n += 1;
            }
        }
        if n == 0 {
            break;
        }
        let next = acc.map(|v| v / n as f64);
        let shift = (((next[0] - mode[0]).powi(2) + (next[1] - mode[1]).powi(2)) / hs2
            + ((next[2] - mode[2]).powi(2) + (next[3] - mode[3]).powi(2) + (next[4] - mode[4]).powi(2)) / hr2)
            .sqrt();
        mode = next;
        if shift < CONVERGENCE {
            break;
        }
    }
    mode
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Union keeping the smaller index as root, which keeps labelling deterministic.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Relabels roots densely in raster order of first occurrence.
fn dense_labels(roots: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let labels = roots
        .iter()
        .map(|r| {
            let next = map.len();
            *map.entry(*r).or_insert(next)
        })
        .collect();
    (labels, map.len())
}

fn region_stats(img: &Image, labels: &[usize], count: usize) -> (Vec<usize>, Vec<[f64; 3]>) {
    let mut sizes = vec![0usize; count];
    let mut sums = vec![[0.0f64; 3]; count];
    for (i, px) in img.pixels().enumerate() {
        let l = labels[i];
        sizes[l] += 1;
        for c in 0..3 {
            sums[l][c] += px[c];
        }
    }
    let means = sums
        .iter()
        .zip(&sizes)
        .map(|(s, &n)| s.map(|v| v / n.max(1) as f64))
        .collect();
    (sizes, means)
}

fn color_dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]).powi(2)).sum()
}

/// Repeatedly merges the smallest under-sized region into its most
/// color-similar 4-neighbour region.
fn merge_small_regions(img: &Image, labels: Vec<usize>, count: usize, min_region: usize) -> (Vec<usize>, usize) {
    let (w, h) = (img.width(), img.height());
    let mut labels = labels;
    let mut count = count;
    loop {
        let (sizes, means) = region_stats(img, &labels, count);
        let small = (0..count)
            .filter(|&r| sizes[r] < min_region)
            .min_by_key(|&r| (sizes[r], r));
        let Some(small) = small else { break };
        let mut best: Option<(f64, usize)> = None;
        for y in 0..h {
            for x in 0..w {
                if labels[y * w + x] != small {
                    continue;
                }
                let neighbours = [
                    (x > 0).then(|| y * w + x - 1),
                    (x + 1 < w).then(|| y * w + x + 1),
                    (y > 0).then(|| (y - 1) * w + x),
                    (y + 1 < h).then(|| (y + 1) * w + x),
                ];
                for n in neighbours.into_iter().flatten() {
                    let other = labels[n];
                    if other == small {
                        continue;
                    }
                    let d = color_dist2(&means[small], &means[other]);
                    if best.is_none_or(|(bd, bl)| d < bd || (d == bd && other < bl)) {
                        best = Some((d, other));
                    }
                }
            }
        }
        // a lone region covering the whole image has no neighbour to merge into
        let Some((_, target)) = best else { break };
        for l in labels.iter_mut() {
            if *l == small {
                *l = target;
            }
        }
        let (dense, n) = dense_labels(&labels);
        labels = dense;
        count = n;
    }
    (labels, count)
}

/// Segments `img` into flat-colored regions.
pub fn mean_shift_segment(img: &Image, params: &MeanShiftParams) -> SegmentLabels {
    let (w, h) = (img.width(), img.height());
    let hs = params.hs.max(1.0);
    let hr = params.hr;
    let modes: Vec<[f64; 5]> = (0..w * h)
        .into_par_iter()
        .map(|i| seek_mode(img, i % w, i / w, hs, hr))
        .collect();

    // fuse 4-adjacent pixels whose modes lie within half the bandwidths
    let mut sets = DisjointSet::new(w * h);
    let close = |a: &[f64; 5], b: &[f64; 5]| {
        let ds = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let dr = ((a[2] - b[2]).powi(2) + (a[3] - b[3]).powi(2) + (a[4] - b[4]).powi(2)).sqrt();
        ds <= hs / 2.0 && dr <= hr / 2.0
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w && close(&modes[i], &modes[i + 1]) {
                sets.union(i, i + 1);
            }
            if y + 1 < h && close(&modes[i], &modes[i + w]) {
                sets.union(i, i + w);
            }
        }
    }
    let roots: Vec<usize> = (0..w * h).map(|i| sets.find(i)).collect();
    let (labels, count) = dense_labels(&roots);
    let (labels, count) = merge_small_regions(img, labels, count, params.min_region.max(1));
    SegmentLabels::new(w, h, labels, count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn params() -> MeanShiftParams {
        MeanShiftParams {
            hs: 4.0,
            hr: 0.08,
            min_region: 20,
        }
    }

    #[test]
    fn uniform_image_is_one_region() {
        let seg = mean_shift_segment(&Image::filled(24, 16, [0.4, 0.5, 0.6]), &params());
        assert_eq!(seg.region_count(), 1);
        assert!(seg.labels().iter().all(|l| *l == 0));
    }

    #[test]
    fn two_flat_halves_split_exactly() {
        let img = Image::from_fn(30, 20, |x, _| if x < 12 { [0.2, 0.2, 0.7] } else { [0.8, 0.6, 0.1] });
        let seg = mean_shift_segment(&img, &params());
        assert_eq!(seg.region_count(), 2);
        for y in 0..20 {
            for x in 0..30 {
                assert_eq!(seg.label(x, y), usize::from(x >= 12));
            }
        }
    }

    #[test]
    fn noisy_halves_recover_partition() {
        let p = params();
        let noise = Normal::new(0.0, p.hr / 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let truth = |x: usize| usize::from(x >= 20);
        let img = Image::from_fn(40, 30, |x, _| {
            let base = if truth(x) == 0 { [0.3, 0.3, 0.6] } else { [0.7, 0.5, 0.2] };
            base.map(|v| v + noise.sample(&mut rng))
        });
        let seg = mean_shift_segment(&img, &p);
        assert_eq!(seg.region_count(), 2);
        // labels are numbered by first raster occurrence, so region 0 is the left half
        let agree = (0..30)
            .flat_map(|y| (0..40).map(move |x| (x, y)))
            .filter(|&(x, y)| seg.label(x, y) == truth(x))
            .count();
        assert!(agree as f64 >= 0.99 * 1200.0, "agreement {agree}/1200");
    }

    #[test]
    fn segmentation_is_deterministic() {
        let img = Image::from_fn(20, 20, |x, y| [(x as f64) / 20.0, (y as f64) / 20.0, 0.5]);
        let a = mean_shift_segment(&img, &params());
        let b = mean_shift_segment(&img, &params());
        assert_eq!(a, b);
    }
}
