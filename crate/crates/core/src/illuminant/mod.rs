//! Illuminant estimation and von Kries (diagonal) correction.
//!
//! All estimators return the direction of the light source color as a unit
//! RGB vector. The overall scale of the light is unrecoverable from a single
//! image and is never materialized.
//!
//! The low-level estimators (grey world, white patch, shades of grey and the
//! grey-edge family) are instances of one Minkowski aggregation over a
//! per-pixel response; the physics-based estimator reads the light color off
//! the inverse-intensity chromaticity space of highlight pixels.

mod gaussian;
mod iic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{ChannelField, Image};

pub use gaussian::{gaussian_derivative, gaussian_derivative_field, gaussian_kernel, kernel_radius};
pub use iic::{estimate_iic, IicOptions};

/// Below this, an aggregated response is treated as zero energy.
const ENERGY_EPS: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IlluminantError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("derivative order s + t = {0} exceeds 2")]
    BadOrder(u32),
    #[error("image {width}x{height} too small for kernel radius {radius}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        radius: usize,
    },
    #[error("only {found} highlight candidates, need {needed}")]
    InsufficientHighlights { found: usize, needed: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("illuminant component {0} is too small for a diagonal map")]
    SingularIlluminant(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Unit-norm, componentwise non-negative light source color.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Illuminant([f64; 3]);

impl Illuminant {
    /// Normalizes `rgb` to unit length.
    pub fn new(rgb: [f64; 3]) -> Result<Self, IlluminantError> {
        if rgb.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(IlluminantError::DegenerateInput(format!(
                "illuminant components must be finite and non-negative, got {rgb:?}"
            )));
        }
        let norm = rgb.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 0.0 {
            return Err(IlluminantError::DegenerateInput("zero illuminant".into()));
        }
        Ok(Self([rgb[0] / norm, rgb[1] / norm, rgb[2] / norm]))
    }

    /// The canonical perfect white, `(1, 1, 1) / sqrt(3)`.
    pub fn white() -> Self {
        let v = 1.0 / 3f64.sqrt();
        Self([v, v, v])
    }

    pub fn rgb(&self) -> [f64; 3] {
        self.0
    }

    /// Chromaticity `e_c / sum(e)`.
    pub fn chromaticity(&self) -> [f64; 3] {
        let s: f64 = self.0.iter().sum();
        [self.0[0] / s, self.0[1] / s, self.0[2] / s]
    }

    /// Rescaled so the largest component is 1.
    pub fn max_normalized(&self) -> [f64; 3] {
        let m = self.0.iter().cloned().fold(0.0, f64::max);
        [self.0[0] / m, self.0[1] / m, self.0[2] / m]
    }
}

impl TryFrom<[f64; 3]> for Illuminant {
    type Error = IlluminantError;

    fn try_from(v: [f64; 3]) -> Result<Self, Self::Error> {
        Illuminant::new(v)
    }
}

impl From<Illuminant> for [f64; 3] {
    fn from(e: Illuminant) -> Self {
        e.0
    }
}

/// Minkowski aggregation exponent. `Infinity` is an exact maximum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MinkowskiNorm {
    Finite(f64),
    Infinity,
}

impl MinkowskiNorm {
    pub fn finite(p: f64) -> Result<Self, IlluminantError> {
        if p.is_finite() && p >= 1.0 {
            Ok(Self::Finite(p))
        } else if p == f64::INFINITY {
            Ok(Self::Infinity)
        } else {
            Err(IlluminantError::InvalidParameter(format!("Minkowski p must be >= 1, got {p}")))
        }
    }

    /// `(mean v^p)^(1/p)`, or the maximum for `p = inf`. Values are non-negative.
    pub fn aggregate(&self, values: impl Iterator<Item = f64> + Clone) -> f64 {
        let max = values.clone().fold(0.0, f64::max);
        match *self {
            MinkowskiNorm::Infinity => max,
            MinkowskiNorm::Finite(p) => {
                if max <= 0.0 {
                    return 0.0;
                }
                // scale by the max so large p cannot underflow
                let mut n = 0usize;
                let mut acc = 0.0;
                for v in values {
                    acc += (v / max).powf(p);
                    n += 1;
                }
                max * (acc / n as f64).powf(1.0 / p)
            }
        }
    }
}

/// Parameters `(n, p, sigma)` of the grey-edge family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreyEdgeParams {
    order: u32,
    norm: MinkowskiNorm,
    sigma: f64,
}

impl GreyEdgeParams {
    pub fn new(order: u32, norm: MinkowskiNorm, sigma: f64) -> Result<Self, IlluminantError> {
        if order > 2 {
            return Err(IlluminantError::BadOrder(order));
        }
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(IlluminantError::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
        }
        if order >= 1 && sigma <= 0.0 {
            return Err(IlluminantError::InvalidParameter(
                "derivative orders >= 1 need sigma > 0".into(),
            ));
        }
        if let MinkowskiNorm::Finite(p) = norm {
            MinkowskiNorm::finite(p)?;
        }
        Ok(Self { order, norm, sigma })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn norm(&self) -> MinkowskiNorm {
        self.norm
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

fn illuminant_from_sums(sums: [f64; 3], what: &str) -> Result<Illuminant, IlluminantError> {
    if sums.iter().all(|v| *v < ENERGY_EPS) {
        return Err(IlluminantError::DegenerateInput(format!("{what}: zero energy in every channel")));
    }
    Illuminant::new(sums)
}

fn require_pixels(img: &Image) -> Result<(), IlluminantError> {
    if img.is_empty() {
        Err(IlluminantError::DegenerateInput("empty image".into()))
    } else {
        Ok(())
    }
}

fn channel_values(img: &Image, c: usize) -> impl Iterator<Item = f64> + Clone + '_ {
    img.data().iter().skip(c).step_by(3).copied()
}

/// Grey world: the per-channel mean.
pub fn estimate_grey_world(img: &Image) -> Result<Illuminant, IlluminantError> {
    estimate_shades_of_grey(img, 1.0)
}

/// White patch (max-RGB). Pixels with any channel above `clip_threshold` are
/// treated as saturated and ignored.
pub fn estimate_white_patch(img: &Image, clip_threshold: f64) -> Result<Illuminant, IlluminantError> {
    require_pixels(img)?;
    if !(clip_threshold > 0.0 && clip_threshold <= 1.0) {
        return Err(IlluminantError::InvalidParameter(format!(
            "clip threshold must lie in (0, 1], got {clip_threshold}"
        )));
    }
    let mut max = [0.0f64; 3];
    for px in img.pixels().filter(|px| px.iter().all(|v| *v <= clip_threshold)) {
        for c in 0..3 {
            max[c] = max[c].max(px[c]);
        }
    }
    illuminant_from_sums(max, "white patch (no unsaturated non-zero pixel)")
}

/// Shades of grey: per-channel Minkowski p-norm.
pub fn estimate_shades_of_grey(img: &Image, p: f64) -> Result<Illuminant, IlluminantError> {
    require_pixels(img)?;
    let norm = MinkowskiNorm::finite(p)?;
    let sums = [0, 1, 2].map(|c| norm.aggregate(channel_values(img, c)));
    illuminant_from_sums(sums, "shades of grey")
}

/// Per-pixel grey-edge response for one channel: smoothed value, gradient
/// magnitude or Frobenius norm of the Hessian.
pub fn grey_edge_response(
    img: &Image,
    channel: usize,
    order: u32,
    sigma: f64,
) -> Result<ChannelField, IlluminantError> {
    let raw = img.channel(channel);
    if order == 0 && sigma == 0.0 {
        return Ok(raw);
    }
    let d = |s, t| gaussian_derivative_field(&raw, s, t, sigma);
    Ok(match order {
        0 => d(0, 0)?,
        1 => {
            let fx = d(1, 0)?;
            let fy = d(0, 1)?;
            ChannelField {
                data: fx.data.iter().zip(&fy.data).map(|(a, b)| a.hypot(*b)).collect(),
                ..fx
            }
        }
        2 => {
            let fxx = d(2, 0)?;
            let fyy = d(0, 2)?;
            let fxy = d(1, 1)?;
            let data = (0..fxx.data.len())
                .map(|i| {
                    (fxx.data[i].powi(2) + fyy.data[i].powi(2) + 2.0 * fxy.data[i].powi(2)).sqrt()
                })
                .collect();
            ChannelField { data, ..fxx }
        }
        n => return Err(IlluminantError::BadOrder(n)),
    })
}

/// The grey-edge family `e^{n,p,sigma}`.
pub fn estimate_grey_edge(img: &Image, params: &GreyEdgeParams) -> Result<Illuminant, IlluminantError> {
    require_pixels(img)?;
    let mut sums = [0.0; 3];
    for (c, sum) in sums.iter_mut().enumerate() {
        let resp = grey_edge_response(img, c, params.order, params.sigma)?;
        *sum = params.norm.aggregate(resp.data.iter().map(|v| v.abs()));
    }
    illuminant_from_sums(sums, "grey edge")
}

/// Per-channel gains of a von Kries correction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalMap {
    d: [f64; 3],
}

impl DiagonalMap {
    pub fn identity() -> Self {
        Self { d: [1.0; 3] }
    }

    pub fn gains(&self) -> [f64; 3] {
        self.d
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &DiagonalMap) -> DiagonalMap {
        DiagonalMap {
            d: [0, 1, 2].map(|i| self.d[i] * next.d[i]),
        }
    }
}

/// Gains `d_i = to_i / from_i` mapping colors seen under `from` to `to`.
pub fn diagonal_map(from: &Illuminant, to: &Illuminant) -> Result<DiagonalMap, IlluminantError> {
    let (f, t) = (from.rgb(), to.rgb());
    if let Some(v) = f.iter().chain(t.iter()).find(|v| **v <= 1e-6) {
        return Err(IlluminantError::SingularIlluminant(*v));
    }
    Ok(DiagonalMap {
        d: [0, 1, 2].map(|i| t[i] / f[i]),
    })
}

/// Multiplies each pixel by the gains and clamps to `[0, 1]`. Returns the
/// corrected image and the number of samples that were clamped.
pub fn apply_correction(img: &Image, map: &DiagonalMap) -> (Image, usize) {
    let mut clamped = 0;
    let out = Image::from_fn(img.width(), img.height(), |x, y| {
        let p = img.pixel(x, y);
        [0, 1, 2].map(|c| {
            let v = p[c] * map.d[c];
            if v > 1.0 {
                clamped += 1;
            }
            v
        })
    });
    (out, clamped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::angular_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * 3).map(|_| rng.random::<f64>()).collect();
        Image::new(w, h, data).unwrap()
    }

    fn close(a: &Illuminant, b: [f64; 3], tol: f64) -> bool {
        a.rgb().iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn grey_world_on_uniform_and_two_pixel_images() {
        let img = Image::filled(3, 2, [0.2, 0.4, 0.6]);
        let e = estimate_grey_world(&img).unwrap();
        assert!(close(&e, [0.2673, 0.5345, 0.8018], 1e-4));

        let img = Image::new(2, 1, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!(close(&estimate_grey_world(&img).unwrap(), [s, s, 0.0], 1e-12));
    }

    #[test]
    fn grey_world_matches_direct_sum() {
        let img = random_image(16, 16, 7);
        let mut sums = [0.0; 3];
        for y in 0..16 {
            for x in 0..16 {
                let p = img.pixel(x, y);
                for c in 0..3 {
                    sums[c] += p[c];
                }
            }
        }
        let n = (sums[0] * sums[0] + sums[1] * sums[1] + sums[2] * sums[2]).sqrt();
        let e = estimate_grey_world(&img).unwrap();
        assert!(close(&e, sums.map(|s| s / n), 1e-12));
    }

    #[test]
    fn grey_world_rejects_black() {
        let img = Image::filled(4, 4, [0.0; 3]);
        assert!(matches!(estimate_grey_world(&img), Err(IlluminantError::DegenerateInput(_))));
    }

    #[test]
    fn white_patch_channel_max_and_clipping() {
        let img = Image::new(2, 1, vec![0.1, 0.2, 0.3, 0.5, 0.1, 0.2]).unwrap();
        let e = estimate_white_patch(&img, 1.0).unwrap();
        let expect = Illuminant::new([0.5, 0.2, 0.3]).unwrap();
        assert!(angular_error(&e, &expect) < 1e-6);

        // the saturated pixel is excluded under the default-style threshold
        let img = Image::new(2, 1, vec![1.0, 0.9, 0.9, 0.2, 0.4, 0.2]).unwrap();
        let e = estimate_white_patch(&img, 0.98).unwrap();
        assert!(angular_error(&e, &Illuminant::new([0.2, 0.4, 0.2]).unwrap()) < 1e-6);

        let img = Image::filled(2, 2, [1.0; 3]);
        assert!(estimate_white_patch(&img, 0.98).is_err());
    }

    #[test]
    fn white_patch_matches_brute_force_max() {
        let img = random_image(12, 9, 3);
        let mut max = [0.0f64; 3];
        for i in 0..img.data().len() {
            max[i % 3] = max[i % 3].max(img.data()[i]);
        }
        let e = estimate_white_patch(&img, 1.0).unwrap();
        assert!(angular_error(&e, &Illuminant::new(max).unwrap()) < 1e-6);
    }

    #[test]
    fn uniform_image_white_patch_equals_grey_world() {
        let img = Image::filled(5, 5, [0.3, 0.6, 0.1]);
        let a = estimate_white_patch(&img, 1.0).unwrap();
        let b = estimate_grey_world(&img).unwrap();
        assert!(angular_error(&a, &b) < 1e-6);
    }

    #[test]
    fn shades_of_grey_p1_is_grey_world_and_large_p_approaches_max() {
        let img = random_image(10, 10, 11);
        let a = estimate_shades_of_grey(&img, 1.0).unwrap();
        let b = estimate_grey_world(&img).unwrap();
        assert!(close(&a, b.rgb(), 1e-9));

        let two = Image::new(2, 1, vec![0.9, 0.2, 0.4, 0.3, 0.8, 0.1]).unwrap();
        // p = 100 evaluated independently: each channel (mean v^100)^(1/100)
        let direct = [0, 1, 2].map(|c| {
            let vals = [two.data()[c], two.data()[3 + c]];
            ((vals[0].powf(100.0) + vals[1].powf(100.0)) / 2.0).powf(0.01)
        });
        let e = estimate_shades_of_grey(&two, 100.0).unwrap();
        assert!(angular_error(&e, &Illuminant::new(direct).unwrap()) < 1e-6);
        let wp = estimate_white_patch(&two, 1.0).unwrap();
        assert!(angular_error(&e, &wp) < 1.0);
    }

    #[test]
    fn shades_of_grey_rejects_p_below_one() {
        let img = Image::filled(2, 2, [0.5; 3]);
        assert!(matches!(
            estimate_shades_of_grey(&img, 0.5),
            Err(IlluminantError::InvalidParameter(_))
        ));
    }

    #[test]
    fn grey_edge_zero_order_specializations() {
        let img = random_image(20, 15, 5);
        let gw = estimate_grey_world(&img).unwrap();
        let ge = estimate_grey_edge(&img, &GreyEdgeParams::new(0, MinkowskiNorm::Finite(1.0), 0.0).unwrap())
            .unwrap();
        assert!(close(&ge, gw.rgb(), 1e-9));
        let ge = estimate_grey_edge(&img, &GreyEdgeParams::new(0, MinkowskiNorm::Infinity, 0.0).unwrap())
            .unwrap();
        assert!(angular_error(&ge, &estimate_white_patch(&img, 1.0).unwrap()) < 1e-6);
    }

    #[test]
    fn grey_edge_uniform_first_order_is_degenerate() {
        let img = Image::filled(16, 16, [0.3, 0.5, 0.7]);
        let params = GreyEdgeParams::new(1, MinkowskiNorm::Finite(1.0), 1.0).unwrap();
        assert!(matches!(estimate_grey_edge(&img, &params), Err(IlluminantError::DegenerateInput(_))));
    }

    #[test]
    fn grey_edge_rejects_small_image_and_bad_params() {
        let img = random_image(6, 6, 1);
        let params = GreyEdgeParams::new(1, MinkowskiNorm::Finite(1.0), 1.0).unwrap();
        assert!(matches!(estimate_grey_edge(&img, &params), Err(IlluminantError::ImageTooSmall { .. })));
        assert!(GreyEdgeParams::new(3, MinkowskiNorm::Finite(1.0), 1.0).is_err());
        assert!(GreyEdgeParams::new(1, MinkowskiNorm::Finite(1.0), 0.0).is_err());
    }

    #[test]
    fn diagonal_map_identity_formula_and_errors() {
        let w = Illuminant::white();
        assert!(diagonal_map(&w, &w).unwrap().gains().iter().all(|d| (d - 1.0).abs() < 1e-15));

        let from = Illuminant::new([2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let d = diagonal_map(&from, &w).unwrap().gains();
        for i in 0..3 {
            assert!((d[i] - (1.0 / 3f64.sqrt()) / from.rgb()[i]).abs() < 1e-15);
        }
        let singular = Illuminant::new([1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(diagonal_map(&singular, &w), Err(IlluminantError::SingularIlluminant(_))));
    }

    #[test]
    fn correction_identity_and_gain() {
        let img = random_image(4, 4, 2);
        let (out, clamped) = apply_correction(&img, &DiagonalMap::identity());
        assert_eq!(out, img);
        assert_eq!(clamped, 0);

        let img = Image::new(1, 1, vec![0.5, 0.25, 0.5]).unwrap();
        let map = DiagonalMap { d: [1.0, 2.0, 1.0] };
        assert_eq!(apply_correction(&img, &map).0.pixel(0, 0), [0.5, 0.5, 0.5]);

        let (_, clamped) = apply_correction(&Image::filled(2, 1, [0.8; 3]), &DiagonalMap { d: [2.0, 1.0, 1.0] });
        assert_eq!(clamped, 2);
    }

    #[test]
    fn illuminant_serde_normalizes() {
        let e: Illuminant = serde_json::from_str("[3.0, 0.0, 4.0]").unwrap();
        assert!(close(&e, [0.6, 0.0, 0.8], 1e-15));
        assert!(serde_json::from_str::<Illuminant>("[0.0, 0.0, 0.0]").is_err());
    }

    fn estimators() -> Vec<(&'static str, Box<dyn Fn(&Image) -> Result<Illuminant, IlluminantError>>)> {
        vec![
            ("grey_world", Box::new(estimate_grey_world)),
            ("white_patch", Box::new(|i: &Image| estimate_white_patch(i, 1.0))),
            ("shades_of_grey_4", Box::new(|i: &Image| estimate_shades_of_grey(i, 4.0))),
            (
                "grey_edge_1",
                Box::new(|i: &Image| estimate_grey_edge(i, &GreyEdgeParams::new(1, MinkowskiNorm::finite(2.0)?, 1.0)?)),
            ),
            (
                "grey_edge_2",
                Box::new(|i: &Image| estimate_grey_edge(i, &GreyEdgeParams::new(2, MinkowskiNorm::Infinity, 1.0)?)),
            ),
        ]
    }

    proptest::proptest! {
        #[test]
        fn exposure_scaling_keeps_direction(seed in 0u64..1000, s in 0.05f64..=1.0) {
            let img = random_image(12, 10, seed);
            let dim = img.scaled(s);
            for (name, f) in estimators() {
                let a = f(&img).unwrap();
                let b = f(&dim).unwrap();
                proptest::prop_assert!(close(&a, b.rgb(), 1e-9), "{} {:?} {:?}", name, a, b);
            }
        }

        #[test]
        fn zero_order_estimators_ignore_pixel_order(seed in 0u64..1000) {
            let img = random_image(9, 7, seed);
            let mut px: Vec<[f64; 3]> = img.pixels().collect();
            px.reverse();
            px.rotate_left((seed % 13) as usize);
            let shuffled = Image::new(9, 7, px.concat()).unwrap();
            for (name, f) in estimators().into_iter().take(3) {
                let a = f(&img).unwrap();
                let b = f(&shuffled).unwrap();
                proptest::prop_assert!(close(&a, b.rgb(), 1e-12), "{} {:?} {:?}", name, a, b);
            }
        }

        #[test]
        fn estimates_are_unit_and_nonnegative(seed in 0u64..1000) {
            let img = random_image(12, 10, seed);
            for (name, f) in estimators() {
                let e = f(&img).unwrap().rgb();
                let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
                proptest::prop_assert!((norm - 1.0).abs() < 1e-9, "{}", name);
                proptest::prop_assert!(e.iter().all(|v| *v >= 0.0), "{}", name);
            }
        }
    }
}
