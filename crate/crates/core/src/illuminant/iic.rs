//! Inverse-intensity chromaticity estimation.
//!
//! Under the dichromatic model a pixel of one surface with constant body
//! shading satisfies `sigma_c = Gamma_c + slope_c / sum(f)`, where `sigma_c`
//! is its chromaticity and `Gamma_c` the illuminant chromaticity. Every
//! surface's line crosses the `1 / sum(f) = 0` axis at `Gamma_c`, so the
//! intercept of lines through pairs of highlight pixels votes for the light.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::imaging::Image;

use super::{Illuminant, IlluminantError};

/// Candidate sets larger than this are subsampled evenly before pairing.
const MAX_PAIRED_CANDIDATES: usize = 2000;
const MIN_INVERSE_SPREAD: f64 = 1e-6;
const COLOR_QUANTUM: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IicOptions {
    /// Number of highlight candidates as a fraction of the pixel count; the
    /// brightest distinct colors are kept.
    pub highlight_quantile: f64,
    pub min_candidates: usize,
    pub intercept_bins: usize,
}

impl Default for IicOptions {
    fn default() -> Self {
        Self {
            highlight_quantile: 0.05,
            min_candidates: 50,
            intercept_bins: 256,
        }
    }
}

struct Candidate {
    inv_intensity: f64,
    chroma: [f64; 3],
}

/// Histogram vote over pairwise intercepts in `[0, 1]`; returns the mean of
/// the intercepts falling in the winning bin and its two neighbours.
fn vote_intercept(cands: &[Candidate], channel: usize, bins: usize) -> Option<f64> {
    let mut counts = vec![0usize; bins];
    let mut sums = vec![0.0f64; bins];
    for (i, a) in cands.iter().enumerate() {
        for b in &cands[i + 1..] {
            let dx = b.inv_intensity - a.inv_intensity;
            if dx.abs() < 1e-12 {
                continue;
            }
            let slope = (b.chroma[channel] - a.chroma[channel]) / dx;
            let intercept = a.chroma[channel] - slope * a.inv_intensity;
            if !(0.0..=1.0).contains(&intercept) {
                continue;
            }
            let bin = ((intercept * bins as f64) as usize).min(bins - 1);
            counts[bin] += 1;
            sums[bin] += intercept;
        }
    }
    let (peak, &peak_count) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
    if peak_count == 0 {
        return None;
    }
    let lo = peak.saturating_sub(1);
    let hi = (peak + 1).min(bins - 1);
    let n: usize = counts[lo..=hi].iter().sum();
    Some(sums[lo..=hi].iter().sum::<f64>() / n as f64)
}

pub fn estimate_iic(img: &Image, opts: &IicOptions) -> Result<Illuminant, IlluminantError> {
    if !(opts.highlight_quantile > 0.0 && opts.highlight_quantile < 1.0) {
        return Err(IlluminantError::InvalidParameter(format!(
            "highlight quantile must lie in (0, 1), got {}",
            opts.highlight_quantile
        )));
    }
    if opts.intercept_bins == 0 {
        return Err(IlluminantError::InvalidParameter("intercept_bins must be >= 1".into()));
    }
    let mut lit: Vec<(f64, [f64; 3])> = img
        .pixels()
        .map(|p| (p[0] + p[1] + p[2], p))
        .filter(|(s, _)| *s > 0.0)
        .collect();
    // brightest first; stable so ties keep raster order
    lit.sort_by(|a, b| b.0.total_cmp(&a.0));
    let take = ((opts.highlight_quantile * img.pixel_count() as f64).ceil() as usize).min(lit.len());
    if take < opts.min_candidates {
        return Err(IlluminantError::InsufficientHighlights {
            found: take,
            needed: opts.min_candidates,
        });
    }
    // a repeated color adds no information about its line, only weight,
    // so candidates are the brightest distinct colors
    let mut seen = HashSet::new();
    let distinct: Vec<&(f64, [f64; 3])> = lit
        .iter()
        .filter(|(_, p)| seen.insert(p.map(|v| (v * COLOR_QUANTUM).round() as i64)))
        .take(take)
        .collect();
    let step = distinct.len().div_ceil(MAX_PAIRED_CANDIDATES);
    let cands: Vec<Candidate> = distinct
        .into_iter()
        .step_by(step)
        .map(|(s, p)| Candidate {
            inv_intensity: 1.0 / s,
            chroma: [p[0] / s, p[1] / s, p[2] / s],
        })
        .collect();

    let (lo, hi) = cands.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        (lo.min(c.inv_intensity), hi.max(c.inv_intensity))
    });
    if hi - lo < MIN_INVERSE_SPREAD {
        return Err(IlluminantError::DegenerateGeometry(format!(
            "inverse-intensity spread {:.3e} of highlight candidates is too small",
            hi - lo
        )));
    }

    let mut gamma = [0.0; 3];
    for (c, g) in gamma.iter_mut().enumerate() {
        *g = vote_intercept(&cands, c, opts.intercept_bins).ok_or_else(|| {
            IlluminantError::DegenerateGeometry(format!("no admissible intercept in channel {c}"))
        })?;
    }
    let total: f64 = gamma.iter().sum();
    if total <= 0.0 {
        return Err(IlluminantError::DegenerateGeometry("all intercepts are zero".into()));
    }
    Illuminant::new(gamma.map(|g| g / total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::angular_error;

    #[test]
    fn uniform_image_is_degenerate() {
        let img = Image::filled(40, 40, [0.3, 0.4, 0.5]);
        assert!(matches!(
            estimate_iic(&img, &IicOptions::default()),
            Err(IlluminantError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn tiny_image_has_too_few_candidates() {
        let img = Image::filled(10, 10, [0.3, 0.4, 0.5]);
        assert!(matches!(
            estimate_iic(&img, &IicOptions::default()),
            Err(IlluminantError::InsufficientHighlights { found: 5, needed: 50 })
        ));
    }

    #[test]
    fn recovers_light_from_single_surface_with_highlight() {
        // body color albedo * e plus a radial specular lobe of the light color
        let e = Illuminant::new([0.9, 0.6, 0.3]).unwrap();
        let light = e.max_normalized();
        let albedo = [0.2, 0.5, 0.4];
        let img = Image::from_fn(64, 64, |x, y| {
            let r2 = ((x as f64 - 32.0).powi(2) + (y as f64 - 32.0).powi(2)) / 200.0;
            let ms = 0.4 * (-r2).exp();
            [0, 1, 2].map(|c| 0.9 * albedo[c] * light[c] + ms * light[c])
        });
        let est = estimate_iic(&img, &IicOptions::default()).unwrap();
        assert!(angular_error(&est, &e) < 1.0, "error {}", angular_error(&est, &e));
    }

    #[test]
    fn rejects_bad_quantile() {
        let img = Image::filled(40, 40, [0.3, 0.4, 0.5]);
        let opts = IicOptions {
            highlight_quantile: 1.0,
            ..IicOptions::default()
        };
        assert!(matches!(estimate_iic(&img, &opts), Err(IlluminantError::InvalidParameter(_))));
    }
}
