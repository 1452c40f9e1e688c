use crate::imaging::{ChannelField, Image};

use super::IlluminantError;

/// Kernel half-width `ceil(3 sigma)`.
pub fn kernel_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

/// Sampled Gaussian derivative kernel of the given order over `-r..=r`.
///
/// Order 0 sums to one. Order 1 sums to zero with first moment -1, so that
/// convolving a unit ramp yields exactly 1. Order 2 sums to zero with second
/// moment 2, so that convolving `x^2` yields exactly 2.
pub fn gaussian_kernel(order: u32, sigma: f64) -> Vec<f64> {
    let r = kernel_radius(sigma) as i64;
    let g: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let pos = |k: usize| (k as i64 - r) as f64;
    match order {
        0 => {
            let s: f64 = g.iter().sum();
            g.iter().map(|v| v / s).collect()
        }
        1 => {
            let m2: f64 = g.iter().enumerate().map(|(k, v)| pos(k).powi(2) * v).sum();
            g.iter().enumerate().map(|(k, v)| -pos(k) * v / m2).collect()
        }
        2 => {
            let s: f64 = g.iter().sum();
            let m2: f64 = g.iter().enumerate().map(|(k, v)| pos(k).powi(2) * v).sum();
            let mean_sq = m2 / s;
            let raw: Vec<f64> = g
                .iter()
                .enumerate()
                .map(|(k, v)| (pos(k).powi(2) - mean_sq) * v)
                .collect();
            let moment: f64 = raw.iter().enumerate().map(|(k, v)| pos(k).powi(2) * v).sum();
            raw.iter().map(|v| 2.0 * v / moment).collect()
        }
        _ => unreachable!("order checked by caller"),
    }
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

fn convolve_rows(field: &ChannelField, kernel: &[f64]) -> ChannelField {
    let r = (kernel.len() / 2) as i64;
    ChannelField::from_fn(field.width, field.height, |x, y| {
        let row = &field.data[y * field.width..(y + 1) * field.width];
        kernel
            .iter()
            .enumerate()
            .map(|(k, w)| w * row[reflect(x as i64 - (k as i64 - r), field.width)])
            .sum()
    })
}

fn convolve_cols(field: &ChannelField, kernel: &[f64]) -> ChannelField {
    let r = (kernel.len() / 2) as i64;
    ChannelField::from_fn(field.width, field.height, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, w)| w * field.get(x, reflect(y as i64 - (k as i64 - r), field.height)))
            .sum()
    })
}

/// `d^{s+t} f_sigma / dx^s dy^t` of a single field via separable convolution.
pub fn gaussian_derivative_field(
    field: &ChannelField,
    s: u32,
    t: u32,
    sigma: f64,
) -> Result<ChannelField, IlluminantError> {
    if s + t > 2 {
        return Err(IlluminantError::BadOrder(s + t));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(IlluminantError::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    let radius = kernel_radius(sigma);
    if field.width.min(field.height) <= 2 * radius {
        return Err(IlluminantError::ImageTooSmall {
            width: field.width,
            height: field.height,
            radius,
        });
    }
    let along_x = convolve_rows(field, &gaussian_kernel(s, sigma));
    Ok(convolve_cols(&along_x, &gaussian_kernel(t, sigma)))
}

/// Gaussian derivative of one channel (0 = R, 1 = G, 2 = B) of an image.
pub fn gaussian_derivative(
    img: &Image,
    channel: usize,
    s: u32,
    t: u32,
    sigma: f64,
) -> Result<ChannelField, IlluminantError> {
    if channel > 2 {
        return Err(IlluminantError::InvalidParameter(format!("channel {channel} out of range")));
    }
    gaussian_derivative_field(&img.channel(channel), s, t, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moment(k: &[f64], p: i32) -> f64 {
        let r = (k.len() / 2) as f64;
        k.iter().enumerate().map(|(i, v)| (i as f64 - r).powi(p) * v).sum()
    }

    #[test]
    fn kernel_moments() {
        for sigma in [0.5, 1.0, 2.3] {
            let k0 = gaussian_kernel(0, sigma);
            assert!((moment(&k0, 0) - 1.0).abs() < 1e-12);
            let k1 = gaussian_kernel(1, sigma);
            assert!(moment(&k1, 0).abs() < 1e-12);
            assert!((moment(&k1, 1) + 1.0).abs() < 1e-12);
            let k2 = gaussian_kernel(2, sigma);
            assert!(moment(&k2, 0).abs() < 1e-12);
            assert!(moment(&k2, 1).abs() < 1e-12);
            assert!((moment(&k2, 2) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_field_has_zero_derivative() {
        let img = Image::filled(20, 20, [0.4, 0.4, 0.4]);
        let d = gaussian_derivative(&img, 0, 1, 0, 1.5).unwrap();
        assert!(d.data.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn ramp_derivative_is_slope_in_interior() {
        let a = 0.01;
        let img = Image::from_fn(60, 20, |x, _| [a * x as f64; 3]);
        let sigma = 2.0;
        let r = kernel_radius(sigma);
        let d = gaussian_derivative(&img, 1, 1, 0, sigma).unwrap();
        for y in 0..20 {
            for x in r..60 - r {
                assert!((d.get(x, y) - a).abs() < 1e-6, "({x},{y}) -> {}", d.get(x, y));
            }
        }
        let dy = gaussian_derivative(&img, 1, 0, 1, sigma).unwrap();
        assert!(dy.data.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn order_above_two_is_rejected() {
        let img = Image::filled(20, 20, [0.4; 3]);
        assert_eq!(gaussian_derivative(&img, 0, 2, 1, 1.0), Err(IlluminantError::BadOrder(3)));
    }

    #[test]
    fn derivative_matches_central_differences_of_smoothed_image() {
        let w = 64;
        let img = Image::from_fn(w, w, |x, y| {
            let (x, y) = (x as f64, y as f64);
            let v = 0.5 + 0.3 * (x / 25.0).sin() * (y / 31.0).cos();
            [v; 3]
        });
        let sigma = 1.5;
        let smooth = gaussian_derivative(&img, 0, 0, 0, sigma).unwrap();
        let fx = gaussian_derivative(&img, 0, 1, 0, sigma).unwrap();
        let fy = gaussian_derivative(&img, 0, 0, 1, sigma).unwrap();
        let fxx = gaussian_derivative(&img, 0, 2, 0, sigma).unwrap();
        let margin = 2 * kernel_radius(sigma) + 2;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        let (mut worst2, mut scale2) = (0.0f64, 0.0f64);
        for y in margin..w - margin {
            for x in margin..w - margin {
                let cx = (smooth.get(x + 1, y) - smooth.get(x - 1, y)) / 2.0;
                let cy = (smooth.get(x, y + 1) - smooth.get(x, y - 1)) / 2.0;
                let cxx = smooth.get(x + 1, y) - 2.0 * smooth.get(x, y) + smooth.get(x - 1, y);
                worst = worst
                    .max((fx.get(x, y) - cx).abs())
                    .max((fy.get(x, y) - cy).abs());
                scale = scale.max(cx.abs()).max(cy.abs());
                worst2 = worst2.max((fxx.get(x, y) - cxx).abs());
                scale2 = scale2.max(cxx.abs());
            }
        }
        assert!(worst <= 1e-3 * scale, "worst {worst} vs scale {scale}");
        assert!(worst2 <= 1e-3 * scale2, "worst {worst2} vs scale {scale2}");
    }
}
