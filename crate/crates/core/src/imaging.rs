//! Linear-RGB rasters, PPM (P6) file I/O, and the angular error metric.
//!
//! Everything downstream works on linear sensor values in `[0, 1]`. Files on
//! disk are 8-bit binary PPM; the [`Transfer`] flag decides whether the bytes
//! are gamma-encoded (power law 2.2) or already linear.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::illuminant::Illuminant;

const GAMMA: f64 = 2.2;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("malformed image file: {0}")]
    MalformedFile(String),
    #[error("unsupported bit depth: maxval {0} (only 255 is supported)")]
    UnsupportedDepth(u32),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("invalid image data: {0}")]
    InvalidData(String),
}

/// Transfer function of the bytes in an image file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Transfer {
    /// Gamma-encoded with exponent 2.2.
    #[default]
    Srgb,
    Linear,
}

impl Transfer {
    pub fn decode(self, code: u8) -> f64 {
        let v = f64::from(code) / 255.0;
        match self {
            Transfer::Linear => v,
            Transfer::Srgb => v.powf(GAMMA),
        }
    }

    pub fn encode(self, value: f64) -> u8 {
        let v = value.clamp(0.0, 1.0);
        let v = match self {
            Transfer::Linear => v,
            Transfer::Srgb => v.powf(1.0 / GAMMA),
        };
        (v * 255.0).round() as u8
    }
}

impl std::str::FromStr for Transfer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "srgb" => Ok(Transfer::Srgb),
            "linear" => Ok(Transfer::Linear),
            other => Err(format!("unknown transfer `{other}` (expected srgb or linear)")),
        }
    }
}

/// Row-major, three-channel, linear-RGB raster with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != width * height * 3 {
            return Err(ImageError::InvalidData(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(ImageError::InvalidData(format!(
                "sample {bad} is not a finite value in [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image with every pixel set to `rgb`. Panics if a component is outside `[0, 1]`.
    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        assert!(rgb.iter().all(|v| (0.0..=1.0).contains(v)));
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self {
            width,
            height,
            data,
        }
    }

    /// Builds an image from a per-pixel function; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                data.extend(px.iter().map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 }));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Clamped write; used by overlay drawing.
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        for c in 0..3 {
            self.data[i + c] = rgb[c].clamp(0.0, 1.0);
        }
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn channel(&self, c: usize) -> ChannelField {
        let data = self.data.iter().skip(c).step_by(3).copied().collect();
        ChannelField {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Multiplies every sample by `s` (expected in `[0, 1]`, so no clamping occurs).
    pub fn scaled(&self, s: f64) -> Image {
        Image::from_fn(self.width, self.height, |x, y| {
            let p = self.pixel(x, y);
            [p[0] * s, p[1] * s, p[2] * s]
        })
    }
}

/// Single-channel real field; may hold negative derivative responses.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ChannelField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], ImageError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImageError::MalformedFile("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u32, ImageError> {
    let tok = next_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<u32>().ok())
        .ok_or_else(|| ImageError::MalformedFile(format!("bad {what} field")))
}

/// Parses an in-memory binary PPM (P6).
pub fn decode_ppm(bytes: &[u8], transfer: Transfer) -> Result<Image, ImageError> {
    let mut pos = 0;
    if next_token(bytes, &mut pos)? != b"P6" {
        return Err(ImageError::MalformedFile("missing P6 magic".into()));
    }
    let width = header_number(bytes, &mut pos, "width")? as usize;
    let height = header_number(bytes, &mut pos, "height")? as usize;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::MalformedFile(format!("zero dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(ImageError::UnsupportedDepth(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(ImageError::MalformedFile("missing raster separator".into()));
    }
    pos += 1;
    let needed = width * height * 3;
    let raster = bytes
        .get(pos..pos + needed)
        .ok_or_else(|| ImageError::MalformedFile(format!("raster shorter than {needed} bytes")))?;
    let data = raster.iter().map(|&b| transfer.decode(b)).collect();
    Ok(Image {
        width,
        height,
        data,
    })
}

pub fn encode_ppm(img: &Image, transfer: Transfer) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|&v| transfer.encode(v)));
    out
}

pub fn load_image(path: impl AsRef<Path>, transfer: Transfer) -> Result<Image, ImageError> {
    let bytes = fs::read(path)?;
    decode_ppm(&bytes, transfer)
}

pub fn save_image(img: &Image, path: impl AsRef<Path>, transfer: Transfer) -> Result<(), ImageError> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_ppm(img, transfer))?;
    Ok(())
}

/// Angle in degrees between two unit illuminants, accurate down to tiny angles.
pub fn angular_error(est: &Illuminant, truth: &Illuminant) -> f64 {
    let a = est.rgb();
    let b = truth.rgb();
    let dot: f64 = (0..3).map(|i| a[i] * b[i]).sum();
    let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let sin = cross.iter().map(|v| v * v).sum::<f64>().sqrt();
    sin.atan2(dot).to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ppm(w: usize, h: usize, bytes: &[u8]) -> Vec<u8> {
        let mut v = format!("P6\n{w} {h}\n255\n").into_bytes();
        v.extend_from_slice(bytes);
        v
    }

    #[test]
    fn decodes_white_linear_and_black_srgb() {
        let img = decode_ppm(&ppm(1, 1, &[255, 255, 255]), Transfer::Linear).unwrap();
        assert_eq!(img.pixel(0, 0), [1.0, 1.0, 1.0]);
        let img = decode_ppm(&ppm(1, 1, &[0, 0, 0]), Transfer::Srgb).unwrap();
        assert_eq!(img.pixel(0, 0), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn srgb_mid_grey_decodes_to_power_law() {
        let img = decode_ppm(&ppm(1, 1, &[128, 128, 128]), Transfer::Srgb).unwrap();
        // exp(2.2 * ln(128/255)) = 0.219520 (hand-evaluated power law)
        let expected = (2.2 * (128.0f64 / 255.0).ln()).exp();
        for v in img.pixel(0, 0) {
            assert!((v - expected).abs() < 1e-12);
            assert!((v - 0.21952).abs() < 1e-5);
        }
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P6 # made by hand\n2 1\n# depth\n255\n\x00\x00\x00\xff\xff\xff";
        let img = decode_ppm(bytes, Transfer::Linear).unwrap();
        assert_eq!(img.width(), 2);
        assert_eq!(img.pixel(1, 0), [1.0; 3]);
    }

    #[test]
    fn rejects_bad_magic_depth_and_truncation() {
        assert!(matches!(
            decode_ppm(b"P3\n1 1\n255\n0 0 0", Transfer::Linear),
            Err(ImageError::MalformedFile(_))
        ));
        assert!(matches!(
            decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0", Transfer::Linear),
            Err(ImageError::UnsupportedDepth(65535))
        ));
        assert!(matches!(
            decode_ppm(b"P6\n2 2\n255\n\0\0\0", Transfer::Linear),
            Err(ImageError::MalformedFile(_))
        ));
        assert!(matches!(
            decode_ppm(b"P6\n0 2\n255\n", Transfer::Linear),
            Err(ImageError::MalformedFile(_))
        ));
    }

    #[test]
    fn red_pixel_encodes_to_exact_bytes() {
        let img = Image::new(1, 1, vec![1.0, 0.0, 0.0]).unwrap();
        let bytes = encode_ppm(&img, Transfer::Srgb);
        assert_eq!(&bytes[bytes.len() - 3..], &[255, 0, 0]);
    }

    #[test]
    fn save_load_roundtrip_uniform_half() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("half.ppm");
        let img = Image::filled(4, 3, [0.5; 3]);
        save_image(&img, &path, Transfer::Linear).unwrap();
        let back = load_image(&path, Transfer::Linear).unwrap();
        for v in back.data() {
            assert!((v - 0.5).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn srgb_roundtrip_error_bound_over_all_codes() {
        // Worst case over every code value: the largest linear-domain gap between
        // a value and the decode of its re-encoding.
        let mut worst = 0.0f64;
        for code in 0..255u8 {
            let lo = Transfer::Srgb.decode(code);
            let hi = Transfer::Srgb.decode(code + 1);
            // any value in [lo, hi] rounds to one of the two endpoints
            for step in 0..=100 {
                let v = lo + (hi - lo) * f64::from(step) / 100.0;
                let back = Transfer::Srgb.decode(Transfer::Srgb.encode(v));
                worst = worst.max((back - v).abs());
            }
        }
        assert!(worst <= 0.005, "worst {worst}");
    }

    #[test]
    fn new_rejects_out_of_range_and_wrong_length() {
        assert!(Image::new(1, 1, vec![0.0, 1.5, 0.0]).is_err());
        assert!(Image::new(1, 1, vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(Image::new(2, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn angular_error_reference_angles() {
        let r = Illuminant::new([1.0, 0.0, 0.0]).unwrap();
        let g = Illuminant::new([0.0, 1.0, 0.0]).unwrap();
        let rg = Illuminant::new([1.0, 1.0, 0.0]).unwrap();
        assert_eq!(angular_error(&r, &r), 0.0);
        assert!((angular_error(&r, &g) - 90.0).abs() < 1e-12);
        assert!((angular_error(&r, &rg) - 45.0).abs() < 1e-9);
        assert!((angular_error(&rg, &r) - angular_error(&r, &rg)).abs() < 1e-15);
        for t in [1e-9f64, 1e-6, 1e-3] {
            let e = Illuminant::new([t.cos(), t.sin(), 0.0]).unwrap();
            assert!((angular_error(&r, &e) - t.to_degrees()).abs() < 1e-12 * t.to_degrees().max(1.0));
        }
    }
}
