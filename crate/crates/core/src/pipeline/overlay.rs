use std::path::Path;

use crate::imaging::{save_image, Image, ImageError, Transfer};
use crate::landmark::Pixel;

const MARKER: [f64; 3] = [1.0, 0.0, 0.0];

/// Marks each corner with a five-pixel plus sign, clipped at the image border.
pub fn draw_crosses(image: &Image, corners: &[Pixel]) -> Image {
    let mut out = image.clone();
    let (w, h) = (image.width() as i32, image.height() as i32);
    for c in corners {
        for (dx, dy) in [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)] {
            let (x, y) = (c.x + dx, c.y + dy);
            if x >= 0 && y >= 0 && x < w && y < h {
                out.set_pixel(x as usize, y as usize, MARKER);
            }
        }
    }
    out
}

pub fn emit_overlay(image: &Image, corners: &[Pixel], path: &Path, transfer: Transfer) -> Result<(), ImageError> {
    save_image(&draw_crosses(image, corners), path, transfer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::load_image;

    #[test]
    fn no_corners_leaves_image_unchanged() {
        let img = Image::from_fn(6, 4, |x, y| [x as f64 / 6.0, y as f64 / 4.0, 0.5]);
        assert_eq!(draw_crosses(&img, &[]), img);
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ppm");
        let b = dir.path().join("b.ppm");
        emit_overlay(&img, &[], &a, Transfer::Linear).unwrap();
        save_image(&img, &b, Transfer::Linear).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn one_corner_changes_exactly_five_pixels() {
        let img = Image::filled(11, 11, [0.2, 0.4, 0.6]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.ppm");
        emit_overlay(&img, &[Pixel::new(5, 5)], &p, Transfer::Linear).unwrap();
        let back = load_image(&p, Transfer::Linear).unwrap();
        let changed: Vec<(usize, usize)> = (0..11)
            .flat_map(|y| (0..11).map(move |x| (x, y)))
            .filter(|&(x, y)| back.pixel(x, y) == [1.0, 0.0, 0.0])
            .collect();
        assert_eq!(changed, vec![(5, 4), (4, 5), (5, 5), (6, 5), (5, 6)]);
    }
}
