//! Deterministic piecewise-constant test images with intensities in `[0, 1]`.

use crate::error::Result;
use crate::grid::Image;

/// Resolution-independent phantom: a dark background holding a bright
/// rectangle, a disc, a mid-grey bar and a small square, defined in unit
/// coordinates and sampled at pixel centres.
pub fn phantom(n: usize) -> Image {
    let nf = n as f64;
    Image::from_fn(n, |row, col| {
        let u = (row as f64 + 0.5) / nf;
        let v = (col as f64 + 0.5) / nf;
        if (u - 0.62).powi(2) + (v - 0.35).powi(2) < 0.04 {
            0.9
        } else if (0.15..0.45).contains(&u) && (0.55..0.85).contains(&v) {
            0.7
        } else if (0.75..0.85).contains(&u) && (0.5..0.95).contains(&v) {
            0.45
        } else if (0.1..0.22).contains(&u) && (0.1..0.22).contains(&v) {
            1.0
        } else {
            0.1
        }
    })
}

/// Centred `size × size` section of `image`.
pub fn center_crop(image: &Image, size: usize) -> Result<Image> {
    let off = image.n().saturating_sub(size) / 2;
    image.crop(off, off, size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_and_levels() {
        let p = phantom(64);
        assert!(p.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let mut levels: Vec<f64> = p.data().to_vec();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        assert_eq!(levels.len(), 5);
    }

    #[test]
    fn crops_are_centred() {
        let p = phantom(12);
        let c = center_crop(&p, 4).unwrap();
        assert_eq!(c.n(), 4);
        assert_eq!(c.get(0, 0), p.get(4, 4));
        assert!(center_crop(&p, 13).is_err());
    }
}
