//! Canvas coordinates and positional encodings.
//!
//! Both images share one canvas: the reference occupies x in [0, 0.5], the
//! target x in [0.5, 1], and y in [0, 1] spans the image height.

use super::CorrError;
use crate::geometry::Point2;
use crate::tensornet::{fourier_features, Tensor};

/// Which half of the canvas a point lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    Reference,
    Target,
}

impl Half {
    fn offset(self) -> f64 {
        match self {
            Half::Reference => 0.0,
            Half::Target => 0.5,
        }
    }
}

/// Pixel coordinates in an image of `size` pixels to canvas coordinates.
pub fn pixel_to_canvas(p: Point2, size: usize, half: Half) -> Point2 {
    Point2::new(half.offset() + 0.5 * p.x / size as f64, p.y / size as f64)
}

pub fn canvas_to_pixel(c: Point2, size: usize, half: Half) -> Point2 {
    Point2::new((c.x - half.offset()) * 2.0 * size as f64, c.y * size as f64)
}

/// Fourier positional encoding of a canvas point: for k = 1..C/4 the block
/// `[sin kπx, sin kπy, cos kπx, cos kπy]`.
pub fn positional_encoding(x: Point2, channels: usize) -> Result<Vec<f64>, CorrError> {
    if !(0.0..=1.0).contains(&x.x) || !(0.0..=1.0).contains(&x.y) {
        return Err(CorrError::Domain(format!("({}, {}) outside the canvas", x.x, x.y)));
    }
    if channels == 0 || channels % 4 != 0 {
        return Err(CorrError::InvalidConfig(format!("channels {channels} not a multiple of 4")));
    }
    let mut out = vec![0.0; channels];
    fourier_features(x.x, x.y, channels, &mut out);
    Ok(out)
}

/// Encodings of the canvas cell centers in token order (row-major over a
/// `rows x cols` grid), shape `[1, rows * cols, channels]`.
pub fn canvas_encoding(rows: usize, cols: usize, channels: usize) -> Tensor {
    let mut data = vec![0.0; rows * cols * channels];
    for r in 0..rows {
        for c in 0..cols {
            let t = r * cols + c;
            let x = (c as f64 + 0.5) / cols as f64;
            let y = (r as f64 + 0.5) / rows as f64;
            fourier_features(x, y, channels, &mut data[t * channels..(t + 1) * channels]);
        }
    }
    Tensor::new(vec![1, rows * cols, channels], data).expect("sized above")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_encoding() {
        let e = positional_encoding(Point2::new(0.0, 0.0), 64).unwrap();
        for k in 0..16 {
            assert_eq!(&e[4 * k..4 * k + 4], &[0.0, 0.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn unit_x_first_block() {
        let e = positional_encoding(Point2::new(1.0, 0.0), 64).unwrap();
        let expect = [0.0, 0.0, -1.0, 1.0];
        for (a, b) in e[..4].iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn lengths_and_domain() {
        assert_eq!(positional_encoding(Point2::new(0.3, 0.2), 64).unwrap().len(), 64);
        assert_eq!(positional_encoding(Point2::new(0.3, 0.2), 256).unwrap().len(), 256);
        assert!(matches!(positional_encoding(Point2::new(1.2, 0.2), 64), Err(CorrError::Domain(_))));
    }

    #[test]
    fn canvas_round_trip() {
        let p = Point2::new(37.25, 100.5);
        for half in [Half::Reference, Half::Target] {
            let c = pixel_to_canvas(p, 128, half);
            assert!(canvas_to_pixel(c, 128, half).dist(p) < 1e-12);
        }
        assert!(pixel_to_canvas(p, 128, Half::Target).x >= 0.5);
    }
}
