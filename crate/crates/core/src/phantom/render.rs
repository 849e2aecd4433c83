use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::tree::CoronaryTree;
use super::PhantomError;
use crate::geometry::{project, Point3, ProjectionView};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image2D {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Image2D {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, PhantomError> {
        if values.len() != width * height {
            return Err(PhantomError::InvalidImage(format!(
                "{} values for {width}x{height}",
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, values: vec![value; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    /// Bilinear sample at continuous pixel coordinates, clamped at the
    /// border. Pixel `(i, j)` covers `[i, i+1) x [j, j+1)`.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let y = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bot = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    /// Box-filter downsampling by an integer factor.
    pub fn downsample(&self, factor: usize) -> Result<Image2D, PhantomError> {
        if factor == 0 || self.width % factor != 0 || self.height % factor != 0 {
            return Err(PhantomError::InvalidImage(format!(
                "cannot downsample {}x{} by {factor}",
                self.width, self.height
            )));
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let norm = 1.0 / (factor * factor) as f64;
        let mut out = vec![0.0; w * h];
        for y in 0..self.height {
            for x in 0..self.width {
                out[(y / factor) * w + x / factor] += self.get(x, y) * norm;
            }
        }
        Image2D::new(w, h, out)
    }

    /// Resizes to `size`x`size` (square images, integer factor only).
    pub fn resized(&self, size: usize) -> Result<Image2D, PhantomError> {
        if self.width == size && self.height == size {
            return Ok(self.clone());
        }
        if self.width != self.height || self.width % size != 0 {
            return Err(PhantomError::InvalidImage(format!(
                "cannot resize {}x{} to {size}x{size}",
                self.width, self.height
            )));
        }
        self.downsample(self.width / size)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    /// Binary 8-bit PGM (P5).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Image2D, PhantomError> {
        let bad = |m: &str| PhantomError::InvalidImage(format!("PGM: {m}"));
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?.to_string());
        }
        if fields[0] != "P5" {
            return Err(bad("not a binary graymap"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(bad("only 8-bit images are supported"));
        }
        pos += 1;
        let data = bytes.get(pos..pos + w * h).ok_or_else(|| bad("truncated pixel data"))?;
        let values = data.iter().map(|&b| b as f64 / maxval as f64).collect();
        Image2D::new(w, h, values)
    }
}

/// A tube along a 3D polyline. Zero radii are allowed here (they attenuate
/// nothing), which makes this the entry point for synthetic test scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tube {
    pub points: Vec<Point3>,
    pub radii: Vec<f64>,
}

impl Tube {
    pub fn from_tree(tree: &CoronaryTree) -> Vec<Tube> {
        tree.branches
            .iter()
            .map(|b| Tube { points: b.points.clone(), radii: b.radii.clone() })
            .collect()
    }
}

/// Width of the Gaussian profile relative to the projected radius; chosen so
/// its peak and integral match the chord length through a circular section.
const PROFILE_SIGMA: f64 = 0.626_657_068_657_750_1; // sqrt(pi/8)
const MIN_SIGMA_PX: f64 = 0.5;

/// Line-integral attenuation of Gaussian-profile tubes, before normalization.
///
/// Each centerline sample deposits the projected volume of its cylinder slice
/// as a normalized 2D Gaussian, so the sum along a vessel approximates the
/// chord length through the lumen and foreshortened segments accumulate.
pub fn attenuation_map(
    tubes: &[Tube],
    view: &ProjectionView,
    density: f64,
) -> Result<Vec<f64>, PhantomError> {
    let (w, h) = view.intrinsics.image_size;
    let f = view.intrinsics.focal_px;
    let mut att = vec![0.0; w * h];
    for tube in tubes {
        let n = tube.points.len();
        for i in 0..n {
            let p = &tube.points[i];
            let r_mm = tube.radii[i];
            let depth = view.depth(p);
            let c = project(view, p).map_err(|_| PhantomError::OutOfFrustum { depth })?;
            if r_mm <= 0.0 {
                continue;
            }
            // Trapezoid weight: half the distance to each neighbor.
            let mut ds = 0.0;
            if i > 0 {
                ds += 0.5 * (tube.points[i] - tube.points[i - 1]).norm();
            }
            if i + 1 < n {
                ds += 0.5 * (tube.points[i + 1] - tube.points[i]).norm();
            }
            let scale = f / depth;
            let r_px = r_mm * scale;
            let ds_px = ds * scale;
            let sigma = (r_px * PROFILE_SIGMA).max(MIN_SIGMA_PX);
            let mass = density * PI * r_px * r_px * ds_px;
            let norm = mass / (2.0 * PI * sigma * sigma);
            let inv2s2 = 1.0 / (2.0 * sigma * sigma);
            let reach = (3.0 * sigma + 1.0).ceil();
            let x0 = (c.x - reach).floor().max(0.0) as usize;
            let y0 = (c.y - reach).floor().max(0.0) as usize;
            let x1 = ((c.x + reach).ceil().max(0.0) as usize).min(w.saturating_sub(1));
            let y1 = ((c.y + reach).ceil().max(0.0) as usize).min(h.saturating_sub(1));
            if c.x + reach < 0.0 || c.y + reach < 0.0 {
                continue;
            }
            for y in y0..=y1 {
                let dy = y as f64 + 0.5 - c.y;
                for x in x0..=x1 {
                    let dx = x as f64 + 0.5 - c.x;
                    att[y * w + x] += norm * (-(dx * dx + dy * dy) * inv2s2).exp();
                }
            }
        }
    }
    Ok(att)
}

/// Maps attenuation to intensity `1 - normalize(att)`: dark vessels on a
/// bright background. A scene without attenuation renders uniformly white.
pub fn intensity_from_attenuation(att: &[f64], width: usize, height: usize) -> Image2D {
    let lo = att.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = att.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = if hi - lo > 0.0 {
        att.iter().map(|a| 1.0 - (a - lo) / (hi - lo)).collect()
    } else {
        vec![1.0; att.len()]
    };
    Image2D { width, height, values }
}

pub fn render_tubes(tubes: &[Tube], view: &ProjectionView, density: f64) -> Result<Image2D, PhantomError> {
    let (w, h) = view.intrinsics.image_size;
    let att = attenuation_map(tubes, view, density)?;
    Ok(intensity_from_attenuation(&att, w, h))
}

/// Renders a DRR-style view of the tree.
pub fn render_view(tree: &CoronaryTree, view: &ProjectionView) -> Result<Image2D, PhantomError> {
    render_tubes(&Tube::from_tree(tree), view, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_view, Angulation, GeometryConfig};
    use crate::phantom::{generate_tree, project_labels, PhantomConfig, Side};
    use nalgebra::Vector3;

    fn frontal() -> ProjectionView {
        build_view(Angulation::new(0.0, 0.0).unwrap(), &GeometryConfig::default()).unwrap()
    }

    fn z_tube(radius: f64) -> Tube {
        let points: Vec<Point3> = (0..=160).map(|i| Vector3::new(6.0, 0.0, -40.0 + 0.5 * i as f64)).collect();
        Tube { radii: vec![radius; points.len()], points }
    }

    #[test]
    fn zero_radius_tube_renders_uniform() {
        let img = render_tubes(&[z_tube(0.0)], &frontal(), 1.0).unwrap();
        assert!(img.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn straight_tube_row_minimum_on_centerline() {
        let view = frontal();
        let tube = z_tube(1.5);
        let img = render_tubes(&[tube.clone()], &view, 1.0).unwrap();
        let cx = project(&view, &tube.points[0]).unwrap().x;
        let (top, bottom) = (
            project(&view, tube.points.last().unwrap()).unwrap().y,
            project(&view, &tube.points[0]).unwrap().y,
        );
        for y in (top.ceil() as usize + 5)..(bottom.floor() as usize - 5) {
            let row = &img.values[y * img.width..(y + 1) * img.width];
            let argmin = row
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!((argmin as f64 + 0.5 - cx).abs() <= 1.0, "row {y}: {argmin} vs {cx}");
            assert!(row[argmin] < 0.5);
        }
    }

    #[test]
    fn attenuation_is_linear_in_density() {
        let view = frontal();
        let a = attenuation_map(&[z_tube(1.2)], &view, 1.0).unwrap();
        let b = attenuation_map(&[z_tube(1.2)], &view, 2.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(*y, 2.0 * x);
        }
    }

    #[test]
    fn vessels_are_dark_at_label_positions() {
        let tree = generate_tree(&PhantomConfig::new(3, Side::Lca)).unwrap();
        let view = build_view(Angulation::new(-30.0, -30.0).unwrap(), &GeometryConfig::default()).unwrap();
        let img = render_view(&tree, &view).unwrap();
        let labels = project_labels(&tree, &view).unwrap();
        let mean = img.mean();
        let pts: Vec<_> = labels.branches.iter().flat_map(|b| b.points.iter()).collect();
        let dark = pts.iter().filter(|p| img.sample(p.x, p.y) < mean).count();
        assert!(dark as f64 >= 0.95 * pts.len() as f64, "{dark}/{}", pts.len());
    }

    #[test]
    fn pgm_round_trip_and_truncation() {
        let img = Image2D::new(3, 2, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        let bytes = img.to_pgm();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        let back = Image2D::from_pgm(&bytes).unwrap();
        assert_eq!(back.to_pgm(), bytes);
        assert!(Image2D::from_pgm(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn downsample_box_average() {
        let img = Image2D::new(4, 2, vec![0.0, 1.0, 0.5, 0.5, 1.0, 0.0, 0.5, 0.5]).unwrap();
        let d = img.downsample(2).unwrap();
        assert_eq!(d.values, vec![0.5, 0.5]);
        assert!(img.downsample(3).is_err());
    }
}
