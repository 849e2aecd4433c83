//! C-arm camera model.
//!
//! A view is parameterized by its angulation: `alpha` rotates about the
//! LAO(+)/RAO(-) axis and `beta` about the cranial(+)/caudal(-) axis. The
//! detector normal fixes the optical axis, the camera sits on the opposite
//! side of the isocenter (world origin), and the image "up" direction is the
//! world +z axis projected onto the detector plane.

use std::ops::{Add, Mul, Sub};

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("angulation out of range: alpha={alpha_deg} deg, beta={beta_deg} deg")]
    InvalidAngulation { alpha_deg: f64, beta_deg: f64 },
    #[error("invalid camera parameters: {0}")]
    InvalidCamera(String),
    #[error("optical axis is parallel to the reference up-vector (gimbal lock)")]
    Gimbal,
    #[error("point has non-positive depth {depth} mm")]
    NonPositiveDepth { depth: f64 },
    #[error("views share the same camera center")]
    IdenticalViews,
    #[error("canvas coordinate ({x}, {y}) outside [0,1]^2")]
    OutsideCanvas { x: f64, y: f64 },
}

/// Smallest depth (mm) accepted by [`project`].
pub const MIN_DEPTH_MM: f64 = 1e-6;

/// A 2D point. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn dist_sq(self, other: Point2) -> f64 {
        (self - other).norm_sq()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        self + (other - self) * t
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// A point on the side-by-side canvas holding both images, with both
/// coordinates in `[0, 1]`. The reference image covers `x in [0, 0.5]` and the
/// target image `x in [0.5, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanvasPoint(Point2);

impl CanvasPoint {
    pub fn new(x: f64, y: f64) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(GeometryError::OutsideCanvas { x, y });
        }
        Ok(Self(Point2::new(x, y)))
    }

    pub fn point(self) -> Point2 {
        self.0
    }
}

pub type Point3 = Vector3<f64>;

/// C-arm angulation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angulation {
    pub alpha_deg: f64,
    pub beta_deg: f64,
}

impl Angulation {
    pub fn new(alpha_deg: f64, beta_deg: f64) -> Result<Self, GeometryError> {
        let valid = alpha_deg.is_finite()
            && beta_deg.is_finite()
            && (-180.0..=180.0).contains(&alpha_deg)
            && (-90.0..=90.0).contains(&beta_deg);
        if !valid {
            return Err(GeometryError::InvalidAngulation { alpha_deg, beta_deg });
        }
        Ok(Self { alpha_deg, beta_deg })
    }

    /// LAO rotation (positive alpha).
    pub fn lao(deg: f64, beta_deg: f64) -> Result<Self, GeometryError> {
        Self::new(deg, beta_deg)
    }

    /// RAO rotation (negative alpha).
    pub fn rao(deg: f64, beta_deg: f64) -> Result<Self, GeometryError> {
        Self::new(-deg, beta_deg)
    }
}

/// Unit normal of the detector plane.
///
/// The first two components are `sin(a)cos(b)` and `-cos(a)cos(b)`; the third
/// is `-sin(b)`, the result of rotating the frontal axis `[0, -1, 0]` by `beta`
/// about world x and then by `alpha` about world z. This keeps the vector unit
/// length for every angulation, including lateral views.
pub fn detector_normal(a: Angulation) -> Vector3<f64> {
    let (sa, ca) = sin_cos_deg(a.alpha_deg);
    let (sb, cb) = sin_cos_deg(a.beta_deg);
    Vector3::new(sa * cb, -ca * cb, -sb)
}

/// `sin` and `cos` of an angle in degrees, reduced by whole quadrants first so
/// multiples of 90 give exact zeros and ones.
fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let q = (deg / 90.0).round();
    let (s, c) = (deg - 90.0 * q).to_radians().sin_cos();
    match (q as i64).rem_euclid(4) {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

/// Intrinsic camera parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub focal_px: f64,
    pub principal_point: Point2,
    pub image_size: (usize, usize),
    pub pixel_spacing_mm: f64,
}

impl CameraIntrinsics {
    pub fn new(
        focal_px: f64,
        principal_point: Point2,
        image_size: (usize, usize),
        pixel_spacing_mm: f64,
    ) -> Result<Self, GeometryError> {
        if !(focal_px > 0.0 && focal_px.is_finite()) {
            return Err(GeometryError::InvalidCamera(format!("focal_px={focal_px}")));
        }
        if !(pixel_spacing_mm > 0.0 && pixel_spacing_mm.is_finite()) {
            return Err(GeometryError::InvalidCamera(format!(
                "pixel_spacing_mm={pixel_spacing_mm}"
            )));
        }
        let (w, h) = image_size;
        let inside = (0.0..=w as f64).contains(&principal_point.x)
            && (0.0..=h as f64).contains(&principal_point.y);
        if !inside {
            return Err(GeometryError::InvalidCamera(format!(
                "principal point ({}, {}) outside {w}x{h}",
                principal_point.x, principal_point.y
            )));
        }
        Ok(Self { focal_px, principal_point, image_size, pixel_spacing_mm })
    }

    /// The 3x3 camera matrix `K`.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.focal_px,
            0.0,
            self.principal_point.x,
            0.0,
            self.focal_px,
            self.principal_point.y,
            0.0,
            0.0,
            1.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraExtrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraExtrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if ortho > 1e-9 || (det - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidCamera(format!(
                "rotation not proper orthonormal (|R^T R - I|={ortho:e}, det={det})"
            )));
        }
        Ok(Self { rotation, translation })
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Optical axis (camera +z) in world coordinates.
    pub fn optical_axis(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }
}

/// Acquisition geometry shared by all views of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub source_isocenter_mm: f64,
    pub source_detector_mm: f64,
    pub image_size: usize,
    pub pixel_spacing_mm: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            source_isocenter_mm: 765.0,
            source_detector_mm: 1100.0,
            image_size: 512,
            pixel_spacing_mm: 0.58,
        }
    }
}

impl GeometryConfig {
    /// Same field of view sampled on a `size`x`size` detector.
    pub fn with_image_size(self, size: usize) -> Self {
        let scale = self.image_size as f64 / size as f64;
        Self { image_size: size, pixel_spacing_mm: self.pixel_spacing_mm * scale, ..self }
    }

    pub fn focal_px(&self) -> f64 {
        self.source_detector_mm / self.pixel_spacing_mm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionView {
    pub angulation: Angulation,
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: CameraExtrinsics,
    pub source_isocenter_mm: f64,
    pub source_detector_mm: f64,
}

impl ProjectionView {
    pub fn new(
        angulation: Angulation,
        intrinsics: CameraIntrinsics,
        extrinsics: CameraExtrinsics,
        source_isocenter_mm: f64,
        source_detector_mm: f64,
    ) -> Result<Self, GeometryError> {
        if !(0.0 < source_isocenter_mm && source_isocenter_mm < source_detector_mm) {
            return Err(GeometryError::InvalidCamera(format!(
                "need 0 < source-isocenter ({source_isocenter_mm}) < source-detector ({source_detector_mm})"
            )));
        }
        let axis_err = (extrinsics.optical_axis() - detector_normal(angulation)).norm();
        if axis_err > 1e-9 {
            return Err(GeometryError::InvalidCamera(format!(
                "optical axis deviates from the detector normal by {axis_err:e}"
            )));
        }
        Ok(Self { angulation, intrinsics, extrinsics, source_isocenter_mm, source_detector_mm })
    }

    /// `K [R | t]`.
    pub fn projection_matrix(&self) -> Matrix3x4<f64> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.extrinsics.rotation);
        rt.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.extrinsics.translation);
        self.intrinsics.matrix() * rt
    }

    pub fn center(&self) -> Vector3<f64> {
        self.extrinsics.center()
    }

    /// Depth of a world point along the optical axis.
    pub fn depth(&self, x: &Point3) -> f64 {
        (self.extrinsics.rotation * x + self.extrinsics.translation).z
    }

    /// World point at the given camera depth whose projection is `pixel`.
    pub fn backproject(&self, pixel: Point2, depth: f64) -> Point3 {
        let k = &self.intrinsics;
        let cam = Vector3::new(
            (pixel.x - k.principal_point.x) / k.focal_px * depth,
            (pixel.y - k.principal_point.y) / k.focal_px * depth,
            depth,
        );
        self.extrinsics.rotation.transpose() * (cam - self.extrinsics.translation)
    }
}

/// Builds the isocentric view for an angulation.
pub fn build_view(a: Angulation, geo: &GeometryConfig) -> Result<ProjectionView, GeometryError> {
    let n = detector_normal(a);
    let world_up = Vector3::z();
    let up = world_up - n * world_up.dot(&n);
    if up.norm() < 1e-9 {
        return Err(GeometryError::Gimbal);
    }
    let up = up.normalize();
    // Image rows grow downwards, so camera +y is the negated up vector.
    let y_cam = -up;
    let z_cam = n;
    let x_cam = y_cam.cross(&z_cam);
    let rotation = Matrix3::from_rows(&[x_cam.transpose(), y_cam.transpose(), z_cam.transpose()]);
    let center = -n * geo.source_isocenter_mm;
    let translation = -(rotation * center);
    let size = geo.image_size;
    let intrinsics = CameraIntrinsics::new(
        geo.focal_px(),
        Point2::new(size as f64 / 2.0, size as f64 / 2.0),
        (size, size),
        geo.pixel_spacing_mm,
    )?;
    let extrinsics = CameraExtrinsics::new(rotation, translation)?;
    ProjectionView::new(a, intrinsics, extrinsics, geo.source_isocenter_mm, geo.source_detector_mm)
}

/// Projects a world point (mm) to pixel coordinates.
pub fn project(v: &ProjectionView, x: &Point3) -> Result<Point2, GeometryError> {
    let cam = v.extrinsics.rotation * x + v.extrinsics.translation;
    if cam.z <= MIN_DEPTH_MM {
        return Err(GeometryError::NonPositiveDepth { depth: cam.z });
    }
    let k = &v.intrinsics;
    Ok(Point2::new(
        k.focal_px * cam.x / cam.z + k.principal_point.x,
        k.focal_px * cam.y / cam.z + k.principal_point.y,
    ))
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Fundamental matrix mapping pixels of `v1` to epipolar lines in `v2`,
/// scaled to unit Frobenius norm: `p2^T F p1 = 0`.
pub fn fundamental_matrix(
    v1: &ProjectionView,
    v2: &ProjectionView,
) -> Result<Matrix3<f64>, GeometryError> {
    if (v1.center() - v2.center()).norm() < 1e-6 {
        return Err(GeometryError::IdenticalViews);
    }
    let (r1, t1) = (v1.extrinsics.rotation, v1.extrinsics.translation);
    let (r2, t2) = (v2.extrinsics.rotation, v2.extrinsics.translation);
    let r = r2 * r1.transpose();
    let t = t2 - r * t1;
    let essential = skew(&t) * r;
    let k1_inv = v1
        .intrinsics
        .matrix()
        .try_inverse()
        .ok_or_else(|| GeometryError::InvalidCamera("singular K".into()))?;
    let k2_inv = v2
        .intrinsics
        .matrix()
        .try_inverse()
        .ok_or_else(|| GeometryError::InvalidCamera("singular K".into()))?;
    let f = k2_inv.transpose() * essential * k1_inv;
    Ok(f / f.norm())
}

/// `p2^T F p1` for pixel points.
pub fn epipolar_residual(f: &Matrix3<f64>, p1: Point2, p2: Point2) -> f64 {
    let a = Vector3::new(p1.x, p1.y, 1.0);
    let b = Vector3::new(p2.x, p2.y, 1.0);
    b.dot(&(f * a))
}

/// Angle in degrees between the detector normals of two views.
pub fn angle_between_views(v1: &ProjectionView, v2: &ProjectionView) -> f64 {
    angle_between_angulations(v1.angulation, v2.angulation)
}

pub fn angle_between_angulations(a: Angulation, b: Angulation) -> f64 {
    let d = detector_normal(a).dot(&detector_normal(b)).clamp(-1.0, 1.0);
    d.acos().to_degrees()
}

/// Per-view camera record stored next to each rendered image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct CameraJson {
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub K: [f64; 9],
    pub R: [f64; 9],
    pub t: [f64; 3],
    pub image_size: [usize; 2],
    pub pixel_spacing_mm: f64,
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[r * 3 + c] = m[(r, c)];
        }
    }
    out
}

impl From<&ProjectionView> for CameraJson {
    fn from(v: &ProjectionView) -> Self {
        CameraJson {
            alpha_deg: v.angulation.alpha_deg,
            beta_deg: v.angulation.beta_deg,
            K: row_major(&v.intrinsics.matrix()),
            R: row_major(&v.extrinsics.rotation),
            t: [v.extrinsics.translation.x, v.extrinsics.translation.y, v.extrinsics.translation.z],
            image_size: [v.intrinsics.image_size.0, v.intrinsics.image_size.1],
            pixel_spacing_mm: v.intrinsics.pixel_spacing_mm,
        }
    }
}

impl TryFrom<&CameraJson> for ProjectionView {
    type Error = GeometryError;

    fn try_from(c: &CameraJson) -> Result<Self, GeometryError> {
        let angulation = Angulation::new(c.alpha_deg, c.beta_deg)?;
        let intrinsics = CameraIntrinsics::new(
            c.K[0],
            Point2::new(c.K[2], c.K[5]),
            (c.image_size[0], c.image_size[1]),
            c.pixel_spacing_mm,
        )?;
        let rotation = Matrix3::from_row_slice(&c.R);
        let translation = Vector3::new(c.t[0], c.t[1], c.t[2]);
        let extrinsics = CameraExtrinsics::new(rotation, translation)?;
        let sid = extrinsics.center().norm();
        let sdd = c.K[0] * c.pixel_spacing_mm;
        ProjectionView::new(angulation, intrinsics, extrinsics, sid, sdd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ang(a: f64, b: f64) -> Angulation {
        Angulation::new(a, b).unwrap()
    }

    #[test]
    fn normal_spot_values() {
        assert_eq!(detector_normal(ang(0.0, 0.0)), Vector3::new(0.0, -1.0, 0.0));
        assert_eq!(detector_normal(ang(90.0, 0.0)), Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(detector_normal(ang(-90.0, 0.0)), Vector3::new(-1.0, 0.0, 0.0));
        assert_eq!(detector_normal(ang(180.0, 0.0)), Vector3::new(0.0, 1.0, 0.0));
    }

    #[test]
    fn normal_matches_product_form_in_first_two_components() {
        // sin(30)cos(30) and -cos(30)cos(30), from the closed form.
        let n = detector_normal(ang(30.0, 30.0));
        assert_abs_diff_eq!(n.x, 0.4330127018922193, epsilon = 1e-12);
        assert_abs_diff_eq!(n.y, -0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(n.z, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(n.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn angulation_range_checked() {
        assert!(Angulation::new(181.0, 0.0).is_err());
        assert!(Angulation::new(0.0, -91.0).is_err());
        assert!(Angulation::new(f64::NAN, 0.0).is_err());
        assert_eq!(Angulation::rao(30.0, 0.0).unwrap().alpha_deg, -30.0);
    }

    #[test]
    fn frontal_view_projects_origin_to_center() {
        let v = build_view(ang(0.0, 0.0), &GeometryConfig::default()).unwrap();
        assert_abs_diff_eq!(v.extrinsics.optical_axis(), Vector3::new(0.0, -1.0, 0.0), epsilon = 1e-12);
        let p = project(&v, &Vector3::zeros()).unwrap();
        assert_abs_diff_eq!(p.x, 256.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 256.0, epsilon = 1e-9);
        let v45 = build_view(ang(45.0, 0.0), &GeometryConfig::default()).unwrap();
        let p = project(&v45, &Vector3::zeros()).unwrap();
        assert_abs_diff_eq!(p.x, 256.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 256.0, epsilon = 1e-9);
    }

    #[test]
    fn gimbal_rejected() {
        assert_eq!(
            build_view(ang(0.0, 90.0), &GeometryConfig::default()).unwrap_err(),
            GeometryError::Gimbal
        );
    }

    #[test]
    fn unit_pinhole() {
        let k = CameraIntrinsics::new(1.0, Point2::new(0.0, 0.0), (1, 1), 1.0).unwrap();
        let e = CameraExtrinsics::new(Matrix3::identity(), Vector3::zeros()).unwrap();
        // Angulation whose normal is +z is not reachable, so assemble directly.
        let v = ProjectionView {
            angulation: ang(0.0, 0.0),
            intrinsics: k,
            extrinsics: e,
            source_isocenter_mm: 1.0,
            source_detector_mm: 2.0,
        };
        let p = project(&v, &Vector3::new(1.0, 2.0, 4.0)).unwrap();
        assert_eq!(p, Point2::new(0.25, 0.5));
        assert!(matches!(
            project(&v, &Vector3::new(1.0, 2.0, 0.0)),
            Err(GeometryError::NonPositiveDepth { .. })
        ));
    }

    #[test]
    fn projection_matches_homogeneous_matrix() {
        let v = build_view(ang(0.0, 0.0), &GeometryConfig::default()).unwrap();
        let x = Vector3::new(10.0, 0.0, 0.0);
        // Oracle: explicit 3x4 multiply then dehomogenize.
        let p = v.projection_matrix() * nalgebra::Vector4::new(x.x, x.y, x.z, 1.0);
        let expect = Point2::new(p.x / p.z, p.y / p.z);
        let got = project(&v, &x).unwrap();
        assert!(got.dist(expect) <= 1e-9);
        // World +x appears on the image left in the frontal view (viewer faces -y).
        assert!(got.x < 256.0);
    }

    #[test]
    fn fundamental_matrix_translated_pair() {
        let v1 = build_view(ang(20.0, 10.0), &GeometryConfig::default()).unwrap();
        let mut v2 = v1;
        v2.extrinsics.translation += Vector3::new(40.0, -15.0, 0.0);
        let f = fundamental_matrix(&v1, &v2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = Vector3::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
            );
            let r = epipolar_residual(&f, project(&v1, &x).unwrap(), project(&v2, &x).unwrap());
            assert!(r.abs() <= 1e-6, "residual {r}");
        }
        let sv = f.svd(false, false).singular_values;
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        assert!(s[1] > 1e-12 && s[2] < 1e-12 * s[0], "rank != 2: {s:?}");
        assert_eq!(fundamental_matrix(&v1, &v1).unwrap_err(), GeometryError::IdenticalViews);
    }

    #[test]
    fn view_angles() {
        let g = GeometryConfig::default();
        let a = build_view(ang(45.0, 0.0), &g).unwrap();
        let b = build_view(ang(50.0, 0.0), &g).unwrap();
        assert_abs_diff_eq!(angle_between_views(&a, &a), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(angle_between_views(&a, &b), 5.0, epsilon = 1e-9);
        let c = build_view(ang(0.0, 0.0), &g).unwrap();
        let d = build_view(ang(90.0, 0.0), &g).unwrap();
        assert_abs_diff_eq!(angle_between_views(&c, &d), 90.0, epsilon = 1e-9);
        assert_eq!(angle_between_views(&a, &c), angle_between_views(&c, &a));
    }

    #[test]
    fn camera_json_round_trip() {
        let v = build_view(ang(-35.0, -30.0), &GeometryConfig::default()).unwrap();
        let json = CameraJson::from(&v);
        let text = serde_json::to_string(&json).unwrap();
        let back: CameraJson = serde_json::from_str(&text).unwrap();
        let v2 = ProjectionView::try_from(&back).unwrap();
        let x = Vector3::new(12.0, -7.0, 30.0);
        assert!(project(&v, &x).unwrap().dist(project(&v2, &x).unwrap()) < 1e-9);
        assert!((v2.source_isocenter_mm - 765.0).abs() < 1e-9);
        assert!((v2.source_detector_mm - 1100.0).abs() < 1e-9);
    }

    #[test]
    fn backproject_inverts_project() {
        let v = build_view(ang(30.0, 20.0), &GeometryConfig::default()).unwrap();
        let x = Vector3::new(5.0, 12.0, -20.0);
        let p = project(&v, &x).unwrap();
        let back = v.backproject(p, v.depth(&x));
        assert!((back - x).norm() < 1e-9);
    }

    #[test]
    fn canvas_point_domain() {
        assert!(CanvasPoint::new(0.5, 1.0).is_ok());
        assert!(CanvasPoint::new(-0.1, 0.2).is_err());
    }

    proptest::proptest! {
        #[test]
        fn normal_is_unit(a in -180.0f64..=180.0, b in -90.0f64..=90.0) {
            let n = detector_normal(Angulation::new(a, b).unwrap());
            proptest::prop_assert!((n.norm() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn quadrant_reduction_agrees_with_radians(d in -400.0f64..=400.0) {
            let (s, c) = sin_cos_deg(d);
            let (rs, rc) = d.to_radians().sin_cos();
            proptest::prop_assert!((s - rs).abs() <= 1e-14 && (c - rc).abs() <= 1e-14);
        }

        #[test]
        fn isocentric_and_orthonormal(a in -180.0f64..=180.0, b in -80.0f64..=80.0) {
            let v = build_view(Angulation::new(a, b).unwrap(), &GeometryConfig::default()).unwrap();
            let r = v.extrinsics.rotation;
            proptest::prop_assert!((r.transpose() * r - Matrix3::identity()).abs().max() <= 1e-9);
            proptest::prop_assert!((r.determinant() - 1.0).abs() <= 1e-9);
            let p = project(&v, &Vector3::zeros()).unwrap();
            proptest::prop_assert!(p.dist(Point2::new(256.0, 256.0)) <= 1e-9);
        }
    }
}
