//! Cubic Bezier curves: evaluation, sampling, least-squares fitting, the
//! curve-to-segment Chamfer distance and nearest-point projection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::phantom::ViewLabels;

/// Parameter samples used to discretize the Chamfer integral.
pub const CHAMFER_SAMPLES: usize = 64;
const NEAREST_GRID: usize = 256;
const NEWTON_ITERS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("parameter {0} outside [0, 1]")]
    Domain(f64),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CubicBezier {
    pub control_points: [Point2; 4],
}

/// Cubic Bernstein weights at `u`.
pub fn bernstein(u: f64) -> [f64; 4] {
    let v = 1.0 - u;
    [v * v * v, 3.0 * v * v * u, 3.0 * v * u * u, u * u * u]
}

fn bernstein_d1(u: f64) -> [f64; 4] {
    let v = 1.0 - u;
    [-3.0 * v * v, 3.0 * v * v - 6.0 * u * v, 6.0 * u * v - 3.0 * u * u, 3.0 * u * u]
}

fn bernstein_d2(u: f64) -> [f64; 4] {
    [6.0 * (1.0 - u), -12.0 + 18.0 * u, 6.0 - 18.0 * u, 6.0 * u]
}

impl CubicBezier {
    pub fn new(control_points: [Point2; 4]) -> Result<Self, CurveError> {
        if control_points.iter().all(|p| p.is_finite()) {
            Ok(Self { control_points })
        } else {
            Err(CurveError::DegenerateInput("control points must be finite".into()))
        }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), 8, "a cubic needs 8 scalars");
        Self {
            control_points: [
                Point2::new(v[0], v[1]),
                Point2::new(v[2], v[3]),
                Point2::new(v[4], v[5]),
                Point2::new(v[6], v[7]),
            ],
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        let c = &self.control_points;
        [c[0].x, c[0].y, c[1].x, c[1].y, c[2].x, c[2].y, c[3].x, c[3].y]
    }

    fn combine(&self, w: [f64; 4]) -> Point2 {
        let c = &self.control_points;
        Point2::new(
            w[0] * c[0].x + w[1] * c[1].x + w[2] * c[2].x + w[3] * c[3].x,
            w[0] * c[0].y + w[1] * c[1].y + w[2] * c[2].y + w[3] * c[3].y,
        )
    }

    /// Evaluation without the domain check; `u` is clamped to [0, 1].
    /// De Casteljau keeps endpoints and coincident control points exact.
    pub fn at(&self, u: f64) -> Point2 {
        let u = u.clamp(0.0, 1.0);
        let c = &self.control_points;
        if u == 0.0 {
            return c[0];
        }
        if u == 1.0 {
            return c[3];
        }
        let lerp = |a: Point2, b: Point2| a + (b - a) * u;
        let (a, b, d) = (lerp(c[0], c[1]), lerp(c[1], c[2]), lerp(c[2], c[3]));
        let (e, f) = (lerp(a, b), lerp(b, d));
        lerp(e, f)
    }

    pub fn derivative(&self, u: f64) -> Point2 {
        self.combine(bernstein_d1(u))
    }

    pub fn second_derivative(&self, u: f64) -> Point2 {
        self.combine(bernstein_d2(u))
    }

    pub fn map(&self, f: impl Fn(Point2) -> Point2) -> Self {
        Self { control_points: self.control_points.map(f) }
    }
}

pub fn bezier_eval(b: &CubicBezier, u: f64) -> Result<Point2, CurveError> {
    if !(0.0..=1.0).contains(&u) {
        return Err(CurveError::Domain(u));
    }
    Ok(b.at(u))
}

/// `n` points at uniform parameters `i / (n - 1)`.
pub fn bezier_sample(b: &CubicBezier, n: usize) -> Result<Vec<Point2>, CurveError> {
    if n < 2 {
        return Err(CurveError::TooFewSamples(n));
    }
    Ok((0..n).map(|i| b.at(i as f64 / (n - 1) as f64)).collect())
}

/// Normalized cumulative chord length of an ordered point list.
pub fn chord_length_params(points: &[Point2]) -> Result<Vec<f64>, CurveError> {
    let mut acc = Vec::with_capacity(points.len());
    let mut total = 0.0;
    acc.push(0.0);
    for w in points.windows(2) {
        total += w[0].dist(w[1]);
        acc.push(total);
    }
    if !(total > 0.0) {
        return Err(CurveError::DegenerateInput("total chord length is zero".into()));
    }
    Ok(acc.into_iter().map(|a| a / total).collect())
}

/// Least-squares cubic through the first and last point with the interior
/// control points fitted at chord-length parameters.
pub fn fit_bezier(points: &[Point2]) -> Result<CubicBezier, CurveError> {
    if points.len() < 4 {
        return Err(CurveError::DegenerateInput(format!("need at least 4 points, got {}", points.len())));
    }
    let params = chord_length_params(points)?;
    fit_bezier_with_params(points, &params)
}

/// Endpoint-constrained least-squares fit at caller-supplied parameters.
pub fn fit_bezier_with_params(points: &[Point2], params: &[f64]) -> Result<CubicBezier, CurveError> {
    if points.len() < 4 || points.len() != params.len() {
        return Err(CurveError::DegenerateInput("need at least 4 points with one parameter each".into()));
    }
    let p0 = points[0];
    let p3 = points[points.len() - 1];
    let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
    let (mut r1, mut r2) = (Point2::new(0.0, 0.0), Point2::new(0.0, 0.0));
    for (&x, &u) in points.iter().zip(params) {
        let w = bernstein(u);
        let r = x - p0 * w[0] - p3 * w[3];
        a11 += w[1] * w[1];
        a12 += w[1] * w[2];
        a22 += w[2] * w[2];
        r1 = r1 + r * w[1];
        r2 = r2 + r * w[2];
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() <= 1e-12 * (a11 * a22).max(f64::MIN_POSITIVE) {
        return Err(CurveError::DegenerateInput("interior parameters do not determine the curve".into()));
    }
    let p1 = (r1 * a22 - r2 * a12) * (1.0 / det);
    let p2 = (r2 * a11 - r1 * a12) * (1.0 / det);
    CubicBezier::new([p0, p1, p2, p3])
}

fn parabolic_vertex(dm: f64, d0: f64, dp: f64, h: f64) -> Option<f64> {
    let den = dm - 2.0 * d0 + dp;
    (den > 0.0).then(|| (h * (dm - dp) / (2.0 * den)).clamp(-h, h))
}

/// Chamfer distance between a curve and an ordered segment with squared
/// Euclidean point distance: the sum over segment points of the closest
/// curve distance plus the mean over curve samples of the closest segment
/// distance. The curve side uses [`CHAMFER_SAMPLES`] uniform parameters and
/// one parabolic refinement around each discrete minimum.
pub fn chamfer_c2c(b: &CubicBezier, segment: &[Point2]) -> f64 {
    chamfer_c2c_with_grad(b, segment).0
}

/// [`chamfer_c2c`] together with its gradient with respect to the 8 control
/// point coordinates, differentiating through the refinement step.
pub fn chamfer_c2c_with_grad(b: &CubicBezier, segment: &[Point2]) -> (f64, [f64; 8]) {
    let m = CHAMFER_SAMPLES;
    let h = 1.0 / (m - 1) as f64;
    let us: Vec<f64> = (0..m).map(|j| j as f64 * h).collect();
    let curve: Vec<Point2> = us.iter().map(|&u| b.at(u)).collect();
    let mut grad = [0.0; 8];
    let add = |g: &mut [f64; 8], w: [f64; 4], v: Point2, s: f64| {
        for i in 0..4 {
            g[2 * i] += s * w[i] * v.x;
            g[2 * i + 1] += s * w[i] * v.y;
        }
    };
    let mut value = 0.0;

    for &x in segment {
        let (j, d0) = curve
            .iter()
            .enumerate()
            .map(|(j, c)| (j, c.dist_sq(x)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        let mut chosen = None;
        if j > 0 && j + 1 < m {
            let dm = curve[j - 1].dist_sq(x);
            let dp = curve[j + 1].dist_sq(x);
            let den = dm - 2.0 * d0 + dp;
            if let Some(off) = parabolic_vertex(dm, d0, dp, h) {
                let u = us[j] + off;
                let e = b.at(u) - x;
                let d = e.norm_sq();
                if d < d0 {
                    // d depends on the control points directly and through u.
                    let w = bernstein(u);
                    add(&mut grad, w, e, 2.0);
                    let clamped = off.abs() >= h;
                    if !clamped {
                        let ddu = 2.0 * e.dot(b.derivative(u));
                        let num = dm - dp;
                        let du_dm = h * (den - num) / (2.0 * den * den);
                        let du_dp = h * (-den - num) / (2.0 * den * den);
                        let du_d0 = h * num / (den * den);
                        for (k, coef) in [(j - 1, du_dm), (j, du_d0), (j + 1, du_dp)] {
                            add(&mut grad, bernstein(us[k]), curve[k] - x, 2.0 * ddu * coef);
                        }
                    }
                    chosen = Some(d);
                }
            }
        }
        match chosen {
            Some(d) => value += d,
            None => {
                value += d0;
                add(&mut grad, bernstein(us[j]), curve[j] - x, 2.0);
            }
        }
    }

    if !segment.is_empty() {
        let inv_m = 1.0 / m as f64;
        for (c, &u) in curve.iter().zip(&us) {
            let (k, d) = segment
                .iter()
                .enumerate()
                .map(|(k, s)| (k, c.dist_sq(*s)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
            value += d * inv_m;
            add(&mut grad, bernstein(u), *c - segment[k], 2.0 * inv_m);
        }
    }
    (value, grad)
}

/// Sum of squared distances between corresponding control points.
pub fn control_point_loss(pred: &CubicBezier, target: &CubicBezier) -> f64 {
    pred.control_points.iter().zip(&target.control_points).map(|(a, b)| a.dist_sq(*b)).sum()
}

/// Global minimizer of the distance from `p` to the curve over [0, 1].
pub fn nearest_point_on_curve(b: &CubicBezier, p: Point2) -> (f64, Point2) {
    let n = NEAREST_GRID;
    let grid: Vec<f64> = (0..n).map(|i| b.at(i as f64 / (n - 1) as f64).dist_sq(p)).collect();
    let mut best_u = 0.0;
    let mut best_d = f64::INFINITY;
    for i in 0..n {
        let left = i == 0 || grid[i] <= grid[i - 1];
        let right = i + 1 == n || grid[i] <= grid[i + 1];
        if !(left && right) {
            continue;
        }
        let (u, d) = newton_refine(b, p, i as f64 / (n - 1) as f64, grid[i]);
        if d < best_d {
            best_d = d;
            best_u = u;
        }
    }
    (best_u, b.at(best_u))
}

fn newton_refine(b: &CubicBezier, p: Point2, u0: f64, d0: f64) -> (f64, f64) {
    let (mut u, mut d) = (u0, d0);
    for _ in 0..NEWTON_ITERS {
        let e = b.at(u) - p;
        let d1 = b.derivative(u);
        let g = e.dot(d1);
        let hess = d1.dot(d1) + e.dot(b.second_derivative(u));
        if hess <= 0.0 || g == 0.0 {
            break;
        }
        let next = (u - g / hess).clamp(0.0, 1.0);
        let dn = b.at(next).dist_sq(p);
        if dn > d {
            break;
        }
        let step = (next - u).abs();
        u = next;
        d = dn;
        if step < 1e-15 {
            break;
        }
    }
    (u, d)
}

/// An ordered window of centerline points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub points: Vec<Point2>,
    pub branch_id: usize,
    /// Arc index range `[start, end)` on the branch.
    pub arc_range: (usize, usize),
}

impl Waypoint {
    pub fn new(points: Vec<Point2>, branch_id: usize, arc_range: (usize, usize)) -> Result<Self, CurveError> {
        if points.len() < 2 {
            return Err(CurveError::TooFewSamples(points.len()));
        }
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(CurveError::DegenerateInput("consecutive waypoint points coincide".into()));
        }
        Ok(Self { points, branch_id, arc_range })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Windows of `n` consecutive points with stride `n / 2`, paired across two
/// views of the same tree by branch and arc range.
pub fn extract_waypoints(reference: &ViewLabels, target: &ViewLabels, n: usize) -> Vec<(Waypoint, Waypoint)> {
    let stride = (n / 2).max(1);
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    for rb in &reference.branches {
        let Some(tb) = target.branch(rb.branch_id) else { continue };
        let len = rb.points.len().min(tb.points.len());
        let mut start = 0;
        while start + n <= len {
            let range = (start, start + n);
            let r = Waypoint::new(rb.points[start..start + n].to_vec(), rb.branch_id, range);
            let t = Waypoint::new(tb.points[start..start + n].to_vec(), rb.branch_id, range);
            if let (Ok(r), Ok(t)) = (r, t) {
                out.push((r, t));
            }
            start += stride;
        }
    }
    out
}

/// Resamples a polyline to `n` points equally spaced in arc length.
pub fn resample_polyline(points: &[Point2], n: usize) -> Result<Vec<Point2>, CurveError> {
    if n < 2 {
        return Err(CurveError::TooFewSamples(n));
    }
    let params = chord_length_params(points)?;
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for i in 0..n {
        let s = i as f64 / (n - 1) as f64;
        while k + 2 < params.len() && params[k + 1] < s {
            k += 1;
        }
        let span = params[k + 1] - params[k];
        let t = if span > 0.0 { ((s - params[k]) / span).clamp(0.0, 1.0) } else { 0.0 };
        out.push(points[k].lerp(points[k + 1], t));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn sample_curve() -> CubicBezier {
        CubicBezier::new([p(0.1, 0.2), p(0.3, 0.6), p(0.6, 0.5), p(0.9, 0.1)]).unwrap()
    }

    fn random_curve(rng: &mut ChaCha8Rng) -> CubicBezier {
        CubicBezier::new(std::array::from_fn(|_| p(rng.random(), rng.random()))).unwrap()
    }

    #[test]
    fn eval_endpoints_and_midpoint() {
        let b = sample_curve();
        let c = b.control_points;
        assert_eq!(bezier_eval(&b, 0.0).unwrap(), c[0]);
        assert_eq!(bezier_eval(&b, 1.0).unwrap(), c[3]);
        let mid = (c[0] + c[1] * 3.0 + c[2] * 3.0 + c[3]) * 0.125;
        assert!(bezier_eval(&b, 0.5).unwrap().dist(mid) < 1e-15);
        assert!(matches!(bezier_eval(&b, 1.5), Err(CurveError::Domain(_))));
    }

    #[test]
    fn collinear_equally_spaced_is_linear() {
        let a = p(0.2, -1.0);
        let d = p(3.0, 2.0);
        let b = CubicBezier::new([a, a.lerp(d, 1.0 / 3.0), a.lerp(d, 2.0 / 3.0), d]).unwrap();
        for i in 0..100 {
            let u = i as f64 / 99.0;
            assert!(bezier_eval(&b, u).unwrap().dist(a.lerp(d, u)) < 1e-12);
        }
    }

    #[test]
    fn sampling_contract() {
        let b = sample_curve();
        assert_eq!(bezier_sample(&b, 2).unwrap(), vec![b.control_points[0], b.control_points[3]]);
        let dot = CubicBezier::new([p(1.0, 1.0); 4]).unwrap();
        assert!(bezier_sample(&dot, 10).unwrap().iter().all(|q| *q == p(1.0, 1.0)));
        assert!(matches!(bezier_sample(&b, 1), Err(CurveError::TooFewSamples(1))));
    }

    #[test]
    fn refit_with_known_parameters() {
        let b = sample_curve();
        let pts = bezier_sample(&b, 10).unwrap();
        let u: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let f = fit_bezier_with_params(&pts, &u).unwrap();
        for (a, c) in f.control_points.iter().zip(&b.control_points) {
            assert!(a.dist(*c) < 1e-9);
        }
    }

    #[test]
    fn refit_constant_speed_cubic() {
        // Chord-length parameters coincide with curve parameters only when
        // the speed is constant, which for a cubic means a uniform line.
        let a = p(0.1, 0.7);
        let d = p(0.9, 0.2);
        let b = CubicBezier::new([a, a.lerp(d, 1.0 / 3.0), a.lerp(d, 2.0 / 3.0), d]).unwrap();
        let f = fit_bezier(&bezier_sample(&b, 10).unwrap()).unwrap();
        for (x, y) in f.control_points.iter().zip(&b.control_points) {
            assert!(x.dist(*y) < 1e-9);
        }
        let curved = sample_curve();
        let u = chord_length_params(&bezier_sample(&curved, 10).unwrap()).unwrap();
        let pts: Vec<Point2> = u.iter().map(|&t| curved.at(t)).collect();
        let g = fit_bezier_with_params(&pts, &u).unwrap();
        for (x, y) in g.control_points.iter().zip(&curved.control_points) {
            assert!(x.dist(*y) < 1e-9);
        }
    }

    #[test]
    fn collinear_fit_stays_on_line() {
        let pts: Vec<Point2> = (0..8).map(|i| p(1.0 + 2.0 * (i as f64).powf(1.3), -1.0 + (i as f64).powf(1.3))).collect();
        let f = fit_bezier(&pts).unwrap();
        for c in f.control_points {
            assert!((c.x - 1.0 - 2.0 * (c.y + 1.0)).abs() < 1e-9);
        }
        assert!(matches!(fit_bezier(&pts[..3]), Err(CurveError::DegenerateInput(_))));
        assert!(matches!(fit_bezier(&[p(0.0, 0.0); 5]), Err(CurveError::DegenerateInput(_))));
    }

    fn chamfer_oracle(b: &CubicBezier, seg: &[Point2], m: usize) -> f64 {
        let curve: Vec<Point2> = (0..m).map(|j| b.at(j as f64 / (m - 1) as f64)).collect();
        let near = |x: Point2, set: &[Point2]| set.iter().map(|c| c.dist_sq(x)).fold(f64::INFINITY, f64::min);
        seg.iter().map(|&x| near(x, &curve)).sum::<f64>() + curve.iter().map(|&c| near(c, seg)).sum::<f64>() / m as f64
    }

    #[test]
    fn chamfer_hand_case() {
        let b = CubicBezier::new([p(0.0, 0.0); 4]).unwrap();
        let seg = [p(0.0, 0.0), p(1.0, 0.0)];
        assert!((chamfer_c2c(&b, &seg) - 1.0).abs() < 1e-12);
        assert!((chamfer_oracle(&b, &seg, 10_000) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chamfer_self_and_oracle_agreement() {
        let b = sample_curve();
        // Samples on the discretization grid; off-grid points leave a small
        // refinement residual per point that adds up over the sum.
        let seg = bezier_sample(&b, CHAMFER_SAMPLES).unwrap();
        let v = chamfer_c2c(&b, &seg);
        assert!(v <= 1e-6, "{v}");
        let seg = vec![p(0.2, 0.1), p(0.4, 0.3), p(0.7, 0.2)];
        let approx = chamfer_c2c(&b, &seg);
        let dense = chamfer_oracle(&b, &seg, 10_000);
        assert!((approx - dense).abs() < 1e-3 * dense.max(1.0));
    }

    #[test]
    fn chamfer_translation_invariant() {
        let b = sample_curve();
        let seg = vec![p(0.2, 0.1), p(0.4, 0.3), p(0.7, 0.2), p(0.8, 0.0)];
        let t = p(3.5, -2.25);
        let moved = b.map(|q| q + t);
        let seg2: Vec<Point2> = seg.iter().map(|&q| q + t).collect();
        assert!((chamfer_c2c(&b, &seg) - chamfer_c2c(&moved, &seg2)).abs() < 1e-9);
    }

    #[test]
    fn chamfer_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let b = random_curve(&mut rng);
            let seg: Vec<Point2> = (0..10).map(|_| p(rng.random(), rng.random())).collect();
            let (_, g) = chamfer_c2c_with_grad(&b, &seg);
            let base = b.to_array();
            for k in 0..8 {
                let h = 1e-6;
                let mut a = base;
                a[k] += h;
                let fp = chamfer_c2c(&CubicBezier::from_slice(&a), &seg);
                a[k] -= 2.0 * h;
                let fm = chamfer_c2c(&CubicBezier::from_slice(&a), &seg);
                let num = (fp - fm) / (2.0 * h);
                // Argmin switches make the function piecewise smooth; skip kinks.
                let fwd = (fp - chamfer_c2c(&b, &seg)) / h;
                let bwd = (chamfer_c2c(&b, &seg) - fm) / h;
                if (fwd - bwd).abs() > 1e-3 * (fwd.abs() + bwd.abs() + 1e-3) {
                    continue;
                }
                assert!((num - g[k]).abs() <= 1e-4 * num.abs().max(g[k].abs()).max(1e-3), "k={k} num={num} ana={}", g[k]);
            }
        }
    }

    #[test]
    fn control_point_loss_cases() {
        let b = sample_curve();
        assert_eq!(control_point_loss(&b, &b), 0.0);
        let s = b.map(|q| q + p(0.1, 0.0));
        assert!((control_point_loss(&s, &b) - 0.04).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, y) = (random_curve(&mut rng), random_curve(&mut rng));
        let brute: f64 = (0..4)
            .map(|i| (x.control_points[i].x - y.control_points[i].x).powi(2) + (x.control_points[i].y - y.control_points[i].y).powi(2))
            .sum();
        assert!((control_point_loss(&x, &y) - brute).abs() < 1e-15);
    }

    #[test]
    fn nearest_point_cases() {
        let b = sample_curve();
        let (u, q) = nearest_point_on_curve(&b, b.at(0.3));
        assert!((u - 0.3).abs() < 1e-6 && q.dist(b.at(0.3)) < 1e-6);
        let line = CubicBezier::new([p(0.0, 0.0), p(1.0 / 3.0, 0.0), p(2.0 / 3.0, 0.0), p(1.0, 0.0)]).unwrap();
        let (_, q) = nearest_point_on_curve(&line, p(0.5, 1.0));
        assert!(q.dist(p(0.5, 0.0)) < 1e-9);
    }

    #[test]
    fn nearest_point_matches_dense_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let b = random_curve(&mut rng);
            let x = p(rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5));
            let (_, q) = nearest_point_on_curve(&b, x);
            let grid = (0..100_000).map(|i| b.at(i as f64 / 99_999.0).dist(x)).fold(f64::INFINITY, f64::min);
            assert!((q.dist(x) - grid).abs() < 1e-4);
            assert!(q.dist(x) <= grid + 1e-12);
        }
    }

    #[test]
    fn waypoint_windows() {
        use crate::phantom::{BranchLabel, ViewLabels};
        let pts: Vec<Point2> = (0..50).map(|i| p(i as f64, 0.0)).collect();
        let labels = ViewLabels {
            image_size: (64, 64),
            branches: vec![BranchLabel { branch_id: 3, points: pts }],
            bifurcations: vec![],
            stenoses: vec![],
        };
        let w = extract_waypoints(&labels, &labels, 10);
        assert_eq!(w.len(), 9);
        assert!(w.iter().all(|(a, b)| a.arc_range == b.arc_range && a.branch_id == b.branch_id));
        assert_eq!(extract_waypoints(&labels, &labels, 20).len(), 4);
    }

    #[test]
    fn resample_even_spacing() {
        let poly = [p(0.0, 0.0), p(1.0, 0.0), p(1.0, 3.0)];
        let r = resample_polyline(&poly, 5).unwrap();
        assert_eq!(r.len(), 5);
        assert!(r[0].dist(poly[0]) < 1e-12 && r[4].dist(poly[2]) < 1e-12);
        for w in r.windows(2) {
            assert!(w[0].dist(w[1]) <= 1.0 + 1e-12);
        }
        assert!(r[2].dist(p(1.0, 1.0)) < 1e-12);
    }

    proptest! {
        #[test]
        fn fit_commutes_with_rigid_motion(theta in -3.1f64..3.1, tx in -5.0f64..5.0, ty in -5.0f64..5.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point2> = (0..12).map(|i| p(i as f64 * 0.1 + rng.random::<f64>() * 0.05, rng.random())).collect();
            let (s, c) = theta.sin_cos();
            let rigid = |q: Point2| p(c * q.x - s * q.y + tx, s * q.x + c * q.y + ty);
            let a = fit_bezier(&pts).unwrap().map(rigid);
            let moved: Vec<Point2> = pts.iter().map(|&q| rigid(q)).collect();
            let b = fit_bezier(&moved).unwrap();
            for (x, y) in a.control_points.iter().zip(&b.control_points) {
                prop_assert!(x.dist(*y) < 1e-9);
            }
        }

        #[test]
        fn nearest_never_worse_than_grid(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = random_curve(&mut rng);
            let x = p(rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0));
            let (_, q) = nearest_point_on_curve(&b, x);
            for i in 0..1000 {
                prop_assert!(q.dist(x) <= b.at(i as f64 / 999.0).dist(x) + 1e-12);
            }
        }
    }
}
