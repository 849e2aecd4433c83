//! Vesselness cost maps and shortest-path centerline tracing, in one view
//! or fused across two views through a pixel correspondence.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::geometry::{build_view, project, Angulation, GeometryConfig, Point2, Point3, ProjectionView};
use crate::phantom::{render_tubes, Image2D, PhantomError, Tube};

pub const DEFAULT_SCALES: [f64; 4] = [1.0, 2.0, 3.0, 4.0];
pub const FRANGI_BETA: f64 = 0.5;
pub const COST_FLOOR: f64 = 1e-3;
pub const FUSION_WEIGHT: f64 = 1.0;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("invalid scales: {0}")]
    InvalidScales(String),
    #[error("seed ({x}, {y}) outside the {width}x{height} image")]
    SeedOutOfBounds { x: usize, y: usize, width: usize, height: usize },
    #[error("invalid cost map: {0}")]
    InvalidCost(String),
    #[error("cost maps differ in size")]
    SizeMismatch,
    #[error(transparent)]
    Phantom(#[from] PhantomError),
}

fn gaussian_kernels(sigma: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let r = (3.0 * sigma).ceil() as i64;
    let s2 = sigma * sigma;
    let xs: Vec<f64> = (-r..=r).map(|i| i as f64).collect();
    let g: Vec<f64> = xs.iter().map(|x| (-x * x / (2.0 * s2)).exp()).collect();
    let sum: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / sum).collect();
    let d1: Vec<f64> = xs.iter().zip(&g).map(|(x, v)| -x / s2 * v).collect();
    let d2: Vec<f64> = xs.iter().zip(&g).map(|(x, v)| (x * x - s2) / (s2 * s2) * v).collect();
    // a constant image must have a zero second derivative
    let m = d2.iter().sum::<f64>() / d2.len() as f64;
    let d2 = d2.iter().map(|v| v - m).collect();
    (g, d1, d2)
}

/// Separable filtering with replicated borders: `kx` along rows, `ky`
/// along columns.
fn filter(src: &[f64], w: usize, h: usize, kx: &[f64], ky: &[f64]) -> Vec<f64> {
    let (rx, ry) = ((kx.len() / 2) as i64, (ky.len() / 2) as i64);
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (k, kv) in kx.iter().enumerate() {
                s += kv * src[y * w + clamp(x as i64 + k as i64 - rx, w)];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (k, kv) in ky.iter().enumerate() {
                s += kv * tmp[clamp(y as i64 + k as i64 - ry, h) * w + x];
            }
            out[y * w + x] = s;
        }
    }
    out
}

/// Eigenvalues of a symmetric 2x2 matrix ordered by magnitude.
fn eig_sym(a: f64, b: f64, d: f64) -> (f64, f64) {
    let t = ((a - d) * (a - d) + 4.0 * b * b).sqrt();
    let (m1, m2) = (0.5 * (a + d + t), 0.5 * (a + d - t));
    if m1.abs() <= m2.abs() {
        (m1, m2)
    } else {
        (m2, m1)
    }
}

/// Multiscale Frangi vesselness for dark tubes on a bright background,
/// normalized so the strongest response is 1.
pub fn frangi_vesselness(img: &Image2D, scales: &[f64]) -> Result<Image2D, TraceError> {
    if scales.is_empty() {
        return Err(TraceError::InvalidScales("no scales".into()));
    }
    if let Some(s) = scales.iter().find(|s| !(**s >= 0.5) || !s.is_finite()) {
        return Err(TraceError::InvalidScales(format!("scale {s} below 0.5 px")));
    }
    let (w, h) = (img.width, img.height);
    // shifting by the minimum keeps a constant image exactly zero
    let lo = img.values.iter().copied().fold(f64::INFINITY, f64::min);
    let src: Vec<f64> = img.values.iter().map(|v| v - lo).collect();
    let mut best = vec![0.0f64; w * h];
    for &sigma in scales {
        let (g, d1, d2) = gaussian_kernels(sigma);
        let norm = sigma * sigma;
        let ixx = filter(&src, w, h, &d2, &g);
        let iyy = filter(&src, w, h, &g, &d2);
        let ixy = filter(&src, w, h, &d1, &d1);
        let eig: Vec<(f64, f64)> = (0..w * h).map(|i| eig_sym(norm * ixx[i], norm * ixy[i], norm * iyy[i])).collect();
        let smax = eig.iter().map(|(l1, l2)| (l1 * l1 + l2 * l2).sqrt()).fold(0.0, f64::max);
        if smax <= 0.0 {
            continue;
        }
        let c = 0.5 * smax;
        for (i, &(l1, l2)) in eig.iter().enumerate() {
            if l2 <= 0.0 {
                continue;
            }
            let rb = l1 / l2;
            let s2 = l1 * l1 + l2 * l2;
            let v = (-rb * rb / (2.0 * FRANGI_BETA * FRANGI_BETA)).exp() * (1.0 - (-s2 / (2.0 * c * c)).exp());
            best[i] = best[i].max(v);
        }
    }
    let mx = best.iter().copied().fold(0.0, f64::max);
    if mx > 0.0 {
        best.iter_mut().for_each(|v| *v /= mx);
    }
    Ok(Image2D { width: w, height: h, values: best })
}

/// Per-pixel cost of entering a pixel; every cost is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    pub width: usize,
    pub height: usize,
    pub costs: Vec<f64>,
}

impl CostMap {
    pub fn new(width: usize, height: usize, costs: Vec<f64>) -> Result<Self, TraceError> {
        if costs.len() != width * height || width == 0 || height == 0 {
            return Err(TraceError::InvalidCost(format!("{} costs for {width}x{height}", costs.len())));
        }
        if let Some(c) = costs.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
            return Err(TraceError::InvalidCost(format!("cost {c} is not positive and finite")));
        }
        Ok(Self { width, height, costs })
    }

    pub fn uniform(width: usize, height: usize, cost: f64) -> Result<Self, TraceError> {
        Self::new(width, height, vec![cost; width * height])
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.costs[y * self.width + x]
    }

    pub fn max_cost(&self) -> f64 {
        self.costs.iter().copied().fold(0.0, f64::max)
    }
}

/// `1 - vesselness + floor`.
pub fn build_cost(vesselness: &Image2D, floor: f64) -> Result<CostMap, TraceError> {
    let costs = vesselness.values.iter().map(|v| 1.0 - v.clamp(0.0, 1.0) + floor).collect();
    CostMap::new(vesselness.width, vesselness.height, costs)
}

/// Vesselness at the default scales followed by [`build_cost`].
pub fn cost_from_image(img: &Image2D) -> Result<CostMap, TraceError> {
    build_cost(&frangi_vesselness(img, &DEFAULT_SCALES)?, COST_FLOOR)
}

/// Cost paid on entering a pixel, split by view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCost {
    pub view1: f64,
    pub view2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceResult {
    /// 8-connected `(x, y)` pixels from the first seed to the second.
    pub path: Vec<(usize, usize)>,
    pub total_cost: f64,
    /// One entry per step, matching `path[1..]`.
    pub steps: Vec<StepCost>,
}

/// 8-neighborhood in a fixed order, with step lengths.
const NEIGHBORS: [(i64, i64, f64); 8] = [
    (0, -1, 1.0),
    (-1, 0, 1.0),
    (1, 0, 1.0),
    (0, 1, 1.0),
    (-1, -1, std::f64::consts::SQRT_2),
    (1, -1, std::f64::consts::SQRT_2),
    (-1, 1, std::f64::consts::SQRT_2),
    (1, 1, std::f64::consts::SQRT_2),
];

/// Heap entry ordered by cost, then by row-major pixel index.
#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn check_seed(p: (usize, usize), w: usize, h: usize) -> Result<(), TraceError> {
    if p.0 >= w || p.1 >= h {
        return Err(TraceError::SeedOutOfBounds { x: p.0, y: p.1, width: w, height: h });
    }
    Ok(())
}

/// Dijkstra over the 8-connected grid. Entering pixel `q` by a step of
/// length `l` costs `l * (c1 + c2)` where `(c1, c2) = node_cost(q)`.
fn shortest_path(
    w: usize,
    h: usize,
    a: (usize, usize),
    b: (usize, usize),
    mut node_cost: impl FnMut(usize) -> (f64, f64),
) -> Result<TraceResult, TraceError> {
    check_seed(a, w, h)?;
    check_seed(b, w, h)?;
    let (src, dst) = (a.1 * w + a.0, b.1 * w + b.0);
    let mut dist = vec![f64::INFINITY; w * h];
    let mut prev = vec![usize::MAX; w * h];
    let mut done = vec![false; w * h];
    let mut cache: Vec<Option<(f64, f64)>> = vec![None; w * h];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Entry(0.0, src));
    while let Some(Entry(d, u)) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == dst {
            break;
        }
        let (ux, uy) = ((u % w) as i64, (u / w) as i64);
        for &(dx, dy, len) in &NEIGHBORS {
            let (vx, vy) = (ux + dx, uy + dy);
            if vx < 0 || vy < 0 || vx >= w as i64 || vy >= h as i64 {
                continue;
            }
            let v = vy as usize * w + vx as usize;
            if done[v] {
                continue;
            }
            let (c1, c2) = *cache[v].get_or_insert_with(|| node_cost(v));
            let nd = d + len * (c1 + c2);
            if nd < dist[v] {
                dist[v] = nd;
                prev[v] = u;
                heap.push(Entry(nd, v));
            }
        }
    }
    let mut rev = vec![dst];
    while *rev.last().expect("non-empty") != src {
        rev.push(prev[*rev.last().expect("non-empty")]);
    }
    rev.reverse();
    let steps = rev
        .windows(2)
        .map(|s| {
            let (c1, c2) = cache[s[1]].expect("cost of every path pixel was computed");
            let diag = s[0] % w != s[1] % w && s[0] / w != s[1] / w;
            let len = if diag { std::f64::consts::SQRT_2 } else { 1.0 };
            StepCost { view1: len * c1, view2: len * c2 }
        })
        .collect();
    Ok(TraceResult { path: rev.iter().map(|&i| (i % w, i / w)).collect(), total_cost: dist[dst], steps })
}

/// Minimal-cost 8-connected path between two seeds in one view.
pub fn dijkstra_trace(cost: &CostMap, a: (usize, usize), b: (usize, usize)) -> Result<TraceResult, TraceError> {
    shortest_path(cost.width, cost.height, a, b, |i| (cost.costs[i], 0.0))
}

/// Nearest-pixel lookup of a sub-pixel position, `None` outside the map.
fn pixel_at(cost: &CostMap, p: Point2) -> Option<f64> {
    if !p.is_finite() || p.x < 0.0 || p.y < 0.0 {
        return None;
    }
    let (x, y) = (p.x.floor() as usize, p.y.floor() as usize);
    (x < cost.width && y < cost.height).then(|| cost.get(x, y))
}

/// Two-view trace: entering view-1 pixel `p` costs
/// `cost1(p) + weight * cost2(corr(p))`. Where the correspondence fails or
/// leaves view 2, the view-2 term takes the largest cost of `cost2`.
/// `corr` is called at most once per pixel.
pub fn fused_trace(
    cost1: &CostMap,
    cost2: &CostMap,
    mut corr: impl FnMut((usize, usize)) -> Option<Point2>,
    weight: f64,
    a: (usize, usize),
    b: (usize, usize),
) -> Result<TraceResult, TraceError> {
    let fallback = cost2.max_cost();
    let w = cost1.width;
    shortest_path(cost1.width, cost1.height, a, b, |i| {
        let c2 = corr((i % w, i / w)).and_then(|q| pixel_at(cost2, q)).unwrap_or(fallback);
        (cost1.costs[i], weight * c2)
    })
}

/// Symmetric Hausdorff distance between a pixel path (pixel centers) and
/// a polyline densely resampled at `step` pixels.
pub fn hausdorff_to_polyline(path: &[(usize, usize)], polyline: &[Point2], step: f64) -> f64 {
    let centers: Vec<Point2> = path.iter().map(|&(x, y)| Point2::new(x as f64 + 0.5, y as f64 + 0.5)).collect();
    let mut dense = Vec::new();
    for s in polyline.windows(2) {
        let n = ((s[0].dist(s[1]) / step).ceil() as usize).max(1);
        for k in 0..n {
            dense.push(s[0].lerp(s[1], k as f64 / n as f64));
        }
    }
    dense.extend(polyline.last().copied());
    let directed = |from: &[Point2], to: &[Point2]| {
        from.iter()
            .map(|p| to.iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(&centers, &dense).max(directed(&dense, &centers))
}

/// Two views of a scene where a second vessel crosses the traced branch in
/// view 1 but lies apart from it in view 2.
#[derive(Debug, Clone)]
pub struct OverlapPhantom {
    pub view1: Image2D,
    pub view2: Image2D,
    pub camera1: ProjectionView,
    pub camera2: ProjectionView,
    /// Traced branch in view-1 pixels, from `seed_a` to `seed_b`.
    pub branch: Vec<Point2>,
    pub seed_a: (usize, usize),
    pub seed_b: (usize, usize),
}

fn polyline3(points: &[Point3], spacing: f64) -> Vec<Point3> {
    let mut out = Vec::new();
    for s in points.windows(2) {
        let n = (((s[1] - s[0]).norm() / spacing).ceil() as usize).max(1);
        for k in 0..n {
            out.push(s[0] + (s[1] - s[0]) * (k as f64 / n as f64));
        }
    }
    out.extend(points.last().copied());
    out
}

impl OverlapPhantom {
    /// The traced branch is an arch in the world plane `y = 0`: two legs
    /// along z joined at the top. The crossing vessel runs along x,
    /// 60 mm closer to the frontal source, through both legs in the frontal
    /// view. The second view is 40 degrees cranial, where depth parallax
    /// moves the crossing vessel below the arch. Tracing between the leg
    /// feet in view 1 alone takes the crossing vessel as a shortcut.
    pub fn new(size: usize) -> Result<Self, TraceError> {
        let geo = GeometryConfig::default().with_image_size(size);
        let cam = |a, b| {
            Angulation::new(a, b).and_then(|an| build_view(an, &geo)).map_err(|e| TraceError::Phantom(e.into()))
        };
        let (camera1, camera2) = (cam(0.0, 0.0)?, cam(0.0, 40.0)?);
        let arch = polyline3(
            &[
                Point3::new(-35.0, 0.0, -40.0),
                Point3::new(-35.0, 0.0, 30.0),
                Point3::new(35.0, 0.0, 30.0),
                Point3::new(35.0, 0.0, -40.0),
            ],
            0.5,
        );
        let cross = polyline3(&[Point3::new(-60.0, 60.0, 0.0), Point3::new(60.0, 60.0, 0.0)], 0.5);
        let tube = |pts: Vec<Point3>| Tube { radii: vec![2.5; pts.len()], points: pts };
        let tubes = [tube(arch.clone()), tube(cross)];
        let view1 = render_tubes(&tubes, &camera1, 1.0)?;
        let view2 = render_tubes(&tubes, &camera2, 1.0)?;
        let branch = arch
            .iter()
            .map(|p| project(&camera1, p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| TraceError::Phantom(e.into()))?;
        let px = |p: Point2| (p.x.floor() as usize, p.y.floor() as usize);
        let (seed_a, seed_b) = (px(branch[0]), px(*branch.last().expect("non-empty")));
        Ok(Self { view1, view2, camera1, camera2, branch, seed_a, seed_b })
    }

    /// Ground-truth correspondence for the traced branch: the view-1 ray
    /// through a pixel center meets the branch plane `y = 0`, and that
    /// point is projected into view 2.
    pub fn correspondence(&self, p: (usize, usize)) -> Option<Point2> {
        let c = Point2::new(p.0 as f64 + 0.5, p.1 as f64 + 0.5);
        let near = self.camera1.backproject(c, 100.0);
        let far = self.camera1.backproject(c, 1000.0);
        let dy = far.y - near.y;
        if dy.abs() < 1e-12 {
            return None;
        }
        let t = -near.y / dy;
        project(&self.camera2, &(near + (far - near) * t)).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight_tube(w: usize, h: usize, center: f64, width: f64) -> Image2D {
        let sigma = width / 2.0 * 0.6266;
        let values = (0..w * h)
            .map(|i| {
                let y = (i / w) as f64 + 0.5;
                1.0 - 0.8 * (-(y - center).powi(2) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        Image2D::new(w, h, values).unwrap()
    }

    #[test]
    fn uniform_image_has_no_vesselness() {
        let v = frangi_vesselness(&Image2D::filled(20, 15, 0.37), &DEFAULT_SCALES).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dark_tube_peaks_on_its_centerline() {
        let img = straight_tube(64, 48, 20.5, 4.0);
        let v = frangi_vesselness(&img, &DEFAULT_SCALES).unwrap();
        let hits = (0..64)
            .filter(|&x| {
                let best = (0..48).max_by(|&a, &b| v.values[a * 64 + x].total_cmp(&v.values[b * 64 + x])).unwrap();
                ((best as f64 + 0.5) - 20.5).abs() <= 1.0
            })
            .count();
        assert!(hits as f64 >= 0.95 * 64.0, "{hits}/64 columns");
        assert!(v.values.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn bright_ridge_is_suppressed() {
        let dark = straight_tube(40, 40, 20.0, 4.0);
        let bright = Image2D::new(40, 40, dark.values.iter().map(|v| 1.8 - v).collect()).unwrap();
        let v = frangi_vesselness(&bright, &DEFAULT_SCALES).unwrap();
        let on_ridge = (0..40).map(|x| v.values[19 * 40 + x]).fold(0.0, f64::max);
        assert_eq!(on_ridge, 0.0);
    }

    #[test]
    fn bad_scales_are_rejected() {
        let img = Image2D::filled(8, 8, 1.0);
        assert!(frangi_vesselness(&img, &[]).is_err());
        assert!(frangi_vesselness(&img, &[0.4]).is_err());
    }

    #[test]
    fn cost_transform_endpoints_and_monotonicity() {
        let v = Image2D::new(3, 1, vec![1.0, 0.0, 0.4]).unwrap();
        let c = build_cost(&v, COST_FLOOR).unwrap();
        assert_eq!(c.costs[0], COST_FLOOR);
        assert_eq!(c.costs[1], 1.0 + COST_FLOOR);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let c = build_cost(&Image2D::new(2, 1, vec![a, b]).unwrap(), COST_FLOOR).unwrap();
            assert_eq!(a >= b, c.costs[0] <= c.costs[1]);
        }
    }

    #[test]
    fn uniform_cost_gives_straight_path() {
        let c = CostMap::uniform(30, 20, 0.5).unwrap();
        let r = dijkstra_trace(&c, (5, 7), (15, 7)).unwrap();
        assert_eq!(r.path, (5..=15).map(|x| (x, 7)).collect::<Vec<_>>());
        assert!((r.total_cost - 5.0).abs() < 1e-12);
    }

    #[test]
    fn equal_seeds_give_single_pixel() {
        let c = CostMap::uniform(5, 5, 1.0).unwrap();
        let r = dijkstra_trace(&c, (2, 3), (2, 3)).unwrap();
        assert_eq!(r.path, vec![(2, 3)]);
        assert_eq!(r.total_cost, 0.0);
        assert!(r.steps.is_empty());
    }

    #[test]
    fn seeds_outside_are_rejected() {
        let c = CostMap::uniform(5, 5, 1.0).unwrap();
        assert!(matches!(dijkstra_trace(&c, (5, 0), (1, 1)), Err(TraceError::SeedOutOfBounds { .. })));
        assert!(CostMap::new(2, 2, vec![1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn steps_add_up_to_the_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = CostMap::new(12, 9, (0..108).map(|_| rng.random_range(0.01..1.0)).collect()).unwrap();
        let r = dijkstra_trace(&c, (0, 0), (11, 8)).unwrap();
        let sum: f64 = r.steps.iter().map(|s| s.view1 + s.view2).sum();
        assert!((sum - r.total_cost).abs() < 1e-12);
        assert_eq!(r.steps.len() + 1, r.path.len());
    }

    #[test]
    fn zero_weight_fusion_is_the_single_view_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c1 = CostMap::new(16, 16, (0..256).map(|_| rng.random_range(0.01..1.0)).collect()).unwrap();
        let c2 = CostMap::new(16, 16, (0..256).map(|_| rng.random_range(0.01..1.0)).collect()).unwrap();
        let single = dijkstra_trace(&c1, (1, 2), (14, 13)).unwrap();
        let fused = fused_trace(&c1, &c2, |(x, y)| Some(Point2::new(y as f64, x as f64)), 0.0, (1, 2), (14, 13)).unwrap();
        assert_eq!(single.path, fused.path);
        assert_eq!(single.total_cost.to_bits(), fused.total_cost.to_bits());
    }

    #[test]
    fn uniform_second_view_keeps_a_length_minimal_trace() {
        // with a cheap straight corridor the single-view optimum is also the
        // shortest route, so a uniform second view cannot change it
        let mut costs = vec![1.0; 20 * 10];
        for x in 0..20 {
            costs[4 * 20 + x] = 0.01;
        }
        let c1 = CostMap::new(20, 10, costs).unwrap();
        let c2 = CostMap::uniform(20, 10, 0.7).unwrap();
        let single = dijkstra_trace(&c1, (0, 4), (19, 4)).unwrap();
        let fused = fused_trace(&c1, &c2, |(x, y)| Some(Point2::new(x as f64, y as f64)), 1.0, (0, 4), (19, 4)).unwrap();
        assert_eq!(single.path, fused.path);
    }

    #[test]
    fn failed_correspondence_costs_the_maximum() {
        let c1 = CostMap::uniform(6, 1, 1.0).unwrap();
        let c2 = CostMap::new(6, 1, vec![0.2, 0.3, 0.9, 0.4, 0.5, 0.6]).unwrap();
        let r = fused_trace(&c1, &c2, |_| None, 1.0, (0, 0), (5, 0)).unwrap();
        assert!(r.steps.iter().all(|s| s.view2 == 0.9));
        let mut calls = 0;
        fused_trace(&c1, &c2, |p| { calls += 1; Some(Point2::new(p.0 as f64 + 0.5, 0.5)) }, 1.0, (0, 0), (5, 0)).unwrap();
        assert!(calls <= 6);
    }
}
