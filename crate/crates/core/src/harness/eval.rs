//! Point and curve evaluation over view pairs, binned by view angle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::{EvalPair, PairProvider};
use super::HarnessError;
use crate::corrmodel::{Models, PairSample};
use crate::curves::{bezier_sample, extract_waypoints, fit_bezier, nearest_point_on_curve, CubicBezier, Waypoint};
use crate::geometry::{GeometryConfig, Point2};

/// Upper edges of the cumulative angle bins, in degrees.
pub const ANGLE_BINS: [f64; 5] = [10.0, 30.0, 50.0, 70.0, 90.0];

/// A predicted curve is flagged as folded when its endpoint error exceeds
/// this multiple of its Chamfer distance.
pub const FOLD_RATIO: f64 = 3.0;

const CURVE_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Centerline,
    Bifurcation,
    Stenosis,
}

impl QueryKind {
    pub const ALL: [QueryKind; 3] = [QueryKind::Centerline, QueryKind::Bifurcation, QueryKind::Stenosis];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::Centerline => "centerline",
            QueryKind::Bifurcation => "bifurcation",
            QueryKind::Stenosis => "stenosis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Point-to-point.
    P2p,
    /// P2P projected onto the curve-to-curve prediction.
    C2cRefined,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::P2p, Method::C2cRefined];

    pub fn label(self) -> &'static str {
        match self {
            Method::P2p => "P",
            Method::C2cRefined => "C",
        }
    }
}

/// One query: a labeled reference point and its ground truth in the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointQuery {
    pub kind: QueryKind,
    pub point: Point2,
    pub truth: Point2,
    /// Reference branch the point lies on, and its index there.
    pub branch_id: usize,
    pub index: usize,
}

fn visible(p: Point2, size: (usize, usize)) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x < size.0 as f64 && p.y < size.1 as f64
}

fn nearest_index(points: &[Point2], p: Point2) -> usize {
    points
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.dist_sq(p).total_cmp(&b.1.dist_sq(p)))
        .map_or(0, |(i, _)| i)
}

/// All queries of one kind whose point is inside both images.
pub fn point_queries(sample: &PairSample, kind: QueryKind) -> Vec<PointQuery> {
    let (rl, tl) = (&sample.reference_labels, &sample.target_labels);
    let both = |a: Point2, b: Point2| visible(a, rl.image_size) && visible(b, tl.image_size);
    let on_branch = |branch_id: usize, point: Point2, truth: Point2| {
        let index = rl.branch(branch_id).map_or(0, |b| nearest_index(&b.points, point));
        PointQuery { kind, point, truth, branch_id, index }
    };
    let mut out = Vec::new();
    match kind {
        QueryKind::Centerline => {
            for rb in &rl.branches {
                let Some(tb) = tl.branch(rb.branch_id) else { continue };
                for (i, (&p, &t)) in rb.points.iter().zip(&tb.points).enumerate() {
                    if both(p, t) {
                        out.push(PointQuery { kind, point: p, truth: t, branch_id: rb.branch_id, index: i });
                    }
                }
            }
        }
        QueryKind::Bifurcation => {
            for (r, t) in rl.bifurcations.iter().zip(&tl.bifurcations) {
                if both(r.point, t.point) {
                    out.push(on_branch(r.parent_id, r.point, t.point));
                }
            }
        }
        QueryKind::Stenosis => {
            for (r, t) in rl.stenoses.iter().zip(&tl.stenoses) {
                for (p, q) in [(r.start, t.start), (r.end, t.end)] {
                    if both(p, q) {
                        out.push(on_branch(r.branch_id, p, q));
                    }
                }
            }
        }
    }
    out
}

/// Predictions for a batch of queries, in target pixels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointPredictions {
    pub p2p: Vec<Point2>,
    pub refined: Vec<Point2>,
    /// The refined prediction fell back to P2P for lack of waypoint context.
    pub fallback: Vec<bool>,
}

/// Anything that answers correspondence queries on a pair.
pub trait Predictor {
    fn predict_points(&self, sample: &PairSample, queries: &[PointQuery]) -> Result<PointPredictions, HarnessError>;

    /// One target curve per waypoint pair; implementations other than
    /// oracles look at the reference side only.
    fn predict_curves(&self, sample: &PairSample, waypoints: &[(Waypoint, Waypoint)])
        -> Result<Vec<CubicBezier>, HarnessError>;
}

impl Predictor for Models {
    fn predict_points(&self, sample: &PairSample, queries: &[PointQuery]) -> Result<PointPredictions, HarnessError> {
        let enc = self.encode(&sample.reference, &sample.target)?;
        let mut by_branch: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (qi, q) in queries.iter().enumerate() {
            by_branch.entry(q.branch_id).or_default().push(qi);
        }
        let mut out = PointPredictions {
            p2p: vec![Point2::default(); queries.len()],
            refined: vec![Point2::default(); queries.len()],
            fallback: vec![false; queries.len()],
        };
        for (branch, qis) in by_branch {
            let polyline = &sample
                .reference_labels
                .branch(branch)
                .ok_or_else(|| HarnessError::InvalidConfig(format!("query on unknown branch {branch}")))?
                .points;
            let indices: Vec<usize> = qis.iter().map(|&qi| queries[qi].index).collect();
            for (&qi, r) in qis.iter().zip(self.refined_many(&enc, polyline, &indices)?) {
                out.p2p[qi] = r.p2p;
                out.refined[qi] = r.point;
                out.fallback[qi] = r.fallback;
            }
        }
        Ok(out)
    }

    fn predict_curves(
        &self,
        sample: &PairSample,
        waypoints: &[(Waypoint, Waypoint)],
    ) -> Result<Vec<CubicBezier>, HarnessError> {
        let enc = self.encode(&sample.reference, &sample.target)?;
        let windows: Vec<Vec<Point2>> = waypoints.iter().map(|(r, _)| r.points.clone()).collect();
        Ok(self.c2c(&enc, &windows)?.into_iter().map(|c| c.curve).collect())
    }
}

/// Returns the ground truth: points exactly, curves as the least-squares
/// fit of the target segment.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn predict_points(&self, _: &PairSample, queries: &[PointQuery]) -> Result<PointPredictions, HarnessError> {
        let truth: Vec<Point2> = queries.iter().map(|q| q.truth).collect();
        Ok(PointPredictions { p2p: truth.clone(), refined: truth, fallback: vec![false; queries.len()] })
    }

    fn predict_curves(&self, _: &PairSample, waypoints: &[(Waypoint, Waypoint)]) -> Result<Vec<CubicBezier>, HarnessError> {
        waypoints
            .iter()
            .map(|(_, t)| fit_bezier(&t.points).map_err(|e| HarnessError::Corr(e.into())))
            .collect()
    }
}

/// Predicts one fixed point for everything; the image center is the
/// natural baseline.
#[derive(Debug, Clone, Copy)]
pub struct CenterPredictor {
    pub point: Point2,
}

impl CenterPredictor {
    pub fn for_size(size: usize) -> Self {
        Self { point: Point2::new(size as f64 / 2.0, size as f64 / 2.0) }
    }
}

impl Predictor for CenterPredictor {
    fn predict_points(&self, _: &PairSample, queries: &[PointQuery]) -> Result<PointPredictions, HarnessError> {
        let p = vec![self.point; queries.len()];
        Ok(PointPredictions { p2p: p.clone(), refined: p, fallback: vec![false; queries.len()] })
    }

    fn predict_curves(&self, _: &PairSample, waypoints: &[(Waypoint, Waypoint)]) -> Result<Vec<CubicBezier>, HarnessError> {
        Ok(vec![CubicBezier { control_points: [self.point; 4] }; waypoints.len()])
    }
}

/// Millimeters per pixel at evaluation size `size`.
pub fn mm_per_pixel(geometry: &GeometryConfig, size: usize) -> f64 {
    geometry.pixel_spacing_mm * geometry.image_size as f64 / size as f64
}

/// Error of one query, in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub pair: usize,
    pub kind: QueryKind,
    pub angle_deg: f64,
    pub p2p_mm: f64,
    pub refined_mm: f64,
    pub fallback: bool,
}

impl PointRecord {
    pub fn error(&self, method: Method) -> f64 {
        match method {
            Method::P2p => self.p2p_mm,
            Method::C2cRefined => self.refined_mm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub count: usize,
    /// `None` for an empty cell.
    pub mean: Option<f64>,
    pub median: Option<f64>,
}

impl Cell {
    /// Sorts before reducing so the result does not depend on input order.
    pub fn from_values(mut v: Vec<f64>) -> Self {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return Self { count: 0, mean: None, median: None };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Self { count: n, mean: Some(mean), median: Some(median) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub kind: QueryKind,
    pub method: Method,
    pub cells: [Cell; 5],
}

/// Mean and median errors in mm by query kind, method and cumulative angle
/// bin. Pairs beyond the last bin are counted in no cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    pub queries: usize,
    /// Refined queries answered by P2P; they appear in both columns.
    pub fallbacks: usize,
}

impl ErrorTable {
    pub fn from_records(records: &[PointRecord]) -> Self {
        let mut rows = Vec::with_capacity(6);
        for kind in QueryKind::ALL {
            for method in Method::ALL {
                let cells = ANGLE_BINS.map(|edge| {
                    Cell::from_values(
                        records
                            .iter()
                            .filter(|r| r.kind == kind && r.angle_deg <= edge)
                            .map(|r| r.error(method))
                            .collect(),
                    )
                });
                rows.push(ErrorRow { kind, method, cells });
            }
        }
        Self { rows, queries: records.len(), fallbacks: records.iter().filter(|r| r.fallback).count() }
    }

    pub fn row(&self, kind: QueryKind, method: Method) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.kind == kind && r.method == method)
    }
}

/// Raw records of a point evaluation and their table.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRun {
    pub records: Vec<PointRecord>,
    pub table: ErrorTable,
    pub mm_per_px: f64,
}

impl PointRun {
    /// Mean error in mm over records passing `keep`.
    pub fn mean_where(&self, kind: QueryKind, method: Method, keep: impl Fn(&PointRecord) -> bool) -> Option<f64> {
        Cell::from_values(self.records.iter().filter(|r| r.kind == kind && keep(r)).map(|r| r.error(method)).collect())
            .mean
    }

    pub fn mean(&self, kind: QueryKind, method: Method) -> Option<f64> {
        self.mean_where(kind, method, |_| true)
    }
}

/// Queries every visible point of each kind on every pair.
pub fn evaluate_points<P: Predictor + ?Sized>(
    predictor: &P,
    provider: &mut dyn PairProvider,
    pairs: &[EvalPair],
    kinds: &[QueryKind],
    mm_per_px: f64,
) -> Result<PointRun, HarnessError> {
    let mut records = Vec::new();
    for (pi, pair) in pairs.iter().enumerate() {
        let sample = provider.load_pair(pair)?;
        let queries: Vec<PointQuery> = kinds.iter().flat_map(|&k| point_queries(&sample, k)).collect();
        if queries.is_empty() {
            continue;
        }
        let pred = predictor.predict_points(&sample, &queries)?;
        for (i, q) in queries.iter().enumerate() {
            records.push(PointRecord {
                pair: pi,
                kind: q.kind,
                angle_deg: pair.angle_deg,
                p2p_mm: pred.p2p[i].dist(q.truth) * mm_per_px,
                refined_mm: pred.refined[i].dist(q.truth) * mm_per_px,
                fallback: pred.fallback[i],
            });
        }
    }
    let table = ErrorTable::from_records(&records);
    Ok(PointRun { records, table, mm_per_px })
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b - a;
    let len2 = d.norm_sq();
    let t = if len2 > 0.0 { ((p - a).dot(d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    p.dist(a + d * t)
}

fn polyline_distance(p: Point2, line: &[Point2]) -> f64 {
    match line {
        [] => f64::INFINITY,
        [a] => p.dist(*a),
        _ => line.windows(2).map(|w| point_segment_distance(p, w[0], w[1])).fold(f64::INFINITY, f64::min),
    }
}

/// Symmetric mean nearest distance between a curve and an ordered segment,
/// in the segment's units: the average of the mean distance from segment
/// points to the curve and from 64 curve samples to the segment polyline.
pub fn curve_chamfer(curve: &CubicBezier, segment: &[Point2]) -> f64 {
    if segment.is_empty() {
        return f64::NAN;
    }
    let to_curve = segment.iter().map(|&p| nearest_point_on_curve(curve, p).1.dist(p)).sum::<f64>() / segment.len() as f64;
    let samples = bezier_sample(curve, CURVE_SAMPLES).expect("sample count is at least 2");
    let to_segment = samples.iter().map(|&s| polyline_distance(s, segment)).sum::<f64>() / samples.len() as f64;
    0.5 * (to_curve + to_segment)
}

/// Mean distance between the curve's ends and the segment's ends.
pub fn endpoint_error(curve: &CubicBezier, segment: &[Point2]) -> f64 {
    match (segment.first(), segment.last()) {
        (Some(&a), Some(&b)) => 0.5 * (curve.at(0.0).dist(a) + curve.at(1.0).dist(b)),
        _ => f64::NAN,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub pair: usize,
    pub angle_deg: f64,
    pub chamfer_mm: f64,
    pub endpoint_mm: f64,
    pub folded: bool,
}

impl CurveRecord {
    pub fn new(pair: usize, angle_deg: f64, curve: &CubicBezier, segment: &[Point2], mm_per_px: f64) -> Self {
        let chamfer_mm = curve_chamfer(curve, segment) * mm_per_px;
        let endpoint_mm = endpoint_error(curve, segment) * mm_per_px;
        Self { pair, angle_deg, chamfer_mm, endpoint_mm, folded: endpoint_mm > FOLD_RATIO * chamfer_mm }
    }
}

/// Curve metrics of one waypoint size.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveStats {
    pub n: usize,
    pub records: Vec<CurveRecord>,
    pub chamfer_mm: Option<f64>,
    pub endpoint_mm: Option<f64>,
    pub folded: usize,
}

impl CurveStats {
    pub fn from_records(n: usize, records: Vec<CurveRecord>) -> Self {
        let chamfer_mm = Cell::from_values(records.iter().map(|r| r.chamfer_mm).collect()).mean;
        let endpoint_mm = Cell::from_values(records.iter().map(|r| r.endpoint_mm).collect()).mean;
        let folded = records.iter().filter(|r| r.folded).count();
        Self { n, records, chamfer_mm, endpoint_mm, folded }
    }
}

/// Predicts a curve for every waypoint of `n` points visible in both views.
pub fn evaluate_curves<P: Predictor + ?Sized>(
    predictor: &P,
    provider: &mut dyn PairProvider,
    pairs: &[EvalPair],
    n: usize,
    mm_per_px: f64,
) -> Result<CurveStats, HarnessError> {
    let mut records = Vec::new();
    for (pi, pair) in pairs.iter().enumerate() {
        let sample = provider.load_pair(pair)?;
        let (rs, ts) = (sample.reference_labels.image_size, sample.target_labels.image_size);
        let waypoints: Vec<(Waypoint, Waypoint)> = extract_waypoints(&sample.reference_labels, &sample.target_labels, n)
            .into_iter()
            .filter(|(r, t)| r.points.iter().all(|&p| visible(p, rs)) && t.points.iter().all(|&p| visible(p, ts)))
            .collect();
        if waypoints.is_empty() {
            continue;
        }
        let curves = predictor.predict_curves(&sample, &waypoints)?;
        for (c, (_, t)) in curves.iter().zip(&waypoints) {
            records.push(CurveRecord::new(pi, pair.angle_deg, c, &t.points, mm_per_px));
        }
    }
    Ok(CurveStats::from_records(n, records))
}

/// One waypoint-size column of the curve table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveColumn {
    pub n: usize,
    pub p2p_mm: Option<f64>,
    pub refined_mm: Option<f64>,
    pub endpoint_mm: Option<f64>,
    pub chamfer_mm: Option<f64>,
    pub waypoints: usize,
    pub folded: usize,
}

impl CurveColumn {
    /// P2P and refined means are taken over centerline queries.
    pub fn new(points: &PointRun, curves: &CurveStats) -> Self {
        Self {
            n: curves.n,
            p2p_mm: points.mean(QueryKind::Centerline, Method::P2p),
            refined_mm: points.mean(QueryKind::Centerline, Method::C2cRefined),
            endpoint_mm: curves.endpoint_mm,
            chamfer_mm: curves.chamfer_mm,
            waypoints: curves.records.len(),
            folded: curves.folded,
        }
    }
}

/// Centerline P2P and refined errors beside curve metrics, one column per
/// waypoint size.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurveTable {
    pub columns: Vec<CurveColumn>,
}

impl CurveTable {
    pub const ROWS: [&'static str; 4] = ["P2P", "C2C-Refined", "C2C-Endpoint", "C2C (Chamfer)"];

    pub fn value(&self, row: usize, column: usize) -> Option<f64> {
        let c = self.columns.get(column)?;
        match row {
            0 => c.p2p_mm,
            1 => c.refined_mm,
            2 => c.endpoint_mm,
            3 => c.chamfer_mm,
            _ => None,
        }
    }
}

/// Cells whose median exceeds the mean. Heavy-tailed errors should give
/// none; this is reported, not enforced.
pub fn soft_median_check(table: &ErrorTable) -> Vec<String> {
    let mut out = Vec::new();
    for row in &table.rows {
        for (cell, edge) in row.cells.iter().zip(ANGLE_BINS) {
            if let (Some(mean), Some(median)) = (cell.mean, cell.median) {
                if median > mean + 1e-12 {
                    out.push(format!(
                        "{} {} <={edge}: median {median:.2} above mean {mean:.2}",
                        row.kind.as_str(),
                        row.method.label()
                    ));
                }
            }
        }
    }
    out
}
