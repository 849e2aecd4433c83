//! Training objectives. All terms are means over the queries of a batch.

use super::config::{LossConfig, ModelConfig, Task};
use super::network::CorrModel;
use super::CorrError;
use crate::curves::{bernstein, fit_bezier, CubicBezier};
use crate::geometry::Point2;
use crate::tensornet::{Graph, Tensor, Var};

/// What the objectives need from a correspondence network.
pub trait CorrNet {
    fn config(&self) -> &ModelConfig;

    /// Encoder memory of the pair in both orders: (reference | target) and,
    /// when requested, (target | reference).
    fn encode_both(
        &self,
        g: &mut Graph,
        reference: &Tensor,
        target: &Tensor,
        swapped: bool,
    ) -> Result<(Var, Option<Var>), CorrError>;

    /// Head outputs `[Q, 2]` or `[Q, 8]` for canvas queries.
    fn query(&self, g: &mut Graph, memory: Var, queries: Var) -> Result<Var, CorrError>;
}

impl CorrNet for CorrModel {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn encode_both(
        &self,
        g: &mut Graph,
        reference: &Tensor,
        target: &Tensor,
        swapped: bool,
    ) -> Result<(Var, Option<Var>), CorrError> {
        let a = g.constant(reference.clone());
        let b = g.constant(target.clone());
        let fa = self.backbone(g, a)?;
        let fb = self.backbone(g, b)?;
        let m = self.encode_features(g, fa, fb)?;
        let ms = if swapped { Some(self.encode_features(g, fb, fa)?) } else { None };
        Ok((m, ms))
    }

    fn query(&self, g: &mut Graph, memory: Var, queries: Var) -> Result<Var, CorrError> {
        self.forward(g, memory, queries)
    }
}

/// Point queries on the reference half with their target-half truth, in
/// canvas coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointBatch {
    pub reference: Tensor,
    pub target: Tensor,
    pub queries: Vec<Point2>,
    pub truth: Vec<Point2>,
}

/// Waypoints on the reference half with their target segments and the
/// fitted curves of both, in canvas coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveBatch {
    pub reference: Tensor,
    pub target: Tensor,
    pub queries: Vec<Vec<Point2>>,
    pub truth: Vec<Vec<Point2>>,
    pub query_curves: Vec<CubicBezier>,
    pub truth_curves: Vec<CubicBezier>,
}

impl CurveBatch {
    /// Fits both curves per waypoint, dropping waypoints that cannot be fitted.
    pub fn new(reference: Tensor, target: Tensor, pairs: Vec<(Vec<Point2>, Vec<Point2>)>) -> Self {
        let mut b = Self {
            reference,
            target,
            queries: vec![],
            truth: vec![],
            query_curves: vec![],
            truth_curves: vec![],
        };
        for (q, t) in pairs {
            if let (Ok(bq), Ok(bt)) = (fit_bezier(&q), fit_bezier(&t)) {
                b.queries.push(q);
                b.truth.push(t);
                b.query_curves.push(bq);
                b.truth_curves.push(bt);
            }
        }
        b
    }
}

/// Scalar values of the loss terms after a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    /// Forward correspondence term (L_corr, or L_c2c + λ_s L_sup).
    pub forward: f64,
    pub cycle: f64,
}

fn points_tensor(points: &[Point2], shape: &[usize]) -> Result<Tensor, CorrError> {
    Ok(Tensor::new(shape.to_vec(), points.iter().flat_map(|p| [p.x, p.y]).collect())?)
}

fn shifted(points: &[Point2], dx: f64) -> Vec<Point2> {
    points.iter().map(|p| Point2::new(p.x + dx, p.y)).collect()
}

/// Mean over rows of the squared Euclidean distance.
pub fn loss_corr(g: &mut Graph, pred: Var, truth: Var) -> Result<Var, CorrError> {
    let d = g.sub(pred, truth)?;
    let s = g.square(d)?;
    let s = g.sum_last(s)?;
    Ok(g.mean_all(s))
}

/// Mean over curves of the summed squared control-point distances.
pub fn loss_sup(g: &mut Graph, pred: Var, truth: &[CubicBezier]) -> Result<Var, CorrError> {
    let t = g.constant(Tensor::new(vec![truth.len(), 8], truth.iter().flat_map(|c| c.to_array()).collect())?);
    loss_corr(g, pred, t)
}

/// Mean over curves of the curve-to-segment Chamfer distance.
pub fn loss_c2c(g: &mut Graph, pred: Var, segments: &[Vec<Point2>]) -> Result<Var, CorrError> {
    let c = g.chamfer_rows(pred, segments)?;
    Ok(g.mean_all(c))
}

/// Adds `dx` to the x coordinate of every point in `[.., 2]`.
fn shift_x(g: &mut Graph, x: Var, dx: f64) -> Result<Var, CorrError> {
    let shape = g.shape(x).to_vec();
    let off = g.constant(Tensor::from_fn(&shape, |i| if i % 2 == 0 { dx } else { 0.0 }));
    Ok(g.add(x, off)?)
}

/// `n` uniform samples of every curve in `ctrl [Q, 8]`, shape `[Q, n, 2]`.
pub fn sample_curves(g: &mut Graph, ctrl: Var, n: usize) -> Result<Var, CorrError> {
    let q = g.shape(ctrl)[0];
    let mut basis = vec![0.0; 4 * n];
    for j in 0..n {
        let w = bernstein(j as f64 / (n - 1) as f64);
        for i in 0..4 {
            basis[i * n + j] = w[i];
        }
    }
    let basis = g.constant(Tensor::new(vec![4, n], basis)?);
    let c = g.reshape(ctrl, &[q, 4, 2])?;
    let c = g.permute(c, &[0, 2, 1])?;
    let s = g.matmul(c, basis)?;
    Ok(g.permute(s, &[0, 2, 1])?)
}

fn combine(g: &mut Graph, a: Var, b: Var, wb: f64) -> Result<Var, CorrError> {
    let b = g.affine(b, wb, 0.0);
    Ok(g.add(a, b)?)
}

/// L_corr + λ L_cycle. The cycle pass feeds the predictions, moved to the
/// reference half, through the pair with the image roles swapped and
/// compares the result with the original queries on the target half.
pub fn point_objective(
    net: &impl CorrNet,
    g: &mut Graph,
    batch: &PointBatch,
    cfg: &LossConfig,
) -> Result<(Var, LossParts), CorrError> {
    if net.config().task != Task::P2p {
        return Err(CorrError::TaskMismatch { expected: Task::P2p, got: net.config().task });
    }
    let q = batch.queries.len();
    if q == 0 || q != batch.truth.len() {
        return Err(CorrError::EmptyBatch);
    }
    let with_cycle = cfg.lambda_cycle != 0.0;
    let (mem, mem_sw) = net.encode_both(g, &batch.reference, &batch.target, with_cycle)?;
    let queries = g.constant(points_tensor(&batch.queries, &[1, q, 2])?);
    let truth = g.constant(points_tensor(&batch.truth, &[q, 2])?);
    let pred = net.query(g, mem, queries)?;
    let corr = loss_corr(g, pred, truth)?;
    let mut parts = LossParts { forward: g.value(corr).item(), ..Default::default() };
    let total = match mem_sw {
        Some(ms) => {
            let back_q = shift_x(g, pred, -0.5)?;
            let back_q = g.reshape(back_q, &[1, q, 2])?;
            let back = net.query(g, ms, back_q)?;
            let home = g.constant(points_tensor(&shifted(&batch.queries, 0.5), &[q, 2])?);
            let cycle = loss_corr(g, back, home)?;
            parts.cycle = g.value(cycle).item();
            combine(g, corr, cycle, cfg.lambda_cycle)?
        }
        None => corr,
    };
    parts.total = g.value(total).item();
    Ok((total, parts))
}

/// L_c2c + λ_s L_sup plus λ times the same pair of terms for the curve
/// obtained by sampling the prediction and querying with swapped roles.
pub fn curve_objective(
    net: &impl CorrNet,
    g: &mut Graph,
    batch: &CurveBatch,
    cfg: &LossConfig,
) -> Result<(Var, LossParts), CorrError> {
    let config = net.config();
    if config.task != Task::C2c {
        return Err(CorrError::TaskMismatch { expected: Task::C2c, got: config.task });
    }
    let (q, n) = (batch.queries.len(), config.waypoint_n);
    if q == 0 {
        return Err(CorrError::EmptyBatch);
    }
    if let Some(w) = batch.queries.iter().find(|w| w.len() != n) {
        return Err(CorrError::WaypointSize { expected: n, got: w.len() });
    }
    let with_cycle = cfg.lambda_cycle != 0.0;
    let (mem, mem_sw) = net.encode_both(g, &batch.reference, &batch.target, with_cycle)?;
    let flat: Vec<Point2> = batch.queries.iter().flatten().copied().collect();
    let queries = g.constant(points_tensor(&flat, &[1, q, n, 2])?);
    let pred = net.query(g, mem, queries)?;
    let c2c = loss_c2c(g, pred, &batch.truth)?;
    let sup = loss_sup(g, pred, &batch.truth_curves)?;
    let fwd = combine(g, c2c, sup, cfg.lambda_sup)?;
    let mut parts = LossParts { forward: g.value(fwd).item(), ..Default::default() };
    let total = match mem_sw {
        Some(ms) => {
            let samples = sample_curves(g, pred, n)?;
            let samples = shift_x(g, samples, -0.5)?;
            let samples = g.reshape(samples, &[1, q, n, 2])?;
            let cyc = net.query(g, ms, samples)?;
            let home: Vec<Vec<Point2>> = batch.queries.iter().map(|w| shifted(w, 0.5)).collect();
            let home_curves: Vec<CubicBezier> =
                batch.query_curves.iter().map(|c| c.map(|p| Point2::new(p.x + 0.5, p.y))).collect();
            let cyc_c2c = loss_c2c(g, cyc, &home)?;
            let cyc_sup = loss_sup(g, cyc, &home_curves)?;
            let cycle = combine(g, cyc_c2c, cyc_sup, cfg.lambda_sup)?;
            parts.cycle = g.value(cycle).item();
            combine(g, fwd, cycle, cfg.lambda_cycle)?
        }
        None => fwd,
    };
    parts.total = g.value(total).item();
    Ok((total, parts))
}
