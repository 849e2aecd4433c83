//! Inference in pixel coordinates: P2P points, C2C curves and the refined
//! mode that projects the P2P point onto the C2C curve.

use super::config::Task;
use super::encoding::{canvas_to_pixel, pixel_to_canvas, Half};
use super::network::{CorrModel, PairContext};
use super::CorrError;
use crate::curves::{nearest_point_on_curve, CubicBezier};
use crate::geometry::Point2;
use crate::phantom::Image2D;
use crate::tensornet::Tensor;

/// Loaded models. Refined inference needs both.
#[derive(Debug, Clone, Default)]
pub struct Models {
    pub p2p: Option<CorrModel>,
    pub c2c: Option<CorrModel>,
}

/// A pair encoded by each loaded model.
#[derive(Debug, Clone)]
pub struct EncodedPair {
    pub p2p: Option<PairContext>,
    pub c2c: Option<PairContext>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePrediction {
    /// Control points in target pixels.
    pub curve: CubicBezier,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedPrediction {
    /// Final point in target pixels.
    pub point: Point2,
    /// The unrefined P2P prediction.
    pub p2p: Point2,
    /// Curve the point was projected onto; `None` on fallback.
    pub curve: Option<CubicBezier>,
    /// The branch context was shorter than the waypoint size, so the P2P
    /// prediction is returned unchanged.
    pub fallback: bool,
}

impl Models {
    pub fn new(p2p: Option<CorrModel>, c2c: Option<CorrModel>) -> Result<Self, CorrError> {
        if let Some(m) = &p2p {
            if m.config.task != Task::P2p {
                return Err(CorrError::TaskMismatch { expected: Task::P2p, got: m.config.task });
            }
        }
        if let Some(m) = &c2c {
            if m.config.task != Task::C2c {
                return Err(CorrError::TaskMismatch { expected: Task::C2c, got: m.config.task });
            }
        }
        Ok(Self { p2p, c2c })
    }

    fn model(&self, task: Task) -> Result<&CorrModel, CorrError> {
        match task {
            Task::P2p => self.p2p.as_ref(),
            Task::C2c => self.c2c.as_ref(),
        }
        .ok_or(CorrError::MissingModel(task))
    }

    /// Waypoint size of the C2C model.
    pub fn waypoint_n(&self) -> Result<usize, CorrError> {
        Ok(self.model(Task::C2c)?.config.waypoint_n)
    }

    pub fn encode(&self, reference: &Image2D, target: &Image2D) -> Result<EncodedPair, CorrError> {
        let enc = |m: &Option<CorrModel>| m.as_ref().map(|m| m.encode_pair(reference, target)).transpose();
        Ok(EncodedPair { p2p: enc(&self.p2p)?, c2c: enc(&self.c2c)? })
    }

    /// P2P predictions for reference pixels, in target pixels.
    pub fn p2p(&self, pair: &EncodedPair, queries: &[Point2]) -> Result<Vec<Point2>, CorrError> {
        let m = self.model(Task::P2p)?;
        let ctx = pair.p2p.as_ref().ok_or(CorrError::MissingModel(Task::P2p))?;
        if queries.is_empty() {
            return Ok(vec![]);
        }
        let s = m.config.input_size;
        let data = queries.iter().flat_map(|&p| {
            let c = pixel_to_canvas(p, s, Half::Reference);
            [c.x, c.y]
        });
        let out = m.predict(ctx, Tensor::new(vec![1, queries.len(), 2], data.collect())?)?;
        Ok(out
            .data()
            .chunks(2)
            .map(|c| canvas_to_pixel(Point2::new(c[0], c[1]), s, Half::Target))
            .collect())
    }

    /// C2C curves for reference-pixel waypoints, in target pixels.
    pub fn c2c(&self, pair: &EncodedPair, waypoints: &[Vec<Point2>]) -> Result<Vec<CurvePrediction>, CorrError> {
        let m = self.model(Task::C2c)?;
        let ctx = pair.c2c.as_ref().ok_or(CorrError::MissingModel(Task::C2c))?;
        let (s, n) = (m.config.input_size, m.config.waypoint_n);
        if let Some(w) = waypoints.iter().find(|w| w.len() != n) {
            return Err(CorrError::WaypointSize { expected: n, got: w.len() });
        }
        if waypoints.is_empty() {
            return Ok(vec![]);
        }
        let data: Vec<f64> = waypoints
            .iter()
            .flatten()
            .flat_map(|&p| {
                let c = pixel_to_canvas(p, s, Half::Reference);
                [c.x, c.y]
            })
            .collect();
        let out = m.predict(ctx, Tensor::new(vec![1, waypoints.len(), n, 2], data)?)?;
        Ok(out
            .data()
            .chunks(8)
            .map(|c| CurvePrediction {
                curve: CubicBezier::from_slice(c).map(|p| canvas_to_pixel(p, s, Half::Target)),
            })
            .collect())
    }

    /// Refined prediction for point `index` of an ordered reference
    /// polyline. The waypoint is the window of `waypoint_n` consecutive
    /// polyline points centered on the query, shifted to stay inside.
    pub fn refined(&self, pair: &EncodedPair, polyline: &[Point2], index: usize) -> Result<RefinedPrediction, CorrError> {
        let many = self.refined_many(pair, polyline, &[index])?;
        Ok(many[0])
    }

    /// [`Models::refined`] for several indices of one polyline.
    pub fn refined_many(
        &self,
        pair: &EncodedPair,
        polyline: &[Point2],
        indices: &[usize],
    ) -> Result<Vec<RefinedPrediction>, CorrError> {
        let n = self.waypoint_n()?;
        if let Some(&i) = indices.iter().find(|&&i| i >= polyline.len()) {
            return Err(CorrError::InvalidConfig(format!("query index {i} outside polyline of {}", polyline.len())));
        }
        let queries: Vec<Point2> = indices.iter().map(|&i| polyline[i]).collect();
        let p2p = self.p2p(pair, &queries)?;
        if polyline.len() < n {
            return Ok(p2p
                .into_iter()
                .map(|p| RefinedPrediction { point: p, p2p: p, curve: None, fallback: true })
                .collect());
        }
        let windows: Vec<Vec<Point2>> = indices.iter().map(|&i| waypoint_window(polyline, i, n).to_vec()).collect();
        let curves = self.c2c(pair, &windows)?;
        Ok(p2p
            .into_iter()
            .zip(curves)
            .map(|(p, c)| RefinedPrediction {
                point: nearest_point_on_curve(&c.curve, p).1,
                p2p: p,
                curve: Some(c.curve),
                fallback: false,
            })
            .collect())
    }
}

/// The `n` consecutive points around `index`, clamped to the polyline.
/// Requires `polyline.len() >= n`.
pub fn waypoint_window(polyline: &[Point2], index: usize, n: usize) -> &[Point2] {
    let start = index.saturating_sub(n / 2).min(polyline.len() - n);
    &polyline[start..start + n]
}
