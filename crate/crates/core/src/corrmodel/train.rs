//! Seeded training loop and the view-pair sources it draws from.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Task, TrainConfig};
use super::encoding::{pixel_to_canvas, Half};
use super::loss::{curve_objective, point_objective, CurveBatch, PointBatch};
use super::network::CorrModel;
use super::CorrError;
use crate::geometry::{angle_between_views, build_view, GeometryConfig, Point2, ProjectionView};
use crate::phantom::{
    enumerate_projection_groups, project_labels, render_view, subject_tree, CoronaryTree, Image2D, Side, ViewLabels,
};
use crate::tensornet::{Adam, Graph};

/// Two views of one tree with their labels at model resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub reference: Image2D,
    pub target: Image2D,
    pub reference_labels: ViewLabels,
    pub target_labels: ViewLabels,
    pub angle_deg: f64,
}

pub trait PairSource {
    /// A random view pair of one tree; the two views are distinct.
    fn sample_pair(&mut self, rng: &mut ChaCha8Rng) -> Result<PairSample, CorrError>;
}

/// Renders phantom trees on demand over the 63 clinical angulations and
/// keeps every rendered view in memory.
#[derive(Debug, Clone)]
pub struct PhantomSource {
    trees: Vec<CoronaryTree>,
    views: Vec<ProjectionView>,
    size: usize,
    cache: HashMap<(usize, usize), (Image2D, ViewLabels)>,
}

impl PhantomSource {
    /// Renders at `geometry.image_size` and downsamples to `size`, which
    /// must divide it.
    pub fn new(trees: Vec<CoronaryTree>, geometry: GeometryConfig, size: usize) -> Result<Self, CorrError> {
        if trees.is_empty() {
            return Err(CorrError::InvalidConfig("no training trees".into()));
        }
        if size == 0 || geometry.image_size % size != 0 {
            return Err(CorrError::InvalidConfig(format!(
                "model size {size} does not divide render size {}",
                geometry.image_size
            )));
        }
        let views = enumerate_projection_groups()
            .into_iter()
            .map(|(_, a)| build_view(a, &geometry))
            .collect::<Result<Vec<_>, _>>()
            .map_err(crate::phantom::PhantomError::from)?;
        Ok(Self { trees, views, size, cache: HashMap::new() })
    }

    /// Both coronary sides of the given subjects of a seeded dataset.
    pub fn from_subjects(dataset_seed: u64, subjects: &[usize], geometry: GeometryConfig, size: usize) -> Result<Self, CorrError> {
        let mut trees = Vec::with_capacity(subjects.len() * 2);
        for &s in subjects {
            for side in Side::ALL {
                trees.push(subject_tree(dataset_seed, s, side)?);
            }
        }
        Self::new(trees, geometry, size)
    }

    pub fn trees(&self) -> &[CoronaryTree] {
        &self.trees
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    /// Image and labels of one tree in one view at model resolution.
    pub fn view(&mut self, tree: usize, view: usize) -> Result<(Image2D, ViewLabels), CorrError> {
        if let Some(v) = self.cache.get(&(tree, view)) {
            return Ok(v.clone());
        }
        let t = &self.trees[tree];
        let pv = &self.views[view];
        let full = render_view(t, pv)?;
        let factor = full.width / self.size;
        let img = if factor == 1 { full } else { full.downsample(factor)? };
        let labels = project_labels(t, pv)
            .map_err(crate::phantom::PhantomError::from)?
            .rescaled((self.size, self.size));
        self.cache.insert((tree, view), (img.clone(), labels.clone()));
        Ok((img, labels))
    }

    pub fn pair(&mut self, tree: usize, reference: usize, target: usize) -> Result<PairSample, CorrError> {
        let (ri, rl) = self.view(tree, reference)?;
        let (ti, tl) = self.view(tree, target)?;
        Ok(PairSample {
            reference: ri,
            target: ti,
            reference_labels: rl,
            target_labels: tl,
            angle_deg: angle_between_views(&self.views[reference], &self.views[target]),
        })
    }
}

impl PairSource for PhantomSource {
    fn sample_pair(&mut self, rng: &mut ChaCha8Rng) -> Result<PairSample, CorrError> {
        let tree = rng.random_range(0..self.trees.len());
        let n = self.views.len();
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..n)) % n;
        self.pair(tree, a, b)
    }
}

fn inside(p: Point2, size: usize) -> bool {
    let s = size as f64;
    p.x >= 0.0 && p.y >= 0.0 && p.x <= s && p.y <= s
}

/// `n` centerline queries drawn with replacement from the points visible
/// in both views.
pub fn point_batch(model: &CorrModel, sample: &PairSample, n: usize, rng: &mut ChaCha8Rng) -> Result<PointBatch, CorrError> {
    let size = model.config.input_size;
    let mut pairs = Vec::new();
    for key in sample.reference_labels.centerline_keys() {
        let (Some(r), Some(t)) = (sample.reference_labels.point(key), sample.target_labels.point(key)) else {
            continue;
        };
        if inside(r, size) && inside(t, size) {
            pairs.push((r, t));
        }
    }
    if pairs.is_empty() || n == 0 {
        return Err(CorrError::EmptyBatch);
    }
    let mut queries = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let (r, t) = pairs[rng.random_range(0..pairs.len())];
        queries.push(pixel_to_canvas(r, size, Half::Reference));
        truth.push(pixel_to_canvas(t, size, Half::Target));
    }
    Ok(PointBatch {
        reference: model.image_tensor(&sample.reference)?,
        target: model.image_tensor(&sample.target)?,
        queries,
        truth,
    })
}

/// `n` waypoints of `waypoint_n` consecutive centerline points at random
/// offsets, drawn with replacement from windows visible in both views.
pub fn curve_batch(model: &CorrModel, sample: &PairSample, n: usize, rng: &mut ChaCha8Rng) -> Result<CurveBatch, CorrError> {
    let size = model.config.input_size;
    let w = model.config.waypoint_n;
    let mut windows = Vec::new();
    for rb in &sample.reference_labels.branches {
        let Some(tb) = sample.target_labels.branch(rb.branch_id) else { continue };
        let len = rb.points.len().min(tb.points.len());
        if len < w {
            continue;
        }
        for s in 0..=len - w {
            let ok = (s..s + w).all(|i| inside(rb.points[i], size) && inside(tb.points[i], size));
            if ok {
                windows.push((&rb.points[s..s + w], &tb.points[s..s + w]));
            }
        }
    }
    if windows.is_empty() || n == 0 {
        return Err(CorrError::EmptyBatch);
    }
    let pairs = (0..n)
        .map(|_| {
            let (r, t) = windows[rng.random_range(0..windows.len())];
            (
                r.iter().map(|&p| pixel_to_canvas(p, size, Half::Reference)).collect(),
                t.iter().map(|&p| pixel_to_canvas(p, size, Half::Target)).collect(),
            )
        })
        .collect();
    let batch = CurveBatch::new(model.image_tensor(&sample.reference)?, model.image_tensor(&sample.target)?, pairs);
    if batch.queries.is_empty() {
        return Err(CorrError::EmptyBatch);
    }
    Ok(batch)
}

/// One logged training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLog {
    pub step: usize,
    pub loss: f64,
    pub forward: f64,
    pub cycle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Total loss of every step.
    pub losses: Vec<f64>,
    pub steps: usize,
}

/// Seeded, single-threaded training. Each step draws one view pair, builds
/// a batch of `cfg.queries` queries for the model's task and takes one
/// Adam step. `on_log` sees every `cfg.log_every`-th step and the last.
pub fn train(
    model: &mut CorrModel,
    source: &mut impl PairSource,
    cfg: &TrainConfig,
    mut on_log: impl FnMut(&TrainLog),
) -> Result<TrainOutcome, CorrError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam);
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (mut g, total, parts) = loop {
            let sample = source.sample_pair(&mut rng)?;
            let mut g = Graph::new();
            let res = match model.config.task {
                Task::P2p => point_batch(model, &sample, cfg.queries, &mut rng)
                    .and_then(|b| point_objective(model, &mut g, &b, &cfg.loss)),
                Task::C2c => curve_batch(model, &sample, cfg.queries, &mut rng)
                    .and_then(|b| curve_objective(model, &mut g, &b, &cfg.loss)),
            };
            match res {
                Ok((total, parts)) => break (g, total, parts),
                // a pair with nothing visible in both views; draw another
                Err(CorrError::EmptyBatch) => continue,
                Err(e) => return Err(e),
            }
        };
        if !parts.total.is_finite() {
            return Err(CorrError::NonFiniteLoss {
                step,
                detail: format!("forward {} cycle {}", parts.forward, parts.cycle),
            });
        }
        g.backward(total)?;
        model.store.zero_grad();
        model.store.accumulate_grads(&g);
        adam.step(&mut model.store)?;
        losses.push(parts.total);
        if (cfg.log_every > 0 && step % cfg.log_every == 0) || step + 1 == cfg.steps {
            on_log(&TrainLog { step, loss: parts.total, forward: parts.forward, cycle: parts.cycle });
        }
    }
    Ok(TrainOutcome { steps: cfg.steps, losses })
}
