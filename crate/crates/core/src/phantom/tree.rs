use std::collections::VecDeque;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PhantomError;
use crate::geometry::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lca,
    Rca,
}

impl Side {
    pub const ALL: [Side; 2] = [Side::Lca, Side::Rca];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Lca => "lca",
            Side::Rca => "rca",
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Side {
    type Err = PhantomError;
    fn from_str(s: &str) -> Result<Self, PhantomError> {
        match s {
            "lca" => Ok(Side::Lca),
            "rca" => Ok(Side::Rca),
            other => Err(PhantomError::InvalidConfig(format!("unknown side {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub parent_id: Option<usize>,
    /// Index into the parent polyline where this branch starts.
    pub attach_index: usize,
    pub generation: usize,
    pub points: Vec<Point3>,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StenosisMarker {
    pub branch_id: usize,
    pub start_index: usize,
    pub end_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoronaryTree {
    pub branches: Vec<Branch>,
    pub side: Side,
    pub stenoses: Vec<StenosisMarker>,
    pub seed: u64,
}

/// A bifurcation: the point on the parent where a child branch leaves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bifurcation {
    pub parent_id: usize,
    pub child_id: usize,
    pub point: Point3,
}

impl CoronaryTree {
    pub fn branch(&self, id: usize) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn bifurcations(&self) -> Vec<Bifurcation> {
        self.branches
            .iter()
            .filter_map(|b| {
                let parent = self.branch(b.parent_id?)?;
                Some(Bifurcation {
                    parent_id: parent.id,
                    child_id: b.id,
                    point: parent.points[b.attach_index],
                })
            })
            .collect()
    }

    pub fn point_count(&self) -> usize {
        self.branches.iter().map(|b| b.points.len()).sum()
    }

    /// Checks the structural invariants of branches, topology and markers.
    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |msg: String| Err(PhantomError::InvalidTree(msg));
        let roots = self.branches.iter().filter(|b| b.parent_id.is_none()).count();
        if roots != 1 {
            return bad(format!("expected one root branch, found {roots}"));
        }
        for (i, b) in self.branches.iter().enumerate() {
            if b.id != i {
                return bad(format!("branch ids must be dense, found {} at {i}", b.id));
            }
            if b.points.len() < 2 || b.points.len() != b.radii.len() {
                return bad(format!("branch {} has {} points / {} radii", b.id, b.points.len(), b.radii.len()));
            }
            for w in b.points.windows(2) {
                let d = (w[1] - w[0]).norm();
                if !(0.2..=1.0).contains(&d) {
                    return bad(format!("branch {} spacing {d} mm", b.id));
                }
            }
            if b.radii.iter().any(|r| !(*r > 0.0)) {
                return bad(format!("branch {} has non-positive radius", b.id));
            }
            if b.radii.windows(2).any(|w| w[1] > w[0]) {
                return bad(format!("branch {} radius increases", b.id));
            }
            if let Some(pid) = b.parent_id {
                // Parents precede children, which rules out cycles.
                if pid >= b.id {
                    return bad(format!("branch {} has parent {pid} not preceding it", b.id));
                }
                let parent = &self.branches[pid];
                if b.attach_index >= parent.points.len() {
                    return bad(format!("branch {} attaches past the end of {pid}", b.id));
                }
            }
        }
        for s in &self.stenoses {
            let Some(b) = self.branch(s.branch_id) else {
                return bad(format!("stenosis on missing branch {}", s.branch_id));
            };
            if !(s.start_index < s.end_index && s.end_index < b.points.len()) {
                return bad(format!("stenosis indices {}..{} invalid", s.start_index, s.end_index));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomConfig {
    pub seed: u64,
    pub side: Side,
    /// Number of branch generations, root included.
    pub depth: usize,
    pub min_branches: usize,
    pub max_branches: usize,
    pub shell_radius_mm: f64,
    pub spacing_mm: f64,
}

impl PhantomConfig {
    pub fn new(seed: u64, side: Side) -> Self {
        let (min_branches, max_branches) = match side {
            Side::Lca => (8, 24),
            Side::Rca => (6, 16),
        };
        Self {
            seed,
            side,
            depth: 4,
            min_branches,
            max_branches,
            shell_radius_mm: 45.0,
            spacing_mm: 0.5,
        }
    }

    fn validate(&self) -> Result<(), PhantomError> {
        let err = |m: String| Err(PhantomError::InvalidConfig(m));
        if !(2..=5).contains(&self.depth) {
            return err(format!("depth {} outside [2, 5]", self.depth));
        }
        if self.min_branches < 2 || self.min_branches > self.max_branches || self.max_branches > 64 {
            return err(format!("branch bounds [{}, {}] invalid", self.min_branches, self.max_branches));
        }
        if !(self.shell_radius_mm > 10.0 && self.shell_radius_mm < 100.0) {
            return err(format!("shell radius {} mm", self.shell_radius_mm));
        }
        if !(0.2..=1.0).contains(&self.spacing_mm) {
            return err(format!("spacing {} mm outside [0.2, 1.0]", self.spacing_mm));
        }
        Ok(())
    }
}

struct SideProfile {
    ostium: Vector3<f64>,
    heading: Vector3<f64>,
    root_length: (f64, f64),
    root_radius: f64,
    branch_target: (usize, usize),
}

fn profile(side: Side) -> SideProfile {
    match side {
        Side::Lca => SideProfile {
            ostium: Vector3::new(0.25, 0.35, 0.9),
            heading: Vector3::new(0.15, 0.25, -1.0),
            root_length: (95.0, 115.0),
            root_radius: 2.0,
            branch_target: (14, 20),
        },
        Side::Rca => SideProfile {
            ostium: Vector3::new(-0.45, 0.45, 0.75),
            heading: Vector3::new(-1.0, 0.2, -0.5),
            root_length: (105.0, 125.0),
            root_radius: 1.8,
            branch_target: (9, 13),
        },
    }
}

/// Smooth 1D noise: random knots joined by cubic smoothstep segments.
struct SmoothNoise {
    knots: Vec<f64>,
    knot_spacing: f64,
}

impl SmoothNoise {
    fn new(rng: &mut ChaCha8Rng, length: f64, knot_spacing: f64, amplitude: f64) -> Self {
        let n = (length / knot_spacing).ceil() as usize + 2;
        let knots = (0..n).map(|_| rng.random_range(-amplitude..=amplitude)).collect();
        Self { knots, knot_spacing }
    }

    fn at(&self, s: f64) -> f64 {
        let x = (s / self.knot_spacing).max(0.0);
        let i = (x.floor() as usize).min(self.knots.len() - 2);
        let t = (x - i as f64).clamp(0.0, 1.0);
        let w = t * t * (3.0 - 2.0 * t);
        self.knots[i] * (1.0 - w) + self.knots[i + 1] * w
    }
}

fn tangent(p: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    let n = p.normalize();
    v - n * v.dot(&n)
}

/// Walks a vessel over the shell starting at `start` with initial `heading`.
fn grow_polyline(
    rng: &mut ChaCha8Rng,
    cfg: &PhantomConfig,
    start: Point3,
    heading: Vector3<f64>,
    length: f64,
) -> Vec<Point3> {
    let curvature = SmoothNoise::new(rng, length, 8.0, 0.06);
    let radial = SmoothNoise::new(rng, length, 15.0, 1.5);
    let n_steps = (length / cfg.spacing_mm).round().max(1.0) as usize;
    let mut points = Vec::with_capacity(n_steps + 1);
    let mut p = start;
    let mut h = tangent(&p, &heading);
    if h.norm() < 1e-9 {
        h = tangent(&p, &Vector3::new(1.0, 0.0, 0.0));
    }
    h = h.normalize();
    // Children start on the parent's surface; fade that offset out so the
    // first steps keep the nominal spacing.
    let offset0 = start.norm() - cfg.shell_radius_mm - radial.at(0.0);
    points.push(p);
    for step in 0..n_steps {
        let s = step as f64 * cfg.spacing_mm;
        let axis = Unit::new_normalize(p);
        let turn = Rotation3::from_axis_angle(&axis, curvature.at(s) * cfg.spacing_mm);
        h = turn * h;
        let s1 = s + cfg.spacing_mm;
        let target_r = cfg.shell_radius_mm + radial.at(s1) + offset0 * (-s1 / 5.0).exp();
        let next = (p + h * cfg.spacing_mm).normalize() * target_r;
        h = tangent(&next, &(next - p)).normalize();
        p = next;
        points.push(p);
    }
    points
}

fn taper(r0: f64, n: usize) -> Vec<f64> {
    let r_end = (r0 * 0.85).max(0.35);
    (0..n)
        .map(|i| {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            (r0 + (r_end - r0) * t).max(0.35).min(r0)
        })
        .collect()
}

/// Generates a procedural coronary tree on a spherical shell around the
/// isocenter. Output is a pure function of the configuration.
pub fn generate_tree(cfg: &PhantomConfig) -> Result<CoronaryTree, PhantomError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_c0de_u64.wrapping_mul(cfg.side as u64 + 1));
    let prof = profile(cfg.side);
    let target = rng
        .random_range(prof.branch_target.0..=prof.branch_target.1)
        .clamp(cfg.min_branches, cfg.max_branches);

    let ostium = prof.ostium.normalize() * cfg.shell_radius_mm;
    let jitter = Vector3::new(
        rng.random_range(-0.15..0.15),
        rng.random_range(-0.15..0.15),
        rng.random_range(-0.1..0.1),
    );
    let root_len = rng.random_range(prof.root_length.0..prof.root_length.1);
    let root_points = grow_polyline(&mut rng, cfg, ostium, prof.heading + jitter, root_len);
    let root_radii = taper(prof.root_radius, root_points.len());
    let mut branches = vec![Branch {
        id: 0,
        parent_id: None,
        attach_index: 0,
        generation: 0,
        points: root_points,
        radii: root_radii,
    }];

    // Breadth-first: every branch below the depth limit may receive children;
    // the queue is cycled until the drawn branch count is reached.
    let mut queue: VecDeque<usize> = VecDeque::from([0]);
    let mut attaches: Vec<Vec<usize>> = vec![Vec::new()];
    let mut stalls = 0;
    while branches.len() < target {
        let Some(pid) = queue.pop_front() else { break };
        let parent = branches[pid].clone();
        if parent.generation + 1 >= cfg.depth || parent.points.len() < 24 {
            stalls += 1;
            if stalls > 4 * branches.len() + 8 {
                break;
            }
            continue;
        }
        queue.push_back(pid);
        let n = parent.points.len();
        let lo = (n as f64 * 0.08) as usize;
        let hi = ((n as f64 * 0.85) as usize).max(lo + 1);
        let min_gap = (3.0 / cfg.spacing_mm) as usize;
        let mut attach = None;
        for _ in 0..12 {
            let cand = rng.random_range(lo..hi);
            if attaches[pid].iter().all(|&a| a.abs_diff(cand) >= min_gap) {
                attach = Some(cand);
                break;
            }
        }
        let Some(attach) = attach else {
            stalls += 1;
            if stalls > 4 * branches.len() + 8 {
                break;
            }
            continue;
        };
        stalls = 0;
        attaches[pid].push(attach);

        let origin = parent.points[attach];
        let next = parent.points[(attach + 1).min(n - 1)];
        let dir = tangent(&origin, &(next - origin)).normalize();
        let sign = if attaches[pid].len() % 2 == 0 { 1.0 } else { -1.0 };
        let angle = sign * rng.random_range(25.0f64..=60.0).to_radians();
        let heading = Rotation3::from_axis_angle(&Unit::new_normalize(origin), angle) * dir;
        let remaining = (n - attach) as f64 * cfg.spacing_mm;
        let generation = parent.generation + 1;
        let length = (remaining * rng.random_range(0.35..0.75) * 0.85f64.powi(generation as i32 - 1))
            .clamp(12.0, 70.0);
        let points = grow_polyline(&mut rng, cfg, origin, heading, length);
        let radii = taper((parent.radii[attach] * 0.75).max(0.35), points.len());
        let id = branches.len();
        branches.push(Branch { id, parent_id: Some(pid), attach_index: attach, generation, points, radii });
        attaches.push(Vec::new());
        queue.push_back(id);
    }
    if branches.len() < cfg.min_branches {
        return Err(PhantomError::InvalidConfig(format!(
            "could only place {} branches (min {})",
            branches.len(),
            cfg.min_branches
        )));
    }

    let n_stenoses = rng.random_range(0..=2usize);
    let mut stenoses: Vec<StenosisMarker> = Vec::new();
    let candidates: Vec<usize> = branches
        .iter()
        .filter(|b| b.generation <= 1 && b.points.len() >= 60)
        .map(|b| b.id)
        .collect();
    for _ in 0..n_stenoses {
        if candidates.is_empty() {
            break;
        }
        let bid = candidates[rng.random_range(0..candidates.len())];
        if stenoses.iter().any(|s| s.branch_id == bid) {
            continue;
        }
        let n = branches[bid].points.len();
        let start = rng.random_range(n / 10..n / 2);
        let span = rng.random_range(8..=20usize);
        stenoses.push(StenosisMarker { branch_id: bid, start_index: start, end_index: (start + span).min(n - 1) });
    }

    let tree = CoronaryTree { branches, side: cfg.side, stenoses, seed: cfg.seed };
    tree.validate()?;
    Ok(tree)
}

/// Mixes a base seed with indices (splitmix64 finalizer).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(p.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let cfg = PhantomConfig::new(11, Side::Lca);
        assert_eq!(generate_tree(&cfg).unwrap(), generate_tree(&cfg).unwrap());
    }

    #[test]
    fn seven_lca_depth_four_within_bounds() {
        let cfg = PhantomConfig::new(7, Side::Lca);
        let t = generate_tree(&cfg).unwrap();
        assert!((8..=24).contains(&t.branches.len()), "{}", t.branches.len());
    }

    #[test]
    fn invariants_hold_over_many_seeds() {
        let mut lca = 0.0;
        let mut rca = 0.0;
        for seed in 0..100 {
            for side in Side::ALL {
                let t = generate_tree(&PhantomConfig::new(seed, side)).unwrap();
                t.validate().unwrap();
                assert!(t.stenoses.len() <= 2);
                for b in &t.branches {
                    for p in &b.points {
                        assert!((p.norm() - 45.0).abs() <= 2.0 + 1e-9);
                    }
                }
                match side {
                    Side::Lca => lca += t.bifurcations().len() as f64,
                    Side::Rca => rca += t.bifurcations().len() as f64,
                }
            }
        }
        assert!(lca / 100.0 > rca / 100.0);
        assert!((13.0..=19.0).contains(&(lca / 100.0)), "{}", lca / 100.0);
        assert!((8.0..=12.0).contains(&(rca / 100.0)), "{}", rca / 100.0);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = PhantomConfig::new(1, Side::Rca);
        cfg.depth = 6;
        assert!(matches!(generate_tree(&cfg), Err(PhantomError::InvalidConfig(_))));
        cfg.depth = 1;
        assert!(generate_tree(&cfg).is_err());
        let mut cfg = PhantomConfig::new(1, Side::Rca);
        cfg.min_branches = 30;
        assert!(generate_tree(&cfg).is_err());
    }

    #[test]
    fn validate_catches_broken_trees() {
        let mut t = generate_tree(&PhantomConfig::new(2, Side::Lca)).unwrap();
        t.branches[1].radii[3] = t.branches[1].radii[0] * 2.0;
        assert!(t.validate().is_err());
        let mut t = generate_tree(&PhantomConfig::new(2, Side::Lca)).unwrap();
        t.branches[0].parent_id = Some(1);
        assert!(t.validate().is_err());
    }

    #[test]
    fn child_starts_at_bifurcation() {
        let t = generate_tree(&PhantomConfig::new(5, Side::Lca)).unwrap();
        for bif in t.bifurcations() {
            assert_eq!(t.branches[bif.child_id].points[0], bif.point);
        }
    }
}
