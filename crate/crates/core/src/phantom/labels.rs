use serde::{Deserialize, Serialize};

use super::tree::CoronaryTree;
use crate::geometry::{project, GeometryError, Point2, ProjectionView};

/// Projected centerline of one branch. The arc index of a point is its
/// position in `points`, matching the index in the 3D polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchLabel {
    pub branch_id: usize,
    pub points: Vec<Point2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationLabel {
    pub parent_id: usize,
    pub child_id: usize,
    pub point: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StenosisLabel {
    pub branch_id: usize,
    pub start: Point2,
    pub end: Point2,
}

/// Key of a projected label, stable across views of the same tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelKey {
    pub branch_id: usize,
    pub arc_index: usize,
}

/// Dense 2D labels of one rendered view, in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewLabels {
    pub image_size: (usize, usize),
    pub branches: Vec<BranchLabel>,
    pub bifurcations: Vec<BifurcationLabel>,
    pub stenoses: Vec<StenosisLabel>,
}

impl ViewLabels {
    pub fn branch(&self, id: usize) -> Option<&BranchLabel> {
        self.branches.iter().find(|b| b.branch_id == id)
    }

    pub fn point(&self, key: LabelKey) -> Option<Point2> {
        self.branch(key.branch_id)?.points.get(key.arc_index).copied()
    }

    pub fn centerline_keys(&self) -> impl Iterator<Item = LabelKey> + '_ {
        self.branches.iter().flat_map(|b| {
            (0..b.points.len()).map(move |i| LabelKey { branch_id: b.branch_id, arc_index: i })
        })
    }

    pub fn centerline_len(&self) -> usize {
        self.branches.iter().map(|b| b.points.len()).sum()
    }

    pub fn stenosis_endpoints(&self) -> Vec<Point2> {
        self.stenoses.iter().flat_map(|s| [s.start, s.end]).collect()
    }

    /// Labels for the same view rendered at a different resolution.
    pub fn rescaled(&self, image_size: (usize, usize)) -> ViewLabels {
        let sx = image_size.0 as f64 / self.image_size.0 as f64;
        let sy = image_size.1 as f64 / self.image_size.1 as f64;
        let s = |p: Point2| Point2::new(p.x * sx, p.y * sy);
        ViewLabels {
            image_size,
            branches: self
                .branches
                .iter()
                .map(|b| BranchLabel { branch_id: b.branch_id, points: b.points.iter().map(|&p| s(p)).collect() })
                .collect(),
            bifurcations: self
                .bifurcations
                .iter()
                .map(|b| BifurcationLabel { point: s(b.point), ..*b })
                .collect(),
            stenoses: self
                .stenoses
                .iter()
                .map(|st| StenosisLabel { branch_id: st.branch_id, start: s(st.start), end: s(st.end) })
                .collect(),
        }
    }
}

/// Projects every centerline point, bifurcation and stenosis endpoint.
pub fn project_labels(tree: &CoronaryTree, view: &ProjectionView) -> Result<ViewLabels, GeometryError> {
    let branches = tree
        .branches
        .iter()
        .map(|b| {
            let points = b.points.iter().map(|p| project(view, p)).collect::<Result<Vec<_>, _>>()?;
            Ok(BranchLabel { branch_id: b.id, points })
        })
        .collect::<Result<Vec<_>, GeometryError>>()?;
    let bifurcations = tree
        .bifurcations()
        .iter()
        .map(|b| {
            Ok(BifurcationLabel { parent_id: b.parent_id, child_id: b.child_id, point: project(view, &b.point)? })
        })
        .collect::<Result<Vec<_>, GeometryError>>()?;
    let stenoses = tree
        .stenoses
        .iter()
        .map(|s| {
            let b = &tree.branches[s.branch_id];
            Ok(StenosisLabel {
                branch_id: s.branch_id,
                start: project(view, &b.points[s.start_index])?,
                end: project(view, &b.points[s.end_index])?,
            })
        })
        .collect::<Result<Vec<_>, GeometryError>>()?;
    Ok(ViewLabels { image_size: view.intrinsics.image_size, branches, bifurcations, stenoses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_view, epipolar_residual, fundamental_matrix, Angulation, GeometryConfig};
    use crate::phantom::{generate_tree, PhantomConfig, Side};

    #[test]
    fn cardinality_and_epipolar_consistency() {
        let tree = generate_tree(&PhantomConfig::new(9, Side::Rca)).unwrap();
        let g = GeometryConfig::default();
        let v1 = build_view(Angulation::new(-10.0, -30.0).unwrap(), &g).unwrap();
        let v2 = build_view(Angulation::new(40.0, 30.0).unwrap(), &g).unwrap();
        let l1 = project_labels(&tree, &v1).unwrap();
        let l2 = project_labels(&tree, &v2).unwrap();
        for (b, lb) in tree.branches.iter().zip(&l1.branches) {
            assert_eq!(b.points.len(), lb.points.len());
        }
        assert_eq!(l1.bifurcations.len(), tree.bifurcations().len());
        assert_eq!(l1.stenoses.len(), tree.stenoses.len());
        let f = fundamental_matrix(&v1, &v2).unwrap();
        for key in l1.centerline_keys() {
            let r = epipolar_residual(&f, l1.point(key).unwrap(), l2.point(key).unwrap());
            assert!(r.abs() <= 1e-6);
        }
    }

    #[test]
    fn rescale_divides_coordinates() {
        let tree = generate_tree(&PhantomConfig::new(1, Side::Lca)).unwrap();
        let v = build_view(Angulation::new(0.0, 0.0).unwrap(), &GeometryConfig::default()).unwrap();
        let l = project_labels(&tree, &v).unwrap();
        let small = l.rescaled((128, 128));
        let v128 = build_view(Angulation::new(0.0, 0.0).unwrap(), &GeometryConfig::default().with_image_size(128)).unwrap();
        let direct = project_labels(&tree, &v128).unwrap();
        for key in l.centerline_keys().take(50) {
            assert!(small.point(key).unwrap().dist(direct.point(key).unwrap()) < 1e-9);
        }
    }
}
