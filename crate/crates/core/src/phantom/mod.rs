//! Synthetic coronary trees, DRR-style rendering and projected labels.
//!
//! Trees are grown on a spherical shell around the isocenter, rendered as
//! Gaussian-profile tubes, and every centerline point, bifurcation and
//! stenosis endpoint is projected with the view's camera so that the same
//! `(branch_id, arc_index)` key names corresponding points in all views.

mod dataset;
mod groups;
mod labels;
mod render;
mod tree;

use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::GeometryError;

pub use dataset::{
    assign_splits, camera_path, image_path, labels_path, make_dataset, sha256_hex, subject_tree, DatasetConfig,
    Manifest, Splits, SubjectEntry, ViewEntry, DATASET_VERSION, MANIFEST_FILE,
};
pub use groups::{enumerate_projection_groups, GroupId};
pub use labels::{project_labels, BifurcationLabel, BranchLabel, LabelKey, StenosisLabel, ViewLabels};
pub use render::{attenuation_map, intensity_from_attenuation, render_tubes, render_view, Image2D, Tube};
pub use tree::{derive_seed, generate_tree, Bifurcation, Branch, CoronaryTree, PhantomConfig, Side, StenosisMarker};

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid phantom configuration: {0}")]
    InvalidConfig(String),
    #[error("tree invariant violated: {0}")]
    InvalidTree(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("centerline point outside the camera frustum (depth {depth} mm)")]
    OutOfFrustum { depth: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("I/O error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("JSON error at {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}
