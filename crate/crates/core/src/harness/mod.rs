//! Dataset access, the evaluation protocol and report emission.

mod dataset;
mod eval;
mod report;

use std::path::PathBuf;

use thiserror::Error;

use crate::corrmodel::CorrError;
use crate::phantom::PhantomError;

pub use dataset::{
    load_dataset, make_eval_pairs, pair_views, records_for_trees, Dataset, DatasetPairs, EvalPair, FileIssue,
    PairProvider, TrainingPairs, ViewRecord,
};
pub use eval::{
    curve_chamfer, endpoint_error, evaluate_curves, evaluate_points, mm_per_pixel, point_queries, soft_median_check,
    CenterPredictor, Cell, CurveColumn, CurveRecord, CurveStats, CurveTable, ErrorRow, ErrorTable, Method,
    OraclePredictor, PointPredictions, PointQuery, PointRecord, PointRun, Predictor, QueryKind, ANGLE_BINS,
    FOLD_RATIO,
};
pub use report::{emit_report, render_csv, render_markdown, Report, ReportFormat};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("manifest not found at {0}")]
    ManifestMissing(PathBuf),
    #[error("dataset schema version {found}, expected {expected}")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error("unknown view id {0}")]
    UnknownView(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("test split is empty")]
    EmptySplit,
    #[error(transparent)]
    Corr(#[from] CorrError),
    #[error(transparent)]
    Phantom(#[from] PhantomError),
    #[error("I/O error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
