//! Point-to-point and curve-to-curve correspondence transformers, their
//! objectives, training loop, inference modes and checkpoint format.

mod checkpoint;
mod config;
mod encoding;
mod infer;
mod loss;
mod network;
mod train;

use std::path::PathBuf;

use thiserror::Error;

use crate::curves::CurveError;
use crate::phantom::PhantomError;
use crate::tensornet::TensorError;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{LossConfig, ModelConfig, Task, TrainConfig};
pub use encoding::{canvas_encoding, canvas_to_pixel, pixel_to_canvas, positional_encoding, Half};
pub use infer::{waypoint_window, CurvePrediction, EncodedPair, Models, RefinedPrediction};
pub use loss::{
    curve_objective, loss_c2c, loss_corr, loss_sup, point_objective, sample_curves, CorrNet, CurveBatch, LossParts,
    PointBatch,
};
pub use network::{CorrModel, PairContext, TARGET_CENTER};
pub use train::{
    curve_batch, point_batch, train, PairSample, PairSource, PhantomSource, TrainLog, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum CorrError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("outside the canvas: {0}")]
    Domain(String),
    #[error("image is {width}x{height}, model expects {expected}x{expected}")]
    ImageSize { expected: usize, width: usize, height: usize },
    #[error("bad query shape {0:?}")]
    QueryShape(Vec<usize>),
    #[error("waypoint has {got} points, model expects {expected}")]
    WaypointSize { expected: usize, got: usize },
    #[error("model is for task {got}, expected {expected}")]
    TaskMismatch { expected: Task, got: Task },
    #[error("batch has no usable queries")]
    EmptyBatch,
    #[error("{0} model not loaded")]
    MissingModel(Task),
    #[error("query branch context shorter than {0} points")]
    WaypointUnavailable(usize),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error("dataset not found: {0}")]
    DatasetNotFound(String),
    #[error("checkpoint version mismatch: {0}")]
    VersionMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Phantom(#[from] PhantomError),
}
