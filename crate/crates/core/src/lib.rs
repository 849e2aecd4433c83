//! Multi-view coronary angiography simulation and dense correspondence.
//!
//! - [`geometry`]: C-arm camera model, projection and epipolar utilities.
//! - [`phantom`]: procedural coronary trees, rendering and projected labels.
//! - [`curves`]: cubic Bezier fitting, sampling, Chamfer distances.
//! - [`tensornet`]: a small reverse-mode autodiff engine with transformer blocks.
//! - [`corrmodel`]: point-to-point and curve-to-curve correspondence models.
//! - [`tracing`]: vesselness cost maps and shortest-path centerline tracing.
//! - [`harness`]: dataset loading, evaluation tables and reports.

pub mod corrmodel;
pub mod curves;
pub mod geometry;
pub mod harness;
pub mod phantom;
pub mod tensornet;
pub mod tracing;
