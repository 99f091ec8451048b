//! Asynchrony-robust collaborative BEV perception workbench: synthetic
//! scenes, ROI messages, tracklets, attention-based motion estimation,
//! feature warping, fusion and AP evaluation.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
mod error;
pub mod eval;
pub mod flow;
pub mod fusion;
pub mod geometry;
pub mod roi_codec;
pub mod scene_sim;
pub mod seed;
pub mod tracker;

pub use error::{Error, Result};
