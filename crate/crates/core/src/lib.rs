//! Part-based visual tracking with structural support kernel correlation
//! filters.
//!
//! A target box is split into three or four parts. Each part learns a
//! support-vector correlation filter in the dual (Fourier) domain; all part
//! filters are trained jointly by an ADMM solver that ties them to a common
//! root filter and to their own previous estimate. During tracking each part
//! is detected independently, unreliable parts (low peak-to-sidelobe ratio
//! and low color-histogram similarity) are ignored, the remaining part
//! translations are fused into a global displacement, and the change in
//! pairwise part distances drives the scale estimate.
//!
//! Modules, bottom-up:
//! - [`spectral`]: DFTs, kernel correlations, dense circulant oracles.
//! - [`labeling`]: confidence map and ternary training labels.
//! - [`features`]: pixel buffers, HOG, color histograms, cosine window.
//! - [`solver`]: the joint ADMM solver.
//! - [`tracker`]: part layout, detection, fusion, scale, model update.
//! - [`harness`]: sequences, synthetic data, metrics, reports, CLI.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod features;
pub mod harness;
pub mod labeling;
pub mod solver;
pub mod spectral;
pub mod tracker;

pub use error::{Error, Result};
pub use features::{Frame, HogConfig, ImageView};
pub use harness::{EvalRecord, Sequence};
pub use labeling::{LabelConfig, LabelGrid};
pub use solver::{Kernel, SolverConfig};
pub use spectral::{MultiChannelGrid, RealGrid, SpectralGrid};
pub use tracker::{BoundingBox, Tracker, TrackerConfig};
