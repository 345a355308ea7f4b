//! Neural edge fields: reconstruct 3D parametric curves from calibrated
//! multi-view edge maps.
//!
//! The pipeline stages map onto modules:
//!
//! 1. [`synth`] – procedural curve-network scenes and analytic edge maps
//!    with hidden-line removal.
//! 2. [`field`] – the edge-density MLP and its density mapping.
//! 3. [`render`] – differentiable volume rendering, losses and training.
//! 4. [`extract`] – dense grid evaluation, thresholding and point-cloud
//!    normalization.
//! 5. [`curvefit`] – coarse line fitting followed by joint cubic Bézier
//!    refinement.
//! 6. [`evalmetrics`] – Chamfer distance, precision/recall/F-score/IoU.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod error;
pub mod evalmetrics;
pub mod geom;
pub mod pipeline;
pub mod config;
pub mod curvefit;
pub mod extract;
pub mod field;
pub mod render;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};
