//! Tactile-only retrieval of movable objects: planar contact simulation,
//! probe-based localization, radial tapping, contrastive sequence encoders and
//! the experiment harness that ties them together.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod world;
pub mod localize;
pub mod rng;
pub mod interact;
pub mod datasets;
pub mod encoder;
pub mod harness;
