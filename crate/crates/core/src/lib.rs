//! Six-degree-of-freedom subjective vertical conflict (SVC) motion sickness
//! model with an image-derived visual vertical (VV) channel.
//!
//! The crate is organised along the processing chain:
//!
//! - [`imgproc`]: grayscale, blur, Sobel gradients, erosion on owned buffers.
//! - [`vv`]: per-frame visual vertical estimation from gradient histograms.
//! - [`svc`]: vestibular/visual dynamics, internal model, Hill and MSI blocks,
//!   plus the gravity-direction tracker.
//! - [`dataio`]: IMU CSV, trial manifests, resampling, duplication and the
//!   zero-order hold that bridges frame-rate VV into the continuous model.
//! - [`synth`]: labelled synthetic scenes and slalom trajectories.
//! - [`metrics`]: regression, mean absolute deviation, standard deviation.
//!
//! Head coordinates are right-handed: `x` to the right, `y` up and `z`
//! pointing backwards out of the face. Angles in the head `x`-`y` plane are
//! measured counter-clockwise from `+x`, so an upright head sees the
//! vertical at 90 degrees.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod error;
pub mod imgproc;
pub mod metrics;
pub mod svc;
pub mod synth;
pub mod vv;

pub use error::{Error, Result};

/// Three-component column vector in head coordinates.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Standard gravity magnitude used throughout, in m/s².
pub const GRAVITY: f64 = 9.81;
