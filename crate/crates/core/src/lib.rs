//! Vision-based interplanetary navigation toolkit.
//!
//! The crate covers the full loop of an autonomous deep-space navigation
//! experiment: synthetic sky rendering from a true trajectory, star
//! identification and attitude determination from the rendered frame,
//! planet extraction with a projection-covariance gate, and a
//! non-dimensional extended Kalman filter whose measurement model embeds
//! first-order light-time and light-aberration corrections.
//!
//! Frames: `N` is the inertial equatorial frame (ICRF-like), `C` is the
//! camera frame with +z along the boresight, +x along image columns and +y
//! along image rows. Pixel coordinates start at the top-left image corner
//! and pixel centers sit at integer + 0.5.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod constants;
pub mod dynamics;
pub mod ephemeris;
pub mod error;
pub mod harness;
pub mod imgproc;
pub mod integrator;
pub mod kvector;
pub mod math;
pub mod measurement;
pub mod navigation;
pub mod scene;
pub mod selection;

pub use error::{NavError, Result};
