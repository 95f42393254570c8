//! Multiplex nanodroplet ultrasound imaging toolkit.
//!
//! Two perfluorocarbon nanodroplet populations respond differently to the
//! same focused-ultrasound (FUS) activation pulse: a low-boiling-point
//! population vaporizes once and its signal keeps growing, while a
//! high-boiling-point population vaporizes and recondenses at every pulse.
//! This crate implements the computational pipeline that turns those two
//! temporal signatures into per-pixel relative-concentration images:
//!
//! - [`dynamics`] — acquisition schedules and parametric endmember models,
//!   sampled into signal matrices.
//! - [`numerics`] — dense kernels: the product-of-singular-values
//!   differentiability metric, Lawson–Hanson nonnegative least squares, and
//!   ordinary least-squares line fits.
//! - [`design`] — acquisition-sequence optimization over pulse count and
//!   spacing, plus greedy frame selection.
//! - [`phantom`] — synthetic mixture phantoms and simulated frame-stack
//!   acquisition with focal weighting and additive noise.
//! - [`unmix`] — endmember-matrix construction, ROI and pixel-wise NNLS
//!   unmixing, and linear calibration.
//! - [`experiment`] — seeded end-to-end batches: linearity scatter,
//!   calibration fit, and validation batches.
//! - [`io`] — file formats (FRS1 stacks, CSV, PGM/PPM, JSON configs) and run
//!   manifests with checksums.
//!
//! All core types are immutable after construction and all operations are
//! pure, so everything is safe to use from concurrent contexts; the pixel
//! loops in [`phantom`] and [`unmix`] parallelize internally with results
//! independent of the thread schedule.

pub mod design;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod io;
pub mod numerics;
pub mod phantom;
pub mod unmix;

pub use error::{Error, Result};
