//! File formats and run bookkeeping.
//!
//! - [`csv`] — matrices, traces, and scatter tables. Floats are written in
//!   scientific notation with 17 significant digits, which round-trips f64
//!   exactly.
//! - [`frs1`] — the FRS1 binary frame-stack format.
//! - [`raster`] — 8-bit PGM/PPM map exports.
//! - [`config`] — the versioned JSON experiment configuration with all
//!   defaults materialized.
//! - [`manifest`] — run manifests listing every emitted file with its
//!   SHA-256 checksum.

pub mod config;
pub mod csv;
pub mod frs1;
pub mod manifest;
pub mod raster;
