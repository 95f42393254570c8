//! Endmember-matrix construction, NNLS unmixing, and linear calibration.
//!
//! The endmember matrix `A` is frames-by-3 with a fixed column order: the
//! one-shot population, the recondensing population, and an all-ones
//! background column. The two signal columns are the measured ground-truth
//! traces normalized to unit peak; the peak values are kept as the
//! *normalization record*. Unmixing solves `nnls(A, y)` and divides each
//! coefficient by its column's recorded peak, reporting concentrations in
//! the units of the original traces. Without that rescaling the relative
//! fraction would be distorted whenever the two traces peak at different
//! amplitudes.
//!
//! The relative concentration of the recondensing population is
//! `frac56 = c56 / (c28 + c56)`, left undefined (flagged) when both droplet
//! concentrations are zero — reporting a droplet ratio where no droplet
//! signal exists would be meaningless.

use crate::error::{ensure_finite, Error, Result};
use crate::numerics::{linear_fit, nnls, DenseMatrix, LineFit};
use crate::phantom::FrameStack;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Slopes smaller than this are treated as zero when inverting a
/// calibration curve.
const MIN_CALIBRATION_SLOPE: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Endmember matrix
// ---------------------------------------------------------------------------

/// Frames-by-3 unmixing matrix: unit-peak signal columns for the two droplet
/// populations plus an all-ones background column, with the per-column
/// normalization record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndmemberMatrix {
    matrix: DenseMatrix,
    /// Peak amplitude divided out of each column (1 for the background).
    normalization: [f64; 3],
}

impl EndmemberMatrix {
    /// Build from measured single-population traces. Each trace is
    /// normalized to unit peak; a zero (or negative-peak) trace cannot be
    /// normalized and is rejected.
    pub fn from_traces(trace28: &[f64], trace56: &[f64]) -> Result<Self> {
        if trace28.len() != trace56.len() {
            return Err(Error::validation(format!(
                "trace lengths differ: {} vs {}",
                trace28.len(),
                trace56.len()
            )));
        }
        if trace28.len() < 3 {
            return Err(Error::validation(
                "endmember matrix needs at least 3 frames",
            ));
        }
        ensure_finite(trace28, "trace28")?;
        ensure_finite(trace56, "trace56")?;
        if trace28.iter().chain(trace56).any(|&v| v < 0.0) {
            return Err(Error::validation("traces must be nonnegative"));
        }
        let peak28 = trace28.iter().cloned().fold(0.0f64, f64::max);
        let peak56 = trace56.iter().cloned().fold(0.0f64, f64::max);
        if peak28 <= 0.0 || peak56 <= 0.0 {
            return Err(Error::validation(
                "cannot normalize a zero trace to unit peak",
            ));
        }
        let n = trace28.len();
        let mut data = Vec::with_capacity(n * 3);
        for i in 0..n {
            data.push(trace28[i] / peak28);
            data.push(trace56[i] / peak56);
            data.push(1.0);
        }
        Ok(EndmemberMatrix {
            matrix: DenseMatrix::new(n, 3, data)?,
            normalization: [peak28, peak56, 1.0],
        })
    }

    /// Adopt an existing frames-by-3 matrix (e.g. read from CSV) whose
    /// columns are already in concentration units: the normalization record
    /// is identity. The background column must be all ones.
    pub fn from_matrix(matrix: DenseMatrix) -> Result<Self> {
        Self::from_parts(matrix, [1.0, 1.0, 1.0])
    }

    /// Adopt a matrix together with its normalization record.
    pub fn from_parts(matrix: DenseMatrix, normalization: [f64; 3]) -> Result<Self> {
        if matrix.cols() != 3 {
            return Err(Error::validation(format!(
                "endmember matrix must have 3 columns, got {}",
                matrix.cols()
            )));
        }
        if matrix.rows() < 3 {
            return Err(Error::validation(
                "endmember matrix needs at least 3 frames",
            ));
        }
        if matrix.data().iter().any(|&v| v < 0.0) {
            return Err(Error::validation("endmember matrix entries must be >= 0"));
        }
        if (0..matrix.rows()).any(|r| matrix.get(r, 2) != 1.0) {
            return Err(Error::validation(
                "background column must consist of all ones",
            ));
        }
        if normalization.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
            return Err(Error::validation("normalization record must be > 0"));
        }
        Ok(EndmemberMatrix {
            matrix,
            normalization,
        })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn normalization(&self) -> [f64; 3] {
        self.normalization
    }

    pub fn n_frames(&self) -> usize {
        self.matrix.rows()
    }
}

// ---------------------------------------------------------------------------
// Trace unmixing
// ---------------------------------------------------------------------------

/// Nonnegative contributions of the three endmembers to one measured trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnmixResult {
    /// One-shot population concentration (units of its ground-truth trace).
    pub c28: f64,
    /// Recondensing population concentration.
    pub c56: f64,
    /// Background contribution.
    pub cbg: f64,
    /// `||A·c − y||₂` of the underlying NNLS solve.
    pub residual_norm: f64,
    /// `c56 / (c28 + c56)`, or `None` when no droplet signal was found.
    pub frac56: Option<f64>,
}

/// Unmix one measured per-frame amplitude vector.
pub fn unmix_trace(em: &EndmemberMatrix, y: &[f64]) -> Result<UnmixResult> {
    if y.len() != em.n_frames() {
        return Err(Error::validation(format!(
            "measurement length {} does not match {} matrix frames",
            y.len(),
            em.n_frames()
        )));
    }
    let sol = nnls(em.matrix(), y)?;
    let norm = em.normalization();
    let c28 = sol.coefficients[0] / norm[0];
    let c56 = sol.coefficients[1] / norm[1];
    let cbg = sol.coefficients[2] / norm[2];
    let frac56 = if c28 + c56 > 0.0 {
        Some(c56 / (c28 + c56))
    } else {
        None
    };
    Ok(UnmixResult {
        c28,
        c56,
        cbg,
        residual_norm: sol.residual_norm,
        frac56,
    })
}

// ---------------------------------------------------------------------------
// Pixel-wise unmixing
// ---------------------------------------------------------------------------

/// Per-pixel concentration and fraction maps, row-major. Pixels whose
/// droplet fraction is undefined carry `NaN` in `frac56` and `false` in
/// `defined`.
#[derive(Debug, Clone)]
pub struct FractionMaps {
    pub width: usize,
    pub height: usize,
    pub c28: Vec<f64>,
    pub c56: Vec<f64>,
    pub cbg: Vec<f64>,
    pub frac56: Vec<f64>,
    pub defined: Vec<bool>,
}

/// Unmix every pixel of a frame stack independently.
pub fn unmix_stack(em: &EndmemberMatrix, stack: &FrameStack) -> Result<FractionMaps> {
    if stack.n_frames() != em.n_frames() {
        return Err(Error::validation(format!(
            "stack has {} frames but endmember matrix expects {}",
            stack.n_frames(),
            em.n_frames()
        )));
    }
    let n = stack.width() * stack.height();
    let results: Vec<UnmixResult> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let x = idx % stack.width();
            let y = idx / stack.width();
            unmix_trace(em, &stack.pixel_trace(x, y))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut maps = FractionMaps {
        width: stack.width(),
        height: stack.height(),
        c28: Vec::with_capacity(n),
        c56: Vec::with_capacity(n),
        cbg: Vec::with_capacity(n),
        frac56: Vec::with_capacity(n),
        defined: Vec::with_capacity(n),
    };
    for r in results {
        maps.c28.push(r.c28);
        maps.c56.push(r.c56);
        maps.cbg.push(r.cbg);
        match r.frac56 {
            Some(f) => {
                maps.frac56.push(f);
                maps.defined.push(true);
            }
            None => {
                maps.frac56.push(f64::NAN);
                maps.defined.push(false);
            }
        }
    }
    Ok(maps)
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

/// Linear map from true fraction to estimated fraction, fitted on a
/// ground-truth batch and inverted to correct later estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub fit: LineFit,
}

/// Fit the calibration curve `est ≈ slope · true + intercept`.
pub fn fit_calibration(true_fracs: &[f64], est_fracs: &[f64]) -> Result<CalibrationCurve> {
    let fit = linear_fit(true_fracs, est_fracs)?;
    Ok(CalibrationCurve { fit })
}

/// Invert the calibration curve: `corrected = (est − intercept) / slope`,
/// clamped to `[0, 1]`. A zero slope has no inverse.
pub fn apply_calibration(curve: &CalibrationCurve, est_frac: f64) -> Result<f64> {
    if curve.fit.slope.abs() < MIN_CALIBRATION_SLOPE {
        return Err(Error::validation(
            "calibration curve has zero slope and cannot be inverted",
        ));
    }
    if !est_frac.is_finite() {
        return Err(Error::validation(format!(
            "estimated fraction must be finite, got {est_frac}"
        )));
    }
    Ok(((est_frac - curve.fit.intercept) / curve.fit.slope).clamp(0.0, 1.0))
}
