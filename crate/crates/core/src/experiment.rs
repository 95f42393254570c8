//! Seeded end-to-end experiment batches.
//!
//! The full protocol mirrors a two-batch wet-lab validation:
//!
//! 1. Ground truth: noise-free single-population acquisitions provide the
//!    unit-amplitude endmember traces; their ROI means build the unmixing
//!    matrix. These reference traces always use amplitude scale 1, so any
//!    configured amplitude mismatch shows up as estimation bias, not as a
//!    change of reference.
//! 2. Batch A: uniform phantoms across a fraction grid, several replicates
//!    each, unmixed through the ROI to produce the linearity scatter and the
//!    calibration line `est ≈ slope·true + intercept`.
//! 3. Batch B: a seed-disjoint validation batch whose estimates are
//!    corrected by inverting the batch-A line.
//!
//! Every capture's RNG stream derives from `(seed, batch, fraction index,
//! replicate)`, so batches are reproducible and mutually independent.

use crate::error::{Error, Result};
use crate::io::config::ExperimentConfig;
use crate::numerics::LineFit;
use crate::phantom::{
    derive_seed, extract_roi_trace, noiseless_roi_trace, simulate_acquisition, FrameStack,
};
use crate::unmix::{
    apply_calibration, fit_calibration, unmix_stack, unmix_trace, CalibrationCurve,
    EndmemberMatrix, FractionMaps,
};
use serde::{Deserialize, Serialize};

/// Batch tags entering seed derivation.
pub const BATCH_A: u64 = 1;
pub const BATCH_B: u64 = 2;

/// One ROI measurement of one simulated phantom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchPoint {
    pub true_frac: f64,
    pub replicate: usize,
    pub est_frac: f64,
    pub seed: u64,
}

/// Ground-truth endmember matrix from noise-free, unit-amplitude-scale pure
/// phantoms, using the exact f64 signal path (no float32 voxel rounding).
pub fn ground_truth_matrix(cfg: &ExperimentConfig) -> Result<EndmemberMatrix> {
    let mut acq = cfg.acquisition_config(0)?;
    acq.noise_sigma = 0.0;
    let roi = cfg.roi();
    // Reference phantoms are amplitude-matched by construction.
    let pure28 = cfg.uniform_phantom(0.0)?.with_nd56_amplitude_scale(1.0)?;
    let pure56 = cfg.uniform_phantom(1.0)?.with_nd56_amplitude_scale(1.0)?;
    let trace28 = noiseless_roi_trace(&pure28, &acq, &roi)?;
    let trace56 = noiseless_roi_trace(&pure56, &acq, &roi)?;
    EndmemberMatrix::from_traces(&trace28, &trace56)
}

/// Seed for one capture within a batch.
pub fn capture_seed(cfg: &ExperimentConfig, batch: u64, frac_idx: usize, replicate: usize) -> u64 {
    derive_seed(cfg.seed, &[batch, frac_idx as u64, replicate as u64])
}

/// Simulate one uniform phantom capture of a batch.
pub fn simulate_capture(
    cfg: &ExperimentConfig,
    frac56: f64,
    seed: u64,
) -> Result<FrameStack> {
    let phantom = cfg.uniform_phantom(frac56)?;
    let acq = cfg.acquisition_config(seed)?;
    simulate_acquisition(&phantom, &acq)
}

/// Run one batch: for every (fraction, replicate) simulate a capture,
/// extract the ROI trace, and unmix it into an estimated fraction.
pub fn run_batch(
    cfg: &ExperimentConfig,
    em: &EndmemberMatrix,
    fractions: &[f64],
    replicates: usize,
    batch: u64,
) -> Result<Vec<BatchPoint>> {
    let roi = cfg.roi();
    let mut points = Vec::with_capacity(fractions.len() * replicates);
    for (fi, &frac) in fractions.iter().enumerate() {
        for rep in 0..replicates {
            let seed = capture_seed(cfg, batch, fi, rep);
            let stack = simulate_capture(cfg, frac, seed)?;
            let trace = extract_roi_trace(&stack, cfg.phantom.pixel_pitch_mm, &roi)?;
            let result = unmix_trace(em, &trace)?;
            let est = result.frac56.ok_or_else(|| {
                Error::validation(format!(
                    "ROI estimate undefined (no droplet signal) at fraction {frac}"
                ))
            })?;
            points.push(BatchPoint {
                true_frac: frac,
                replicate: rep,
                est_frac: est,
                seed,
            });
        }
    }
    Ok(points)
}

/// Fit the calibration line over a batch's (true, est) points.
pub fn fit_batch(points: &[BatchPoint]) -> Result<CalibrationCurve> {
    let truth: Vec<f64> = points.iter().map(|p| p.true_frac).collect();
    let est: Vec<f64> = points.iter().map(|p| p.est_frac).collect();
    fit_calibration(&truth, &est)
}

/// Mean absolute error of raw estimates against truth.
pub fn mean_abs_error(points: &[BatchPoint]) -> f64 {
    points
        .iter()
        .map(|p| (p.est_frac - p.true_frac).abs())
        .sum::<f64>()
        / points.len() as f64
}

/// A batch-B point with its calibrated estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedPoint {
    pub true_frac: f64,
    pub replicate: usize,
    pub est_frac: f64,
    pub corrected_frac: f64,
}

/// Apply a calibration curve to a batch.
pub fn calibrate_batch(
    points: &[BatchPoint],
    curve: &CalibrationCurve,
) -> Result<Vec<CalibratedPoint>> {
    points
        .iter()
        .map(|p| {
            Ok(CalibratedPoint {
                true_frac: p.true_frac,
                replicate: p.replicate,
                est_frac: p.est_frac,
                corrected_frac: apply_calibration(curve, p.est_frac)?,
            })
        })
        .collect()
}

/// Mean absolute error of calibrated estimates against truth.
pub fn calibrated_mean_abs_error(points: &[CalibratedPoint]) -> f64 {
    points
        .iter()
        .map(|p| (p.corrected_frac - p.true_frac).abs())
        .sum::<f64>()
        / points.len() as f64
}

/// Full two-batch pipeline result.
#[derive(Debug)]
pub struct PipelineResult {
    pub endmembers: EndmemberMatrix,
    pub batch_a: Vec<BatchPoint>,
    pub fit: CalibrationCurve,
    pub batch_b: Vec<CalibratedPoint>,
    pub uncalibrated_mae: f64,
    pub calibrated_mae: f64,
    /// Pixel-wise fraction maps for the first replicate of every batch-B
    /// fraction, paired with the true fraction.
    pub maps: Vec<(f64, FractionMaps)>,
}

/// Summary statistics serialized next to the pipeline outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub fit: LineFit,
    pub uncalibrated_mae: f64,
    pub calibrated_mae: f64,
    pub batch_a_points: usize,
    pub batch_b_points: usize,
}

/// Run the full protocol: ground truth, batch A, calibration fit, batch B
/// with correction, and pixel-wise maps (unless `with_maps` is false).
pub fn run_pipeline(cfg: &ExperimentConfig, with_maps: bool) -> Result<PipelineResult> {
    cfg.validate()?;
    let em = ground_truth_matrix(cfg)?;

    let batch_a = run_batch(
        cfg,
        &em,
        &cfg.experiment.fractions_a,
        cfg.experiment.replicates_a,
        BATCH_A,
    )?;
    let fit = fit_batch(&batch_a)?;
    let uncalibrated_mae = mean_abs_error(&batch_a);

    let batch_b_raw = run_batch(
        cfg,
        &em,
        &cfg.experiment.fractions_b,
        cfg.experiment.replicates_b,
        BATCH_B,
    )?;
    let batch_b = calibrate_batch(&batch_b_raw, &fit)?;
    let calibrated_mae = calibrated_mean_abs_error(&batch_b);

    let mut maps = Vec::new();
    if with_maps {
        for (fi, &frac) in cfg.experiment.fractions_b.iter().enumerate() {
            let seed = capture_seed(cfg, BATCH_B, fi, 0);
            let stack = simulate_capture(cfg, frac, seed)?;
            maps.push((frac, unmix_stack(&em, &stack)?));
        }
    }

    Ok(PipelineResult {
        endmembers: em,
        batch_a,
        fit,
        batch_b,
        uncalibrated_mae,
        calibrated_mae,
        maps,
    })
}

impl PipelineResult {
    pub fn summary(&self) -> PipelineSummary {
        PipelineSummary {
            fit: self.fit.fit,
            uncalibrated_mae: self.uncalibrated_mae,
            calibrated_mae: self.calibrated_mae,
            batch_a_points: self.batch_a.len(),
            batch_b_points: self.batch_b.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Small geometry keeps unit tests fast; the acceptance suite runs the
    /// full-size configuration.
    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::standard();
        cfg.phantom.width = 48;
        cfg.phantom.height = 32;
        cfg.experiment.roi_size_mm = 2.0;
        cfg.experiment.replicates_a = 2;
        cfg.experiment.replicates_b = 2;
        cfg
    }

    #[test]
    fn ground_truth_matrix_shape() {
        let em = ground_truth_matrix(&small_config()).unwrap();
        assert_eq!(em.n_frames(), 16);
        assert_eq!(em.matrix().cols(), 3);
    }

    #[test]
    fn zero_noise_unit_scale_recovers_exactly() {
        let mut cfg = small_config();
        cfg.acquisition.noise_sigma = 0.0;
        cfg.phantom.nd56_amplitude_scale = 1.0;
        cfg.experiment.fractions_a = vec![0.0, 0.3, 0.7, 1.0];
        cfg.experiment.replicates_a = 1;
        let em = ground_truth_matrix(&cfg).unwrap();
        let pts = run_batch(&cfg, &em, &cfg.experiment.fractions_a, 1, BATCH_A).unwrap();
        for p in &pts {
            assert!(
                (p.est_frac - p.true_frac).abs() < 1e-6,
                "frac {} -> {}",
                p.true_frac,
                p.est_frac
            );
        }
    }

    #[test]
    fn amplitude_mismatch_biases_estimates_down() {
        let mut cfg = small_config();
        cfg.acquisition.noise_sigma = 0.0;
        cfg.phantom.nd56_amplitude_scale = 0.76;
        cfg.experiment.fractions_a = vec![0.5];
        let em = ground_truth_matrix(&cfg).unwrap();
        let pts = run_batch(&cfg, &em, &[0.5], 1, BATCH_A).unwrap();
        assert!((pts[0].est_frac - 0.38).abs() < 1e-6, "got {}", pts[0].est_frac);
    }

    #[test]
    fn batch_seeds_are_disjoint_across_batches() {
        let cfg = small_config();
        let a = capture_seed(&cfg, BATCH_A, 0, 0);
        let b = capture_seed(&cfg, BATCH_B, 0, 0);
        assert_ne!(a, b);
    }

    #[test]
    fn pipeline_summary_is_coherent() {
        let mut cfg = small_config();
        cfg.acquisition.noise_sigma = 0.0;
        cfg.experiment.fractions_a = vec![0.0, 0.5, 1.0];
        cfg.experiment.fractions_b = vec![0.25, 0.75];
        let result = run_pipeline(&cfg, false).unwrap();
        let summary = result.summary();
        assert_eq!(summary.batch_a_points, 6);
        assert_eq!(summary.batch_b_points, 4);
        assert!((summary.fit.slope - 1.0).abs() < 1e-6);
        assert!(summary.calibrated_mae < 1e-6);
    }
}
