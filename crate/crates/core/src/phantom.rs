//! Synthetic mixture phantoms and simulated frame-stack acquisition.
//!
//! A [`MixturePhantom`] holds per-pixel droplet fractions plus two global
//! scene scales; an [`AcquisitionConfig`] holds the pulse sequence, the three
//! endmember models, the Gaussian focal weight of the activation beam, and
//! the noise level. [`simulate_acquisition`] combines them into a
//! [`FrameStack`] of float32 amplitudes.
//!
//! Per-pixel voxel model (before clamping at zero and float32 rounding):
//!
//! ```text
//! v(x, y, t) = w(x,y) · [e28(x,y) · s28(t) + e56(x,y) · s56(t)]
//!            + background_level · bg(t) + n(x, y, t)
//! ```
//!
//! where `w` is the focal weight (peak 1 at the focal center), `s28`, `s56`,
//! `bg` are the sampled endmember traces, and `n` is i.i.d. Gaussian noise.
//! The effective fractions implement the population's amplitude scale:
//!
//! ```text
//! e56 = nd56_amplitude_scale · frac56
//! e28 = frac28 + (1 − nd56_amplitude_scale) · frac56
//! ```
//!
//! i.e. the repeatable (recondensing) response of the second population is
//! scaled down, and the deficit vaporizes without recondensing, following
//! the persistent one-shot signature instead. At scale 1 this reduces to
//! plain linear mixing. The net signal stays linear in `(frac28, frac56)`,
//! which keeps noise-free unmixing exact.
//!
//! Noise streams are derived per pixel from `(seed, x, y)`, so simulated
//! stacks are bit-identical regardless of how the pixel loop is scheduled.

use crate::dynamics::{sample_endmember, EndmemberModel, PulseSequence};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Seed derivation
// ---------------------------------------------------------------------------

/// SplitMix64 step; the standard 64-bit finalizer-based generator.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a path of indices. Used to give
/// every (batch, fraction, replicate) and every pixel its own stream.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut state = base;
    let mut out = splitmix64(&mut state);
    for &p in path {
        state = out ^ p;
        out = splitmix64(&mut state);
    }
    out
}

// ---------------------------------------------------------------------------
// Phantom
// ---------------------------------------------------------------------------

/// A virtual mixture phantom: per-pixel fractions of the two droplet
/// populations plus global scene scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePhantom {
    width: usize,
    height: usize,
    pixel_pitch_mm: f64,
    frac28: Vec<f64>,
    frac56: Vec<f64>,
    /// Amplitude scale of the recondensing population relative to its
    /// unit-amplitude reference signature, in `[0, 1]`. The deficit behaves
    /// as a persistent (one-shot) component; see the module docs.
    nd56_amplitude_scale: f64,
    /// Multiplier on the background endmember trace.
    background_level: f64,
}

impl MixturePhantom {
    /// Per-pixel fraction maps in row-major order. Each fraction must lie in
    /// `[0, 1]` and the per-pixel sum must not exceed 1.
    pub fn new(
        width: usize,
        height: usize,
        pixel_pitch_mm: f64,
        frac28: Vec<f64>,
        frac56: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation(format!(
                "phantom dimensions must be >= 1, got {width}x{height}"
            )));
        }
        if !(pixel_pitch_mm.is_finite() && pixel_pitch_mm > 0.0) {
            return Err(Error::validation(format!(
                "pixel pitch must be > 0 mm, got {pixel_pitch_mm}"
            )));
        }
        let n = width * height;
        if frac28.len() != n || frac56.len() != n {
            return Err(Error::validation(format!(
                "fraction maps must hold {n} pixels, got {} and {}",
                frac28.len(),
                frac56.len()
            )));
        }
        for (a, b) in frac28.iter().zip(&frac56) {
            if !(a.is_finite() && (0.0..=1.0).contains(a))
                || !(b.is_finite() && (0.0..=1.0).contains(b))
            {
                return Err(Error::validation("pixel fractions must lie in [0, 1]"));
            }
            if a + b > 1.0 + 1e-9 {
                return Err(Error::validation(format!(
                    "pixel fractions sum to {} > 1",
                    a + b
                )));
            }
        }
        Ok(MixturePhantom {
            width,
            height,
            pixel_pitch_mm,
            frac28,
            frac56,
            nd56_amplitude_scale: 1.0,
            background_level: 1.0,
        })
    }

    /// Homogeneous phantom: every pixel holds `frac56` of the recondensing
    /// population and `1 − frac56` of the one-shot population.
    pub fn uniform(frac56: f64, width: usize, height: usize, pixel_pitch_mm: f64) -> Result<Self> {
        if !(frac56.is_finite() && (0.0..=1.0).contains(&frac56)) {
            return Err(Error::validation(format!(
                "frac56 must lie in [0, 1], got {frac56}"
            )));
        }
        let n = width * height;
        MixturePhantom::new(
            width,
            height,
            pixel_pitch_mm,
            vec![1.0 - frac56; n],
            vec![frac56; n],
        )
    }

    pub fn with_nd56_amplitude_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && (0.0..=1.0).contains(&scale)) {
            return Err(Error::validation(format!(
                "nd56_amplitude_scale must lie in [0, 1], got {scale}"
            )));
        }
        self.nd56_amplitude_scale = scale;
        Ok(self)
    }

    pub fn with_background_level(mut self, level: f64) -> Result<Self> {
        if !(level.is_finite() && level >= 0.0) {
            return Err(Error::validation(format!(
                "background_level must be >= 0, got {level}"
            )));
        }
        self.background_level = level;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_pitch_mm(&self) -> f64 {
        self.pixel_pitch_mm
    }

    pub fn frac28(&self) -> &[f64] {
        &self.frac28
    }

    pub fn frac56(&self) -> &[f64] {
        &self.frac56
    }

    pub fn nd56_amplitude_scale(&self) -> f64 {
        self.nd56_amplitude_scale
    }

    pub fn background_level(&self) -> f64 {
        self.background_level
    }
}

// ---------------------------------------------------------------------------
// Acquisition configuration
// ---------------------------------------------------------------------------

/// Everything the simulator needs besides the phantom: schedule, endmember
/// dynamics, focal geometry, noise, and the RNG seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub sequence: PulseSequence,
    /// Endmember dynamics in fixed order: one-shot, recondensing, background.
    pub models: [EndmemberModel; 3],
    /// Focal-spot center in pixel coordinates (may be fractional). `None`
    /// centers it on the image.
    pub focal_center_px: Option<(f64, f64)>,
    /// Gaussian focal weight standard deviation in millimetres.
    pub focal_sigma_mm: f64,
    /// Additive Gaussian noise standard deviation (dimensionless amplitude).
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        for m in &self.models {
            m.validate()?;
        }
        if !(self.focal_sigma_mm.is_finite() && self.focal_sigma_mm > 0.0) {
            return Err(Error::validation(format!(
                "focal_sigma_mm must be > 0, got {}",
                self.focal_sigma_mm
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::validation(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if let Some((cx, cy)) = self.focal_center_px {
            if !cx.is_finite() || !cy.is_finite() {
                return Err(Error::validation("focal center must be finite"));
            }
        }
        Ok(())
    }

    fn focal_center_for(&self, width: usize, height: usize) -> (f64, f64) {
        self.focal_center_px
            .unwrap_or(((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0))
    }
}

/// Gaussian focal weight at a pixel, peak 1 at the focal center.
fn focal_weight(x: usize, y: usize, center: (f64, f64), sigma_mm: f64, pitch_mm: f64) -> f64 {
    let dx_mm = (x as f64 - center.0) * pitch_mm;
    let dy_mm = (y as f64 - center.1) * pitch_mm;
    (-(dx_mm * dx_mm + dy_mm * dy_mm) / (2.0 * sigma_mm * sigma_mm)).exp()
}

// ---------------------------------------------------------------------------
// Frame stacks
// ---------------------------------------------------------------------------

/// Simulated per-pixel ultrasound amplitudes over the frames of one
/// acquisition. Voxels are float32, frame-major then row-major, and
/// nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    width: usize,
    height: usize,
    frame_times_s: Vec<f64>,
    voxels: Vec<f32>,
}

impl FrameStack {
    pub fn new(
        width: usize,
        height: usize,
        frame_times_s: Vec<f64>,
        voxels: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || frame_times_s.is_empty() {
            return Err(Error::validation("frame stack dimensions must be >= 1"));
        }
        if voxels.len() != width * height * frame_times_s.len() {
            return Err(Error::validation(format!(
                "voxel count {} does not match {width}x{height}x{}",
                voxels.len(),
                frame_times_s.len()
            )));
        }
        if voxels.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::validation(
                "voxel amplitudes must be finite and >= 0",
            ));
        }
        Ok(FrameStack {
            width,
            height,
            frame_times_s,
            voxels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_frames(&self) -> usize {
        self.frame_times_s.len()
    }

    pub fn frame_times_s(&self) -> &[f64] {
        &self.frame_times_s
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn get(&self, x: usize, y: usize, frame: usize) -> f32 {
        self.voxels[frame * self.width * self.height + y * self.width + x]
    }

    /// One pixel's amplitude across frames, widened to f64.
    pub fn pixel_trace(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.n_frames())
            .map(|f| self.get(x, y, f) as f64)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Sampled endmember traces for a phantom/config pair plus derived per-pixel
/// signal evaluation. Shared by the f32 simulator and the f64 helpers.
struct SignalModel {
    s28: Vec<f64>,
    s56: Vec<f64>,
    bg: Vec<f64>,
    center: (f64, f64),
}

impl SignalModel {
    fn build(ph: &MixturePhantom, cfg: &AcquisitionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(SignalModel {
            s28: sample_endmember(&cfg.models[0], &cfg.sequence)?,
            s56: sample_endmember(&cfg.models[1], &cfg.sequence)?,
            bg: sample_endmember(&cfg.models[2], &cfg.sequence)?,
            center: cfg.focal_center_for(ph.width, ph.height),
        })
    }

    /// Noise-free signal at pixel (x, y) and frame index, in f64.
    fn value(&self, ph: &MixturePhantom, cfg: &AcquisitionConfig, x: usize, y: usize, f: usize) -> f64 {
        let idx = y * ph.width + x;
        let eta = ph.nd56_amplitude_scale;
        let e56 = eta * ph.frac56[idx];
        let e28 = ph.frac28[idx] + (1.0 - eta) * ph.frac56[idx];
        let w = focal_weight(x, y, self.center, cfg.focal_sigma_mm, ph.pixel_pitch_mm);
        w * (e28 * self.s28[f] + e56 * self.s56[f]) + ph.background_level * self.bg[f]
    }
}

/// Simulate one acquisition of a phantom into a frame stack.
///
/// Deterministic for a fixed `cfg.rng_seed`, independent of the parallel
/// schedule: every pixel's noise stream is derived from `(seed, x, y)`.
/// Negative noisy amplitudes clamp to zero.
pub fn simulate_acquisition(ph: &MixturePhantom, cfg: &AcquisitionConfig) -> Result<FrameStack> {
    let model = SignalModel::build(ph, cfg)?;
    let n_frames = model.s28.len();
    let n_pixels = ph.width * ph.height;

    // Pixel-major scratch (each pixel's frames contiguous) so the pixel loop
    // parallelizes cleanly; transposed to frame-major below.
    let mut pixel_major = vec![0.0f32; n_pixels * n_frames];
    let noise = if cfg.noise_sigma > 0.0 {
        Some(Normal::new(0.0, cfg.noise_sigma).expect("validated sigma"))
    } else {
        None
    };

    pixel_major
        .par_chunks_mut(n_frames)
        .enumerate()
        .for_each(|(idx, out)| {
            let x = idx % ph.width;
            let y = idx / ph.width;
            match &noise {
                Some(normal) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                        cfg.rng_seed,
                        &[x as u64, y as u64],
                    ));
                    for (f, slot) in out.iter_mut().enumerate() {
                        let v = model.value(ph, cfg, x, y, f) + normal.sample(&mut rng);
                        *slot = v.max(0.0) as f32;
                    }
                }
                None => {
                    for (f, slot) in out.iter_mut().enumerate() {
                        *slot = model.value(ph, cfg, x, y, f).max(0.0) as f32;
                    }
                }
            }
        });

    let mut voxels = vec![0.0f32; n_pixels * n_frames];
    for idx in 0..n_pixels {
        for f in 0..n_frames {
            voxels[f * n_pixels + idx] = pixel_major[idx * n_frames + f];
        }
    }

    FrameStack::new(ph.width, ph.height, cfg.sequence.frame_times(), voxels)
}

/// Noise-free per-frame signal at one pixel, in full f64 precision (no
/// float32 rounding). The simulation is linear in the fraction maps, and this
/// path preserves that linearity to machine precision.
pub fn noiseless_pixel_trace(
    ph: &MixturePhantom,
    cfg: &AcquisitionConfig,
    x: usize,
    y: usize,
) -> Result<Vec<f64>> {
    if x >= ph.width || y >= ph.height {
        return Err(Error::validation(format!(
            "pixel ({x}, {y}) outside {}x{}",
            ph.width, ph.height
        )));
    }
    let model = SignalModel::build(ph, cfg)?;
    Ok((0..model.s28.len())
        .map(|f| model.value(ph, cfg, x, y, f))
        .collect())
}

// ---------------------------------------------------------------------------
// Regions of interest
// ---------------------------------------------------------------------------

/// Axis-aligned rectangle in millimetres, centered on a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiMm {
    pub center_x_mm: f64,
    pub center_y_mm: f64,
    pub width_mm: f64,
    pub height_mm: f64,
}

impl RoiMm {
    pub fn square(center_x_mm: f64, center_y_mm: f64, side_mm: f64) -> Self {
        RoiMm {
            center_x_mm,
            center_y_mm,
            width_mm: side_mm,
            height_mm: side_mm,
        }
    }
}

/// Pixels whose centers fall inside the rectangle. Pixel (x, y) has its
/// center at `((x + 0.5) · pitch, (y + 0.5) · pitch)`.
fn roi_pixels(width: usize, height: usize, pitch_mm: f64, roi: &RoiMm) -> Result<Vec<(usize, usize)>> {
    if !(roi.width_mm > 0.0 && roi.height_mm > 0.0) {
        return Err(Error::validation("ROI side lengths must be > 0"));
    }
    let x_lo = roi.center_x_mm - roi.width_mm / 2.0;
    let x_hi = roi.center_x_mm + roi.width_mm / 2.0;
    let y_lo = roi.center_y_mm - roi.height_mm / 2.0;
    let y_hi = roi.center_y_mm + roi.height_mm / 2.0;
    let mut pixels = Vec::new();
    for y in 0..height {
        let cy = (y as f64 + 0.5) * pitch_mm;
        if cy < y_lo || cy > y_hi {
            continue;
        }
        for x in 0..width {
            let cx = (x as f64 + 0.5) * pitch_mm;
            if cx >= x_lo && cx <= x_hi {
                pixels.push((x, y));
            }
        }
    }
    if pixels.is_empty() {
        return Err(Error::validation(
            "ROI does not contain any pixel center",
        ));
    }
    Ok(pixels)
}

/// Per-frame arithmetic mean of the voxels whose pixel centers lie inside
/// the ROI.
pub fn extract_roi_trace(stack: &FrameStack, pitch_mm: f64, roi: &RoiMm) -> Result<Vec<f64>> {
    if !(pitch_mm.is_finite() && pitch_mm > 0.0) {
        return Err(Error::validation("pixel pitch must be > 0 mm"));
    }
    let pixels = roi_pixels(stack.width, stack.height, pitch_mm, roi)?;
    let inv = 1.0 / pixels.len() as f64;
    Ok((0..stack.n_frames())
        .map(|f| {
            pixels
                .iter()
                .map(|&(x, y)| stack.get(x, y, f) as f64)
                .sum::<f64>()
                * inv
        })
        .collect())
}

/// Noise-free ROI-mean trace in f64, bypassing float32 voxel storage.
pub fn noiseless_roi_trace(
    ph: &MixturePhantom,
    cfg: &AcquisitionConfig,
    roi: &RoiMm,
) -> Result<Vec<f64>> {
    let model = SignalModel::build(ph, cfg)?;
    let pixels = roi_pixels(ph.width, ph.height, ph.pixel_pitch_mm, roi)?;
    let inv = 1.0 / pixels.len() as f64;
    Ok((0..model.s28.len())
        .map(|f| {
            pixels
                .iter()
                .map(|&(x, y)| model.value(ph, cfg, x, y, f))
                .sum::<f64>()
                * inv
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::standard_sequence;
    use crate::dynamics::default_models;

    fn test_config(noise_sigma: f64, seed: u64) -> AcquisitionConfig {
        let models = default_models();
        AcquisitionConfig {
            sequence: standard_sequence(),
            models: [models[0].1, models[1].1, models[2].1],
            focal_center_px: None,
            focal_sigma_mm: 1.5,
            noise_sigma,
            rng_seed: seed,
        }
    }

    #[test]
    fn uniform_phantom_fractions() {
        let ph = MixturePhantom::uniform(0.0, 4, 3, 0.1).unwrap();
        assert!(ph.frac28().iter().all(|&v| v == 1.0));
        assert!(ph.frac56().iter().all(|&v| v == 0.0));
        let ph = MixturePhantom::uniform(1.0, 4, 3, 0.1).unwrap();
        assert!(ph.frac28().iter().all(|&v| v == 0.0));
        assert!(ph.frac56().iter().all(|&v| v == 1.0));
        let ph = MixturePhantom::uniform(0.5, 4, 3, 0.1).unwrap();
        assert!(ph.frac28().iter().all(|&v| v == 0.5));
        assert!(ph.frac56().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn uniform_phantom_rejects_out_of_range() {
        assert!(MixturePhantom::uniform(-0.1, 4, 3, 0.1).is_err());
        assert!(MixturePhantom::uniform(1.1, 4, 3, 0.1).is_err());
        assert!(MixturePhantom::uniform(0.5, 0, 3, 0.1).is_err());
    }

    #[test]
    fn focal_weight_peaks_at_center() {
        // Integer center so the peak lands exactly on a pixel.
        let mut cfg = test_config(0.0, 0);
        cfg.focal_center_px = Some((8.0, 8.0));
        let ph = MixturePhantom::uniform(0.5, 17, 17, 0.1).unwrap();
        let w_center = focal_weight(8, 8, (8.0, 8.0), cfg.focal_sigma_mm, 0.1);
        assert_eq!(w_center, 1.0);
        for (x, y) in [(0usize, 0usize), (16, 3), (5, 12)] {
            let w = focal_weight(x, y, (8.0, 8.0), cfg.focal_sigma_mm, 0.1);
            assert!(w > 0.0 && w < 1.0);
        }
        let _ = ph;
    }

    #[test]
    fn center_trace_is_pure_population_plus_background() {
        let mut cfg = test_config(0.0, 0);
        cfg.focal_center_px = Some((8.0, 8.0));
        let ph = MixturePhantom::uniform(0.0, 17, 17, 0.1).unwrap();
        let stack = simulate_acquisition(&ph, &cfg).unwrap();
        let s28 = sample_endmember(&cfg.models[0], &cfg.sequence).unwrap();
        let bg = sample_endmember(&cfg.models[2], &cfg.sequence).unwrap();
        for (f, v) in stack.pixel_trace(8, 8).iter().enumerate() {
            assert!((v - (s28[f] + bg[f])).abs() < 1e-6, "frame {f}");
        }
    }

    #[test]
    fn half_mixture_center_trace_is_linear_blend() {
        let mut cfg = test_config(0.0, 0);
        cfg.focal_center_px = Some((8.0, 8.0));
        let ph = MixturePhantom::uniform(0.5, 17, 17, 0.1).unwrap();
        let stack = simulate_acquisition(&ph, &cfg).unwrap();
        let s28 = sample_endmember(&cfg.models[0], &cfg.sequence).unwrap();
        let s56 = sample_endmember(&cfg.models[1], &cfg.sequence).unwrap();
        let bg = sample_endmember(&cfg.models[2], &cfg.sequence).unwrap();
        for (f, v) in stack.pixel_trace(8, 8).iter().enumerate() {
            let expect = 0.5 * s28[f] + 0.5 * s56[f] + bg[f];
            assert!((v - expect).abs() < 1e-6, "frame {f}");
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = test_config(0.05, 42);
        let ph = MixturePhantom::uniform(0.3, 32, 16, 0.1).unwrap();
        let a = simulate_acquisition(&ph, &cfg).unwrap();
        let b = simulate_acquisition(&ph, &cfg).unwrap();
        assert_eq!(a.voxels(), b.voxels());
        let cfg2 = test_config(0.05, 43);
        let c = simulate_acquisition(&ph, &cfg2).unwrap();
        assert_ne!(a.voxels(), c.voxels());
    }

    #[test]
    fn f64_trace_linearity_in_fraction() {
        let cfg = test_config(0.0, 0);
        let pure28 = MixturePhantom::uniform(0.0, 9, 9, 0.1).unwrap();
        let pure56 = MixturePhantom::uniform(1.0, 9, 9, 0.1).unwrap();
        for &alpha in &[0.1, 0.25, 0.5, 0.75, 0.9] {
            let mix = MixturePhantom::uniform(alpha, 9, 9, 0.1).unwrap();
            let t_mix = noiseless_pixel_trace(&mix, &cfg, 4, 4).unwrap();
            let t28 = noiseless_pixel_trace(&pure28, &cfg, 4, 4).unwrap();
            let t56 = noiseless_pixel_trace(&pure56, &cfg, 4, 4).unwrap();
            for f in 0..t_mix.len() {
                let blend = alpha * t56[f] + (1.0 - alpha) * t28[f];
                assert!(
                    (t_mix[f] - blend).abs() < 1e-12,
                    "alpha {alpha} frame {f}: {} vs {}",
                    t_mix[f],
                    blend
                );
            }
        }
    }

    #[test]
    fn amplitude_scale_redirects_deficit_to_persistent_component() {
        let cfg = test_config(0.0, 0);
        let ph = MixturePhantom::uniform(1.0, 9, 9, 0.1)
            .unwrap()
            .with_nd56_amplitude_scale(0.76)
            .unwrap();
        let t = noiseless_pixel_trace(&ph, &cfg, 4, 4).unwrap();
        let s28 = sample_endmember(&cfg.models[0], &cfg.sequence).unwrap();
        let s56 = sample_endmember(&cfg.models[1], &cfg.sequence).unwrap();
        let bg = sample_endmember(&cfg.models[2], &cfg.sequence).unwrap();
        let w = focal_weight(4, 4, (4.0, 4.0), cfg.focal_sigma_mm, 0.1);
        for f in 0..t.len() {
            let expect = w * (0.24 * s28[f] + 0.76 * s56[f]) + bg[f];
            assert!((t[f] - expect).abs() < 1e-12, "frame {f}");
        }
    }

    #[test]
    fn noise_std_matches_sigma() {
        // >= 1e5 voxels: 128 x 64 x 16 frames.
        let sigma = 0.05;
        let cfg = test_config(sigma, 7);
        let ph = MixturePhantom::uniform(0.5, 128, 64, 0.1).unwrap();
        let noisy = simulate_acquisition(&ph, &cfg).unwrap();
        let clean = simulate_acquisition(&ph, &test_config(0.0, 7)).unwrap();
        let diffs: Vec<f64> = noisy
            .voxels()
            .iter()
            .zip(clean.voxels())
            .map(|(a, b)| (*a - *b) as f64)
            .collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!(
            (std - sigma).abs() / sigma < 0.05,
            "std {std} vs sigma {sigma}"
        );
    }

    #[test]
    fn roi_single_pixel_matches_pixel_trace() {
        let cfg = test_config(0.0, 0);
        let ph = MixturePhantom::uniform(0.4, 9, 9, 0.1).unwrap();
        let stack = simulate_acquisition(&ph, &cfg).unwrap();
        // ROI capturing exactly pixel (4, 4)'s center.
        let roi = RoiMm::square(0.45, 0.45, 0.05);
        let trace = extract_roi_trace(&stack, 0.1, &roi).unwrap();
        let expect = stack.pixel_trace(4, 4);
        for (a, b) in trace.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn roi_mean_of_constant_field_is_roi_size_invariant() {
        // Large focal sigma makes the field effectively uniform.
        let mut cfg = test_config(0.0, 0);
        cfg.focal_sigma_mm = 1e6;
        let ph = MixturePhantom::uniform(0.5, 16, 16, 0.1).unwrap();
        let stack = simulate_acquisition(&ph, &cfg).unwrap();
        let small = extract_roi_trace(&stack, 0.1, &RoiMm::square(0.8, 0.8, 0.3)).unwrap();
        let large = extract_roi_trace(&stack, 0.1, &RoiMm::square(0.8, 0.8, 1.2)).unwrap();
        for (a, b) in small.iter().zip(&large) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn roi_outside_image_is_rejected() {
        let cfg = test_config(0.0, 0);
        let ph = MixturePhantom::uniform(0.5, 8, 8, 0.1).unwrap();
        let stack = simulate_acquisition(&ph, &cfg).unwrap();
        assert!(extract_roi_trace(&stack, 0.1, &RoiMm::square(5.0, 5.0, 0.2)).is_err());
    }

    #[test]
    fn standard_roi_trace_has_sixteen_samples() {
        let cfg = test_config(0.0, 0);
        let ph = MixturePhantom::uniform(0.5, 128, 64, 0.1).unwrap();
        let stack = simulate_acquisition(&ph, &cfg).unwrap();
        let roi = RoiMm::square(6.4, 3.2, 3.9);
        let trace = extract_roi_trace(&stack, 0.1, &roi).unwrap();
        assert_eq!(trace.len(), 16);
    }

    #[test]
    fn derive_seed_is_stable_and_path_sensitive() {
        let a = derive_seed(7, &[1, 2, 3]);
        let b = derive_seed(7, &[1, 2, 3]);
        let c = derive_seed(7, &[3, 2, 1]);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
