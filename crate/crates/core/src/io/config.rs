//! Versioned JSON experiment configuration.
//!
//! Every field has a default, and the resolved (fully materialized) config
//! is what gets hashed and re-emitted next to the outputs, so a run never
//! depends on silent defaults. Seeds are always explicit — there is no
//! wall-clock seeding anywhere.

use crate::dynamics::{default_models, EndmemberModel, PulseSequence};
use crate::error::{Error, Result};
use crate::{design, phantom};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// The three endmember models by role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsConfig {
    pub nd28: EndmemberModel,
    pub nd56: EndmemberModel,
    pub background: EndmemberModel,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        let m = default_models();
        ModelsConfig {
            nd28: m[0].1,
            nd56: m[1].1,
            background: m[2].1,
        }
    }
}

impl ModelsConfig {
    pub fn labeled(&self) -> Vec<(String, EndmemberModel)> {
        vec![
            ("nd28".to_string(), self.nd28),
            ("nd56".to_string(), self.nd56),
            ("background".to_string(), self.background),
        ]
    }

    pub fn as_array(&self) -> [EndmemberModel; 3] {
        [self.nd28, self.nd56, self.background]
    }
}

/// Either the built-in reference sequence (`"standard"`) or explicit
/// parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SequenceConfig {
    Named(String),
    Explicit(PulseSequence),
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig::Named("standard".to_string())
    }
}

impl SequenceConfig {
    pub fn resolve(&self) -> Result<PulseSequence> {
        match self {
            SequenceConfig::Named(name) if name == "standard" => Ok(design::standard_sequence()),
            SequenceConfig::Named(name) => Err(Error::validation(format!(
                "unknown sequence name '{name}' (only \"standard\" is defined)"
            ))),
            SequenceConfig::Explicit(seq) => Ok(seq.clone()),
        }
    }
}

/// Sequence-sweep grid and dense-sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub pulse_counts: Vec<usize>,
    pub taus_s: Vec<f64>,
    pub dense_frame_spacing_s: f64,
    pub pre_pulse_window_s: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            pulse_counts: (1..=10).collect(),
            taus_s: (1..=16).map(|i| i as f64 * 0.05).collect(),
            dense_frame_spacing_s: design::DEFAULT_DENSE_FRAME_SPACING_S,
            pre_pulse_window_s: design::DEFAULT_PRE_PULSE_WINDOW_S,
        }
    }
}

/// Frame-selection parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub target_frames: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig { target_frames: 16 }
    }
}

/// Phantom geometry and scene scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub width: usize,
    pub height: usize,
    pub pixel_pitch_mm: f64,
    /// Amplitude scale of the recondensing population (1.0 = matched).
    pub nd56_amplitude_scale: f64,
    /// Multiplier on the background endmember trace.
    pub background_level: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            width: 128,
            height: 64,
            pixel_pitch_mm: 0.1,
            nd56_amplitude_scale: 1.0,
            background_level: 1.0,
        }
    }
}

/// Acquisition physics: focal geometry and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionSection {
    pub focal_sigma_mm: f64,
    pub noise_sigma: f64,
    /// Focal-spot center in pixel coordinates; null centers on the image.
    pub focal_center_px: Option<(f64, f64)>,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        AcquisitionSection {
            focal_sigma_mm: 1.5,
            noise_sigma: 0.05,
            focal_center_px: None,
        }
    }
}

/// Batch structure of the end-to-end experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// True fractions of the first (calibration) batch.
    pub fractions_a: Vec<f64>,
    pub replicates_a: usize,
    /// True fractions of the second (validation) batch.
    pub fractions_b: Vec<f64>,
    pub replicates_b: usize,
    /// Side of the square analysis region at the focal spot.
    pub roi_size_mm: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            fractions_a: (0..=10).map(|i| i as f64 / 10.0).collect(),
            replicates_a: 15,
            fractions_b: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            replicates_b: 5,
            roi_size_mm: 3.9,
        }
    }
}

/// Top-level experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub models: ModelsConfig,
    pub sequence: SequenceConfig,
    pub sweep: SweepConfig,
    pub selection: SelectionConfig,
    pub phantom: PhantomConfig,
    pub acquisition: AcquisitionSection,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    /// The default configuration with the schema version and a fixed seed.
    pub fn standard() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: 7,
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
            Error::validation(format!("{}: invalid config: {e}", path.display()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.models.nd28.validate()?;
        self.models.nd56.validate()?;
        self.models.background.validate()?;
        self.sequence.resolve()?;
        for &f in self.experiment.fractions_a.iter().chain(&self.experiment.fractions_b) {
            if !(f.is_finite() && (0.0..=1.0).contains(&f)) {
                return Err(Error::validation(format!(
                    "experiment fraction {f} outside [0, 1]"
                )));
            }
        }
        if self.experiment.fractions_a.is_empty() || self.experiment.fractions_b.is_empty() {
            return Err(Error::validation("experiment fraction lists must be nonempty"));
        }
        if self.experiment.replicates_a == 0 || self.experiment.replicates_b == 0 {
            return Err(Error::validation("replicate counts must be >= 1"));
        }
        if !(self.experiment.roi_size_mm.is_finite() && self.experiment.roi_size_mm > 0.0) {
            return Err(Error::validation("roi_size_mm must be > 0"));
        }
        if self.phantom.width == 0 || self.phantom.height == 0 {
            return Err(Error::validation("phantom dimensions must be >= 1"));
        }
        if !(self.phantom.pixel_pitch_mm.is_finite() && self.phantom.pixel_pitch_mm > 0.0) {
            return Err(Error::validation("pixel_pitch_mm must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.phantom.nd56_amplitude_scale) {
            return Err(Error::validation("nd56_amplitude_scale must lie in [0, 1]"));
        }
        if self.phantom.background_level < 0.0 {
            return Err(Error::validation("background_level must be >= 0"));
        }
        if !(self.acquisition.focal_sigma_mm.is_finite() && self.acquisition.focal_sigma_mm > 0.0)
        {
            return Err(Error::validation("focal_sigma_mm must be > 0"));
        }
        if !(self.acquisition.noise_sigma.is_finite() && self.acquisition.noise_sigma >= 0.0) {
            return Err(Error::validation("noise_sigma must be >= 0"));
        }
        if self.sweep.pulse_counts.is_empty() || self.sweep.taus_s.is_empty() {
            return Err(Error::validation("sweep grids must be nonempty"));
        }
        if self.selection.target_frames < 3 {
            return Err(Error::validation(
                "target_frames below 3 cannot retain full endmember rank",
            ));
        }
        Ok(())
    }

    /// Canonical JSON serialization of the resolved config. Field order is
    /// the struct declaration order, so the bytes are stable for a given
    /// config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// SHA-256 of the canonical serialization, hex-encoded.
    pub fn sha256(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_json().as_bytes());
        hex::encode(hasher.finalize())
    }

    /// Assemble the acquisition configuration for one simulated capture.
    pub fn acquisition_config(&self, rng_seed: u64) -> Result<phantom::AcquisitionConfig> {
        Ok(phantom::AcquisitionConfig {
            sequence: self.sequence.resolve()?,
            models: self.models.as_array(),
            focal_center_px: self.acquisition.focal_center_px,
            focal_sigma_mm: self.acquisition.focal_sigma_mm,
            noise_sigma: self.acquisition.noise_sigma,
            rng_seed,
        })
    }

    /// Build a uniform phantom at the configured geometry and scene scales.
    pub fn uniform_phantom(&self, frac56: f64) -> Result<phantom::MixturePhantom> {
        phantom::MixturePhantom::uniform(
            frac56,
            self.phantom.width,
            self.phantom.height,
            self.phantom.pixel_pitch_mm,
        )?
        .with_nd56_amplitude_scale(self.phantom.nd56_amplitude_scale)?
        .with_background_level(self.phantom.background_level)
    }

    /// The analysis ROI: a square of `roi_size_mm` centered on the focal
    /// spot.
    pub fn roi(&self) -> phantom::RoiMm {
        let (cx, cy) = self.acquisition.focal_center_px.unwrap_or((
            (self.phantom.width as f64 - 1.0) / 2.0,
            (self.phantom.height as f64 - 1.0) / 2.0,
        ));
        phantom::RoiMm::square(
            (cx + 0.5) * self.phantom.pixel_pitch_mm,
            (cy + 0.5) * self.phantom.pixel_pitch_mm,
            self.experiment.roi_size_mm,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn default_config_is_valid_and_stable() {
        let cfg = ExperimentConfig::standard();
        cfg.validate().unwrap();
        assert_eq!(cfg.sha256(), cfg.sha256());
        assert_eq!(cfg.experiment.fractions_a.len(), 11);
        assert_eq!(cfg.experiment.replicates_a, 15);
    }

    #[test]
    fn round_trip_preserves_hash() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("config.json");
        let cfg = ExperimentConfig::standard();
        fs::write(&path, cfg.canonical_json()).unwrap();
        let back = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.sha256(), back.sha256());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("partial.json");
        fs::write(
            &path,
            r#"{"schema_version":1,"seed":3,"acquisition":{"noise_sigma":0.0}}"#,
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.acquisition.noise_sigma, 0.0);
        assert_eq!(cfg.phantom.width, 128); // default
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, r#"{"schema_version":1,"bogus":true}"#).unwrap();
        assert!(ExperimentConfig::load(&path).is_err());
    }

    #[test]
    fn named_sequence_resolves() {
        let cfg = ExperimentConfig::standard();
        let seq = cfg.sequence.resolve().unwrap();
        assert_eq!(seq.total_frames(), 16);
        let bad = SequenceConfig::Named("fast".into());
        assert!(bad.resolve().is_err());
    }

    #[test]
    fn bad_fraction_rejected() {
        let mut cfg = ExperimentConfig::standard();
        cfg.experiment.fractions_a = vec![0.0, 1.5];
        assert!(cfg.validate().is_err());
    }
}
