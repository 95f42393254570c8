//! Acquisition schedules and parametric temporal endmember models.
//!
//! An acquisition is described by a [`PulseSequence`]: a run of baseline
//! ultrasound frames followed by a train of equally spaced focused-ultrasound
//! (FUS) activation pulses, with one or more frames captured at fixed delays
//! after each pulse. Sampling a set of [`EndmemberModel`]s on the schedule's
//! frames produces a [`SignalMatrix`] of idealized amplitudes, one row per
//! endmember.
//!
//! Frame semantics at pulse instants: a frame whose capture delay equals the
//! inter-pulse interval lands exactly on the next pulse. Such a frame is
//! captured immediately *before* that pulse fires, so it samples the fully
//! decayed state of the previous cycle. Each frame therefore carries the
//! count of pulses whose response it includes ([`Frame::pulses_fired`]).

use crate::error::{ensure_finite, Error, Result};
use crate::numerics::DenseMatrix;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Pulse sequences and schedules
// ---------------------------------------------------------------------------

/// One ultrasound frame: capture time plus the number of FUS pulses whose
/// response is visible in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub time_s: f64,
    pub pulses_fired: usize,
}

/// An explicit acquisition timeline: pulse instants plus annotated frames.
///
/// Produced from a [`PulseSequence`] or constructed directly (the design
/// module builds densely sampled candidate schedules this way).
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pulse_times_s: Vec<f64>,
    frames: Vec<Frame>,
}

impl Schedule {
    /// Validates strictly increasing frame times and pulse times, and that
    /// each frame's `pulses_fired` does not exceed the pulse count.
    pub fn new(pulse_times_s: Vec<f64>, frames: Vec<Frame>) -> Result<Self> {
        ensure_finite(&pulse_times_s, "pulse times")?;
        if frames.is_empty() {
            return Err(Error::validation("schedule has no frames"));
        }
        let times: Vec<f64> = frames.iter().map(|f| f.time_s).collect();
        ensure_finite(&times, "frame times")?;
        if pulse_times_s.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("pulse times must be strictly increasing"));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation(
                "frame times must be strictly increasing (coincident frames are invalid)",
            ));
        }
        if frames.iter().any(|f| f.pulses_fired > pulse_times_s.len()) {
            return Err(Error::validation("frame references a pulse beyond the train"));
        }
        Ok(Schedule {
            pulse_times_s,
            frames,
        })
    }

    pub fn pulse_times_s(&self) -> &[f64] {
        &self.pulse_times_s
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame_times_s(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.time_s).collect()
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

/// Parameters of one acquisition: baseline frames, an equally spaced FUS
/// pulse train, and per-pulse frame capture delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPulseSequence", into = "RawPulseSequence")]
pub struct PulseSequence {
    n_baseline: usize,
    baseline_spacing_s: f64,
    n_pulses: usize,
    tau_fus_s: f64,
    post_pulse_offsets_s: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPulseSequence {
    n_baseline: usize,
    baseline_spacing_s: f64,
    n_pulses: usize,
    tau_fus_s: f64,
    post_pulse_offsets_s: Vec<f64>,
}

impl TryFrom<RawPulseSequence> for PulseSequence {
    type Error = Error;
    fn try_from(raw: RawPulseSequence) -> Result<Self> {
        PulseSequence::new(
            raw.n_baseline,
            raw.baseline_spacing_s,
            raw.n_pulses,
            raw.tau_fus_s,
            raw.post_pulse_offsets_s,
        )
    }
}

impl From<PulseSequence> for RawPulseSequence {
    fn from(seq: PulseSequence) -> Self {
        RawPulseSequence {
            n_baseline: seq.n_baseline,
            baseline_spacing_s: seq.baseline_spacing_s,
            n_pulses: seq.n_pulses,
            tau_fus_s: seq.tau_fus_s,
            post_pulse_offsets_s: seq.post_pulse_offsets_s,
        }
    }
}

impl PulseSequence {
    /// Validated construction.
    ///
    /// Rules: spacings positive; offsets nonnegative and strictly increasing;
    /// with more than one pulse every offset must be at most `tau_fus_s`
    /// (an offset equal to `tau_fus_s` is captured just before the next
    /// pulse); the derived frame-time list must be strictly increasing and
    /// nonempty.
    pub fn new(
        n_baseline: usize,
        baseline_spacing_s: f64,
        n_pulses: usize,
        tau_fus_s: f64,
        post_pulse_offsets_s: Vec<f64>,
    ) -> Result<Self> {
        if !(baseline_spacing_s.is_finite() && baseline_spacing_s > 0.0) {
            return Err(Error::validation(format!(
                "baseline_spacing_s must be > 0, got {baseline_spacing_s}"
            )));
        }
        if !(tau_fus_s.is_finite() && tau_fus_s > 0.0) {
            return Err(Error::validation(format!(
                "tau_fus_s must be > 0, got {tau_fus_s}"
            )));
        }
        ensure_finite(&post_pulse_offsets_s, "post_pulse_offsets_s")?;
        if post_pulse_offsets_s.iter().any(|&d| d < 0.0) {
            return Err(Error::validation("post-pulse offsets must be >= 0"));
        }
        if post_pulse_offsets_s.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation(
                "post-pulse offsets must be strictly increasing",
            ));
        }
        if n_pulses > 1 {
            if let Some(&d) = post_pulse_offsets_s.iter().find(|&&d| d > tau_fus_s) {
                return Err(Error::validation(format!(
                    "post-pulse offset {d} exceeds tau_fus_s {tau_fus_s}"
                )));
            }
        }
        let seq = PulseSequence {
            n_baseline,
            baseline_spacing_s,
            n_pulses,
            tau_fus_s,
            post_pulse_offsets_s,
        };
        if seq.total_frames() == 0 {
            return Err(Error::validation("sequence captures no frames"));
        }
        // Strict monotonicity of the assembled timeline catches remaining
        // collisions (e.g. offset 0 together with offset tau_fus).
        let times = seq.frame_times();
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation(
                "derived frame times are not strictly increasing",
            ));
        }
        Ok(seq)
    }

    pub fn n_baseline(&self) -> usize {
        self.n_baseline
    }

    pub fn baseline_spacing_s(&self) -> f64 {
        self.baseline_spacing_s
    }

    pub fn n_pulses(&self) -> usize {
        self.n_pulses
    }

    pub fn tau_fus_s(&self) -> f64 {
        self.tau_fus_s
    }

    pub fn post_pulse_offsets_s(&self) -> &[f64] {
        &self.post_pulse_offsets_s
    }

    pub fn total_frames(&self) -> usize {
        self.n_baseline + self.n_pulses * self.post_pulse_offsets_s.len()
    }

    /// Pulse instants. Baseline frames occupy `0, s, 2s, ...`; the first
    /// pulse fires one baseline spacing after the last baseline frame (at
    /// `t = 0` when there are no baseline frames).
    pub fn pulse_times(&self) -> Vec<f64> {
        let first = self.n_baseline as f64 * self.baseline_spacing_s;
        (0..self.n_pulses)
            .map(|k| first + k as f64 * self.tau_fus_s)
            .collect()
    }

    /// The full annotated timeline: baseline frames first (no pulses fired),
    /// then for each pulse its frames at `pulse + offset`. A frame at offset
    /// exactly `tau_fus_s` precedes the next pulse, so it only sees pulses up
    /// to and including its own.
    pub fn schedule(&self) -> Schedule {
        let pulses = self.pulse_times();
        let mut frames = Vec::with_capacity(self.total_frames());
        for i in 0..self.n_baseline {
            frames.push(Frame {
                time_s: i as f64 * self.baseline_spacing_s,
                pulses_fired: 0,
            });
        }
        for (k, &p) in pulses.iter().enumerate() {
            for &d in &self.post_pulse_offsets_s {
                frames.push(Frame {
                    time_s: p + d,
                    pulses_fired: k + 1,
                });
            }
        }
        Schedule::new(pulses, frames).expect("validated sequence yields a valid schedule")
    }

    /// Frame capture times in seconds, strictly increasing.
    pub fn frame_times(&self) -> Vec<f64> {
        let pulses = self.pulse_times();
        let mut times = Vec::with_capacity(self.total_frames());
        for i in 0..self.n_baseline {
            times.push(i as f64 * self.baseline_spacing_s);
        }
        for &p in &pulses {
            for &d in &self.post_pulse_offsets_s {
                times.push(p + d);
            }
        }
        times
    }
}

// ---------------------------------------------------------------------------
// Endmember models
// ---------------------------------------------------------------------------

/// Parametric temporal response of one signal source to the FUS pulse train.
///
/// All three variants evaluate in normalized (dimensionless) ultrasound
/// amplitude. `StepRamp` and `PulsedExponential` are zero before the first
/// pulse; the constant background contributes separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EndmemberModel {
    /// One-shot vaporization: a step at the *first* pulse followed by a
    /// linear growth (bubble coalescence), unaffected by later pulses.
    StepRamp {
        step_amplitude: f64,
        ramp_rate_per_s: f64,
    },
    /// Repeatable vaporization with recondensation: each pulse launches a
    /// decaying exponential; the signal is their superposition.
    PulsedExponential {
        peak_amplitude: f64,
        decay_tau_s: f64,
    },
    /// Tissue background, constant over the acquisition.
    ConstantBackground { level: f64 },
}

impl EndmemberModel {
    /// Amplitudes must be nonnegative (so sampled signal matrices stay
    /// nonnegative) and the decay constant positive.
    pub fn validate(&self) -> Result<()> {
        match *self {
            EndmemberModel::StepRamp {
                step_amplitude,
                ramp_rate_per_s,
            } => {
                if !(step_amplitude.is_finite() && step_amplitude >= 0.0) {
                    return Err(Error::validation(format!(
                        "step_amplitude must be >= 0, got {step_amplitude}"
                    )));
                }
                if !(ramp_rate_per_s.is_finite() && ramp_rate_per_s >= 0.0) {
                    return Err(Error::validation(format!(
                        "ramp_rate_per_s must be >= 0, got {ramp_rate_per_s}"
                    )));
                }
            }
            EndmemberModel::PulsedExponential {
                peak_amplitude,
                decay_tau_s,
            } => {
                if !(peak_amplitude.is_finite() && peak_amplitude >= 0.0) {
                    return Err(Error::validation(format!(
                        "peak_amplitude must be >= 0, got {peak_amplitude}"
                    )));
                }
                if !(decay_tau_s.is_finite() && decay_tau_s > 0.0) {
                    return Err(Error::validation(format!(
                        "decay_tau_s must be > 0, got {decay_tau_s}"
                    )));
                }
            }
            EndmemberModel::ConstantBackground { level } => {
                if !(level.is_finite() && level >= 0.0) {
                    return Err(Error::validation(format!(
                        "background level must be >= 0, got {level}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Evaluate at time `t` given the pulse train, counting only the first
    /// `pulses_fired` pulses as having fired.
    pub fn value_at(&self, t: f64, pulse_times_s: &[f64], pulses_fired: usize) -> f64 {
        match *self {
            EndmemberModel::StepRamp {
                step_amplitude,
                ramp_rate_per_s,
            } => {
                if pulses_fired == 0 {
                    0.0
                } else {
                    step_amplitude + ramp_rate_per_s * (t - pulse_times_s[0])
                }
            }
            EndmemberModel::PulsedExponential {
                peak_amplitude,
                decay_tau_s,
            } => pulse_times_s[..pulses_fired]
                .iter()
                .map(|&p| peak_amplitude * (-(t - p) / decay_tau_s).exp())
                .sum(),
            EndmemberModel::ConstantBackground { level } => level,
        }
    }
}

/// Default model set: the one-shot population (`nd28`), the recondensing
/// population (`nd56`, decay constant 50 ms so the signal falls below 1% of
/// peak within a 400 ms inter-pulse interval), and a 0.2 tissue background.
pub fn default_models() -> Vec<(String, EndmemberModel)> {
    vec![
        (
            "nd28".to_string(),
            EndmemberModel::StepRamp {
                step_amplitude: 1.0,
                ramp_rate_per_s: 1.0,
            },
        ),
        (
            "nd56".to_string(),
            EndmemberModel::PulsedExponential {
                peak_amplitude: 1.0,
                decay_tau_s: 0.05,
            },
        ),
        (
            "background".to_string(),
            EndmemberModel::ConstantBackground { level: 0.2 },
        ),
    ]
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Sample one model over every frame of a schedule.
pub fn sample_on_schedule(model: &EndmemberModel, schedule: &Schedule) -> Result<Vec<f64>> {
    model.validate()?;
    Ok(schedule
        .frames()
        .iter()
        .map(|f| model.value_at(f.time_s, schedule.pulse_times_s(), f.pulses_fired))
        .collect())
}

/// Sample one model over a pulse sequence's frames: one amplitude per frame.
pub fn sample_endmember(model: &EndmemberModel, seq: &PulseSequence) -> Result<Vec<f64>> {
    sample_on_schedule(model, &seq.schedule())
}

// ---------------------------------------------------------------------------
// Signal matrices
// ---------------------------------------------------------------------------

/// Endmembers-by-frames matrix of idealized (or measured) amplitudes, with
/// the endmember labels and frame capture times it was sampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    labels: Vec<String>,
    frame_times_s: Vec<f64>,
    matrix: DenseMatrix,
}

impl SignalMatrix {
    /// Assemble from parts. Entries must be finite and nonnegative; columns
    /// must match the frame-time list.
    pub fn new(labels: Vec<String>, frame_times_s: Vec<f64>, matrix: DenseMatrix) -> Result<Self> {
        if labels.len() != matrix.rows() {
            return Err(Error::validation(format!(
                "{} labels for {} matrix rows",
                labels.len(),
                matrix.rows()
            )));
        }
        if frame_times_s.len() != matrix.cols() {
            return Err(Error::validation(format!(
                "{} frame times for {} matrix columns",
                frame_times_s.len(),
                matrix.cols()
            )));
        }
        ensure_finite(&frame_times_s, "frame times")?;
        if matrix.data().iter().any(|&v| v < 0.0) {
            return Err(Error::validation("signal matrix entries must be >= 0"));
        }
        Ok(SignalMatrix {
            labels,
            frame_times_s,
            matrix,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn frame_times_s(&self) -> &[f64] {
        &self.frame_times_s
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn n_endmembers(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.matrix.cols()
    }

    /// New signal matrix restricted to the given frame indices (in order).
    pub fn select_frames(&self, keep: &[usize]) -> Result<SignalMatrix> {
        let matrix = self.matrix.select_columns(keep)?;
        let times = keep.iter().map(|&i| self.frame_times_s[i]).collect();
        SignalMatrix::new(self.labels.clone(), times, matrix)
    }
}

/// Sample every model on a schedule and stack the rows into a signal matrix.
pub fn build_signal_matrix_on_schedule(
    models: &[(String, EndmemberModel)],
    schedule: &Schedule,
) -> Result<SignalMatrix> {
    if models.is_empty() {
        return Err(Error::validation("need at least one endmember model"));
    }
    let mut rows = Vec::with_capacity(models.len());
    for (_, model) in models {
        rows.push(sample_on_schedule(model, schedule)?);
    }
    let labels = models.iter().map(|(l, _)| l.clone()).collect();
    SignalMatrix::new(labels, schedule.frame_times_s(), DenseMatrix::from_rows(&rows)?)
}

/// Row `i` is `models[i]` sampled over the sequence's frames.
pub fn build_signal_matrix(
    models: &[(String, EndmemberModel)],
    seq: &PulseSequence,
) -> Result<SignalMatrix> {
    if models.is_empty() {
        return Err(Error::validation("need at least one endmember model"));
    }
    build_signal_matrix_on_schedule(models, &seq.schedule())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn standard() -> PulseSequence {
        PulseSequence::new(6, 0.0005, 5, 0.4, vec![0.0005, 0.4]).unwrap()
    }

    #[test]
    fn standard_sequence_has_sixteen_frames() {
        let seq = standard();
        let times = seq.frame_times();
        assert_eq!(times.len(), 16);
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        // First pulse fires one baseline spacing after the last baseline frame.
        assert!(approx(seq.pulse_times()[0], 0.003, 1e-12));
        // Final frame: last pulse + 400 ms.
        assert!(approx(times[15], 0.003 + 4.0 * 0.4 + 0.4, 1e-12));
    }

    #[test]
    fn degenerate_single_baseline_frame() {
        let seq = PulseSequence::new(1, 0.001, 0, 0.4, vec![]).unwrap();
        assert_eq!(seq.frame_times(), vec![0.0]);
    }

    #[test]
    fn no_baseline_two_pulses() {
        let seq = PulseSequence::new(0, 0.001, 2, 0.010, vec![0.001]).unwrap();
        let times = seq.frame_times();
        assert_eq!(times.len(), 2);
        assert!(approx(times[0], 0.001, 1e-12));
        assert!(approx(times[1] - times[0], 0.010, 1e-12));
    }

    #[test]
    fn rejects_offset_beyond_tau() {
        assert!(PulseSequence::new(0, 0.001, 2, 0.010, vec![0.011]).is_err());
        // Offset exactly tau is allowed (captured just before the next pulse).
        assert!(PulseSequence::new(0, 0.001, 2, 0.010, vec![0.010]).is_ok());
        // ...but combining it with offset 0 collides with the next pulse frame.
        assert!(PulseSequence::new(0, 0.001, 2, 0.010, vec![0.0, 0.010]).is_err());
    }

    #[test]
    fn rejects_empty_capture() {
        assert!(PulseSequence::new(0, 0.001, 0, 0.4, vec![]).is_err());
        assert!(PulseSequence::new(0, 0.001, 2, 0.4, vec![]).is_err());
    }

    #[test]
    fn frame_at_tau_offset_excludes_next_pulse() {
        let seq = PulseSequence::new(0, 0.001, 3, 0.010, vec![0.010]).unwrap();
        let schedule = seq.schedule();
        // Frame k sits at pulse_{k+1}'s instant but only sees k+1 pulses.
        assert_eq!(schedule.frames()[0].pulses_fired, 1);
        assert!(approx(
            schedule.frames()[0].time_s,
            schedule.pulse_times_s()[1],
            1e-12
        ));
    }

    #[test]
    fn constant_background_is_all_ones() {
        let model = EndmemberModel::ConstantBackground { level: 1.0 };
        let trace = sample_endmember(&model, &standard()).unwrap();
        assert!(trace.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn step_without_ramp_is_heaviside() {
        let seq = PulseSequence::new(1, 0.001, 1, 0.4, vec![0.0005]).unwrap();
        let model = EndmemberModel::StepRamp {
            step_amplitude: 1.0,
            ramp_rate_per_s: 0.0,
        };
        let trace = sample_endmember(&model, &seq).unwrap();
        assert_eq!(trace, vec![0.0, 1.0]);
    }

    #[test]
    fn pulsed_exponential_single_decay() {
        // One pulse, frame 50 ms later, decay constant 50 ms -> e^-1.
        let seq = PulseSequence::new(0, 0.001, 1, 0.4, vec![0.05]).unwrap();
        let model = EndmemberModel::PulsedExponential {
            peak_amplitude: 1.0,
            decay_tau_s: 0.05,
        };
        let trace = sample_endmember(&model, &seq).unwrap();
        assert!(approx(trace[0], (-1.0f64).exp(), 1e-12));
    }

    #[test]
    fn pulsed_exponential_superposition() {
        // Two pulses 100 ms apart, decay 50 ms, frame at the second pulse:
        // fresh peak plus the first pulse's tail, 1 + e^-2.
        let seq = PulseSequence::new(0, 0.001, 2, 0.1, vec![0.0]).unwrap();
        let model = EndmemberModel::PulsedExponential {
            peak_amplitude: 1.0,
            decay_tau_s: 0.05,
        };
        let trace = sample_endmember(&model, &seq).unwrap();
        assert!(approx(trace[1], 1.0 + (-2.0f64).exp(), 1e-12));
    }

    #[test]
    fn model_validation() {
        assert!(EndmemberModel::StepRamp {
            step_amplitude: -1.0,
            ramp_rate_per_s: 0.0
        }
        .validate()
        .is_err());
        assert!(EndmemberModel::PulsedExponential {
            peak_amplitude: 1.0,
            decay_tau_s: 0.0
        }
        .validate()
        .is_err());
        assert!(EndmemberModel::ConstantBackground { level: 0.2 }
            .validate()
            .is_ok());
    }

    #[test]
    fn default_signal_matrix_is_3x16() {
        let sm = build_signal_matrix(&default_models(), &standard()).unwrap();
        assert_eq!(sm.n_endmembers(), 3);
        assert_eq!(sm.n_frames(), 16);
        assert!(sm.matrix().data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_background_model_gives_constant_row() {
        let models = vec![(
            "bg".to_string(),
            EndmemberModel::ConstantBackground { level: 0.7 },
        )];
        let sm = build_signal_matrix(&models, &standard()).unwrap();
        assert_eq!(sm.n_endmembers(), 1);
        assert!(sm.matrix().row(0).iter().all(|&v| v == 0.7));
    }

    #[test]
    fn duplicated_models_make_rank_one_matrix() {
        let m = EndmemberModel::PulsedExponential {
            peak_amplitude: 1.0,
            decay_tau_s: 0.05,
        };
        let models = vec![("a".to_string(), m), ("b".to_string(), m)];
        let sm = build_signal_matrix(&models, &standard()).unwrap();
        assert_eq!(crate::numerics::sv_product(sm.matrix()).unwrap(), 0.0);
    }

    #[test]
    fn empty_model_list_is_rejected() {
        assert!(build_signal_matrix(&[], &standard()).is_err());
    }

    #[test]
    fn amplitude_scaling_scales_rows_linearly() {
        let seq = standard();
        let base = EndmemberModel::PulsedExponential {
            peak_amplitude: 1.0,
            decay_tau_s: 0.05,
        };
        let scaled = EndmemberModel::PulsedExponential {
            peak_amplitude: 2.5,
            decay_tau_s: 0.05,
        };
        let a = sample_endmember(&base, &seq).unwrap();
        let b = sample_endmember(&scaled, &seq).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(approx(*y, 2.5 * x, 1e-12));
        }
    }

    #[test]
    fn sequence_serde_round_trip_validates() {
        let seq = standard();
        let json = serde_json::to_string(&seq).unwrap();
        let back: PulseSequence = serde_json::from_str(&json).unwrap();
        assert_eq!(seq, back);
        // Deserializing an invalid sequence fails.
        let bad = r#"{"n_baseline":0,"baseline_spacing_s":0.001,"n_pulses":2,"tau_fus_s":0.01,"post_pulse_offsets_s":[0.02]}"#;
        assert!(serde_json::from_str::<PulseSequence>(bad).is_err());
    }
}
