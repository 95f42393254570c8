//! Acquisition-sequence optimization and greedy frame selection.
//!
//! Both searches score candidates with the product-of-singular-values metric
//! of the endmember signal matrix ([`crate::numerics::sv_product`]): larger
//! products mean the endmember responses are easier to tell apart. The metric
//! is the square root of the D-optimality criterion `det(M·Mᵀ)`, which sweep
//! results report alongside it.
//!
//! Sweep candidates are evaluated inside a fixed acquisition time budget,
//! taken from the reference sequence: each candidate samples frames at the
//! dense spacing across its own window (pre-pulse lead-in, pulse train, one
//! inter-pulse settle interval), but the pulse-train span is truncated at
//! the budget, and pulses beyond it are never imaged. Without the budget
//! the metric grows without bound in pulse count — every added pulse
//! extends the window and inflates the one-shot ramp's variance — and the
//! comparison stops saying anything about schedule *quality*.

use crate::dynamics::{
    build_signal_matrix_on_schedule, EndmemberModel, Frame, PulseSequence, Schedule, SignalMatrix,
};
use crate::error::{Error, Result};
use crate::numerics::{gram_determinant, sv_product};
use serde::{Deserialize, Serialize};

/// Default dense frame spacing for candidate schedules (10 ms).
pub const DEFAULT_DENSE_FRAME_SPACING_S: f64 = 0.010;

/// Default pre-pulse window: one dense frame before the first pulse.
pub const DEFAULT_PRE_PULSE_WINDOW_S: f64 = 0.010;

/// Subset-enumeration budget for [`exhaustive_frame_selection`].
pub const EXHAUSTIVE_SUBSET_BUDGET: u128 = 1_000_000;

/// Tolerance when deciding whether a uniformly placed frame coincides with a
/// pulse instant (1 ns on millisecond-scale schedules).
const PULSE_TIME_EPS_S: f64 = 1e-9;

// ---------------------------------------------------------------------------
// The reference acquisition sequence
// ---------------------------------------------------------------------------

/// The optimized acquisition schedule used throughout: 6 baseline frames at
/// 0.5 ms spacing, then 5 FUS pulses 400 ms apart with a frame pair captured
/// 0.5 ms and 400 ms after each pulse — 16 frames in total.
pub fn standard_sequence() -> PulseSequence {
    PulseSequence::new(6, 0.0005, 5, 0.4, vec![0.0005, 0.4])
        .expect("standard sequence parameters are valid")
}

// ---------------------------------------------------------------------------
// Dense candidate schedules
// ---------------------------------------------------------------------------

/// Densely sampled candidate schedule: `n_pulses` pulses spaced `tau_fus_s`
/// apart, frames every `spacing_s` covering `[first_pulse - pre_window,
/// first_pulse + span]` where `span = min(n_pulses·tau_fus_s,
/// train_cap_s)`. The schedule starts at `t = 0` with the first pulse at
/// `t = pre_window_s`. Pulses after the capped window exist in the train
/// but are never imaged.
///
/// Frames landing on a pulse instant (within 1 ns) sample the fresh peak.
pub fn capped_dense_schedule(
    n_pulses: usize,
    tau_fus_s: f64,
    pre_window_s: f64,
    spacing_s: f64,
    train_cap_s: f64,
) -> Result<Schedule> {
    if n_pulses == 0 {
        return Err(Error::validation("candidate schedule needs >= 1 pulse"));
    }
    if !(tau_fus_s.is_finite() && tau_fus_s > 0.0) {
        return Err(Error::validation(format!(
            "tau_fus_s must be > 0, got {tau_fus_s}"
        )));
    }
    if !(pre_window_s.is_finite() && pre_window_s > 0.0) {
        return Err(Error::validation(format!(
            "pre_window_s must be > 0, got {pre_window_s}"
        )));
    }
    if !(spacing_s.is_finite() && spacing_s > 0.0) {
        return Err(Error::validation(format!(
            "frame spacing must be > 0, got {spacing_s}"
        )));
    }
    if train_cap_s.is_nan() || train_cap_s <= 0.0 {
        return Err(Error::validation("train cap must be > 0"));
    }

    let span = (n_pulses as f64 * tau_fus_s).min(train_cap_s);
    let total = pre_window_s + span;
    let n_frames = (total / spacing_s + PULSE_TIME_EPS_S).floor() as usize + 1;
    if n_frames < 2 {
        return Err(Error::validation(
            "candidate window is shorter than one frame spacing",
        ));
    }

    let pulses: Vec<f64> = (0..n_pulses)
        .map(|k| pre_window_s + k as f64 * tau_fus_s)
        .collect();
    let frames: Vec<Frame> = (0..n_frames)
        .map(|i| {
            let t = i as f64 * spacing_s;
            let fired = pulses.iter().filter(|&&p| p <= t + PULSE_TIME_EPS_S).count();
            Frame {
                time_s: t,
                pulses_fired: fired,
            }
        })
        .collect();
    Schedule::new(pulses, frames)
}

/// Dense schedule at a fixed frame spacing with no time cap (used by frame
/// selection, where candidates are frames of a single schedule rather than
/// whole schedules).
pub fn dense_schedule_at_spacing(
    n_pulses: usize,
    tau_fus_s: f64,
    pre_window_s: f64,
    spacing_s: f64,
) -> Result<Schedule> {
    capped_dense_schedule(n_pulses, tau_fus_s, pre_window_s, spacing_s, f64::INFINITY)
}

// ---------------------------------------------------------------------------
// Sequence sweep
// ---------------------------------------------------------------------------

/// One evaluated grid point of a sequence sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub n_pulses: usize,
    pub tau_fus_s: f64,
    /// Product of singular values of the sampled 3-row signal matrix.
    pub metric: f64,
    /// D-optimality criterion `det(M·Mᵀ)` (the metric squared).
    pub d_criterion: f64,
}

/// All grid points of a sweep plus the argmax.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    /// Entries in grid order: pulse counts outer, taus inner.
    pub entries: Vec<SweepEntry>,
    best_index: usize,
}

impl SweepResult {
    pub fn best(&self) -> &SweepEntry {
        &self.entries[self.best_index]
    }
}

/// Evaluate the differentiability metric over a grid of pulse counts and
/// inter-pulse intervals.
///
/// `template` supplies the acquisition time budget: each candidate's pulse
/// train is truncated at the template's span (first pulse to last frame),
/// and its frames run at `dense_frame_spacing_s` across its own (capped)
/// window. Ties in the argmax break toward fewer pulses, then smaller tau.
pub fn sweep_sequences(
    models: &[(String, EndmemberModel)],
    template: &PulseSequence,
    pulse_counts: &[usize],
    taus_s: &[f64],
    dense_frame_spacing_s: f64,
    pre_pulse_window_s: f64,
) -> Result<SweepResult> {
    if pulse_counts.is_empty() || taus_s.is_empty() {
        return Err(Error::validation("sweep grid is empty"));
    }
    if pulse_counts.contains(&0) {
        return Err(Error::validation("sweep pulse counts must be >= 1"));
    }
    if taus_s.iter().any(|&t| !(t.is_finite() && t > 0.0)) {
        return Err(Error::validation("sweep taus must be > 0"));
    }
    if template.n_pulses() == 0 {
        return Err(Error::validation("sweep template needs >= 1 pulse"));
    }

    // Acquisition time budget: the template's span from first pulse to last
    // frame (one full settle interval after its last pulse included).
    let template_times = template.frame_times();
    let train_cap_s = template_times.last().unwrap() - template.pulse_times()[0];

    let mut entries = Vec::with_capacity(pulse_counts.len() * taus_s.len());
    for &n in pulse_counts {
        for &tau in taus_s {
            let schedule = capped_dense_schedule(
                n,
                tau,
                pre_pulse_window_s,
                dense_frame_spacing_s,
                train_cap_s,
            )?;
            let sm = build_signal_matrix_on_schedule(models, &schedule)?;
            let metric = sv_product(sm.matrix())?;
            let d_criterion = gram_determinant(sm.matrix())?.max(0.0);
            entries.push(SweepEntry {
                n_pulses: n,
                tau_fus_s: tau,
                metric,
                d_criterion,
            });
        }
    }

    let mut best_index = 0usize;
    for (i, e) in entries.iter().enumerate().skip(1) {
        let b = &entries[best_index];
        let better = e.metric > b.metric
            || (e.metric == b.metric
                && (e.n_pulses < b.n_pulses
                    || (e.n_pulses == b.n_pulses && e.tau_fus_s < b.tau_fus_s)));
        if better {
            best_index = i;
        }
    }

    Ok(SweepResult {
        entries,
        best_index,
    })
}

/// Materialize the sweep argmax as a capture sequence, reusing the
/// template's baseline structure. Template offsets above the chosen tau are
/// clamped to it (duplicates collapse), keeping the early/late frame-pair
/// pattern valid for the new spacing.
pub fn sequence_from_sweep(template: &PulseSequence, best: &SweepEntry) -> Result<PulseSequence> {
    let mut offsets: Vec<f64> = template
        .post_pulse_offsets_s()
        .iter()
        .map(|&d| d.min(best.tau_fus_s))
        .collect();
    offsets.dedup();
    PulseSequence::new(
        template.n_baseline(),
        template.baseline_spacing_s(),
        best.n_pulses,
        best.tau_fus_s,
        offsets,
    )
}

// ---------------------------------------------------------------------------
// Frame selection
// ---------------------------------------------------------------------------

/// Result of reducing a signal matrix to a subset of its frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameSelection {
    /// Kept frame indices into the original frame list, strictly increasing.
    pub kept_indices: Vec<usize>,
    /// Removed frame indices, in removal order.
    pub removed_indices: Vec<usize>,
    /// Metric of the remaining matrix after each removal.
    pub metric_trace: Vec<f64>,
    /// The reduced signal matrix (kept frames only).
    #[serde(skip)]
    pub reduced: Option<SignalMatrix>,
}

impl FrameSelection {
    pub fn reduced(&self) -> &SignalMatrix {
        self.reduced.as_ref().expect("selection carries its reduced matrix")
    }
}

fn check_selection_target(s: &SignalMatrix, target: usize) -> Result<()> {
    if target < s.n_endmembers() {
        return Err(Error::validation(format!(
            "target {target} frames cannot retain full row rank for {} endmembers",
            s.n_endmembers()
        )));
    }
    if target > s.n_frames() {
        return Err(Error::validation(format!(
            "target {target} exceeds available {} frames",
            s.n_frames()
        )));
    }
    Ok(())
}

/// Greedy frame reduction: repeatedly drop the single frame whose removal
/// leaves the largest product of singular values, until `target` frames
/// remain. Ties remove the lowest-index frame. Deterministic; not guaranteed
/// optimal (see [`exhaustive_frame_selection`] for the exact reference).
pub fn greedy_frame_selection(s: &SignalMatrix, target: usize) -> Result<FrameSelection> {
    check_selection_target(s, target)?;

    let mut kept: Vec<usize> = (0..s.n_frames()).collect();
    let mut removed = Vec::new();
    let mut trace = Vec::new();

    while kept.len() > target {
        let mut best_pos = 0usize;
        let mut best_metric = f64::NEG_INFINITY;
        for pos in 0..kept.len() {
            let mut candidate = kept.clone();
            candidate.remove(pos);
            let metric = sv_product(&s.matrix().select_columns(&candidate)?)?;
            // Strict > keeps the earliest (lowest-index) frame on ties.
            if metric > best_metric {
                best_metric = metric;
                best_pos = pos;
            }
        }
        removed.push(kept.remove(best_pos));
        trace.push(best_metric);
    }

    let reduced = s.select_frames(&kept)?;
    Ok(FrameSelection {
        kept_indices: kept,
        removed_indices: removed,
        metric_trace: trace,
        reduced: Some(reduced),
    })
}

/// Exact reference for [`greedy_frame_selection`]: enumerate every size-
/// `target` frame subset and return the one maximizing the metric
/// (lexicographically smallest subset on ties). Refuses grids with more than
/// [`EXHAUSTIVE_SUBSET_BUDGET`] subsets.
///
/// The metric trace is synthesized by replaying the discarded frames as
/// removals in increasing index order.
pub fn exhaustive_frame_selection(s: &SignalMatrix, target: usize) -> Result<FrameSelection> {
    check_selection_target(s, target)?;

    let n = s.n_frames();
    if binomial(n, target) > EXHAUSTIVE_SUBSET_BUDGET {
        return Err(Error::validation(format!(
            "C({n},{target}) exceeds the exhaustive enumeration budget of {EXHAUSTIVE_SUBSET_BUDGET}"
        )));
    }

    // Lexicographic combination enumeration; strict > keeps the first
    // (lexicographically smallest) maximizer.
    let mut subset: Vec<usize> = (0..target).collect();
    let mut best_subset = subset.clone();
    let mut best_metric = f64::NEG_INFINITY;
    loop {
        let metric = sv_product(&s.matrix().select_columns(&subset)?)?;
        if metric > best_metric {
            best_metric = metric;
            best_subset = subset.clone();
        }
        // Advance to the next combination: bump the rightmost index that has
        // room, reset everything after it.
        let mut advanced = false;
        for i in (0..target).rev() {
            if subset[i] < i + n - target {
                subset[i] += 1;
                for j in (i + 1)..target {
                    subset[j] = subset[j - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            break;
        }
    }

    let removed: Vec<usize> = (0..n).filter(|i| !best_subset.contains(i)).collect();
    let mut trace = Vec::with_capacity(removed.len());
    let mut remaining: Vec<usize> = (0..n).collect();
    for &r in &removed {
        remaining.retain(|&i| i != r);
        trace.push(sv_product(&s.matrix().select_columns(&remaining)?)?);
    }

    let reduced = s.select_frames(&best_subset)?;
    Ok(FrameSelection {
        kept_indices: best_subset,
        removed_indices: removed,
        metric_trace: trace,
        reduced: Some(reduced),
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result.saturating_mul((n - i) as u128) / (i + 1) as u128;
        if result > EXHAUSTIVE_SUBSET_BUDGET.saturating_mul(1000) {
            return u128::MAX;
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::default_models;
    use crate::numerics::DenseMatrix;

    fn two_row_matrix() -> SignalMatrix {
        // Columns (1,0), (0,1), (1,0).
        let m = DenseMatrix::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]).unwrap();
        SignalMatrix::new(
            vec!["a".into(), "b".into()],
            vec![0.0, 1.0, 2.0],
            m,
        )
        .unwrap()
    }

    #[test]
    fn standard_sequence_facts() {
        let seq = standard_sequence();
        assert_eq!(seq.total_frames(), 16);
        assert_eq!(seq.n_pulses(), 5);
        assert!((seq.tau_fus_s() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn greedy_identity_when_target_is_frame_count() {
        let s = two_row_matrix();
        let sel = greedy_frame_selection(&s, 3).unwrap();
        assert_eq!(sel.kept_indices, vec![0, 1, 2]);
        assert!(sel.metric_trace.is_empty());
        assert!(sel.removed_indices.is_empty());
    }

    #[test]
    fn greedy_duplicate_column_tie_breaks_low() {
        // Removing column 0 or 2 both leave metric 1.0; the tie removes the
        // lowest index, keeping {1, 2}.
        let s = two_row_matrix();
        let sel = greedy_frame_selection(&s, 2).unwrap();
        assert_eq!(sel.kept_indices, vec![1, 2]);
        assert_eq!(sel.removed_indices, vec![0]);
        assert!((sel.metric_trace[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_duplicate_column_tie_breaks_lexicographic() {
        // Subsets {0,1} and {1,2} both score 1.0; lexicographic order keeps
        // {0,1}.
        let s = two_row_matrix();
        let sel = exhaustive_frame_selection(&s, 2).unwrap();
        assert_eq!(sel.kept_indices, vec![0, 1]);
        assert_eq!(sel.metric_trace.len(), 1);
    }

    #[test]
    fn selection_rejects_infeasible_targets() {
        let s = two_row_matrix();
        assert!(greedy_frame_selection(&s, 1).is_err());
        assert!(greedy_frame_selection(&s, 4).is_err());
        assert!(exhaustive_frame_selection(&s, 1).is_err());
    }

    #[test]
    fn exhaustive_refuses_oversized_grids() {
        let n = 64;
        let m = DenseMatrix::new(1, n, vec![1.0; n]).unwrap();
        let s = SignalMatrix::new(
            vec!["a".into()],
            (0..n).map(|i| i as f64).collect(),
            m,
        )
        .unwrap();
        assert!(exhaustive_frame_selection(&s, 32).is_err());
    }

    #[test]
    fn sweep_rejects_empty_grids() {
        let models = default_models();
        let t = standard_sequence();
        assert!(sweep_sequences(&models, &t, &[], &[0.4], 0.01, 0.01).is_err());
        assert!(sweep_sequences(&models, &t, &[5], &[], 0.01, 0.01).is_err());
    }

    #[test]
    fn sweep_identical_models_gives_zero_metric_and_smallest_argmax() {
        let m = EndmemberModel::PulsedExponential {
            peak_amplitude: 1.0,
            decay_tau_s: 0.05,
        };
        let models = vec![
            ("a".to_string(), m),
            ("b".to_string(), m),
            ("c".to_string(), m),
        ];
        let result = sweep_sequences(
            &models,
            &standard_sequence(),
            &[2, 5],
            &[0.1, 0.4],
            0.01,
            0.01,
        )
        .unwrap();
        assert!(result.entries.iter().all(|e| e.metric == 0.0));
        let best = result.best();
        assert_eq!(best.n_pulses, 2);
        assert!((best.tau_fus_s - 0.1).abs() < 1e-12);
    }

    #[test]
    fn sweep_single_point_grid() {
        let result = sweep_sequences(
            &default_models(),
            &standard_sequence(),
            &[5],
            &[0.4],
            0.01,
            0.01,
        )
        .unwrap();
        assert_eq!(result.entries.len(), 1);
        assert!(result.best().metric > 0.0);
    }

    #[test]
    fn candidate_schedule_spacing_and_pulse_alignment() {
        let sched = dense_schedule_at_spacing(5, 0.4, 0.01, 0.01).unwrap();
        assert_eq!(sched.n_frames(), 202);
        // A frame landing on the first pulse instant samples it.
        let p0 = sched.pulse_times_s()[0];
        let on_pulse = sched
            .frames()
            .iter()
            .find(|f| (f.time_s - p0).abs() < 1e-9)
            .expect("grid hits the first pulse");
        assert_eq!(on_pulse.pulses_fired, 1);
    }

    #[test]
    fn capped_schedule_truncates_the_train() {
        // 10 pulses at 400 ms against a 2 s cap: frames stop at 2.01 s, so
        // pulses from the seventh onward are never imaged.
        let sched = capped_dense_schedule(10, 0.4, 0.01, 0.01, 2.0).unwrap();
        assert_eq!(sched.n_frames(), 202);
        let last = sched.frames().last().unwrap();
        assert!((last.time_s - 2.01).abs() < 1e-9);
        assert_eq!(last.pulses_fired, 6);
    }

    #[test]
    fn sequence_from_sweep_clamps_offsets() {
        let template = standard_sequence();
        let best = SweepEntry {
            n_pulses: 4,
            tau_fus_s: 0.3,
            metric: 1.0,
            d_criterion: 1.0,
        };
        let seq = sequence_from_sweep(&template, &best).unwrap();
        assert_eq!(seq.n_pulses(), 4);
        assert_eq!(seq.post_pulse_offsets_s(), &[0.0005, 0.3]);
    }
}
