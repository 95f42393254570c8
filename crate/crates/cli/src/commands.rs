//! Subcommand implementations. Every run resolves the configuration, writes
//! its outputs plus the fully materialized config, and finalizes a manifest
//! listing each emitted file with its SHA-256 checksum.

use ndmux_core::design;
use ndmux_core::dynamics::build_signal_matrix_on_schedule;
use ndmux_core::error::{Error, Result};
use ndmux_core::experiment;
use ndmux_core::io::config::ExperimentConfig;
use ndmux_core::io::manifest::ManifestBuilder;
use ndmux_core::io::{csv, frs1, raster};
use ndmux_core::phantom::{extract_roi_trace, RoiMm};
use ndmux_core::unmix::{unmix_stack, unmix_trace, EndmemberMatrix};
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

/// Load the config (or defaults), apply the seed override, and prepare the
/// output directory plus manifest builder.
fn setup(
    config: &Option<PathBuf>,
    out: &Path,
    seed: Option<u64>,
) -> Result<(ExperimentConfig, ManifestBuilder)> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::standard(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;

    fs::create_dir_all(out)?;
    let mut manifest = ManifestBuilder::new(out, cfg.sha256());

    // Materialize the resolved config next to the outputs: no silent
    // defaults.
    let resolved = out.join("config_resolved.json");
    fs::write(&resolved, cfg.canonical_json())?;
    manifest.add(&resolved);

    Ok((cfg, manifest))
}

pub fn optimize_sequence(config: &Option<PathBuf>, out: &Path, seed: Option<u64>) -> Result<()> {
    let (cfg, mut manifest) = setup(config, out, seed)?;
    let template = cfg.sequence.resolve()?;
    let sweep = design::sweep_sequences(
        &cfg.models.labeled(),
        &template,
        &cfg.sweep.pulse_counts,
        &cfg.sweep.taus_s,
        cfg.sweep.dense_frame_spacing_s,
        cfg.sweep.pre_pulse_window_s,
    )?;

    let sweep_path = out.join("sweep.csv");
    csv::write_sweep_csv(&sweep_path, &sweep)?;
    manifest.add(&sweep_path);

    let best = sweep.best();
    let chosen = design::sequence_from_sweep(&template, best)?;
    let seq_path = out.join("sequence.json");
    csv::write_json(
        &seq_path,
        &json!({
            "n_pulses": best.n_pulses,
            "tau_fus_s": best.tau_fus_s,
            "metric": best.metric,
            "d_criterion": best.d_criterion,
            "sequence": chosen,
        }),
    )?;
    manifest.add(&seq_path);

    manifest.finalize()?;
    eprintln!(
        "ndmux: sweep argmax n_pulses={} tau_fus_s={} metric={:.4}",
        best.n_pulses, best.tau_fus_s, best.metric
    );
    Ok(())
}

pub fn select_frames(config: &Option<PathBuf>, out: &Path, seed: Option<u64>) -> Result<()> {
    let (cfg, mut manifest) = setup(config, out, seed)?;
    let template = cfg.sequence.resolve()?;
    if template.n_pulses() == 0 {
        return Err(Error::validation("frame selection needs >= 1 pulse"));
    }
    let dense = design::dense_schedule_at_spacing(
        template.n_pulses(),
        template.tau_fus_s(),
        cfg.sweep.pre_pulse_window_s,
        cfg.sweep.dense_frame_spacing_s,
    )?;
    let sm = build_signal_matrix_on_schedule(&cfg.models.labeled(), &dense)?;
    let selection = design::greedy_frame_selection(&sm, cfg.selection.target_frames)?;

    let sel_path = out.join("selection.json");
    csv::write_json(&sel_path, &selection)?;
    manifest.add(&sel_path);

    let reduced_path = out.join("reduced_matrix.csv");
    csv::write_signal_matrix(&reduced_path, selection.reduced())?;
    manifest.add(&reduced_path);

    manifest.finalize()?;
    eprintln!(
        "ndmux: kept {} of {} frames",
        selection.kept_indices.len(),
        sm.n_frames()
    );
    Ok(())
}

pub fn simulate(config: &Option<PathBuf>, out: &Path, seed: Option<u64>) -> Result<()> {
    let (cfg, mut manifest) = setup(config, out, seed)?;

    let mut ground_truth = Vec::new();
    for (fi, &frac) in cfg.experiment.fractions_a.iter().enumerate() {
        for rep in 0..cfg.experiment.replicates_a {
            let capture_seed = experiment::capture_seed(&cfg, experiment::BATCH_A, fi, rep);
            let stack = experiment::simulate_capture(&cfg, frac, capture_seed)?;
            let name = format!("stack_f{:03}_r{rep:02}.frs1", (frac * 100.0).round() as u32);
            let path = out.join(&name);
            frs1::write_frame_stack(&path, &stack)?;
            manifest.add(&path);
            ground_truth.push(json!({
                "file": name,
                "true_frac56": frac,
                "replicate": rep,
                "seed": capture_seed,
            }));
        }
    }

    let gt_path = out.join("ground_truth.json");
    csv::write_json(&gt_path, &ground_truth)?;
    manifest.add(&gt_path);

    manifest.finalize()?;
    eprintln!("ndmux: wrote {} stacks", ground_truth.len());
    Ok(())
}

/// Load an endmember matrix from either a bare CSV (identity normalization)
/// or an endmembers.json carrying the normalization record.
fn load_endmembers(path: &Path) -> Result<EndmemberMatrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| {
                Error::validation(format!("{}: invalid endmembers json: {e}", path.display()))
            })
        }
        _ => EndmemberMatrix::from_matrix(csv::read_dense_matrix(path)?),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn unmix(
    config: &Option<PathBuf>,
    out: &Path,
    seed: Option<u64>,
    stacks: &[PathBuf],
    endmembers: &Path,
    pitch_mm: f64,
    roi_mm: f64,
) -> Result<()> {
    let (_cfg, mut manifest) = setup(config, out, seed)?;
    let em = load_endmembers(endmembers)?;

    for stack_path in stacks {
        let stack = frs1::read_frame_stack(stack_path)?;
        let stem = stack_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("stack")
            .to_string();

        // ROI trace and its unmixing at the image center.
        let roi = RoiMm::square(
            stack.width() as f64 * pitch_mm / 2.0,
            stack.height() as f64 * pitch_mm / 2.0,
            roi_mm,
        );
        let trace = extract_roi_trace(&stack, pitch_mm, &roi)?;
        let trace_path = out.join(format!("{stem}_roi_trace.csv"));
        csv::write_trace_csv(&trace_path, stack.frame_times_s(), &trace)?;
        manifest.add(&trace_path);

        let result = unmix_trace(&em, &trace)?;
        let roi_path = out.join(format!("{stem}_roi_unmix.json"));
        csv::write_json(&roi_path, &result)?;
        manifest.add(&roi_path);

        // Pixel-wise maps.
        let maps = unmix_stack(&em, &stack)?;
        for (name, map) in [
            ("c28", &maps.c28),
            ("c56", &maps.c56),
            ("cbg", &maps.cbg),
            ("frac56", &maps.frac56),
        ] {
            let map_path = out.join(format!("{stem}_{name}.csv"));
            csv::write_map_csv(&map_path, maps.width, maps.height, map)?;
            manifest.add(&map_path);
        }
        let rasters = raster::write_map_rasters(out, &stem, &maps)?;
        manifest.add_all(&rasters);
    }

    manifest.finalize()?;
    eprintln!("ndmux: unmixed {} stacks", stacks.len());
    Ok(())
}

pub fn calibrate(
    config: &Option<PathBuf>,
    out: &Path,
    seed: Option<u64>,
    scatter: &Path,
) -> Result<()> {
    let (_cfg, mut manifest) = setup(config, out, seed)?;
    let rows = csv::read_scatter_csv(scatter)?;
    let truth: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let est: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let curve = ndmux_core::unmix::fit_calibration(&truth, &est)?;

    let fit_path = out.join("fit.json");
    csv::write_json(&fit_path, &curve)?;
    manifest.add(&fit_path);
    manifest.finalize()?;
    eprintln!(
        "ndmux: fit slope={:.4} intercept={:.4} r2={:.4}",
        curve.fit.slope, curve.fit.intercept, curve.fit.r_squared
    );
    Ok(())
}

pub fn pipeline(config: &Option<PathBuf>, out: &Path, seed: Option<u64>) -> Result<()> {
    let (cfg, mut manifest) = setup(config, out, seed)?;
    let result = experiment::run_pipeline(&cfg, true)?;

    // Ground-truth endmember matrix, both as a bare CSV and with its
    // normalization record.
    let em_csv = out.join("endmembers.csv");
    csv::write_dense_matrix(&em_csv, result.endmembers.matrix())?;
    manifest.add(&em_csv);
    let em_json = out.join("endmembers.json");
    csv::write_json(&em_json, &result.endmembers)?;
    manifest.add(&em_json);

    // Batch A scatter and the calibration fit.
    let fig5a = out.join("fig5a.csv");
    let rows_a: Vec<(f64, usize, f64)> = result
        .batch_a
        .iter()
        .map(|p| (p.true_frac, p.replicate, p.est_frac))
        .collect();
    csv::write_scatter_csv(&fig5a, &rows_a)?;
    manifest.add(&fig5a);

    let fit_path = out.join("fit.json");
    csv::write_json(&fit_path, &result.fit)?;
    manifest.add(&fit_path);

    // Calibrated batch B.
    let fig5b = out.join("fig5b.csv");
    let rows_b: Vec<(f64, usize, f64, f64)> = result
        .batch_b
        .iter()
        .map(|p| (p.true_frac, p.replicate, p.est_frac, p.corrected_frac))
        .collect();
    csv::write_calibrated_csv(&fig5b, &rows_b)?;
    manifest.add(&fig5b);

    // Pixel-wise map sets for each validation fraction.
    for (frac, maps) in &result.maps {
        let stem = format!("map_f{:03}", (frac * 100.0).round() as u32);
        for (name, map) in [
            ("c28", &maps.c28),
            ("c56", &maps.c56),
            ("cbg", &maps.cbg),
            ("frac56", &maps.frac56),
        ] {
            let map_path = out.join(format!("{stem}_{name}.csv"));
            csv::write_map_csv(&map_path, maps.width, maps.height, map)?;
            manifest.add(&map_path);
        }
        let rasters = raster::write_map_rasters(out, &stem, maps)?;
        manifest.add_all(&rasters);
    }

    let summary_path = out.join("summary.json");
    csv::write_json(&summary_path, &result.summary())?;
    manifest.add(&summary_path);

    manifest.finalize()?;
    eprintln!(
        "ndmux: fit slope={:.4} r2={:.4}; mae uncalibrated={:.4} calibrated={:.4}",
        result.fit.fit.slope,
        result.fit.fit.r_squared,
        result.uncalibrated_mae,
        result.calibrated_mae
    );
    Ok(())
}
