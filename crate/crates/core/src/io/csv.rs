//! CSV readers and writers.
//!
//! All floats are formatted with [`format_f64`]: scientific notation with 17
//! significant digits, enough to reproduce any f64 bit pattern on parse.

use crate::design::SweepResult;
use crate::dynamics::SignalMatrix;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Full-precision decimal form of an f64 (17 significant digits).
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(token: &str, path: &Path, line: usize) -> Result<f64> {
    token.trim().parse::<f64>().map_err(|_| {
        Error::validation(format!(
            "{}:{line}: cannot parse '{token}' as a number",
            path.display()
        ))
    })
}

// ---------------------------------------------------------------------------
// Raw matrices (no header)
// ---------------------------------------------------------------------------

/// Write a matrix as bare CSV rows, no header.
pub fn write_dense_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|&v| format_f64(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a bare CSV matrix (no header); all rows must have equal length.
pub fn read_dense_matrix(path: &Path) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>> = line
            .split(',')
            .map(|tok| parse_f64(tok, path, i + 1))
            .collect();
        rows.push(row?);
    }
    if rows.is_empty() {
        return Err(Error::validation(format!(
            "{}: empty matrix file",
            path.display()
        )));
    }
    DenseMatrix::from_rows(&rows)
}

// ---------------------------------------------------------------------------
// Signal matrices (header row, frames as rows)
// ---------------------------------------------------------------------------

/// Write a signal matrix as `t_s,<label1>,<label2>,...` with one row per
/// frame. Columns are endmembers for readability; the in-memory orientation
/// stays rows = endmembers.
pub fn write_signal_matrix(path: &Path, sm: &SignalMatrix) -> Result<()> {
    let mut out = String::from("t_s");
    for label in sm.labels() {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for (j, &t) in sm.frame_times_s().iter().enumerate() {
        out.push_str(&format_f64(t));
        for i in 0..sm.n_endmembers() {
            out.push(',');
            out.push_str(&format_f64(sm.matrix().get(i, j)));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a signal matrix written by [`write_signal_matrix`].
pub fn read_signal_matrix(path: &Path) -> Result<SignalMatrix> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::validation(format!("{}: empty file", path.display())))?;
    let mut fields = header.split(',');
    if fields.next().map(str::trim) != Some("t_s") {
        return Err(Error::validation(format!(
            "{}: expected 't_s' header column",
            path.display()
        )));
    }
    let labels: Vec<String> = fields.map(|s| s.trim().to_string()).collect();
    if labels.is_empty() {
        return Err(Error::validation(format!(
            "{}: no endmember columns",
            path.display()
        )));
    }

    let mut times = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split(',').collect();
        if tokens.len() != labels.len() + 1 {
            return Err(Error::validation(format!(
                "{}:{}: expected {} fields, got {}",
                path.display(),
                i + 1,
                labels.len() + 1,
                tokens.len()
            )));
        }
        times.push(parse_f64(tokens[0], path, i + 1)?);
        let col: Result<Vec<f64>> = tokens[1..]
            .iter()
            .map(|tok| parse_f64(tok, path, i + 1))
            .collect();
        columns.push(col?);
    }

    // Transpose frame rows back into endmember rows.
    let rows: Vec<Vec<f64>> = (0..labels.len())
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect();
    SignalMatrix::new(labels, times, DenseMatrix::from_rows(&rows)?)
}

// ---------------------------------------------------------------------------
// Derived tables
// ---------------------------------------------------------------------------

/// Write the sweep grid as `n_pulses,tau_fus_s,metric` rows.
pub fn write_sweep_csv(path: &Path, sweep: &SweepResult) -> Result<()> {
    let mut out = String::from("n_pulses,tau_fus_s,metric\n");
    for e in &sweep.entries {
        out.push_str(&format!(
            "{},{},{}\n",
            e.n_pulses,
            format_f64(e.tau_fus_s),
            format_f64(e.metric)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a per-frame trace as `t_s,amplitude` rows.
pub fn write_trace_csv(path: &Path, times_s: &[f64], trace: &[f64]) -> Result<()> {
    if times_s.len() != trace.len() {
        return Err(Error::validation(
            "trace and time vectors have different lengths",
        ));
    }
    let mut out = String::from("t_s,amplitude\n");
    for (t, v) in times_s.iter().zip(trace) {
        out.push_str(&format!("{},{}\n", format_f64(*t), format_f64(*v)));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write fraction-estimate scatter rows: `true_frac,replicate,est_frac`.
pub fn write_scatter_csv(path: &Path, rows: &[(f64, usize, f64)]) -> Result<()> {
    let mut out = String::from("true_frac,replicate,est_frac\n");
    for (t, r, e) in rows {
        out.push_str(&format!("{},{r},{}\n", format_f64(*t), format_f64(*e)));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read scatter rows as `(true_frac, est_frac)` pairs. Accepts both the
/// 3-column `true_frac,replicate,est_frac` layout and a bare 2-column
/// `true_frac,est_frac` layout.
pub fn read_scatter_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 && line.contains("true_frac") {
            continue; // header
        }
        let tokens: Vec<&str> = line.split(',').collect();
        let (t, e) = match tokens.len() {
            2 => (tokens[0], tokens[1]),
            3 => (tokens[0], tokens[2]),
            n => {
                return Err(Error::validation(format!(
                    "{}:{}: expected 2 or 3 fields, got {n}",
                    path.display(),
                    i + 1
                )))
            }
        };
        rows.push((parse_f64(t, path, i + 1)?, parse_f64(e, path, i + 1)?));
    }
    if rows.is_empty() {
        return Err(Error::validation(format!(
            "{}: no scatter rows",
            path.display()
        )));
    }
    Ok(rows)
}

/// Write calibrated-batch rows:
/// `true_frac,replicate,est_frac,corrected_frac`.
pub fn write_calibrated_csv(path: &Path, rows: &[(f64, usize, f64, f64)]) -> Result<()> {
    let mut out = String::from("true_frac,replicate,est_frac,corrected_frac\n");
    for (t, r, e, c) in rows {
        out.push_str(&format!(
            "{},{r},{},{}\n",
            format_f64(*t),
            format_f64(*e),
            format_f64(*c)
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write a row-major f64 map as bare CSV (height rows by width columns).
/// `NaN` entries (undefined fractions) serialize as `NaN`.
pub fn write_map_csv(path: &Path, width: usize, height: usize, map: &[f64]) -> Result<()> {
    if map.len() != width * height {
        return Err(Error::validation("map size does not match dimensions"));
    }
    let mut out = String::new();
    for y in 0..height {
        let row: Vec<String> = (0..width)
            .map(|x| format_f64(map[y * width + x]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Append-free helper for small JSON documents.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = fs::File::create(path)?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::validation(format!("json serialization failed: {e}")))?;
    file.write_all(text.as_bytes())?;
    file.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn dense_matrix_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DenseMatrix::from_rows(&[
            vec![1.0 / 3.0, 2.0f64.sqrt(), 1e-300],
            vec![0.1 + 0.2, -4.5e17, 0.0],
        ])
        .unwrap();
        write_dense_matrix(&path, &m).unwrap();
        let back = read_dense_matrix(&path).unwrap();
        assert_eq!(m.data(), back.data());
    }

    #[test]
    fn signal_matrix_round_trip() {
        use crate::design::standard_sequence;
        use crate::dynamics::{build_signal_matrix, default_models};
        let dir = tempdir().unwrap();
        let path = dir.path().join("sm.csv");
        let sm = build_signal_matrix(&default_models(), &standard_sequence()).unwrap();
        write_signal_matrix(&path, &sm).unwrap();
        let back = read_signal_matrix(&path).unwrap();
        assert_eq!(sm.labels(), back.labels());
        assert_eq!(sm.frame_times_s(), back.frame_times_s());
        assert_eq!(sm.matrix().data(), back.matrix().data());
    }

    #[test]
    fn scatter_round_trip_both_layouts() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_scatter_csv(&path, &[(0.0, 0, 0.01), (0.5, 1, 0.39)]).unwrap();
        let rows = read_scatter_csv(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].0, 0.5);
        assert_eq!(rows[1].1, 0.39);

        let bare = dir.path().join("bare.csv");
        std::fs::write(&bare, "0.0,0.1\n1.0,0.8\n").unwrap();
        let rows = read_scatter_csv(&bare).unwrap();
        assert_eq!(rows, vec![(0.0, 0.1), (1.0, 0.8)]);
    }

    #[test]
    fn malformed_matrix_is_a_validation_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1.0,2.0\n3.0\n").unwrap();
        assert!(matches!(
            read_dense_matrix(&path),
            Err(Error::Validation(_))
        ));
    }
}
