//! Self-contained dense numerical kernels.
//!
//! Everything here operates on small matrices (three endmember rows, a few
//! hundred frames at most), so the implementations favour clarity and
//! numerical robustness over asymptotic speed:
//!
//! - [`sv_product`] — product of singular values computed through the Gram
//!   determinant `sqrt(det(M·Mᵀ))`, the differentiability metric used by the
//!   acquisition-design module. Equivalently the square root of the
//!   D-optimality criterion.
//! - [`nnls`] — Lawson–Hanson active-set nonnegative least squares.
//! - [`linear_fit`] — ordinary least-squares line fit with R².

use crate::error::{ensure_finite, Error, Result};
use serde::{Deserialize, Serialize};

/// Determinants below this absolute value are clamped to zero: the matrix is
/// treated as row-rank-deficient.
pub const RANK_DEFICIENCY_DET_FLOOR: f64 = 1e-30;

/// Relative KKT tolerance for [`nnls`]: `eps = NNLS_KKT_REL * ||Aᵀy||∞`.
pub const NNLS_KKT_REL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// DenseMatrix
// ---------------------------------------------------------------------------

/// Dense row-major matrix of finite `f64` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Build from row-major data. Requires `rows >= 1`, `cols >= 1`, finite
    /// entries, and `data.len() == rows * cols`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::validation(format!(
                "matrix dimensions must be >= 1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::validation(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        ensure_finite(&data, "matrix")?;
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Build from a list of equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::validation("matrix needs at least one row"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("rows have unequal lengths"));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        DenseMatrix::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// New matrix containing only the given columns, in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::validation("column selection is empty"));
        }
        if let Some(&c) = keep.iter().find(|&&c| c >= self.cols) {
            return Err(Error::validation(format!(
                "column index {c} out of range for {} columns",
                self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.rows * keep.len());
        for r in 0..self.rows {
            for &c in keep {
                data.push(self.get(r, c));
            }
        }
        DenseMatrix::new(self.rows, keep.len(), data)
    }

    /// Matrix-vector product `M·x`.
    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "mat_vec dimension mismatch");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Transposed matrix-vector product `Mᵀ·x`.
    pub fn mat_t_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "mat_t_vec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * xr;
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Gram determinant and singular-value product
// ---------------------------------------------------------------------------

/// Determinant of the Gram matrix `M·Mᵀ`, i.e. the D-optimality criterion of
/// the row design. Requires `rows <= cols`.
pub fn gram_determinant(m: &DenseMatrix) -> Result<f64> {
    if m.rows() > m.cols() {
        return Err(Error::validation(format!(
            "gram determinant needs rows <= cols, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut gram = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i..n {
            let g: f64 = m.row(i).iter().zip(m.row(j)).map(|(a, b)| a * b).sum();
            gram[i * n + j] = g;
            gram[j * n + i] = g;
        }
    }
    Ok(determinant_in_place(&mut gram, n))
}

/// Product of the singular values of `M` (rows <= cols), computed as
/// `sqrt(det(M·Mᵀ))`. Returns 0 when `M` is row-rank-deficient: determinants
/// below [`RANK_DEFICIENCY_DET_FLOOR`] (including small negative values from
/// floating-point cancellation) clamp to zero.
pub fn sv_product(m: &DenseMatrix) -> Result<f64> {
    let det = gram_determinant(m)?;
    if det < RANK_DEFICIENCY_DET_FLOOR {
        return Ok(0.0);
    }
    Ok(det.sqrt())
}

/// In-place determinant of an `n x n` row-major matrix via Gaussian
/// elimination with partial pivoting.
fn determinant_in_place(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0f64;
    for k in 0..n {
        // Pivot on the largest remaining entry in column k.
        let mut piv = k;
        for r in (k + 1)..n {
            if a[r * n + k].abs() > a[piv * n + k].abs() {
                piv = r;
            }
        }
        if a[piv * n + k] == 0.0 {
            return 0.0;
        }
        if piv != k {
            for c in 0..n {
                a.swap(k * n + c, piv * n + c);
            }
            det = -det;
        }
        let pivot = a[k * n + k];
        det *= pivot;
        for r in (k + 1)..n {
            let factor = a[r * n + k] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in k..n {
                a[r * n + c] -= factor * a[k * n + c];
            }
        }
    }
    det
}

// ---------------------------------------------------------------------------
// Least squares (Householder QR) — shared by nnls
// ---------------------------------------------------------------------------

/// Minimum-residual solution of `A_S z = y` restricted to the columns in
/// `support`, via Householder QR. Returns `None` when the selected columns
/// are numerically rank-deficient.
fn lstsq_on_support(a: &DenseMatrix, support: &[usize], y: &[f64]) -> Option<Vec<f64>> {
    let m = a.rows();
    let k = support.len();
    debug_assert!(k >= 1 && y.len() == m);

    // Column-major working copy of the selected columns.
    let mut q = vec![0.0f64; m * k];
    for (sj, &c) in support.iter().enumerate() {
        for r in 0..m {
            q[sj * m + r] = a.get(r, c);
        }
    }
    let mut rhs = y.to_vec();

    let steps = k.min(m);
    for j in 0..steps {
        // Householder vector for column j below the diagonal.
        let col = &q[j * m..(j + 1) * m];
        let norm_below: f64 = col[j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_below == 0.0 {
            return None;
        }
        let alpha = if col[j] >= 0.0 { -norm_below } else { norm_below };
        let mut v: Vec<f64> = col[j..].to_vec();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv == 0.0 {
            // Column already triangular at this step.
            continue;
        }

        // Apply the reflector to the remaining columns and the RHS.
        for jj in j..k {
            let col_jj = &mut q[jj * m..(jj + 1) * m];
            let dot: f64 = v.iter().zip(&col_jj[j..]).map(|(vi, ci)| vi * ci).sum();
            let scale = 2.0 * dot / vtv;
            for (vi, ci) in v.iter().zip(col_jj[j..].iter_mut()) {
                *ci -= scale * vi;
            }
        }
        let dot: f64 = v.iter().zip(&rhs[j..]).map(|(vi, ri)| vi * ri).sum();
        let scale = 2.0 * dot / vtv;
        for (vi, ri) in v.iter().zip(rhs[j..].iter_mut()) {
            *ri -= scale * vi;
        }
    }

    if k > m {
        return None;
    }

    // Reject numerically dependent supports: tiny diagonal relative to the
    // column scale means the new column adds no independent direction.
    let scale = q
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for j in 0..k {
        if q[j * m + j].abs() <= 1e-12 * scale {
            return None;
        }
    }

    // Back substitution on the upper-triangular factor.
    let mut z = vec![0.0f64; k];
    for j in (0..k).rev() {
        let mut s = rhs[j];
        for jj in (j + 1)..k {
            s -= q[jj * m + j] * z[jj];
        }
        z[j] = s / q[j * m + j];
    }
    Some(z)
}

// ---------------------------------------------------------------------------
// Nonnegative least squares
// ---------------------------------------------------------------------------

/// Solution of a nonnegative least-squares problem.
#[derive(Debug, Clone)]
pub struct NnlsSolution {
    /// Componentwise-nonnegative coefficients minimizing `||A·c - y||₂`.
    pub coefficients: Vec<f64>,
    /// Euclidean norm of the residual `A·c - y`.
    pub residual_norm: f64,
    /// Outer active-set iterations used.
    pub iterations: usize,
}

/// Lawson–Hanson active-set nonnegative least squares: minimize
/// `||A·c − y||₂` subject to `c >= 0`.
///
/// Converges when the KKT conditions hold at tolerance
/// `eps = NNLS_KKT_REL · ||Aᵀy||∞`: positive coefficients have zero gradient
/// and zero coefficients have nonnegative gradient. The outer iteration cap
/// is `3·n`; exceeding it is a convergence error whose message reports the
/// best iterate.
pub fn nnls(a: &DenseMatrix, y: &[f64]) -> Result<NnlsSolution> {
    let m = a.rows();
    let n = a.cols();
    if y.len() != m {
        return Err(Error::validation(format!(
            "nnls rhs length {} does not match {m} matrix rows",
            y.len()
        )));
    }
    ensure_finite(y, "nnls rhs")?;

    let aty = a.mat_t_vec(y);
    let tol = NNLS_KKT_REL * aty.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

    let max_iter = 3 * n;
    let mut x = vec![0.0f64; n];
    let mut passive: Vec<usize> = Vec::new();
    let mut rejected = vec![false; n];
    let mut iterations = 0usize;

    loop {
        // Dual vector w = Aᵀ(y − A·x); positive entries outside the passive
        // set are descent directions.
        let residual: Vec<f64> = a
            .mat_vec(&x)
            .iter()
            .zip(y)
            .map(|(ax, yi)| yi - ax)
            .collect();
        let w = a.mat_t_vec(&residual);

        let entering = (0..n)
            .filter(|j| !passive.contains(j) && !rejected[*j] && w[*j] > tol)
            .max_by(|&p, &q| w[p].partial_cmp(&w[q]).expect("finite duals"));
        let Some(j) = entering else {
            break; // KKT satisfied
        };

        if iterations >= max_iter {
            let rnorm = residual.iter().map(|r| r * r).sum::<f64>().sqrt();
            return Err(Error::convergence(format!(
                "nnls: iteration cap {max_iter} exceeded; best iterate {x:?} with residual {rnorm:.6e}"
            )));
        }
        iterations += 1;

        // Tentatively add j; reject it (classic linear-dependence guard) when
        // the subproblem is singular or drives the new coefficient to <= 0.
        let mut trial = passive.clone();
        trial.push(j);
        match lstsq_on_support(a, &trial, y) {
            Some(z) if *z.last().expect("nonempty") > 0.0 => {
                passive = trial;
                rejected.iter_mut().for_each(|r| *r = false);
                let mut z = z;
                // Feasibility loop: pull the iterate back onto the boundary
                // and drop variables that hit zero.
                loop {
                    if z.iter().all(|&zi| zi > 0.0) {
                        for (slot, &pi) in passive.iter().enumerate() {
                            x[pi] = z[slot];
                        }
                        break;
                    }
                    let mut alpha = f64::INFINITY;
                    for (slot, &pi) in passive.iter().enumerate() {
                        if z[slot] <= 0.0 {
                            let t = x[pi] / (x[pi] - z[slot]);
                            if t < alpha {
                                alpha = t;
                            }
                        }
                    }
                    for (slot, &pi) in passive.iter().enumerate() {
                        x[pi] += alpha * (z[slot] - x[pi]);
                    }
                    let mut kept = Vec::with_capacity(passive.len());
                    for &pi in &passive {
                        if x[pi] > 0.0 {
                            kept.push(pi);
                        } else {
                            x[pi] = 0.0;
                        }
                    }
                    passive = kept;
                    if passive.is_empty() {
                        z = Vec::new();
                        break;
                    }
                    match lstsq_on_support(a, &passive, y) {
                        Some(zz) => z = zz,
                        None => {
                            return Err(Error::convergence(
                                "nnls: passive set became singular during feasibility restore"
                                    .to_string(),
                            ))
                        }
                    }
                }
                let _ = z;
            }
            _ => {
                // Dependent or non-improving column: exclude it until the
                // passive set changes again.
                rejected[j] = true;
            }
        }
    }

    let residual: Vec<f64> = a
        .mat_vec(&x)
        .iter()
        .zip(y)
        .map(|(ax, yi)| yi - ax)
        .collect();
    let residual_norm = residual.iter().map(|r| r * r).sum::<f64>().sqrt();
    Ok(NnlsSolution {
        coefficients: x,
        residual_norm,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// Line fitting
// ---------------------------------------------------------------------------

/// Ordinary least-squares line fit `y ≈ slope·x + intercept` with R².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination, clamped to `[0, 1]`. A zero-variance
    /// response with zero residual fits perfectly: R² = 1.
    pub r_squared: f64,
}

/// Ordinary least-squares fit of `y` against `x`.
///
/// Needs at least two points and non-identical abscissae.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::validation(format!(
            "linear_fit input lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::validation("linear_fit needs at least two points"));
    }
    ensure_finite(x, "linear_fit x")?;
    ensure_finite(y, "linear_fit y")?;

    let n = x.len() as f64;
    let x_mean = x.iter().sum::<f64>() / n;
    let y_mean = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - x_mean) * (xi - x_mean)).sum();
    if sxx == 0.0 {
        return Err(Error::validation(
            "linear_fit is degenerate: all x values identical",
        ));
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (xi - x_mean) * (yi - y_mean))
        .sum();

    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;

    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let e = yi - (slope * xi + intercept);
            e * e
        })
        .sum();
    let ss_tot: f64 = y.iter().map(|yi| (yi - y_mean) * (yi - y_mean)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        // Constant response: the fit is exact.
        1.0
    };

    Ok(LineFit {
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matrix_rejects_bad_shapes() {
        assert!(DenseMatrix::new(0, 3, vec![]).is_err());
        assert!(DenseMatrix::new(2, 2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn sv_product_identity() {
        let m = DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert!(approx(sv_product(&m).unwrap(), 1.0, 1e-14));
    }

    #[test]
    fn sv_product_rank_deficient_rows() {
        let m =
            DenseMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]).unwrap();
        assert_eq!(sv_product(&m).unwrap(), 0.0);
    }

    #[test]
    fn sv_product_hand_computed_2x2() {
        // M = [[1,1],[1,-1]]: M·Mᵀ = diag(2,2), det = 4, product = 2.
        let m = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        assert!(approx(sv_product(&m).unwrap(), 2.0, 1e-14));
    }

    #[test]
    fn sv_product_rejects_tall_matrices() {
        let m = DenseMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(sv_product(&m).is_err());
    }

    #[test]
    fn nnls_identity_recovers_rhs() {
        let a = DenseMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let sol = nnls(&a, &[1.0, 2.0, 3.0]).unwrap();
        for (c, e) in sol.coefficients.iter().zip([1.0, 2.0, 3.0]) {
            assert!(approx(*c, e, 1e-12));
        }
        assert!(sol.residual_norm < 1e-12);
    }

    #[test]
    fn nnls_clips_negative_component() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let sol = nnls(&a, &[1.0, -1.0]).unwrap();
        assert!(approx(sol.coefficients[0], 1.0, 1e-12));
        assert_eq!(sol.coefficients[1], 0.0);
        assert!(approx(sol.residual_norm, 1.0, 1e-12));
    }

    #[test]
    fn nnls_single_column_average() {
        // min (c-0)^2 + (c-2)^2 over c >= 0 -> c = 1.
        let a = DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let sol = nnls(&a, &[0.0, 2.0]).unwrap();
        assert!(approx(sol.coefficients[0], 1.0, 1e-12));
    }

    #[test]
    fn nnls_rejects_bad_rhs() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(nnls(&a, &[1.0, 2.0]).is_err());
        assert!(nnls(&a, &[f64::INFINITY]).is_err());
    }

    #[test]
    fn nnls_handles_duplicate_columns() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let sol = nnls(&a, &[1.0, 1.0]).unwrap();
        // Either column alone explains the rhs; the fit must be exact.
        assert!(sol.residual_norm < 1e-12);
        assert!(sol.coefficients.iter().all(|&c| c >= 0.0));
    }

    #[test]
    fn linear_fit_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert!(approx(fit.slope, 2.0, 1e-12));
        assert!(approx(fit.intercept, 1.0, 1e-12));
        assert!(approx(fit.r_squared, 1.0, 1e-12));
    }

    #[test]
    fn linear_fit_constant_response() {
        let fit = linear_fit(&[0.0, 1.0, 2.0], &[5.0, 5.0, 5.0]).unwrap();
        assert!(approx(fit.slope, 0.0, 1e-12));
        assert!(approx(fit.intercept, 5.0, 1e-12));
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn linear_fit_symmetric_triple() {
        // (0,0),(1,1),(2,0): slope 0, intercept 1/3, R^2 = 0.
        let fit = linear_fit(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!(approx(fit.slope, 0.0, 1e-12));
        assert!(approx(fit.intercept, 1.0 / 3.0, 1e-12));
        assert!(approx(fit.r_squared, 0.0, 1e-12));
    }

    #[test]
    fn linear_fit_degenerate_x() {
        assert!(linear_fit(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).is_err());
        assert!(linear_fit(&[1.0], &[0.0]).is_err());
    }
}
