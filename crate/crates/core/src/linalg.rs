//! Small dense linear-algebra helpers shared by the noise and covariance modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance on a Cholesky pivot before a matrix is declared indefinite.
pub const PSD_PIVOT_TOL: f64 = 1e-10;
/// Symmetry tolerance for covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub const POWER_ITERATION_TOL: f64 = 1e-10;
pub const POWER_ITERATION_MAX: usize = 10_000;

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

fn scale_of(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotPsd(format!(
            "matrix is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let tol = SYMMETRY_TOL * scale_of(m);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let gap = (m[(i, j)] - m[(j, i)]).abs();
            if gap > tol {
                return Err(Error::NotPsd(format!(
                    "entries ({i},{j}) and ({j},{i}) differ by {gap:.3e}"
                )));
            }
        }
    }
    Ok(())
}

/// Lower-triangular `L` with `L Lᵀ = m` for a symmetric positive *semi*definite `m`.
///
/// Pivots within `PSD_PIVOT_TOL` (scaled by the largest entry) of zero are treated
/// as exact zeros, which lets rank-deficient covariances through. A pivot below
/// `-tol`, or a zero pivot whose column still carries mass, is rejected.
pub fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(m)?;
    let n = m.nrows();
    let tol = PSD_PIVOT_TOL * scale_of(m);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot < -tol {
            return Err(Error::NotPsd(format!(
                "negative pivot {pivot:.3e} at index {j}"
            )));
        }
        if pivot <= tol {
            for i in (j + 1)..n {
                let mut r = m[(i, j)];
                for k in 0..j {
                    r -= l[(i, k)] * l[(j, k)];
                }
                if r.abs() > tol.sqrt() {
                    return Err(Error::NotPsd(format!(
                        "zero pivot at index {j} with off-diagonal residual {r:.3e}"
                    )));
                }
            }
            continue;
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut r = m[(i, j)];
            for k in 0..j {
                r -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = r / d;
        }
    }
    Ok(l)
}

pub fn is_psd(m: &DMatrix<f64>) -> bool {
    psd_factor(m).is_ok()
}

/// Largest singular value of `w`, by power iteration on `wᵀw`.
///
/// Stops once the Rayleigh-quotient estimate changes by less than
/// `POWER_ITERATION_TOL` relative; gives up after `POWER_ITERATION_MAX` steps.
pub fn operator_norm(w: &DMatrix<f64>) -> Result<f64> {
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "operator_norm: matrix has non-finite entries".into(),
        ));
    }
    let n = w.ncols();
    if n == 0 || w.nrows() == 0 || w.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let gram = w.transpose() * w;

    // Fixed, irregular start vector: avoids starting orthogonal to the top
    // singular vector for structured inputs such as [[1,-1]].
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.618_033_988_749_894_9 * ((i as f64 + 1.0) * 1.7).sin());
    v /= v.norm();

    let mut lambda = 0.0_f64;
    let mut residual = f64::INFINITY;
    for _ in 0..POWER_ITERATION_MAX {
        let next = &gram * &v;
        let norm = next.norm();
        if norm == 0.0 {
            // v landed in the null space; gram is nonzero so restart from a basis vector.
            let k = (0..n)
                .max_by(|&a, &b| gram[(a, a)].total_cmp(&gram[(b, b)]))
                .unwrap_or(0);
            v = DVector::zeros(n);
            v[k] = 1.0;
            continue;
        }
        let estimate = v.dot(&next);
        residual = if estimate > 0.0 {
            (estimate - lambda).abs() / estimate
        } else {
            f64::INFINITY
        };
        lambda = estimate;
        v = next / norm;
        if residual < POWER_ITERATION_TOL {
            return Ok(lambda.max(0.0).sqrt());
        }
    }
    Err(Error::NotConverged {
        what: "power iteration",
        iterations: POWER_ITERATION_MAX,
        residual,
        last_iterate: v.iter().copied().collect(),
    })
}

/// Pairwise (cascade) summation of `f(lo..hi)`.
pub fn pairwise_sum<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
    const LEAF: usize = 16;
    let n = hi - lo;
    if n <= LEAF {
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    } else {
        let mid = lo + n / 2;
        pairwise_sum(lo, mid, f) + pairwise_sum(mid, hi, f)
    }
}

pub fn diag_matrix(e: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(e))
}

/// Row-major nested vectors to a matrix; all rows must share a length.
pub fn matrix_from_rows(rows: &[Vec<f64>], context: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::dim(format!("{context}, row {i}"), ncols, r.len()));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
