//! Symmetric positive-definite helpers with an explicit conditioning guard.
//!
//! Fisher matrices mix units (seconds, radians, gain units), so every
//! inversion first equilibrates with the diagonal, `S = D^-1/2 J D^-1/2`,
//! and measures the condition number of `S`. Singular inputs are reported,
//! never regularized.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest equilibrated condition number accepted by [`spd_inverse`].
pub const CONDITION_LIMIT: f64 = 1e12;

/// Diagonal equilibration of a symmetric matrix.
fn equilibrate(m: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = m.nrows();
    let mut scale = Vec::with_capacity(n);
    for i in 0..n {
        let d = m[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::singular(format!("{what} (zero diagonal at {i})"), f64::INFINITY));
        }
        scale.push(1.0 / d.sqrt());
    }
    let s = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * scale[i] * scale[j]);
    Ok((symmetrize(&s), scale))
}

/// Condition number of the diagonally equilibrated matrix.
pub fn equilibrated_condition(m: &DMatrix<f64>) -> f64 {
    match equilibrate(m, "matrix") {
        Ok((s, _)) => eigen_condition(&s),
        Err(_) => f64::INFINITY,
    }
}

fn eigen_condition(s: &DMatrix<f64>) -> f64 {
    let ev = SymmetricEigen::new(s.clone()).eigenvalues;
    let max = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    check_square(m, what)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    // Dividing by a power of two first is exact and makes the result
    // exactly equivariant under power-of-two scaling of `m` (e.g. a doubled
    // noise power doubles every CRB bit for bit).
    let c = binade(m.diagonal().amax());
    let (s, scale) = equilibrate(&(m / c), what)?;
    let cond = eigen_condition(&s);
    if !(cond <= CONDITION_LIMIT) {
        return Err(Error::singular(what, cond));
    }
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::singular(what, cond))?;
    let s_inv = chol.inverse();
    let inv = DMatrix::from_fn(n, n, |i, j| s_inv[(i, j)] * scale[i] * scale[j] / c);
    Ok(symmetrize(&inv))
}

/// Largest power of two not above `x`, or 1 for zero, subnormal or
/// non-finite `x`.
fn binade(x: f64) -> f64 {
    if !x.is_normal() {
        return 1.0;
    }
    let exponent = ((x.to_bits() >> 52) & 0x7ff) as i32 - 1023;
    2f64.powi(exponent)
}

/// Schur complement `A - B C^-1 Bᵀ` of the block `[[A, B], [Bᵀ, C]]`.
pub fn schur_complement(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    what: &str,
) -> Result<DMatrix<f64>> {
    if b.nrows() != a.nrows() || b.ncols() != c.nrows() {
        return Err(Error::Dimension(format!(
            "schur blocks {}x{}, {}x{}, {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    if c.nrows() == 0 {
        return Ok(a.clone());
    }
    // Work in the jointly equilibrated coordinates and solve with the
    // Cholesky factor rather than forming C⁻¹.
    let (cs, sc) = equilibrate(c, what)?;
    let cond = eigen_condition(&cs);
    if !(cond <= CONDITION_LIMIT) {
        return Err(Error::singular(what, cond));
    }
    let chol = cs.cholesky().ok_or_else(|| Error::singular(what, cond))?;
    let sa: Vec<f64> = (0..a.nrows())
        .map(|i| if a[(i, i)] > 0.0 { 1.0 / a[(i, i)].sqrt() } else { 1.0 })
        .collect();
    let bs = DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * sa[i] * sc[j]);
    let x = chol.solve(&bs.transpose());
    let reduced = bs * x;
    Ok(symmetrize(&DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| {
        a[(i, j)] - reduced[(i, j)] / (sa[i] * sa[j])
    })))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// PSD test: smallest eigenvalue ≥ −`tol`·‖m‖₂.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    let ev = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let max_abs = ev.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    min >= -tol * max_abs.max(f64::MIN_POSITIVE)
}

/// Numerical rank of a symmetric matrix, relative to its largest eigenvalue.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let ev = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let max_abs = ev.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    ev.iter().filter(|v| v.abs() > rel_tol * max_abs).count()
}

/// Numerical rank after diagonal equilibration (zero-diagonal rows count as null).
pub fn equilibrated_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let n = m.nrows();
    let keep: Vec<usize> = (0..n).filter(|&i| m[(i, i)] > 0.0).collect();
    let sub = DMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
    match equilibrate(&sub, "matrix") {
        Ok((s, _)) => numerical_rank(&s, rel_tol),
        Err(_) => 0,
    }
}

/// Extracts the sub-matrix with the given row and column index lists.
pub fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = b.norm();
    if denom == 0.0 {
        a.norm()
    } else {
        (a - b).norm() / denom
    }
}

fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_mixed_scale_matrix() {
        // Units differing by 1e20 are fine after equilibration.
        let m = DMatrix::from_row_slice(2, 2, &[4e20, 1e10, 1e10, 2.0]);
        let inv = spd_inverse(&m, "m").unwrap();
        let det = 4e20 * 2.0 - 1e20;
        let exact = DMatrix::from_row_slice(2, 2, &[2.0 / det, -1e10 / det, -1e10 / det, 4e20 / det]);
        for (a, b) in inv.iter().zip(exact.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn halving_the_matrix_doubles_the_inverse_exactly() {
        let m = DMatrix::from_row_slice(3, 3, &[4e20, 1e10, 1e8, 1e10, 2.0, 0.1, 1e8, 0.1, 7e-3]);
        let inv = spd_inverse(&m, "m").unwrap();
        assert_eq!(spd_inverse(&(&m * 0.5), "m").unwrap(), inv * 2.0);
        assert_eq!(binade(3.0), 2.0);
        assert_eq!(binade(0.75), 0.5);
        assert_eq!(binade(0.0), 1.0);
    }

    #[test]
    fn singular_is_an_error() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(spd_inverse(&m, "m"), Err(Error::Singular { .. })));
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(spd_inverse(&z, "z").is_err());
    }

    #[test]
    fn schur_with_decoupled_nuisance_is_the_interest_block() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let b = DMatrix::zeros(2, 1);
        let c = DMatrix::from_element(1, 1, 5.0);
        assert_eq!(schur_complement(&a, &b, &c, "c").unwrap(), a);
    }

    #[test]
    fn rank_of_outer_product() {
        let v = nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        assert_eq!(numerical_rank(&m, 1e-12), 1);
        assert!(is_psd(&m, 1e-12));
    }
}
