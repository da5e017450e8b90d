//! Dense decompositions.
//!
//! Matrices are `nalgebra::DMatrix<f64>` throughout the crate; the SVD and
//! the symmetric eigensolver are delegated to `faer`, which is an order of
//! magnitude faster than nalgebra's unblocked routines at the 6400x1600 sizes
//! used for full-lattice experiments.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} has non-finite entries")))
    }
}

/// Thin SVD `m = U diag(s) V^T` with `min(rows, cols)` triples, singular
/// values non-increasing. Signs are as returned by the solver.
pub fn thin_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    check_finite(m, "matrix")?;
    let r = m.nrows().min(m.ncols());
    if r == 0 {
        return Ok((
            DMatrix::zeros(m.nrows(), 0),
            Vec::new(),
            DMatrix::zeros(m.ncols(), 0),
        ));
    }
    let svd = to_faer(m)
        .thin_svd()
        .map_err(|e| Error::Numeric(format!("SVD failed: {e:?}")))?;
    let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let values: Vec<f64> = order.iter().map(|&i| s[i].max(0.0)).collect();
    let u_out = DMatrix::from_fn(m.nrows(), r, |i, j| u[(i, order[j])]);
    let v_out = DMatrix::from_fn(m.ncols(), r, |i, j| v[(i, order[j])]);
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("SVD did not converge".into()));
    }
    Ok((u_out, values, v_out))
}

/// Eigendecomposition of a symmetric matrix, eigenvalues non-increasing and
/// eigenvectors as the matching columns. Only the lower triangle is read.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(format!(
            "eigendecomposition of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m, "matrix")?;
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let eig = to_faer(m)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("eigensolver failed: {e:?}")))?;
    let (u, s) = (eig.U(), eig.S().column_vector());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let values: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| u[(i, order[j])]);
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("eigensolver did not converge".into()));
    }
    Ok((values, vectors))
}

/// Largest `|m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Flips the sign of column `j` of `primary` (and of `paired`, if given) so
/// that the largest-magnitude entry of the primary column is positive; ties
/// go to the lowest index.
pub fn canonicalize_signs(primary: &mut DMatrix<f64>, mut paired: Option<&mut DMatrix<f64>>) {
    for j in 0..primary.ncols() {
        let col = primary.column(j);
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            primary.column_mut(j).neg_mut();
            if let Some(p) = paired.as_deref_mut() {
                p.column_mut(j).neg_mut();
            }
        }
    }
}

/// Returns `x / |x|`, or `x` unchanged when it is zero.
pub fn normalized(x: &DVector<f64>) -> DVector<f64> {
    let n = x.norm();
    if n > 0.0 {
        x / n
    } else {
        x.clone()
    }
}

/// `Some(L)` when `n == L * L`.
pub fn lattice_side(n: usize) -> Option<usize> {
    let l = (n as f64).sqrt().round() as usize;
    (l * l == n).then_some(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let (_, s, _) = thin_svd(&m).unwrap();
        assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_reconstructs_exact_projectors() {
        // rank-deficient matrices with clustered singular values
        let a = DMatrix::from_fn(8, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * i as f64);
        let q = a.qr().q();
        let p = &q * q.transpose();
        for m in [p.clone(), DMatrix::identity(8, 8) - &p] {
            let (u, s, v) = thin_svd(&m).unwrap();
            let rebuilt = &u * DMatrix::from_diagonal(&DVector::from_vec(s)) * v.transpose();
            assert!((rebuilt - &m).norm() < 1e-12);
        }
    }

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 1.0]);
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        assert!((vals[0] - 5.0).abs() < 1e-12);
        assert!((vals[2] - 1.0).abs() < 1e-12);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = DMatrix::<f64>::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(thin_svd(&m).is_err());
        assert!(symmetric_eigen(&m).is_err());
    }

    #[test]
    fn lattice_sides() {
        assert_eq!(lattice_side(784), Some(28));
        assert_eq!(lattice_side(785), None);
        assert_eq!(lattice_side(1), Some(1));
    }
}
