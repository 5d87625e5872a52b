//! Dense linear-algebra helpers over `nalgebra` dynamic matrices.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values below this are treated as zero by the solvers.
pub const SINGULAR_TOL: f64 = 1e-10;

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, in ascending order.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn lambda_max_sym(m: &Matrix) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

pub fn lambda_min_sym(m: &Matrix) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Largest singular value.
pub fn op_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

pub fn min_singular(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.min()
}

fn check_square(a: &Matrix, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: expected square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Solves `a x = rhs` for square, well-conditioned `a`.
pub fn solve(a: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    check_square(a, "solve")?;
    if rhs.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "solve: lhs has {} rows, rhs has {}",
            a.nrows(),
            rhs.nrows()
        )));
    }
    let smin = min_singular(a);
    if !(smin > SINGULAR_TOL) {
        return Err(Error::SingularSystem { min_singular: smin });
    }
    a.clone()
        .lu()
        .solve(rhs)
        .ok_or(Error::SingularSystem { min_singular: smin })
}

pub fn solve_vec(a: &Matrix, rhs: &Vector) -> Result<Vector> {
    let x = solve(a, &Matrix::from_column_slice(rhs.len(), 1, rhs.as_slice()))?;
    Ok(x.column(0).into_owned())
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    solve(a, &Matrix::identity(a.nrows(), a.ncols()))
}

/// `B^{-1/2}` for symmetric positive-definite `b`.
pub fn inv_sqrt_spd(b: &Matrix) -> Result<Matrix> {
    check_square(b, "inv_sqrt_spd")?;
    let eig = SymmetricEigen::new(symmetrize(b));
    let min = eig.eigenvalues.min();
    if !(min > SINGULAR_TOL) {
        return Err(Error::DegenerateFeatures { min_eigenvalue: min });
    }
    let scaled = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|v| 1.0 / v.sqrt()));
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&scaled) * eig.eigenvectors.transpose())
}

/// Moduli of the (complex) eigenvalues of a square matrix.
pub fn eigen_moduli(m: &Matrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re * z.re + z.im * z.im).sqrt())
        .collect()
}

pub fn spectral_radius(m: &Matrix) -> f64 {
    eigen_moduli(m).into_iter().fold(0.0, f64::max)
}

/// `tr(A⁻¹ S A⁻ᵀ)` with `A = I − l`.
pub fn resolvent_trace(l: &Matrix, s: &Matrix) -> Result<f64> {
    Ok(resolvent_sandwich(l, s)?.trace())
}

/// `(I − l)⁻¹ S (I − l)⁻ᵀ`.
pub fn resolvent_sandwich(l: &Matrix, s: &Matrix) -> Result<Matrix> {
    check_square(l, "resolvent_sandwich")?;
    let a = Matrix::identity(l.nrows(), l.ncols()) - l;
    let left = solve(&a, s)?;
    let both = solve(&a, &left.transpose())?;
    Ok(symmetrize(&both))
}

/// Smallest eigenvalue check for symmetric positive semidefiniteness.
pub fn is_psd(m: &Matrix, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol.max(1e-12) && lambda_min_sym(m) >= -tol
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Frobenius norm of `a − b`.
pub fn frob_dist(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm()
}

/// Outer product `u vᵀ`.
pub fn outer(u: &Vector, v: &Vector) -> Matrix {
    u * v.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solve_rejects_singular() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let err = solve(&a, &Matrix::identity(2, 2)).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { .. }));
    }

    #[test]
    fn inv_sqrt_squares_to_inverse() {
        let b = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = inv_sqrt_spd(&b).unwrap();
        let prod = &r * &b * &r;
        assert_relative_eq!(prod, Matrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let (c, s) = (0.9 * 0.6, 0.9 * 0.8);
        let m = Matrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert_relative_eq!(spectral_radius(&m), 0.9, epsilon = 1e-12);
    }

    #[test]
    fn resolvent_trace_scalar() {
        let l = Matrix::from_element(1, 1, 0.5);
        let s = Matrix::from_element(1, 1, 1.0);
        assert_relative_eq!(resolvent_trace(&l, &s).unwrap(), 4.0, epsilon = 1e-14);
    }
}
