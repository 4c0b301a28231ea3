//! Dense complex helpers shared by the grid, index, and power-flow code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Reciprocal 2-norm condition number below which a matrix counts as singular.
pub const SINGULAR_RCOND: f64 = 1e-13;

/// Reciprocal condition number `sigma_min / sigma_max` (0 for the zero matrix).
pub fn rcond(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max == 0.0 || !max.is_finite() {
        return 0.0;
    }
    sv.min() / max
}

/// Inverse of `m`, or `None` if its reciprocal condition number is below [`SINGULAR_RCOND`].
pub fn checked_inverse(m: &CMatrix) -> Option<CMatrix> {
    if rcond(m) < SINGULAR_RCOND {
        return None;
    }
    m.clone().try_inverse()
}

pub fn inf_norm(m: &CMatrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|c| c.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `||m - m^T||_inf / ||m||_inf`, zero for the zero matrix.
pub fn asymmetry(m: &CMatrix) -> f64 {
    let norm = inf_norm(m);
    if norm == 0.0 {
        return 0.0;
    }
    inf_norm(&(m - m.transpose())) / norm
}

/// Smallest and largest eigenvalue of the symmetric part of `Re{m}`.
pub fn real_part_eigen_range(m: &CMatrix) -> (f64, f64) {
    let re = m.map(|c| c.re);
    let sym = (&re + re.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    (eig.min(), eig.max())
}

/// `Re{m}` is positive semidefinite up to a relative tolerance on its spectrum.
pub fn real_part_is_psd(m: &CMatrix, rel_tol: f64) -> bool {
    let (min, max) = real_part_eigen_range(m);
    min >= -rel_tol * max.max(0.0)
}

pub fn is_zero(m: &CMatrix) -> bool {
    m.iter().all(|c| c.re == 0.0 && c.im == 0.0)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

pub fn relative_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    let scale = frobenius(b).max(f64::MIN_POSITIVE);
    frobenius(&(a - b)) / scale
}

pub fn relative_error(a: &CVector, b: &CVector) -> f64 {
    let scale = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / scale
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn diagonal(values: &[Complex64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_column_slice(values))
}

/// Sign of the determinant of a real square matrix from its LU factors, 0 if singular.
pub fn determinant_sign(m: &DMatrix<f64>) -> i8 {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut sign = lu.p().determinant::<f64>();
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        if d == 0.0 || !d.is_finite() {
            return 0;
        }
        if d < 0.0 {
            sign = -sign;
        }
    }
    if sign > 0.0 {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rcond_flags_rank_one() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(rcond(&m) < SINGULAR_RCOND);
        assert!(checked_inverse(&m).is_none());
    }

    #[test]
    fn psd_check() {
        let ok = diagonal(&[c(1.0, 1.0), c(1.0, 1.0)]);
        assert!(real_part_is_psd(&ok, 1e-9));
        let bad = diagonal(&[c(-1.0, 0.0), c(1.0, 0.0)]);
        assert!(!real_part_is_psd(&bad, 1e-9));
        let lossless = diagonal(&[c(0.0, 2.0), c(0.0, 3.0)]);
        assert!(real_part_is_psd(&lossless, 1e-9));
    }

    #[test]
    fn determinant_sign_tracks_permutation() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(determinant_sign(&m), -1);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        assert_eq!(determinant_sign(&m), 1);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(determinant_sign(&m), 0);
    }
}
