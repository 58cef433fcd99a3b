//! Small dense helpers: symmetrization, extreme eigenvalues, SPD square roots,
//! conditioned inversion and numerical rank.

use nalgebra::{ColPivQR, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

pub fn eigenvalues_sym<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    let e = SymmetricEigen::new(symmetrize(m));
    e.eigenvalues.iter().copied().collect()
}

pub fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    eigenvalues_sym(m)
        .into_iter()
        .fold(T::max_value().unwrap(), |a, b| a.min(b))
}

pub fn max_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    eigenvalues_sym(m)
        .into_iter()
        .fold(T::min_value().unwrap(), |a, b| a.max(b))
}

/// Largest absolute entry, zero for empty matrices.
pub fn max_abs<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |a, b| a.max(b.abs()))
}

pub fn asymmetry<T: Scalar>(m: &DMatrix<T>) -> T {
    max_abs(&(m - m.transpose()))
}

/// Applies `f` to the spectrum of a symmetric matrix.
pub fn sym_fn<T: Scalar>(m: &DMatrix<T>, f: impl Fn(T) -> T) -> DMatrix<T> {
    let e = SymmetricEigen::new(symmetrize(m));
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    symmetrize(&(&e.eigenvectors * d * e.eigenvectors.transpose()))
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn sqrt_psd<T: Scalar>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let lo = min_eigenvalue(m);
    let scale = max_abs(m).max(T::one());
    if lo < -lit::<T>(1e-12) * scale {
        return Err(Error::Precondition(format!(
            "square root of an indefinite matrix (min eigenvalue {:e})",
            lo.as_f64()
        )));
    }
    Ok(sym_fn(m, |x| x.max(T::zero()).sqrt()))
}

/// Inverse principal square root of a symmetric positive definite matrix.
pub fn inv_sqrt_pd<T: Scalar>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    let lo = min_eigenvalue(m);
    if lo <= T::zero() {
        return Err(Error::Precondition(format!(
            "inverse square root of a matrix that is not positive definite (min eigenvalue {:e})",
            lo.as_f64()
        )));
    }
    Ok(sym_fn(m, |x| T::one() / x.sqrt()))
}

/// Condition estimate from the diagonal of a column-pivoted QR factor.
pub fn condition_estimate<T: Scalar>(m: &DMatrix<T>) -> T {
    pivoted_condition(&ColPivQR::new(m.clone()), T::zero())
}

fn pivoted_condition<T: Scalar>(qr: &ColPivQR<T, Dyn, Dyn>, scale: T) -> T {
    let r = qr.clone().unpack_r();
    let (hi, lo) = r
        .diagonal()
        .iter()
        .map(|x| x.abs())
        .fold((scale, T::max_value().unwrap()), |(hi, lo), d| {
            (hi.max(d), lo.min(d))
        });
    if lo == T::zero() || r.nrows() == 0 {
        T::max_value().unwrap()
    } else {
        hi / lo
    }
}

/// Solves `m x = rhs` by column-pivoted QR, refusing when the condition
/// estimate exceeds `max_condition`.
pub fn solve_checked<T: Scalar>(
    m: &DMatrix<T>,
    rhs: &DMatrix<T>,
    max_condition: T,
    what: &str,
) -> Result<DMatrix<T>> {
    solve_checked_scaled(m, rhs, T::zero(), max_condition, what)
}

/// Like [`solve_checked`], but measures the pivots against `scale` as well,
/// so that a matrix formed by cancellation of terms of size `scale` is
/// caught even when it is well conditioned on its own (e.g. `1×1`).
pub fn solve_checked_scaled<T: Scalar>(
    m: &DMatrix<T>,
    rhs: &DMatrix<T>,
    scale: T,
    max_condition: T,
    what: &str,
) -> Result<DMatrix<T>> {
    let qr = ColPivQR::new(m.clone());
    let cond = pivoted_condition(&qr, scale);
    let singular = || Error::Singular {
        what: what.to_string(),
        condition: cond.as_f64(),
    };
    if !(cond <= max_condition) {
        return Err(singular());
    }
    qr.solve(rhs).ok_or_else(singular)
}

pub fn inverse_checked<T: Scalar>(
    m: &DMatrix<T>,
    max_condition: T,
    what: &str,
) -> Result<DMatrix<T>> {
    let n = m.nrows();
    solve_checked(m, &DMatrix::identity(n, n), max_condition, what)
}

/// Numerical rank: singular values above `rel_tol * sigma_max`.
pub fn rank<T: Scalar>(m: &DMatrix<T>, rel_tol: T) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(T::zero(), |a, b| a.max(b));
    if smax == T::zero() {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * smax).count()
}

pub fn frobenius<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |a, b| a + *b * *b).sqrt()
}
