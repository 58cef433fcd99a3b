use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{inverse_checked, max_abs};
use crate::scalar::Scalar;
use crate::tolerances::Tolerances;

use super::kalman_rank;

/// `T (A + B F) T⁻¹ = A_n` and `T B v = B_n`.
#[derive(Debug, Clone)]
pub struct CanonicalForm<T: Scalar> {
    pub t: DMatrix<T>,
    pub f: DMatrix<T>,
    pub v: DVector<T>,
    pub a_residual: T,
    pub b_residual: T,
}

/// The single-input chain: ones on the superdiagonal, `B_n = e_n`.
pub fn canonical_pair<T: Scalar>(n: usize) -> (DMatrix<T>, DMatrix<T>) {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        a[(i, i + 1)] = T::one();
    }
    let mut b = DMatrix::zeros(n, 1);
    b[(n - 1, 0)] = T::one();
    (a, b)
}

fn residual_norm<T: Scalar>(x: &DVector<T>, basis: &[DVector<T>]) -> (DVector<T>, T) {
    // modified Gram–Schmidt against an orthonormal basis
    let mut r = x.clone();
    for q in basis {
        let c = q.dot(&r);
        r.axpy(-c, q, T::one());
    }
    let nr = r.norm();
    (r, nr)
}

/// Reduces a controllable constant pair to the single-input chain.
///
/// `v` selects one column of `B`. The chain `x_{k+1} = A x_k + B u_k`
/// takes `u_k = 0` or a single input column, whichever moves furthest out
/// of the current span; `F̄ x_k = u_k` then makes `(A + BF̄, Bv)` cyclic.
pub fn canonical_transform<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, tol: &Tolerances<T>) -> Result<CanonicalForm<T>> {
    let n = a.nrows();
    let p = b.ncols();
    if a.ncols() != n || b.nrows() != n || n == 0 || p == 0 {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let kr = kalman_rank(a, b, tol.rank_tol);
    if kr < n {
        return Err(Error::NotControllable(format!("Kalman rank {kr} < {n}")));
    }

    // every nonzero input column is a candidate for v; keep the best conditioned
    let mut best: Option<CanonicalForm<T>> = None;
    let mut last_err = None;
    for j in 0..p {
        if b.column(j).norm() == T::zero() {
            continue;
        }
        match chain_from(a, b, j, tol) {
            Ok(c) => {
                let r = c.a_residual.max(c.b_residual);
                if best.as_ref().is_none_or(|x| r < x.a_residual.max(x.b_residual)) {
                    best = Some(c);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::NotControllable("B is zero".into())))
}

fn chain_from<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, j: usize, tol: &Tolerances<T>) -> Result<CanonicalForm<T>> {
    let n = a.nrows();
    let p = b.ncols();
    let mut v = DVector::zeros(p);
    v[j] = T::one();

    let scale = max_abs(a).max(max_abs(b)).max(T::one());
    let mut xs: Vec<DVector<T>> = vec![b.column(j).into_owned()];
    let mut us: Vec<DVector<T>> = Vec::new();
    let mut basis: Vec<DVector<T>> = vec![&xs[0] / xs[0].norm()];
    while xs.len() < n {
        let ax = a * xs.last().unwrap();
        let mut best = (DVector::zeros(p), ax.clone(), residual_norm(&ax, &basis));
        for c in 0..p {
            let cand = &ax + b.column(c);
            let res = residual_norm(&cand, &basis);
            if res.1 > best.2 .1 * (T::one() + T::one()) {
                let mut u = DVector::zeros(p);
                u[c] = T::one();
                best = (u, cand, res);
            }
        }
        let (u, x, (r, nr)) = best;
        if nr <= tol.rank_tol * scale * x.norm().max(T::one()) {
            return Err(Error::NotControllable("greedy chain stalled".into()));
        }
        basis.push(r / nr);
        us.push(u);
        xs.push(x);
    }
    us.push(DVector::zeros(p));

    let x_mat = DMatrix::from_columns(&xs);
    let u_mat = DMatrix::from_columns(&us);
    let x_inv = inverse_checked(&x_mat, tol.max_condition, "chain basis")?;
    let f_bar = &u_mat * &x_inv;
    let a_bar = a + b * &f_bar;

    // rows q, qĀ, …, qĀ^{n−1} with q the last row of the chain inverse
    let mut t = DMatrix::zeros(n, n);
    let mut row = x_inv.row(n - 1).into_owned();
    for i in 0..n {
        t.set_row(i, &row);
        row = &row * &a_bar;
    }
    let t_inv = inverse_checked(&t, tol.max_condition, "T")?;
    let companion = &t * &a_bar * &t_inv;
    let g = -companion.row(n - 1).into_owned();
    let f = f_bar + &v * &g * &t;

    let (an, bn) = canonical_pair::<T>(n);
    let a_residual = max_abs(&(&t * (a + b * &f) * &t_inv - an));
    let b_residual = (&t * b * &v - bn.column(0)).amax();
    Ok(CanonicalForm {
        t,
        f,
        v,
        a_residual,
        b_residual,
    })
}
