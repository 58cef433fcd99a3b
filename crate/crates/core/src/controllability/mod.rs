//! Rank tests on `Θ_i(t)` for time-varying pairs `(A, B)`, and the explicit
//! construction of a feedback that steers `Σ0` to `Σ1`.

mod canonical;
mod construct;
mod scalar_steering;

pub use canonical::{canonical_pair, canonical_transform, CanonicalForm};
pub use construct::{construct_feasible_steering, construct_feasible_steering_with, FeasibleSteering, LayerRecord, SteeringVerification};
pub use scalar_steering::{scalar_steering_u, ScalarSteering, ScalarSteeringProblem, Weight};

use nalgebra::DMatrix;

use crate::linalg::rank;
use crate::matfun::MatrixPoly;
use crate::scalar::{from_usize, Scalar};
use crate::system::SystemSpec;
use crate::tolerances::Tolerances;

/// `Γ_0 = B`, `Γ_k = −A Γ_{k−1} + Γ̇_{k−1}`, exact in the polynomial ring.
pub fn gamma_polys<T: Scalar>(a: &MatrixPoly<T>, b: &MatrixPoly<T>, count: usize) -> Vec<MatrixPoly<T>> {
    let mut out: Vec<MatrixPoly<T>> = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(b.clone());
    for _ in 1..count {
        let prev = out.last().unwrap();
        let next = a
            .scale(-T::one())
            .try_mul(prev)
            .and_then(|m| m.try_add(&prev.derivative()))
            .expect("A is n×n and B is n×p");
        out.push(next);
    }
    out
}

/// `Θ_i(t) = [Γ_0(t) … Γ_{i−1}(t)]` for `i = 1..=max_index`.
pub fn theta_matrices<T: Scalar>(sys: &SystemSpec<T>, t: T, max_index: usize) -> Vec<DMatrix<T>> {
    let gammas: Vec<DMatrix<T>> = gamma_polys(&sys.a, &sys.b, max_index)
        .iter()
        .map(|g| g.evaluate(t, 0))
        .collect();
    (1..=max_index)
        .map(|i| {
            let mut th = DMatrix::zeros(sys.n, sys.p * i);
            for (k, g) in gammas.iter().take(i).enumerate() {
                th.view_mut((0, k * sys.p), (sys.n, sys.p)).copy_from(g);
            }
            th
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllabilityReport {
    pub grid_times: Vec<f64>,
    /// `theta_ranks[j][i-1] = rank Θ_i(grid_times[j])`, `i = 1..=n+1`.
    pub theta_ranks: Vec<Vec<usize>>,
    pub totally_controllable: bool,
    pub uniformly_controllable: bool,
    pub index_invariant: bool,
    /// Grid times at which `rank Θ_n = n`.
    pub witnesses: Vec<f64>,
    /// First full-rank probe found inside each subinterval, if any.
    pub subinterval_witnesses: Vec<Option<f64>>,
    pub probes_per_subinterval: usize,
}

/// Rank profile of `Θ_1 … Θ_{n+1}` on a uniform grid of `[0, 1]`.
///
/// Total controllability is decided by probing each open subinterval at
/// `tol.probes_per_subinterval` equispaced interior points.
pub fn classify<T: Scalar>(sys: &SystemSpec<T>, grid_size: usize, tol: &Tolerances<T>) -> ControllabilityReport {
    let n = sys.n;
    let grid_size = grid_size.max(2);
    let gammas = gamma_polys(&sys.a, &sys.b, n + 1);
    let ranks_at = |t: T| -> Vec<usize> {
        let mut th = DMatrix::zeros(n, 0);
        gammas
            .iter()
            .map(|g| {
                let gv = g.evaluate(t, 0);
                let c = th.ncols();
                th = th.clone().insert_columns(c, gv.ncols(), T::zero());
                th.view_mut((0, c), (n, gv.ncols())).copy_from(&gv);
                rank(&th, tol.rank_tol)
            })
            .collect()
    };
    let step = T::one() / from_usize::<T>(grid_size - 1);
    let times: Vec<T> = (0..grid_size).map(|j| from_usize::<T>(j) * step).collect();
    let theta_ranks: Vec<Vec<usize>> = times.iter().map(|t| ranks_at(*t)).collect();
    let full = |r: &[usize]| r[n - 1] == n;

    let witnesses: Vec<f64> = times
        .iter()
        .zip(&theta_ranks)
        .filter(|(_, r)| full(r))
        .map(|(t, _)| t.as_f64())
        .collect();
    let uniformly = theta_ranks.iter().all(|r| full(r));

    let probes = tol.probes_per_subinterval.max(1);
    let subinterval_witnesses: Vec<Option<f64>> = times
        .windows(2)
        .map(|w| {
            (1..=probes)
                .map(|k| w[0] + (w[1] - w[0]) * from_usize::<T>(k) / from_usize::<T>(probes + 1))
                .find(|t| full(&ranks_at(*t)))
                .map(|t| t.as_f64())
        })
        .collect();
    let totally = subinterval_witnesses.iter().all(Option::is_some);

    let first = &theta_ranks[0];
    let index_invariant = theta_ranks.iter().all(|r| r == first) && first[n - 1] == first[n];

    ControllabilityReport {
        grid_times: times.iter().map(|t| t.as_f64()).collect(),
        theta_ranks,
        totally_controllable: totally,
        uniformly_controllable: uniformly,
        index_invariant,
        witnesses,
        subinterval_witnesses,
        probes_per_subinterval: probes,
    }
}

/// Rank of `[B, AB, …, A^{n−1}B]`.
pub fn kalman_rank<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, rel_tol: T) -> usize {
    let n = a.nrows();
    let p = b.ncols();
    let mut c = DMatrix::zeros(n, n * p);
    let mut blk = b.clone();
    for k in 0..n {
        c.view_mut((0, k * p), (n, p)).copy_from(&blk);
        blk = a * blk;
    }
    rank(&c, rel_tol)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    pub fn pair(a: DMatrix<f64>, b: DMatrix<f64>) -> SystemSpec<f64> {
        let n = a.nrows();
        let p = b.ncols();
        SystemSpec::constant(
            &a,
            &b,
            &DMatrix::identity(n, n),
            &DMatrix::identity(n, n),
            0.0,
            &DMatrix::zeros(n, n),
            &DMatrix::identity(p, p),
        )
    }

    pub fn example_pair() -> SystemSpec<f64> {
        pair(dmatrix![-2.0, 1.0; 0.0, 0.0], dmatrix![0.0; 1.0])
    }

    #[test]
    fn theta_of_integrator() {
        let th = theta_matrices(&pair(dmatrix![0.0], dmatrix![1.0]), 0.4, 2);
        assert_eq!(th[0], dmatrix![1.0]);
        assert_eq!(th[1], dmatrix![1.0, 0.0]);
    }

    #[test]
    fn theta_of_example_pair() {
        let th = theta_matrices(&example_pair(), 0.0, 3);
        assert_eq!(th[1], dmatrix![0.0, -1.0; 1.0, 0.0]);
        assert_eq!(rank(&th[1], 1e-10), 2);
    }

    fn tv_pair() -> SystemSpec<f64> {
        let mut sys = pair(DMatrix::zeros(2, 2), dmatrix![0.0; 1.0]);
        sys.b = MatrixPoly::from_coeffs(2, 1, vec![vec![0.0, 1.0], vec![1.0]]).unwrap();
        sys
    }

    #[test]
    fn theta_with_time_varying_input() {
        for t in [0.0, 0.3, 1.0] {
            let th = theta_matrices(&tv_pair(), t, 2);
            assert_eq!(th[1], dmatrix![t, 1.0; 1.0, 0.0]);
        }
        assert!(classify(&tv_pair(), 11, &Tolerances::default()).uniformly_controllable);
    }

    #[test]
    fn example_pair_is_fully_classified() {
        let r = classify(&example_pair(), 101, &Tolerances::default());
        assert!(r.uniformly_controllable && r.totally_controllable && r.index_invariant);
        assert_eq!(r.witnesses.len(), 101);
        assert!(r.theta_ranks.iter().all(|x| x == &vec![1, 2, 2]));
    }

    #[test]
    fn zero_input_is_uncontrollable() {
        let r = classify(&pair(DMatrix::identity(2, 2), DMatrix::zeros(2, 1)), 21, &Tolerances::default());
        assert!(!r.uniformly_controllable && !r.totally_controllable);
        assert!(r.witnesses.is_empty());
        // every rank is 0, hence constant, with rank Θ_n = rank Θ_{n+1}
        assert!(r.index_invariant);
    }

    #[test]
    fn isolated_rank_drop_is_total_but_not_uniform() {
        // B(t) = [t − 1/2; 0], A = [[0,0],[1,0]]: Θ_2 = [[t−½, 1],[0, −(t−½)]]
        let mut sys = pair(dmatrix![0.0, 0.0; 1.0, 0.0], dmatrix![0.0; 0.0]);
        sys.b = MatrixPoly::from_coeffs(2, 1, vec![vec![-0.5, 1.0], vec![0.0]]).unwrap();
        let r = classify(&sys, 11, &Tolerances::default());
        assert!(r.totally_controllable);
        assert!(!r.uniformly_controllable);
        assert!(!r.index_invariant);
        assert!(!r.witnesses.contains(&0.5));
    }

    proptest! {
        #[test]
        fn theta_rank_matches_kalman_for_constant_pairs(
            a in prop::collection::vec(-2i32..3, 9),
            b in prop::collection::vec(-1i32..2, 3),
        ) {
            let a = DMatrix::from_iterator(3, 3, a.iter().map(|x| *x as f64));
            let b = DMatrix::from_iterator(3, 1, b.iter().map(|x| *x as f64));
            let sys = pair(a.clone(), b.clone());
            let th = theta_matrices(&sys, 0.5, 3);
            prop_assert_eq!(rank(&th[2], 1e-10), kalman_rank(&a, &b, 1e-10));
            let r = classify(&sys, 5, &Tolerances::default());
            prop_assert!(!r.uniformly_controllable || r.totally_controllable);
            for row in &r.theta_ranks {
                prop_assert!(row.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
