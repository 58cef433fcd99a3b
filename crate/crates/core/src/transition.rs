//! Transition matrix of the Hamiltonian `M(t) = [[A, -G], [-Q, -Aᵀ]]` and its
//! structural identities.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::{condition_estimate, max_abs, solve_checked, symmetrize};
use crate::ode::{integrate_to, pack, unpack, OdeOptions};
use crate::quad;
use crate::riccati::solve_closed_form;
use crate::scalar::{lit, Scalar};
use crate::system::SystemSpec;
use crate::tolerances::Tolerances;

/// `M(t)` of the normalized system.
pub fn hamiltonian<T: Scalar>(sys: &SystemSpec<T>, t: T) -> Result<DMatrix<T>> {
    let c = sys.normalized_at(t)?;
    let n = sys.n;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&c.a);
    m.view_mut((0, n), (n, n)).copy_from(&(-c.g));
    m.view_mut((n, 0), (n, n)).copy_from(&(-c.q));
    m.view_mut((n, n), (n, n)).copy_from(&(-c.a.transpose()));
    Ok(m)
}

/// The four blocks of `Φ(t, s)` together with the residuals of the six
/// symplectic identities, in the order
/// `Φ12ᵀΦ22`, `Φ21ᵀΦ11`, `Φ11Φ12ᵀ`, `Φ21Φ22ᵀ` (asymmetry), then
/// `Φ11ᵀΦ22 − Φ21ᵀΦ12 − I` and `Φ11Φ22ᵀ − Φ12Φ21ᵀ − I`.
#[derive(Debug, Clone)]
pub struct TransitionBlocks<T: Scalar> {
    pub phi11: DMatrix<T>,
    pub phi12: DMatrix<T>,
    pub phi21: DMatrix<T>,
    pub phi22: DMatrix<T>,
    pub t: T,
    pub s: T,
    pub rtol: T,
    pub atol: T,
    pub identity_residuals: [T; 6],
    pub cond11: T,
    pub cond22: T,
}

impl<T: Scalar> TransitionBlocks<T> {
    fn from_full(phi: &DMatrix<T>, n: usize, t: T, s: T, tol: &Tolerances<T>) -> Self {
        let blk = |i: usize, j: usize| phi.view((i * n, j * n), (n, n)).into_owned();
        let (phi11, phi12, phi21, phi22) = (blk(0, 0), blk(0, 1), blk(1, 0), blk(1, 1));
        let identity_residuals = block_identity_residuals(&phi11, &phi12, &phi21, &phi22);
        Self {
            cond11: condition_estimate(&phi11),
            cond22: condition_estimate(&phi22),
            phi11,
            phi12,
            phi21,
            phi22,
            t,
            s,
            rtol: tol.ode_rtol,
            atol: tol.ode_atol,
            identity_residuals,
        }
    }

    pub fn n(&self) -> usize {
        self.phi11.nrows()
    }

    pub fn full(&self) -> DMatrix<T> {
        let n = self.n();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.phi11);
        m.view_mut((0, n), (n, n)).copy_from(&self.phi12);
        m.view_mut((n, 0), (n, n)).copy_from(&self.phi21);
        m.view_mut((n, n), (n, n)).copy_from(&self.phi22);
        m
    }

    /// `−Φ11⁻¹Φ12`
    pub fn neg_inv11_12(&self, max_condition: T) -> Result<DMatrix<T>> {
        Ok(-solve_checked(&self.phi11, &self.phi12, max_condition, "Phi11")?)
    }

    /// `−Φ12Φ22⁻¹`
    pub fn neg_12_inv22(&self, max_condition: T) -> Result<DMatrix<T>> {
        let x = solve_checked(&self.phi22.transpose(), &self.phi12.transpose(), max_condition, "Phi22")?;
        Ok(-x.transpose())
    }

    /// `−Φ12⁻¹Φ11`, symmetrized.
    pub fn neg_inv12_11(&self, max_condition: T) -> Result<DMatrix<T>> {
        Ok(symmetrize(&-solve_checked(
            &self.phi12,
            &self.phi11,
            max_condition,
            "Phi12",
        )?))
    }

    /// `Φ_Π(t, s) = Φ11 + Φ12 Π_s`
    pub fn phi_pi(&self, pi_s: &DMatrix<T>) -> DMatrix<T> {
        &self.phi11 + &self.phi12 * pi_s
    }

    pub fn max_identity_residual(&self) -> T {
        self.identity_residuals
            .iter()
            .fold(T::zero(), |a, b| a.max(*b))
    }
}

fn block_identity_residuals<T: Scalar>(
    p11: &DMatrix<T>,
    p12: &DMatrix<T>,
    p21: &DMatrix<T>,
    p22: &DMatrix<T>,
) -> [T; 6] {
    let n = p11.nrows();
    let eye = DMatrix::<T>::identity(n, n);
    let asym = |m: DMatrix<T>| max_abs(&(&m - m.transpose()));
    [
        asym(p12.transpose() * p22),
        asym(p21.transpose() * p11),
        asym(p11 * p12.transpose()),
        asym(p21 * p22.transpose()),
        max_abs(&(p11.transpose() * p22 - p21.transpose() * p12 - &eye)),
        max_abs(&(p11 * p22.transpose() - p12 * p21.transpose() - &eye)),
    ]
}

pub(crate) fn ode_options<T: Scalar>(tol: &Tolerances<T>) -> OdeOptions<T> {
    OdeOptions::new(tol.ode_rtol, tol.ode_atol)
}

/// `Φ(t, s)` by direct integration of `∂Φ/∂t = M(t)Φ` from `s` to `t`.
pub fn transition_blocks<T: Scalar>(
    sys: &SystemSpec<T>,
    t: T,
    s: T,
    tol: &Tolerances<T>,
) -> Result<TransitionBlocks<T>> {
    let n2 = 2 * sys.n;
    // surface normalization failures before entering the integrator
    hamiltonian(sys, s)?;
    let mut failure = None;
    let y = integrate_to(
        |tau, y: &DVector<T>| {
            let m = match hamiltonian(sys, tau) {
                Ok(m) => m,
                Err(e) => {
                    failure.get_or_insert(e);
                    return DVector::from_element(y.len(), lit::<T>(f64::NAN));
                }
            };
            pack(&(m * unpack(y.as_slice(), n2, n2)))
        },
        s,
        t,
        pack(&DMatrix::identity(n2, n2)),
        &ode_options(tol),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let phi = unpack(y?.as_slice(), n2, n2);
    Ok(TransitionBlocks::from_full(&phi, sys.n, t, s, tol))
}

/// Transition of the drift `Ā` alone.
pub fn state_transition<T: Scalar>(
    sys: &SystemSpec<T>,
    t: T,
    s: T,
    tol: &Tolerances<T>,
) -> Result<DMatrix<T>> {
    let n = sys.n;
    let y = integrate_to(
        |tau, y: &DVector<T>| {
            let mut a = sys.a.evaluate(tau, 0);
            let nu = sys.nu_at(tau);
            for i in 0..n {
                a[(i, i)] += nu;
            }
            pack(&(a * unpack(y.as_slice(), n, n)))
        },
        s,
        t,
        pack(&DMatrix::identity(n, n)),
        &ode_options(tol),
    )?;
    Ok(unpack(y.as_slice(), n, n))
}

/// Memoized transition blocks.
///
/// Every entry comes from its own direct integration, so lookups return
/// exactly what [`transition_blocks`] would.
pub struct TransitionCache<'a, T: Scalar> {
    sys: &'a SystemSpec<T>,
    tol: Tolerances<T>,
    memo: Mutex<HashMap<(u64, u64), TransitionBlocks<T>>>,
}

impl<'a, T: Scalar> TransitionCache<'a, T> {
    pub fn new(sys: &'a SystemSpec<T>, tol: &Tolerances<T>) -> Self {
        Self {
            sys,
            tol: *tol,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn system(&self) -> &SystemSpec<T> {
        self.sys
    }

    pub fn tolerances(&self) -> &Tolerances<T> {
        &self.tol
    }

    pub fn get(&self, t: T, s: T) -> Result<TransitionBlocks<T>> {
        let key = (t.as_f64().to_bits(), s.as_f64().to_bits());
        if let Some(b) = self.memo.lock().unwrap().get(&key) {
            return Ok(b.clone());
        }
        let b = transition_blocks(self.sys, t, s, &self.tol)?;
        self.memo.lock().unwrap().insert(key, b.clone());
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.memo.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Residuals of every identity that relates `Φ(t, s)` and `Φ(s, t)`.
#[derive(Debug, Clone)]
pub struct SymplecticResiduals<T> {
    /// Same order as [`TransitionBlocks::identity_residuals`].
    pub block_identities: [T; 6],
    /// `Φ11(t,s) − Φ22(s,t)ᵀ`
    pub diagonal_swap: T,
    /// `Φ12(t,s) + Φ12(s,t)ᵀ` and `Φ21(t,s) + Φ21(s,t)ᵀ`
    pub off_diagonal_swap: [T; 2],
    /// `Φ11(t,s)Φ11(s,t) + Φ12(t,s)Φ21(s,t) − I`
    pub inverse_row: T,
}

impl<T: Scalar> SymplecticResiduals<T> {
    pub fn max(&self) -> T {
        self.block_identities
            .iter()
            .chain(self.off_diagonal_swap.iter())
            .chain([self.diagonal_swap, self.inverse_row].iter())
            .fold(T::zero(), |a, b| a.max(*b))
    }
}

/// Integrates the reversed transition `Φ(s, t)` and evaluates all identities.
pub fn symplectic_residuals<T: Scalar>(
    sys: &SystemSpec<T>,
    blocks: &TransitionBlocks<T>,
    tol: &Tolerances<T>,
) -> Result<SymplecticResiduals<T>> {
    let rev = transition_blocks(sys, blocks.s, blocks.t, tol)?;
    let n = blocks.n();
    Ok(SymplecticResiduals {
        block_identities: blocks.identity_residuals,
        diagonal_swap: max_abs(&(&blocks.phi11 - rev.phi22.transpose())),
        off_diagonal_swap: [
            max_abs(&(&blocks.phi12 + rev.phi12.transpose())),
            max_abs(&(&blocks.phi21 + rev.phi21.transpose())),
        ],
        inverse_row: max_abs(
            &(&blocks.phi11 * &rev.phi11 + &blocks.phi12 * &rev.phi21 - DMatrix::identity(n, n)),
        ),
    })
}

#[derive(Debug, Clone)]
pub struct GramianCheck<T: Scalar> {
    pub mbar: DMatrix<T>,
    pub rhs: DMatrix<T>,
    pub residual: T,
}

/// Compares `M̄(t, s) = ∫ₛᵗ Φ_Π(t,τ) G Φ_Π(t,τ)ᵀ dτ` with `−Φ12(t,s)Φ_Π(t,s)ᵀ`.
pub fn gramian_identity<T: Scalar>(
    sys: &SystemSpec<T>,
    anchor: (T, &DMatrix<T>),
    t: T,
    tol: &Tolerances<T>,
) -> Result<GramianCheck<T>> {
    let (s, pi_s) = anchor;
    let n = sys.n;
    let ts = transition_blocks(sys, t, s, tol)?;
    let rhs = -&ts.phi12 * ts.phi_pi(pi_s).transpose();
    if t == s {
        let mbar = DMatrix::zeros(n, n);
        return Ok(GramianCheck {
            residual: max_abs(&(&mbar - &rhs)),
            mbar,
            rhs,
        });
    }
    let (lo, hi, sign) = if t > s { (s, t, T::one()) } else { (t, s, -T::one()) };
    let r = quad::integrate(
        |tau| {
            let pi_tau = solve_closed_form(sys, s, pi_s, tau, tol)?;
            let b = transition_blocks(sys, t, tau, tol)?;
            let phi = b.phi_pi(&pi_tau);
            let g = sys.normalized_at(tau)?.g;
            Ok(pack(&(&phi * g * phi.transpose())))
        },
        lo,
        hi,
        tol.quad_tol,
        512,
    )?;
    let mbar = unpack(r.value.as_slice(), n, n) * sign;
    Ok(GramianCheck {
        residual: max_abs(&(&mbar - &rhs)),
        mbar,
        rhs,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::matfun::MatrixPoly;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    pub fn s1(q: f64) -> SystemSpec<f64> {
        SystemSpec::constant(
            &dmatrix![0.0],
            &dmatrix![1.0],
            &dmatrix![1.0],
            &dmatrix![1.0],
            0.0,
            &dmatrix![q],
            &dmatrix![1.0],
        )
    }

    /// Random system with entries of degree ≤ 2, `R ≻ 0`, `Q ≽ 0`, and a
    /// full-column-rank `B` so that it is controllable.
    pub fn random_system(n: usize, seed: &[f64]) -> SystemSpec<f64> {
        let mut it = seed.iter().copied().cycle();
        let mut next = move || it.next().unwrap();
        let poly = |rows: usize, cols: usize, next: &mut dyn FnMut() -> f64| {
            let coeffs = (0..rows * cols)
                .map(|_| vec![next(), 0.5 * next(), 0.25 * next()])
                .collect();
            MatrixPoly::from_coeffs(rows, cols, coeffs).unwrap()
        };
        let a = poly(n, n, &mut next);
        let mut b = DMatrix::identity(n, n);
        for v in b.iter_mut() {
            *v += 0.3 * next();
        }
        let l = DMatrix::from_fn(n, n, |_, _| next());
        let q = &l * l.transpose() * 0.5;
        let r = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + 0.5 * next().abs() } else { 0.0 });
        SystemSpec::new(
            a,
            MatrixPoly::constant(&b),
            MatrixPoly::identity(n),
            MatrixPoly::identity(n),
            MatrixPoly::constant(&dmatrix![0.1 * next().abs()]),
            MatrixPoly::constant(&q),
            MatrixPoly::constant(&r),
        )
    }

    fn tol() -> Tolerances<f64> {
        Tolerances::default()
    }

    #[test]
    fn identity_at_equal_times() {
        let b = transition_blocks(&s1(0.0), 0.3, 0.3, &tol()).unwrap();
        assert_eq!(b.phi11, dmatrix![1.0]);
        assert_eq!(b.phi12, dmatrix![0.0]);
        let r = symplectic_residuals(&s1(0.0), &b, &tol()).unwrap();
        assert_eq!(r.max(), 0.0);
    }

    #[test]
    fn s1_blocks() {
        let b = transition_blocks(&s1(0.0), 1.0, 0.0, &tol()).unwrap();
        assert!((b.phi12[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((b.phi11[(0, 0)] - 1.0).abs() < 1e-12);
        let r = symplectic_residuals(&s1(0.0), &b, &tol()).unwrap();
        assert!(r.off_diagonal_swap[0] < 1e-12);
    }

    #[test]
    fn unit_q_gives_hyperbolic_blocks() {
        let b = transition_blocks(&s1(1.0), 1.0, 0.0, &tol()).unwrap();
        assert!((b.phi11[(0, 0)] - 1f64.cosh()).abs() < 1e-10);
        assert!((b.phi12[(0, 0)] + 1f64.sinh()).abs() < 1e-10);
        assert!((b.phi11[(0, 0)] - 1.5431).abs() < 1e-4);
    }

    #[test]
    fn zero_q_reduces_to_reachability_gramian() {
        let mut sys = random_system(2, &[0.3, -0.7, 0.2, 0.9, -0.4, 0.5, 0.1, -0.2]);
        sys.q_weight = MatrixPoly::zeros(2, 2);
        let (t, s) = (0.8, 0.1);
        let b = transition_blocks(&sys, t, s, &tol()).unwrap();
        assert!(max_abs(&b.phi21) < 1e-14);
        let phi_a = state_transition(&sys, t, s, &tol()).unwrap();
        assert!(max_abs(&(&b.phi11 - &phi_a)) < 1e-9);
        // N(t,s) = ∫ Φ_A(s,τ) G Φ_A(s,τ)ᵀ dτ
        let n = quad::integrate(
            |tau| {
                let p = state_transition(&sys, s, tau, &tol())?;
                Ok(pack(&(&p * sys.normalized_at(tau)?.g * p.transpose())))
            },
            s,
            t,
            1e-12,
            256,
        )
        .unwrap();
        let n = unpack(n.value.as_slice(), 2, 2);
        let lhs = b.neg_inv11_12(1e12).unwrap();
        assert!(max_abs(&(lhs - n)) < 1e-8);
    }

    #[test]
    fn composition() {
        let sys = random_system(3, &[0.2, -0.5, 0.8, 0.1, -0.9, 0.4, 0.6, -0.3, 0.7]);
        let ts = transition_blocks(&sys, 0.9, 0.1, &tol()).unwrap().full();
        let tr = transition_blocks(&sys, 0.9, 0.45, &tol()).unwrap().full();
        let rs = transition_blocks(&sys, 0.45, 0.1, &tol()).unwrap().full();
        assert!(max_abs(&(ts - tr * rs)) < 1e-8);
    }

    #[test]
    fn gramian_s1_hand_value() {
        let g = gramian_identity(&s1(0.0), (0.0, &dmatrix![0.0]), 1.0, &tol()).unwrap();
        assert!((g.mbar[(0, 0)] - 1.0).abs() < 1e-10);
        assert!((g.rhs[(0, 0)] - 1.0).abs() < 1e-10);
        let g = gramian_identity(&s1(0.0), (0.4, &dmatrix![0.3]), 0.4, &tol()).unwrap();
        assert_eq!(g.residual, 0.0);
    }

    #[test]
    fn gramian_random() {
        let sys = random_system(2, &[0.4, 0.1, -0.6, 0.3, 0.8, -0.2, 0.5]);
        let g = gramian_identity(&sys, (0.0, &DMatrix::zeros(2, 2)), 0.8, &tol()).unwrap();
        assert!(g.residual < 1e-7, "{}", g.residual);
    }

    #[test]
    fn cache_is_transparent() {
        let sys = random_system(2, &[0.4, 0.1, -0.6, 0.3]);
        let cache = TransitionCache::new(&sys, &tol());
        let a = cache.get(0.7, 0.0).unwrap();
        let b = cache.get(0.7, 0.0).unwrap();
        let c = transition_blocks(&sys, 0.7, 0.0, &tol()).unwrap();
        assert_eq!(a.full(), c.full());
        assert_eq!(b.full(), c.full());
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn f32_blocks() {
        let sys = SystemSpec::<f32>::constant(
            &dmatrix![0.0],
            &dmatrix![1.0],
            &dmatrix![1.0],
            &dmatrix![1.0],
            0.0,
            &dmatrix![1.0],
            &dmatrix![1.0],
        );
        let b = transition_blocks(&sys, 1.0, 0.0, &Tolerances::default()).unwrap();
        assert!((b.phi11[(0, 0)] - 1f32.cosh()).abs() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn identities_hold(seed in prop::collection::vec(-1.0f64..1.0, 12), n in 1usize..=3,
                           s in 0.0f64..0.5, dt in 0.05f64..0.5) {
            let sys = random_system(n, &seed);
            let b = transition_blocks(&sys, s + dt, s, &tol()).unwrap();
            let r = symplectic_residuals(&sys, &b, &tol()).unwrap();
            prop_assert!(r.max() < 1e-8, "{:?}", r);
        }

        #[test]
        fn loewner_monotone(seed in prop::collection::vec(-1.0f64..1.0, 12), n in 1usize..=2,
                            s in 0.0f64..0.3, d1 in 0.05f64..0.3, d2 in 0.05f64..0.4) {
            let sys = random_system(n, &seed);
            let x1 = transition_blocks(&sys, s + d1, s, &tol()).unwrap().neg_inv11_12(1e12).unwrap();
            let x2 = transition_blocks(&sys, s + d1 + d2, s, &tol()).unwrap().neg_inv11_12(1e12).unwrap();
            prop_assert!(crate::linalg::min_eigenvalue(&x1) > 0.0);
            prop_assert!(crate::linalg::min_eigenvalue(&symmetrize(&(x2 - x1))) > -1e-10);
        }
    }
}
