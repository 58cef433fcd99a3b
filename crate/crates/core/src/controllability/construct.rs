use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::linalg::{max_abs, min_eigenvalue};
use crate::matfun::{MatrixPoly, Poly};
use crate::ode::{integrate, pack, unpack, Control, OdeOptions};
use crate::scalar::{from_usize, lit, Scalar};
use crate::system::{grid_times, BoundaryData};
use crate::tolerances::Tolerances;

use super::canonical::{canonical_pair, canonical_transform, CanonicalForm};
use super::scalar_steering::{scalar_steering_u, uniform, Running, ScalarSteering, ScalarSteeringProblem, Weight};

/// Data of one layer `k`: the corner `Σ_kk` and its control, the entry
/// `Σ_{k,k+1}` (or the last input entry when `k = n`).
#[derive(Debug, Clone)]
pub struct LayerRecord<T> {
    pub k: usize,
    /// Highest derivative order imposed on the layer control at `t = 0, 1`.
    pub h: usize,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    pub gamma: T,
    pub sigma_star0: T,
    pub sigma_star1: T,
    /// Polynomial part `a + b + c` of the layer control.
    pub poly: Poly<T>,
    pub c0: T,
    pub d0: T,
    pub floor_margin: T,
    pub integral_residual: T,
}

#[derive(Debug, Clone)]
pub struct SteeringVerification<T> {
    /// `‖Σ(1) − Σ1‖_max` after integrating the closed loop with the gain.
    pub endpoint_error: T,
    /// Largest gap between the re-integrated and constructed `Σ` on the grid.
    pub max_deviation: T,
    pub min_eigenvalue: T,
    /// Endpoint mismatch of the constructed `Σ` itself.
    pub construction_error: T,
}

struct Layer<T: Scalar> {
    u: ScalarSteering<T>,
    star0: T,
    m_running: Running<T>,
}

struct Construction<T: Scalar> {
    n: usize,
    m: MatrixPoly<T>,
    nu: Poly<T>,
    nu_int: Poly<T>,
    layers: Vec<Layer<T>>,
}

struct Block<T> {
    sigma: Vec<Vec<Jet<T>>>,
    v: Vec<Jet<T>>,
}

impl<T: Scalar> Construction<T> {
    fn corner(&self, li: usize, t: T, order: usize, vstar: &Jet<T>) -> Jet<T> {
        let layer = &self.layers[li];
        let e2n = (self.nu_int.eval(t, 0) * lit(2.0)).exp();
        let value = e2n * (layer.star0 + layer.m_running.at(t) + layer.u.integral_to(t));
        let nu = Jet::of_poly(&self.nu, t, order);
        let mk = Jet::of_poly(self.m.entry(li, li), t, order);
        let two = lit::<T>(2.0);
        let mut c = vec![value];
        for i in 0..order {
            let mut s = two * vstar.coeffs()[i] + mk.coeffs()[i];
            for j in 0..=i {
                s += two * nu.coeffs()[j] * c[i - j];
            }
            c.push(s / from_usize::<T>(i + 1));
        }
        Jet::from_coeffs(c)
    }

    /// Leading `k × k` block of `Σ` and its control, as jets at `t`.
    fn eval(&self, k: usize, t: T, order: usize) -> Block<T> {
        let li = k - 1;
        let vstar = self.layers[li].u.jet(t, order);
        let star = self.corner(li, t, order, &vstar);
        if k == 1 {
            return Block {
                sigma: vec![vec![star]],
                v: vec![vstar],
            };
        }
        let inner = self.eval(k - 1, t, order + 1);
        let dag = &inner.v;
        let nu = Jet::of_poly(&self.nu, t, order);
        let mut v = Vec::with_capacity(k);
        for r in 0..k - 1 {
            // U† = Σ†' − A Σ† − B Σ★ − M† − 2νΣ†
            let mut x = dag[r].differentiate();
            x = if r + 1 < k - 1 { &x - &dag[r + 1] } else { &x - &star };
            x = &x - &Jet::of_poly(self.m.entry(r, li), t, order);
            x = &x - &(&nu * &dag[r]).scale(lit(2.0));
            v.push(x.truncate(order));
        }
        v.push(vstar);
        let mut sigma = vec![vec![Jet::zero(order); k]; k];
        for i in 0..k - 1 {
            for j in 0..k - 1 {
                sigma[i][j] = inner.sigma[i][j].truncate(order);
            }
            sigma[i][li] = dag[i].truncate(order);
            sigma[li][i] = sigma[i][li].clone();
        }
        sigma[li][li] = star;
        Block { sigma, v }
    }

    /// Canonical `Σ̃(t)` and `Ũ(t)`.
    fn values(&self, t: T) -> (DMatrix<T>, DVector<T>) {
        let blk = self.eval(self.n, t, 0);
        values_of(&blk)
    }
}

fn values_of<T: Scalar>(blk: &Block<T>) -> (DMatrix<T>, DVector<T>) {
    let k = blk.v.len();
    (
        DMatrix::from_fn(k, k, |i, j| blk.sigma[i][j].value()),
        DVector::from_fn(k, |i, _| blk.v[i].value()),
    )
}

/// Taylor coefficients of `Σ̃` at an endpoint, from the canonical covariance
/// equation with the input coefficients `u[i]`.
fn boundary_taylor<T: Scalar>(
    sigma: &DMatrix<T>,
    te: T,
    u: &[DVector<T>],
    m: &MatrixPoly<T>,
    nu: &Poly<T>,
    order: usize,
) -> Vec<DMatrix<T>> {
    let n = sigma.nrows();
    let (an, bn) = canonical_pair::<T>(n);
    let nuj = Jet::of_poly(nu, te, order);
    let mut fact = T::one();
    let mut c = vec![sigma.clone()];
    for i in 0..order {
        if i > 0 {
            fact *= from_usize::<T>(i);
        }
        let ui = u.get(i).cloned().unwrap_or_else(|| DVector::zeros(n));
        let mut next = &an * &c[i] + &c[i] * an.transpose() + &bn * ui.transpose() + &ui * bn.transpose();
        next += m.evaluate(te, i) / fact;
        for j in 0..=i {
            next += &c[i - j] * (lit::<T>(2.0) * nuj.coeffs()[j]);
        }
        c.push(next / from_usize::<T>(i + 1));
    }
    c
}

/// Output of [`construct_feasible_steering`]: a continuous gain
/// `K = F + v k̃ T` with `k̃ = ŨᵀΣ̃⁻¹`, tabulated on a uniform grid.
#[derive(Clone)]
pub struct FeasibleSteering<T: Scalar> {
    pub canonical: CanonicalForm<T>,
    pub times: Vec<T>,
    /// `U = Σ Kᵀ`, `n × p`.
    pub u_grid: Vec<DMatrix<T>>,
    pub gain_grid: Vec<DMatrix<T>>,
    pub sigma_grid: Vec<DMatrix<T>>,
    pub layer_trace: Vec<LayerRecord<T>>,
    pub verification: SteeringVerification<T>,
    cons: Arc<Construction<T>>,
}

impl<T: Scalar> fmt::Debug for FeasibleSteering<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeasibleSteering")
            .field("times", &self.times.len())
            .field("layer_trace", &self.layer_trace)
            .field("verification", &self.verification)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> FeasibleSteering<T> {
    /// Constructed covariance at any `t ∈ [0, 1]`.
    pub fn sigma_at(&self, t: T) -> DMatrix<T> {
        let (s, _) = self.cons.values(t);
        let ti = self.t_inv();
        &ti * s * ti.transpose()
    }

    /// The feedback gain at any `t ∈ [0, 1]`.
    pub fn gain_at(&self, t: T) -> Result<DMatrix<T>> {
        gain_from(&self.cons, &self.canonical, t)
    }

    fn t_inv(&self) -> DMatrix<T> {
        self.canonical.t.clone().try_inverse().expect("T is invertible")
    }
}

fn gain_from<T: Scalar>(cons: &Construction<T>, c: &CanonicalForm<T>, t: T) -> Result<DMatrix<T>> {
    let (s, u) = cons.values(t);
    let y = s.cholesky().map(|ch| ch.solve(&u)).ok_or(Error::Singular {
        what: "constructed covariance".into(),
        condition: f64::INFINITY,
    })?;
    Ok(&c.f + &c.v * y.transpose() * &c.t)
}

/// Builds a continuous feedback steering `Σ0` to `Σ1` under
/// `Σ' = (A+BK)Σ + Σ(A+BK)ᵀ + M + 2νΣ`, with the canonical input `Ũ` and
/// its first `h` derivatives vanishing at both ends.
pub fn construct_feasible_steering<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    bd: &BoundaryData<T>,
    m: &MatrixPoly<T>,
    nu: &MatrixPoly<T>,
    h: usize,
    tol: &Tolerances<T>,
) -> Result<FeasibleSteering<T>> {
    let n = a.nrows();
    let zeros = vec![DVector::zeros(n); h + 1];
    construct_feasible_steering_with(a, b, bd, m, nu, (&zeros, &zeros), tol)
}

/// As [`construct_feasible_steering`], with the derivatives
/// `Ũ⁽ⁱ⁾(0)`, `Ũ⁽ⁱ⁾(1)`, `i = 0..=H`, given in canonical coordinates.
pub fn construct_feasible_steering_with<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    bd: &BoundaryData<T>,
    m: &MatrixPoly<T>,
    nu: &MatrixPoly<T>,
    u_bcs: (&[DVector<T>], &[DVector<T>]),
    tol: &Tolerances<T>,
) -> Result<FeasibleSteering<T>> {
    let n = a.nrows();
    if n == 0 || n > 3 {
        return Err(Error::InvalidArgument(format!("construction supports 1 ≤ n ≤ 3, got {n}")));
    }
    bd.check()?;
    if bd.dim() != n || m.shape() != (n, n) || nu.shape() != (1, 1) {
        return Err(Error::DimensionMismatch(format!(
            "n = {n}, Σ is {0}x{0}, M is {1}x{2}, ν is {3}x{4}",
            bd.dim(),
            m.rows(),
            m.cols(),
            nu.rows(),
            nu.cols()
        )));
    }
    let (u0, u1) = u_bcs;
    if u0.is_empty() || u0.len() != u1.len() || u0.iter().chain(u1).any(|u| u.len() != n) {
        return Err(Error::DimensionMismatch("input boundary data".into()));
    }
    let h = u0.len() - 1;
    for t in grid_times::<T>(tol.validation_grid) {
        if min_eigenvalue(&m.evaluate(t, 0)) < -tol.psd_threshold {
            return Err(Error::Precondition(format!("M not positive semidefinite at t={}", t.as_f64())));
        }
        if nu.scalar_at(t) < -tol.psd_threshold {
            return Err(Error::Precondition(format!("nu negative at t={}", t.as_f64())));
        }
    }

    let canon = canonical_transform(a, b, tol)?;
    let tm = &canon.t;
    let t_inv = tm.clone().try_inverse().ok_or(Error::Singular {
        what: "T".into(),
        condition: f64::INFINITY,
    })?;
    let mt = MatrixPoly::constant(tm)
        .try_mul(m)?
        .try_mul(&MatrixPoly::constant(&tm.transpose()))?;
    let s0 = tm * &bd.sigma0 * tm.transpose();
    let s1 = tm * &bd.sigma1 * tm.transpose();
    let nu_poly = nu.entry(0, 0).clone();
    let nu_int = nu_poly.integral();

    // outer-to-inner: boundary derivatives of every entry
    let taylor_coeffs = |u: &[DVector<T>]| -> Vec<DVector<T>> {
        let mut fact = T::one();
        u.iter()
            .enumerate()
            .map(|(i, x)| {
                if i > 0 {
                    fact *= from_usize::<T>(i);
                }
                x / fact
            })
            .collect()
    };
    let depth = h + n + 1;
    let c0 = boundary_taylor(&s0, T::zero(), &taylor_coeffs(u0), &mt, &nu_poly, depth);
    let c1 = boundary_taylor(&s1, T::one(), &taylor_coeffs(u1), &mt, &nu_poly, depth);

    let quad_tol = lit::<T>(1e-14).max(T::default_epsilon() * lit(16.0));
    let mut cons = Construction {
        n,
        m: mt.clone(),
        nu: nu_poly.clone(),
        nu_int: nu_int.clone(),
        layers: Vec::with_capacity(n),
    };
    let mut trace = Vec::with_capacity(n);
    let grid: Vec<T> = uniform(1000);

    // inner-to-outer: one scalar problem per corner
    for k in 1..=n {
        let li = k - 1;
        let hk = h + n - k;
        let data = |c: &[DMatrix<T>], u: &[DVector<T>]| -> Vec<T> {
            let mut fact = T::one();
            (0..=hk)
                .map(|i| {
                    if i > 0 {
                        fact *= from_usize::<T>(i);
                    }
                    if k < n {
                        c[i][(li, k)] * fact
                    } else {
                        u[i][n - 1]
                    }
                })
                .collect()
        };
        let alpha = data(&c0, u0);
        let beta = data(&c1, u1);

        let ni = nu_int.clone();
        let f: Weight<T> = Arc::new(move |t, order| Jet::of_poly(&ni, t, order).scale(lit(-2.0)).exp().scale(lit(2.0)));
        let ni = nu_int.clone();
        let mkk = mt.entry(li, li).clone();
        let m_running = Running::new(
            Arc::new(move |t: T| (ni.eval(t, 0) * lit(-2.0)).exp() * mkk.eval(t, 0)),
            quad_tol,
        )?;
        let star0 = s0[(li, li)];
        let star1 = s1[(li, li)];
        let decay = |t: T| (nu_int.eval(t, 0) * lit(-2.0)).exp();
        let gamma = decay(T::one()) * star1 - star0 - m_running.at(T::one());

        // floor Σ★ > Σ†ᵀ Σ□⁻¹ Σ†, tabulated on the check grid
        let mut rho = Vec::with_capacity(grid.len());
        for (j, t) in grid.iter().enumerate() {
            let r = if k == 1 {
                T::zero()
            } else {
                let (sq, dag) = values_of(&cons.eval(k - 1, *t, 0));
                let y = sq
                    .cholesky()
                    .map(|ch| ch.solve(&dag))
                    .ok_or_else(|| Error::Infeasible(format!("inner block lost definiteness at t={}", t.as_f64())))?;
                dag.dot(&y)
            };
            rho.push(r * decay(*t) - star0 - m_running.table()[j]);
        }
        let rho_fn = move |t: T| {
            let x = (t * lit(1000.0)).max(T::zero()).min(lit(1000.0));
            let j = (x.floor().as_f64() as usize).min(999);
            let w = x - from_usize::<T>(j);
            rho[j] * (T::one() - w) + rho[j + 1] * w
        };
        let prob = ScalarSteeringProblem::new(f, gamma, alpha.clone(), beta.clone(), rho_fn);
        let u = scalar_steering_u(&prob)?;
        trace.push(LayerRecord {
            k,
            h: hk,
            alpha,
            beta,
            gamma,
            sigma_star0: star0,
            sigma_star1: star1,
            poly: u.poly.clone(),
            c0: u.c0,
            d0: u.d0,
            floor_margin: u.floor_margin,
            integral_residual: u.integral_residual,
        });
        cons.layers.push(Layer { u, star0, m_running });
    }

    let times: Vec<T> = grid_times::<T>(tol.validation_grid).collect();
    let mut sigma_grid = Vec::with_capacity(times.len());
    let mut gain_grid = Vec::with_capacity(times.len());
    let mut u_grid = Vec::with_capacity(times.len());
    for t in &times {
        let (s, _) = cons.values(*t);
        let sig = &t_inv * s * t_inv.transpose();
        let k = gain_from(&cons, &canon, *t)?;
        u_grid.push(&sig * k.transpose());
        gain_grid.push(k);
        sigma_grid.push(sig);
    }
    let construction_error =
        max_abs(&(&sigma_grid[0] - &bd.sigma0)).max(max_abs(&(sigma_grid.last().unwrap() - &bd.sigma1)));

    // independent check: integrate the closed loop with the continuous gain
    let opts = OdeOptions::new(tol.ode_rtol, tol.ode_atol);
    let nan = lit::<T>(f64::NAN);
    let sol = integrate(
        |t, y: &DVector<T>| {
            let s = unpack(y.as_slice(), n, n);
            let Ok(k) = gain_from(&cons, &canon, t) else {
                return DVector::from_element(n * n, nan);
            };
            let acl = a + b * k;
            let ds = &acl * &s + &s * acl.transpose() + m.evaluate(t, 0) + &s * (lit::<T>(2.0) * nu.scalar_at(t));
            pack(&ds)
        },
        T::zero(),
        pack(&bd.sigma0),
        &times,
        &opts,
        |_, _| Control::Continue,
    )?;
    let mut max_deviation = T::zero();
    let mut min_eig = T::max_value().unwrap();
    for (y, s) in sol.states.iter().zip(&sigma_grid) {
        let re = unpack(y.as_slice(), n, n);
        max_deviation = max_deviation.max(max_abs(&(&re - s)));
        min_eig = min_eig.min(min_eigenvalue(&re)).min(min_eigenvalue(s));
    }
    let last = unpack(sol.states.last().unwrap().as_slice(), n, n);
    let verification = SteeringVerification {
        endpoint_error: max_abs(&(&last - &bd.sigma1)),
        max_deviation,
        min_eigenvalue: min_eig,
        construction_error,
    };

    Ok(FeasibleSteering {
        canonical: canon,
        times,
        u_grid,
        gain_grid,
        sigma_grid,
        layer_trace: trace,
        verification,
        cons: Arc::new(cons),
    })
}
