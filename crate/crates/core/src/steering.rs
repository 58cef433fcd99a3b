//! The boundary map `f: Π(0) ↦ Σ(1)`, its Jacobian, the Newton solve for the
//! optimal `Π(0)`, and the quantities derived from it.

use nalgebra::{DMatrix, DVector};

use crate::controllability::classify;
use crate::error::{Error, Result};
use crate::linalg::{
    frobenius, inv_sqrt_pd, inverse_checked, max_abs, min_eigenvalue, solve_checked, sqrt_psd,
    symmetrize,
};
use crate::matfun::{kron, vec};
use crate::ode::{integrate, pack, unpack, Control};
use crate::quad;
use crate::riccati::solve_closed_form;
use crate::scalar::{lit, Scalar};
use crate::system::{grid_times, validate_system, BoundaryData, SystemSpec};
use crate::tolerances::Tolerances;
use crate::transition::{hamiltonian, ode_options, TransitionBlocks, TransitionCache};

/// Everything computed in one evaluation of `f` and its Jacobian.
#[derive(Debug, Clone)]
pub struct JacobianWorkspace<T: Scalar> {
    /// `Φ_Π(1, 0) = Φ11(1,0) + Φ12(1,0)Π0`
    pub phi_pi10: DMatrix<T>,
    pub w10: DMatrix<T>,
    /// Quadrature nodes with `W_{s0}` and `P_s` at each, ascending in `s`.
    pub nodes: Vec<T>,
    pub w: Vec<DMatrix<T>>,
    pub p: Vec<DMatrix<T>>,
    /// Bracketed operator, `n² × n²`.
    pub s: DMatrix<T>,
    pub jac: DMatrix<T>,
    /// `f(Π0)`
    pub sigma1: DMatrix<T>,
}

fn invert_phi_pi<T: Scalar>(m: &DMatrix<T>, s: T, tol: &Tolerances<T>) -> Result<DMatrix<T>> {
    inverse_checked(m, tol.max_condition, "Phi_Pi").map_err(|e| match e {
        Error::Singular { condition, .. } => Error::RiccatiNonexistence(format!(
            "Phi_Pi({}, 0) is singular (condition estimate {condition:e})",
            s.as_f64()
        )),
        other => other,
    })
}

/// `λ_min(upper(0) − Π0)` with `upper(0) = −Φ12(1,0)⁻¹Φ11(1,0)`.
fn admissibility_margin<T: Scalar>(b10: &TransitionBlocks<T>, pi0: &DMatrix<T>, tol: &Tolerances<T>) -> Result<T> {
    let upper = b10.neg_inv12_11(tol.max_condition)?;
    Ok(min_eigenvalue(&symmetrize(&(upper - pi0))))
}

fn require_admissible<T: Scalar>(b10: &TransitionBlocks<T>, pi0: &DMatrix<T>, tol: &Tolerances<T>) -> Result<()> {
    let m = admissibility_margin(b10, pi0, tol)?;
    if m > T::zero() {
        Ok(())
    } else {
        Err(Error::RiccatiNonexistence(format!(
            "Pi0 violates the upper bound by {:e}; the Riccati solution escapes before t=1",
            -m.as_f64()
        )))
    }
}

/// Evaluates `f(Π0)` and its Jacobian with a single adaptive quadrature whose
/// integrand stacks `P_s` and the Jacobian integrand, so both share nodes.
pub fn evaluate_map<T: Scalar>(
    cache: &TransitionCache<'_, T>,
    sigma0: &DMatrix<T>,
    pi0: &DMatrix<T>,
) -> Result<JacobianWorkspace<T>> {
    let sys = cache.system();
    let tol = cache.tolerances();
    let n = sys.n;
    let nn = n * n;
    let b10 = cache.get(T::one(), T::zero())?;
    require_admissible(&b10, pi0, tol)?;
    let phi_pi10 = b10.phi_pi(pi0);
    let inv10 = invert_phi_pi(&phi_pi10, T::one(), tol)?;
    let w10 = symmetrize(&(&inv10 * &b10.phi12));

    let near_zero = lit::<T>(1e-8);
    let mut samples: Vec<(T, DMatrix<T>, DMatrix<T>)> = Vec::new();
    let r = quad::integrate(
        |s| {
            let noise = sys.noise_at(s);
            let (w, p) = if s < near_zero {
                (DMatrix::zeros(n, n), symmetrize(&noise))
            } else {
                let b = cache.get(s, T::zero())?;
                let inv = invert_phi_pi(&b.phi_pi(pi0), s, tol)?;
                (symmetrize(&(&inv * &b.phi12)), symmetrize(&(&inv * noise * inv.transpose())))
            };
            let d = &w10 - &w;
            let s_int = kron(&p, &d) + kron(&d, &p);
            let mut out = DVector::zeros(nn + nn * nn);
            out.rows_mut(0, nn).copy_from(&vec(&p));
            out.rows_mut(nn, nn * nn).copy_from_slice(s_int.as_slice());
            samples.push((s, w, p));
            Ok(out)
        },
        T::zero(),
        T::one(),
        tol.quad_tol,
        2048,
    )?;
    samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let int_p = unpack(&r.value.as_slice()[..nn], n, n);
    let int_s = unpack(&r.value.as_slice()[nn..], nn, nn);
    let sigma1 = symmetrize(&(&phi_pi10 * (sigma0 + int_p) * phi_pi10.transpose()));
    let s = kron(sigma0, &w10) + kron(&w10, sigma0) + int_s;
    let jac = kron(&phi_pi10, &phi_pi10) * &s;
    let (nodes, (w, p)): (Vec<T>, (Vec<_>, Vec<_>)) =
        samples.into_iter().map(|(s, w, p)| (s, (w, p))).unzip();
    Ok(JacobianWorkspace {
        phi_pi10,
        w10,
        nodes,
        w,
        p,
        s,
        jac,
        sigma1,
    })
}

/// `Σ(1)` reached from `Σ0` under the feedback generated by `Π0`.
pub fn map_f<T: Scalar>(
    sys: &SystemSpec<T>,
    sigma0: &DMatrix<T>,
    pi0: &DMatrix<T>,
    tol: &Tolerances<T>,
) -> Result<DMatrix<T>> {
    let sys = sys.identity_channel_reduction(tol.validation_grid)?;
    Ok(evaluate_map(&TransitionCache::new(&sys, tol), sigma0, pi0)?.sigma1)
}

pub fn jacobian_f<T: Scalar>(
    sys: &SystemSpec<T>,
    sigma0: &DMatrix<T>,
    pi0: &DMatrix<T>,
    tol: &Tolerances<T>,
) -> Result<JacobianWorkspace<T>> {
    let sys = sys.identity_channel_reduction(tol.validation_grid)?;
    evaluate_map(&TransitionCache::new(&sys, tol), sigma0, pi0)
}

/// Closed-form `Π0` from `Φ(1, 0)`, valid when the noise enters through the
/// control channel.
fn special_formula<T: Scalar>(b10: &TransitionBlocks<T>, bd: &BoundaryData<T>, tol: &Tolerances<T>) -> Result<DMatrix<T>> {
    let n = bd.dim();
    let eye = DMatrix::<T>::identity(n, n);
    let inv12 = inverse_checked(&b10.phi12, tol.max_condition, "Phi12(1, 0)")?;
    let s0_half = sqrt_psd(&bd.sigma0)?;
    let s0_ihalf = inv_sqrt_pd(&bd.sigma0)?;
    let s0_inv = inverse_checked(&bd.sigma0, tol.max_condition, "Sigma0")?;
    let inner = symmetrize(&(&s0_half * &inv12 * &bd.sigma1 * inv12.transpose() * &s0_half));
    let root = sqrt_psd(&(eye * lit::<T>(0.25) + inner))?;
    let upper = symmetrize(&(-&inv12 * &b10.phi11));
    Ok(symmetrize(&(upper + s0_inv * lit::<T>(0.5) - &s0_ihalf * root * &s0_ihalf)))
}

/// Closed-form `Π0` for systems with `C D Cᵀ = B R⁻¹ Bᵀ`.
pub fn special_case_pi0<T: Scalar>(
    sys: &SystemSpec<T>,
    bd: &BoundaryData<T>,
    tol: &Tolerances<T>,
) -> Result<DMatrix<T>> {
    let sys = sys.identity_channel_reduction(tol.validation_grid)?;
    bd.check()?;
    for t in grid_times::<T>(tol.validation_grid) {
        let g = sys.normalized_at(t)?.g;
        let gap = max_abs(&(sys.noise_at(t) - g));
        if gap > lit(1e-10) {
            return Err(Error::ChannelMismatch(format!(
                "C D C^T differs from B R^-1 B^T by {:e} at t={}",
                gap.as_f64(),
                t.as_f64()
            )));
        }
    }
    let b10 = crate::transition::transition_blocks(&sys, T::one(), T::zero(), tol)?;
    special_formula(&b10, bd, tol)
}

/// Lower-triangle coordinates of symmetric matrices.
struct SymBasis {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl SymBasis {
    fn new(n: usize) -> Self {
        let pairs = (0..n).flat_map(|j| (j..n).map(move |i| (i, j))).collect();
        Self { n, pairs }
    }

    fn dim(&self) -> usize {
        self.pairs.len()
    }

    /// `L · jac · E`
    fn reduce<T: Scalar>(&self, jac: &DMatrix<T>) -> DMatrix<T> {
        let m = self.dim();
        let n = self.n;
        DMatrix::from_fn(m, m, |r, c| {
            let (i, j) = self.pairs[r];
            let (k, l) = self.pairs[c];
            let row = j * n + i;
            if k == l {
                jac[(row, l * n + k)]
            } else {
                jac[(row, l * n + k)] + jac[(row, k * n + l)]
            }
        })
    }

    fn coords<T: Scalar>(&self, m: &DMatrix<T>) -> DVector<T> {
        DVector::from_iterator(self.dim(), self.pairs.iter().map(|&(i, j)| m[(i, j)]))
    }

    fn matrix<T: Scalar>(&self, v: &DVector<T>) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (&(i, j), x) in self.pairs.iter().zip(v.iter()) {
            m[(i, j)] = *x;
            m[(j, i)] = *x;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonPhase {
    Newton,
    Homotopy { stage: usize },
}

#[derive(Debug, Clone)]
pub struct NewtonStep<T> {
    pub phase: NewtonPhase,
    pub iteration: usize,
    /// Relative residual `‖f(Π0) − target‖_F / ‖Σ1‖_F` before the step.
    pub residual: T,
    pub step_length: T,
    pub halvings: usize,
}

#[derive(Debug, Clone)]
pub struct SteeringSolution<T: Scalar> {
    pub pi0: DMatrix<T>,
    pub pi_grid: Vec<(T, DMatrix<T>)>,
    pub gain_grid: Vec<(T, DMatrix<T>)>,
    pub sigma_grid: Vec<(T, DMatrix<T>)>,
    pub optimal_cost: T,
    pub residual: T,
    /// Max-abs gap between the integrated and the closed-form `Σ(1)`.
    pub propagation_check: T,
    pub newton_trace: Vec<NewtonStep<T>>,
}

struct NewtonRun<T: Scalar> {
    pi: DMatrix<T>,
    residual: T,
    converged: bool,
}

fn newton<T: Scalar>(
    cache: &TransitionCache<'_, T>,
    sigma0: &DMatrix<T>,
    target: &DMatrix<T>,
    scale: T,
    start: DMatrix<T>,
    goal: T,
    phase: NewtonPhase,
    trace: &mut Vec<NewtonStep<T>>,
) -> Result<NewtonRun<T>> {
    let tol = cache.tolerances();
    let b10 = cache.get(T::one(), T::zero())?;
    let basis = SymBasis::new(sigma0.nrows());
    let mut pi = start;
    let mut ws = evaluate_map(cache, sigma0, &pi)?;
    let mut res = frobenius(&(&ws.sigma1 - target)) / scale;
    for iteration in 0..tol.newton_max_iter {
        if res <= goal {
            return Ok(NewtonRun { pi, residual: res, converged: true });
        }
        let jr = basis.reduce(&ws.jac);
        let rhs = -basis.coords(&(&ws.sigma1 - target));
        let rhs = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
        let delta = match solve_checked(&jr, &rhs, tol.max_condition, "reduced Jacobian") {
            Ok(d) => basis.matrix(&DVector::from_column_slice(d.as_slice())),
            Err(_) => break,
        };
        let mut alpha = T::one();
        let mut accepted = None;
        let mut halvings = 0;
        while halvings <= tol.newton_max_halvings {
            let cand = symmetrize(&(&pi + &delta * alpha));
            if admissibility_margin(&b10, &cand, tol)? >= tol.admissibility_margin {
                if let Ok(w) = evaluate_map(cache, sigma0, &cand) {
                    let r = frobenius(&(&w.sigma1 - target)) / scale;
                    if r < res {
                        accepted = Some((cand, w, r));
                        break;
                    }
                }
            }
            alpha *= lit(0.5);
            halvings += 1;
        }
        trace.push(NewtonStep {
            phase,
            iteration,
            residual: res,
            step_length: if accepted.is_some() { alpha } else { T::zero() },
            halvings,
        });
        match accepted {
            Some((p, w, r)) => {
                pi = p;
                ws = w;
                res = r;
            }
            None => break,
        }
    }
    Ok(NewtonRun {
        converged: res <= goal,
        pi,
        residual: res,
    })
}

fn check_inputs<T: Scalar>(sys: &SystemSpec<T>, bd: &BoundaryData<T>, tol: &Tolerances<T>) -> Result<SystemSpec<T>> {
    let report = validate_system(sys, tol)?;
    if let Some(f) = report.failures().next() {
        return Err(Error::Precondition(
            f.message.clone().unwrap_or_else(|| f.name.clone()),
        ));
    }
    let reduced = sys.identity_channel_reduction(tol.validation_grid)?;
    bd.check()?;
    if bd.dim() != sys.n {
        return Err(Error::DimensionMismatch(format!(
            "boundary covariances are {0}x{0}, system has n={1}",
            bd.dim(),
            sys.n
        )));
    }
    let ctrb = classify(&reduced, tol.validation_grid, tol);
    if !ctrb.totally_controllable {
        return Err(Error::NotControllable(
            "(A, B) is not totally controllable on [0, 1]".into(),
        ));
    }
    Ok(reduced)
}

/// Finds the unique admissible `Π0` with `f(Π0) = Σ1` and assembles the
/// optimal steering law on a uniform grid of `grid_size` points.
pub fn solve_boundary<T: Scalar>(
    sys: &SystemSpec<T>,
    bd: &BoundaryData<T>,
    grid_size: usize,
    tol: &Tolerances<T>,
) -> Result<SteeringSolution<T>> {
    let sys = check_inputs(sys, bd, tol)?;
    let cache = TransitionCache::new(&sys, tol);
    let b10 = cache.get(T::one(), T::zero())?;
    let n = sys.n;
    let scale = frobenius(&bd.sigma1);
    let goal = tol.newton_tol;

    let start = special_formula(&b10, bd, tol)
        .ok()
        .filter(|p| admissibility_margin(&b10, p, tol).is_ok_and(|m| m >= tol.admissibility_margin))
        .map_or_else(
            || -> Result<DMatrix<T>> {
                Ok(b10.neg_inv12_11(tol.max_condition)? - DMatrix::identity(n, n))
            },
            Ok,
        )?;

    let mut trace = Vec::new();
    let mut run = newton(&cache, &bd.sigma0, &bd.sigma1, scale, start, goal, NewtonPhase::Newton, &mut trace)?;
    if !run.converged {
        // continuation from the current image towards the target
        let from = evaluate_map(&cache, &bd.sigma0, &run.pi)?.sigma1;
        let stages = tol.homotopy_steps.max(1);
        for stage in 1..=stages {
            let theta = lit::<T>(stage as f64 / stages as f64);
            let target = &from * (T::one() - theta) + &bd.sigma1 * theta;
            let stage_goal = if stage == stages { goal } else { goal.max(lit(1e-6)) };
            let r = newton(
                &cache,
                &bd.sigma0,
                &target,
                scale,
                run.pi.clone(),
                stage_goal,
                NewtonPhase::Homotopy { stage },
                &mut trace,
            )?;
            run = r;
        }
        if !run.converged {
            return Err(Error::NoConvergence {
                iterations: trace.len(),
                best_residual: run.residual.as_f64(),
            });
        }
    }

    let prop = propagate_covariance(&sys, &run.pi, &bd.sigma0, grid_size, tol)?;
    let gain_grid = feedback_gain(&sys, &prop.pi_grid)?;
    let optimal_cost = optimal_cost(&sys, &run.pi, bd, tol)?;
    Ok(SteeringSolution {
        pi0: run.pi,
        pi_grid: prop.pi_grid,
        gain_grid,
        sigma_grid: prop.sigma_grid,
        optimal_cost,
        residual: run.residual,
        propagation_check: prop.endpoint_residual,
        newton_trace: trace,
    })
}

#[derive(Debug, Clone)]
pub struct CovariancePropagation<T: Scalar> {
    pub sigma_grid: Vec<(T, DMatrix<T>)>,
    pub pi_grid: Vec<(T, DMatrix<T>)>,
    /// Max-abs gap between the integrated `Σ(1)` and `f(Π0)`.
    pub endpoint_residual: T,
}

/// Integrates `Σ' = (Ā − GΠ)Σ + Σ(Ā − GΠ)ᵀ + CDCᵀ` alongside `Φ(·, 0)`, with
/// `Π(t)` read off the transition in closed form.
pub fn propagate_covariance<T: Scalar>(
    sys: &SystemSpec<T>,
    pi0: &DMatrix<T>,
    sigma0: &DMatrix<T>,
    grid_size: usize,
    tol: &Tolerances<T>,
) -> Result<CovariancePropagation<T>> {
    let sys = sys.identity_channel_reduction(tol.validation_grid)?;
    let n = sys.n;
    let n2 = 2 * n;
    let formula = map_f(&sys, sigma0, pi0, tol)?;
    let pi_of = |phi: &DMatrix<T>| -> Option<DMatrix<T>> {
        let p11 = phi.view((0, 0), (n, n));
        let p12 = phi.view((0, n), (n, n));
        let p21 = phi.view((n, 0), (n, n));
        let p22 = phi.view((n, n), (n, n));
        let den = p11 + p12 * pi0;
        let num = p21 + p22 * pi0;
        let x = solve_checked(&den.transpose(), &num.transpose(), tol.max_condition, "Phi_Pi").ok()?;
        Some(symmetrize(&x.transpose()))
    };
    let rhs = |t: T, y: &DVector<T>| -> DVector<T> {
        let fail = || DVector::from_element(y.len(), lit::<T>(f64::NAN));
        let phi = unpack(&y.as_slice()[..n2 * n2], n2, n2);
        let sigma = symmetrize(&unpack(&y.as_slice()[n2 * n2..], n, n));
        let (Ok(m), Ok(c), Some(pi)) = (hamiltonian(&sys, t), sys.normalized_at(t), pi_of(&phi)) else {
            return fail();
        };
        let acl = &c.a - &c.g * pi;
        let ds = &acl * &sigma + &sigma * acl.transpose() + &c.noise;
        let mut out = DVector::zeros(y.len());
        out.rows_mut(0, n2 * n2).copy_from(&pack(&(m * phi)));
        out.rows_mut(n2 * n2, n * n).copy_from(&pack(&ds));
        out
    };
    let mut y0 = DVector::zeros(n2 * n2 + n * n);
    y0.rows_mut(0, n2 * n2).copy_from(&pack(&DMatrix::<T>::identity(n2, n2)));
    y0.rows_mut(n2 * n2, n * n).copy_from(&pack(&symmetrize(sigma0)));
    let times: Vec<T> = grid_times::<T>(grid_size).collect();
    let sol = integrate(rhs, T::zero(), y0, &times[1..], &ode_options(tol), |_, _| Control::Continue)
        .map_err(|e| match e {
            Error::IntegrationFailure { t } => {
                Error::RiccatiNonexistence(format!("covariance propagation failed at t={t}"))
            }
            other => other,
        })?;
    let mut sigma_grid = vec![(T::zero(), symmetrize(sigma0))];
    let mut pi_grid = vec![(T::zero(), symmetrize(pi0))];
    for (t, y) in sol.times.iter().zip(&sol.states) {
        let phi = unpack(&y.as_slice()[..n2 * n2], n2, n2);
        sigma_grid.push((*t, symmetrize(&unpack(&y.as_slice()[n2 * n2..], n, n))));
        let pi = pi_of(&phi).ok_or_else(|| {
            Error::RiccatiNonexistence(format!("Phi_Pi singular at t={}", t.as_f64()))
        })?;
        pi_grid.push((*t, pi));
    }
    let endpoint_residual = max_abs(&(&sigma_grid.last().unwrap().1 - &formula));
    Ok(CovariancePropagation {
        sigma_grid,
        pi_grid,
        endpoint_residual,
    })
}

/// `K(t) = −R(t)⁻¹B(t)ᵀΠ(t)`
pub fn feedback_gain<T: Scalar>(
    sys: &SystemSpec<T>,
    pi_grid: &[(T, DMatrix<T>)],
) -> Result<Vec<(T, DMatrix<T>)>> {
    pi_grid
        .iter()
        .map(|(t, pi)| {
            let k = -(sys.r_inv_at(*t)? * sys.b.evaluate(*t, 0).transpose() * pi);
            Ok((*t, k))
        })
        .collect()
}

/// `J* = ∫₀¹ tr(Π CDCᵀ) dt + tr(Π0 Σ0) − tr(Π(1) Σ1)`
pub fn optimal_cost<T: Scalar>(
    sys: &SystemSpec<T>,
    pi0: &DMatrix<T>,
    bd: &BoundaryData<T>,
    tol: &Tolerances<T>,
) -> Result<T> {
    let sys = sys.identity_channel_reduction(tol.validation_grid)?;
    let running = quad::integrate(
        |t| {
            let pi = solve_closed_form(&sys, T::zero(), pi0, t, tol)?;
            Ok(DVector::from_element(1, (pi * sys.noise_at(t)).trace()))
        },
        T::zero(),
        T::one(),
        tol.quad_tol,
        1024,
    )?
    .value[0];
    let pi1 = solve_closed_form(&sys, T::zero(), pi0, T::one(), tol)?;
    Ok(running + (pi0 * &bd.sigma0).trace() - (pi1 * &bd.sigma1).trace())
}
