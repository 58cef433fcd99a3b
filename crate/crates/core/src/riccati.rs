//! Existence, closed-form evaluation, maximal interval and direct integration
//! of the matrix Riccati equation
//! `Π' = −ĀᵀΠ − ΠĀ + ΠGΠ − Q − 2Σ νᵢ EᵢᵀΠEᵢ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, min_eigenvalue, solve_checked_scaled, symmetrize};
use crate::ode::{integrate, pack, unpack, Control};
use crate::scalar::{from_usize, lit, Scalar};
use crate::system::{grid_times, SystemSpec};
use crate::tolerances::Tolerances;
use crate::transition::{ode_options, transition_blocks, TransitionBlocks};

/// One side of the bound on `Π(t)`; the infinite markers stand for the
/// limits at the ends of the horizon.
#[derive(Debug, Clone, PartialEq)]
pub enum Bound<T: Scalar> {
    NegInfinity,
    Finite(DMatrix<T>),
    PosInfinity,
}

impl<T: Scalar> Bound<T> {
    pub fn finite(&self) -> Option<&DMatrix<T>> {
        match self {
            Bound::Finite(m) => Some(m),
            _ => None,
        }
    }
}

/// `lower(t) = −Φ12(0,t)⁻¹Φ11(0,t)` and `upper(t) = −Φ12(1,t)⁻¹Φ11(1,t)`.
pub fn pi_bounds<T: Scalar>(
    sys: &SystemSpec<T>,
    t: T,
    tol: &Tolerances<T>,
) -> Result<(Bound<T>, Bound<T>)> {
    let side = |end: T| -> Result<Bound<T>> {
        let b = transition_blocks(sys, end, t, tol)?;
        b.neg_inv12_11(tol.max_condition).map(Bound::Finite).map_err(|e| match e {
            Error::Singular { condition, .. } => Error::Singular {
                what: format!(
                    "Phi12({}, {}) (system not totally controllable?)",
                    end.as_f64(),
                    t.as_f64()
                ),
                condition,
            },
            other => other,
        })
    };
    let lower = if t <= T::zero() { Bound::NegInfinity } else { side(T::zero())? };
    let upper = if t >= T::one() { Bound::PosInfinity } else { side(T::one())? };
    Ok((lower, upper))
}

/// Existence verdict with the eigenvalue margins `λ_min(upper − Π_s)` and
/// `λ_min(Π_s − lower)`; both are positive when the anchor is admissible.
#[derive(Debug, Clone, PartialEq)]
pub struct ExistenceVerdict<T> {
    pub exists: bool,
    pub upper_margin: Option<T>,
    pub lower_margin: Option<T>,
}

pub fn existence_check<T: Scalar>(
    sys: &SystemSpec<T>,
    s: T,
    pi_s: &DMatrix<T>,
    tol: &Tolerances<T>,
) -> Result<ExistenceVerdict<T>> {
    let (lower, upper) = pi_bounds(sys, s, tol)?;
    let upper_margin = upper.finite().map(|u| min_eigenvalue(&symmetrize(&(u - pi_s))));
    let lower_margin = lower.finite().map(|l| min_eigenvalue(&symmetrize(&(pi_s - l))));
    let ok = |m: Option<T>| m.is_none_or(|v| v > T::zero());
    Ok(ExistenceVerdict {
        exists: ok(upper_margin) && ok(lower_margin),
        upper_margin,
        lower_margin,
    })
}

/// `Π(t) = (Φ21 + Φ22Π_s)(Φ11 + Φ12Π_s)⁻¹` from a precomputed `Φ(t, s)`.
pub fn closed_form_from_blocks<T: Scalar>(
    b: &TransitionBlocks<T>,
    pi_s: &DMatrix<T>,
    tol: &Tolerances<T>,
) -> Result<DMatrix<T>> {
    let num = &b.phi21 + &b.phi22 * pi_s;
    let den = b.phi_pi(pi_s);
    // X den = num  ⇔  denᵀ Xᵀ = numᵀ
    let scale = max_abs(&b.phi11) + max_abs(&b.phi12) * max_abs(pi_s);
    let x = solve_checked_scaled(&den.transpose(), &num.transpose(), scale, tol.max_condition, "Phi11 + Phi12 Pi")
        .map_err(|e| match e {
            Error::Singular { condition, .. } => Error::RiccatiNonexistence(format!(
                "Phi11 + Phi12 Pi is singular between t={} and t={} (condition estimate {condition:e})",
                b.s.as_f64(),
                b.t.as_f64()
            )),
            other => other,
        })?;
    Ok(symmetrize(&x.transpose()))
}

pub fn solve_closed_form<T: Scalar>(
    sys: &SystemSpec<T>,
    s: T,
    pi_s: &DMatrix<T>,
    t: T,
    tol: &Tolerances<T>,
) -> Result<DMatrix<T>> {
    if s == t {
        return Ok(pi_s.clone());
    }
    closed_form_from_blocks(&transition_blocks(sys, t, s, tol)?, pi_s, tol)
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution<T: Scalar> {
    pub anchor_time: T,
    pub anchor_value: DMatrix<T>,
    pub grid: Vec<(T, DMatrix<T>)>,
    pub exists: bool,
    pub escape_time: Option<T>,
    /// `(t, lower, upper)` per grid time; empty for general channels, where
    /// no bound is available.
    pub bounds: Vec<(T, Bound<T>, Bound<T>)>,
}

/// Closed-form solution on a uniform grid over `[0, 1]`, with the bounds.
pub fn solve_on_grid<T: Scalar>(
    sys: &SystemSpec<T>,
    s: T,
    pi_s: &DMatrix<T>,
    grid_size: usize,
    tol: &Tolerances<T>,
) -> Result<RiccatiSolution<T>> {
    let mut grid = Vec::with_capacity(grid_size);
    let mut bounds = Vec::with_capacity(grid_size);
    let mut exists = true;
    let mut escape_time = None;
    for t in grid_times::<T>(grid_size) {
        match solve_closed_form(sys, s, pi_s, t, tol) {
            Ok(p) => grid.push((t, p)),
            Err(Error::RiccatiNonexistence(_)) => {
                exists = false;
                escape_time.get_or_insert(t);
                continue;
            }
            Err(e) => return Err(e),
        }
        let (lo, hi) = pi_bounds(sys, t, tol)?;
        bounds.push((t, lo, hi));
    }
    Ok(RiccatiSolution {
        anchor_time: s,
        anchor_value: pi_s.clone(),
        grid,
        exists,
        escape_time,
        bounds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaximalInterval<T> {
    pub t0: T,
    pub t1: T,
    /// The solution survives past the corresponding end of the search window.
    pub t0_window_exceeded: bool,
    pub t1_window_exceeded: bool,
}

/// Margin of `Π_s` against `−Φ12(t,s)⁻¹Φ11(t,s)`, signed so that it is
/// positive while the solution still exists between `s` and `t`.
fn interval_margin<T: Scalar>(
    sys: &SystemSpec<T>,
    s: T,
    pi_s: &DMatrix<T>,
    t: T,
    tol: &Tolerances<T>,
) -> Result<T> {
    let x = transition_blocks(sys, t, s, tol)?.neg_inv12_11(tol.max_condition)?;
    let d = if t > s { x - pi_s } else { pi_s - x };
    Ok(min_eigenvalue(&symmetrize(&d)))
}

fn search_end<T: Scalar>(
    sys: &SystemSpec<T>,
    s: T,
    pi_s: &DMatrix<T>,
    end: T,
    tol: &Tolerances<T>,
) -> Result<(T, bool)> {
    if end == s {
        return Ok((s, true));
    }
    let margin = |t: T| match interval_margin(sys, s, pi_s, t, tol) {
        // at a singular Φ12 the margin has no sign; treat as crossed
        Err(Error::Singular { .. }) => Ok(-T::one()),
        r => r,
    };
    // bracket: margin(inside) > 0 (at s itself it is +∞), margin(outside) ≤ 0
    let scan: usize = 64;
    let mut inside = s;
    let mut outside = None;
    for k in 1..=scan {
        let t = s + (end - s) * from_usize::<T>(k) / from_usize::<T>(scan);
        if margin(t)? <= T::zero() {
            outside = Some(t);
            break;
        }
        inside = t;
    }
    let Some(mut outside) = outside else {
        return Ok((end, true));
    };
    while (outside - inside).abs() > tol.bisection_tol {
        let mid = (inside + outside) * lit::<T>(0.5);
        if margin(mid)? > T::zero() {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(((inside + outside) * lit::<T>(0.5), false))
}

/// Ends of the maximal interval of existence through `(s, Π_s)`, located by
/// bisection inside `window`.
pub fn maximal_interval<T: Scalar>(
    sys: &SystemSpec<T>,
    s: T,
    pi_s: &DMatrix<T>,
    window: (T, T),
    tol: &Tolerances<T>,
) -> Result<MaximalInterval<T>> {
    let (tmin, tmax) = window;
    if !(tmin <= s && s <= tmax) {
        return Err(Error::InvalidArgument(format!(
            "anchor time {} outside search window",
            s.as_f64()
        )));
    }
    let (t1, t1_window_exceeded) = search_end(sys, s, pi_s, tmax, tol)?;
    let (t0, t0_window_exceeded) = search_end(sys, s, pi_s, tmin, tol)?;
    Ok(MaximalInterval {
        t0,
        t1,
        t0_window_exceeded,
        t1_window_exceeded,
    })
}

/// Forward integration from `t = 0` including every general channel.
/// Blow-up is reported through `exists = false` and `escape_time`.
pub fn integrate_general<T: Scalar>(
    sys: &SystemSpec<T>,
    pi0: &DMatrix<T>,
    grid_size: usize,
    tol: &Tolerances<T>,
) -> Result<RiccatiSolution<T>> {
    let n = sys.n;
    sys.normalized_at(T::zero())?;
    let rhs = |t: T, y: &DVector<T>| -> DVector<T> {
        let p = symmetrize(&unpack(y.as_slice(), n, n));
        let c = match sys.normalized_at(t) {
            Ok(c) => c,
            Err(_) => return DVector::from_element(y.len(), lit::<T>(f64::NAN)),
        };
        let at_p = c.a.transpose() * &p;
        let mut d = -&at_p - at_p.transpose() + &p * &c.g * &p - &c.q;
        for ch in &sys.general_channels {
            let e = ch.e.evaluate(t, 0);
            d -= (e.transpose() * &p * &e) * (lit::<T>(2.0) * ch.nu.scalar_at(t));
        }
        pack(&d)
    };
    let times: Vec<T> = grid_times::<T>(grid_size).collect();
    let blowup = tol.blowup_norm;
    let result = integrate(
        rhs,
        T::zero(),
        pack(&symmetrize(pi0)),
        &times[1..],
        &ode_options(tol),
        |_, y| {
            if max_abs(&unpack(y.as_slice(), n, n)) > blowup {
                Control::Stop
            } else {
                Control::Continue
            }
        },
    );
    let mut grid = vec![(T::zero(), symmetrize(pi0))];
    let (exists, escape_time) = match result {
        Ok(sol) => {
            for (t, y) in sol.times.iter().zip(&sol.states) {
                grid.push((*t, symmetrize(&unpack(y.as_slice(), n, n))));
            }
            if sol.stopped {
                (false, Some(sol.t_last))
            } else {
                (true, None)
            }
        }
        Err(Error::IntegrationFailure { t }) => (false, Some(lit(t))),
        Err(e) => return Err(e),
    };
    Ok(RiccatiSolution {
        anchor_time: T::zero(),
        anchor_value: symmetrize(pi0),
        grid,
        exists,
        escape_time,
        bounds: Vec::new(),
    })
}
