//! Dormand–Prince 5(4) with FSAL and max-norm error control.
//!
//! Integration may run backward (`t_end < t0`). Requested output times are
//! hit exactly by clamping the step; no dense output is used.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// 5th order weights minus the embedded 4th order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions<T> {
    pub rtol: T,
    pub atol: T,
    pub initial_step: Option<T>,
    pub max_steps: usize,
}

impl<T: Scalar> OdeOptions<T> {
    pub fn new(rtol: T, atol: T) -> Self {
        Self {
            rtol,
            atol,
            initial_step: None,
            max_steps: 1_000_000,
        }
    }
}

/// Returned by the step monitor after every accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct OdeSolution<T: Scalar> {
    /// The requested output times that were reached.
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
    /// Last time reached; differs from the final output time only when the
    /// monitor stopped the integration.
    pub t_last: T,
    pub y_last: DVector<T>,
    pub stopped: bool,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

fn error_norm<T: Scalar>(err: &DVector<T>, y0: &DVector<T>, y1: &DVector<T>, rtol: T, atol: T) -> T {
    let mut e = T::zero();
    for i in 0..err.len() {
        let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
        e = e.max(err[i].abs() / sc);
    }
    e
}

/// Integrates `y' = f(t, y)` from `t0` through the monotone list `outputs`.
/// `monitor` sees every accepted step and may stop the run early.
pub fn integrate<T, F, M>(
    mut f: F,
    t0: T,
    y0: DVector<T>,
    outputs: &[T],
    opts: &OdeOptions<T>,
    mut monitor: M,
) -> Result<OdeSolution<T>>
where
    T: Scalar,
    F: FnMut(T, &DVector<T>) -> DVector<T>,
    M: FnMut(T, &DVector<T>) -> Control,
{
    let mut sol = OdeSolution {
        times: Vec::with_capacity(outputs.len()),
        states: Vec::with_capacity(outputs.len()),
        t_last: t0,
        y_last: y0.clone(),
        stopped: false,
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let Some(&t_final) = outputs.last() else {
        return Ok(sol);
    };
    let dir = if t_final >= t0 { T::one() } else { -T::one() };
    let span = (t_final - t0).abs();

    let mut t = t0;
    let mut y = y0;
    let mut k0 = f(t, &y);
    let mut h = opts
        .initial_step
        .unwrap_or_else(|| initial_step(&y, &k0, span, opts));

    let eps = T::default_epsilon();
    let c: [T; 7] = C.map(lit);
    let e: [T; 7] = E.map(lit);
    let a: [[T; 6]; 7] = A.map(|row| row.map(lit));

    let mut steps = 0usize;
    for &target in outputs {
        if (target - t) * dir < T::zero() {
            return Err(Error::InvalidArgument(
                "ODE output times must be monotone".into(),
            ));
        }
        while (target - t) * dir > T::zero() {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::IntegrationFailure { t: t.as_f64() });
            }
            let remaining = (target - t).abs();
            let mut hs = h.min(remaining);
            // absorb a sliver instead of taking a tiny final step
            if remaining - hs <= lit::<T>(1e-3) * hs {
                hs = remaining;
            }
            let h_min = lit::<T>(16.0) * eps * t.abs().max(T::one());
            if hs < h_min && hs < remaining {
                return Err(Error::IntegrationFailure { t: t.as_f64() });
            }
            let hd = hs * dir;

            let mut k: Vec<DVector<T>> = Vec::with_capacity(7);
            k.push(k0.clone());
            for s in 1..7 {
                let mut ys = y.clone();
                for (j, kj) in k.iter().enumerate().take(s) {
                    if a[s][j] != T::zero() {
                        ys.axpy(hd * a[s][j], kj, T::one());
                    }
                }
                if s == 6 {
                    // the last stage is evaluated at the propagated solution
                    let t_new = if hs == remaining { target } else { t + hd };
                    let kk = f(t_new, &ys);
                    k.push(kk);
                    let mut err = DVector::zeros(y.len());
                    for (j, kj) in k.iter().enumerate() {
                        if e[j] != T::zero() {
                            err.axpy(hd * e[j], kj, T::one());
                        }
                    }
                    let en = error_norm(&err, &y, &ys, opts.rtol, opts.atol);
                    let finite = ys.iter().all(|v| v.is_finite());
                    if finite && en <= T::one() {
                        t = t_new;
                        y = ys;
                        k0 = k.pop().unwrap();
                        sol.accepted_steps += 1;
                        let fac = if en == T::zero() {
                            lit(5.0)
                        } else {
                            (lit::<T>(0.9) * en.powf(lit(-0.2))).clamp(lit(0.2), lit(5.0))
                        };
                        // keep the pre-clamp step so output times do not shrink it
                        h = h.max(hs) * fac;
                        if monitor(t, &y) == Control::Stop {
                            sol.t_last = t;
                            sol.y_last = y;
                            sol.stopped = true;
                            return Ok(sol);
                        }
                    } else {
                        sol.rejected_steps += 1;
                        let fac = if finite {
                            (lit::<T>(0.9) * en.powf(lit(-0.2))).clamp(lit(0.1), lit(0.9))
                        } else {
                            lit(0.1)
                        };
                        h = hs * fac;
                        if h < h_min {
                            return Err(Error::IntegrationFailure { t: t.as_f64() });
                        }
                    }
                    break;
                }
                let ks = f(t + hd * c[s], &ys);
                k.push(ks);
            }
        }
        sol.times.push(target);
        sol.states.push(y.clone());
    }
    sol.t_last = t;
    sol.y_last = y;
    Ok(sol)
}

fn initial_step<T: Scalar>(y: &DVector<T>, f0: &DVector<T>, span: T, opts: &OdeOptions<T>) -> T {
    let sc = |v: T| opts.atol + opts.rtol * v.abs();
    let d0 = y.iter().fold(T::zero(), |m, v| m.max(v.abs() / sc(*v)));
    let d1 = f0
        .iter()
        .zip(y.iter())
        .fold(T::zero(), |m, (fv, yv)| m.max(fv.abs() / sc(*yv)));
    let h = if d0 < lit(1e-5) || d1 < lit(1e-5) {
        lit(1e-4)
    } else {
        lit::<T>(0.01) * d0 / d1
    };
    h.min(span).max(span * lit(1e-8)).max(T::default_epsilon())
}

/// Integrates from `t0` to `t1` and returns the end state.
pub fn integrate_to<T, F>(f: F, t0: T, t1: T, y0: DVector<T>, opts: &OdeOptions<T>) -> Result<DVector<T>>
where
    T: Scalar,
    F: FnMut(T, &DVector<T>) -> DVector<T>,
{
    if t0 == t1 {
        return Ok(y0);
    }
    let sol = integrate(f, t0, y0, &[t1], opts, |_, _| Control::Continue)?;
    Ok(sol.y_last)
}

/// Column-major flattening, the layout used for matrix-valued states.
pub fn pack<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unpack<T: Scalar>(v: &[T], rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_column_slice(rows, cols, v)
}
