use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::matfun::Poly;
use crate::quad;
use crate::scalar::{from_usize, lit, Scalar};

/// A positive weight, evaluated as a Taylor jet of the requested order.
pub type Weight<T> = Arc<dyn Fn(T, usize) -> Jet<T> + Send + Sync>;

type Floor<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

const FLOOR_GRID: usize = 1000;

/// Find `u` with `u⁽ⁱ⁾(0) = α_i`, `u⁽ⁱ⁾(1) = β_i` for `i ≤ H`,
/// `∫₀¹ f u = γ` and `∫₀ᵗ f u > ρ(t)`.
#[derive(Clone)]
pub struct ScalarSteeringProblem<T> {
    pub f: Weight<T>,
    pub gamma: T,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    pub rho: Floor<T>,
}

impl<T: Scalar> ScalarSteeringProblem<T> {
    pub fn new(
        f: Weight<T>,
        gamma: T,
        alpha: Vec<T>,
        beta: Vec<T>,
        rho: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            f,
            gamma,
            alpha,
            beta,
            rho: Arc::new(rho),
        }
    }

    pub fn constant_weight(c: T) -> Weight<T> {
        Arc::new(move |_, order| Jet::constant(c, order))
    }

    pub fn h(&self) -> usize {
        self.alpha.len().saturating_sub(1)
    }
}

impl<T: Scalar> fmt::Debug for ScalarSteeringProblem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarSteeringProblem")
            .field("gamma", &self.gamma)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

/// Running integral of a scalar function, tabulated on a uniform grid and
/// completed by quadrature between nodes.
#[derive(Clone)]
pub(crate) struct Running<T> {
    g: Arc<dyn Fn(T) -> T + Send + Sync>,
    values: Vec<T>,
    tol: T,
}

impl<T: Scalar> Running<T> {
    pub(crate) fn new(g: Arc<dyn Fn(T) -> T + Send + Sync>, tol: T) -> Result<Self> {
        let grid = uniform(FLOOR_GRID);
        let values = quad::cumulative(|t| Ok(DVector::from_element(1, g(t))), &grid, tol)?
            .into_iter()
            .map(|v| v[0])
            .collect();
        Ok(Self { g, values, tol })
    }

    pub(crate) fn table(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn at(&self, t: T) -> T {
        let m = from_usize::<T>(FLOOR_GRID);
        let pos = (t * m).floor().max(T::zero()).min(m - T::one());
        let k = pos.as_f64() as usize;
        let tk = from_usize::<T>(k) / m;
        if t == tk {
            return self.values[k];
        }
        let g = &self.g;
        self.values[k] + quad::integrate_scalar(|s| g(s), tk, t, self.tol / m).unwrap_or_else(|_| T::zero())
    }
}

pub(crate) fn uniform<T: Scalar>(intervals: usize) -> Vec<T> {
    (0..=intervals)
        .map(|k| from_usize::<T>(k) / from_usize::<T>(intervals))
        .collect()
}

/// `e^{−1/(t(1−t))}`, zero outside the open unit interval.
fn bump<T: Scalar>(t: T) -> T {
    if t <= T::zero() || t >= T::one() {
        T::zero()
    } else {
        (-T::one() / (t * (T::one() - t))).exp()
    }
}

fn binomial<T: Scalar>(n: usize, k: usize) -> T {
    if k > n {
        return T::zero();
    }
    (0..k).fold(T::one(), |acc, i| acc * from_usize::<T>(n - i) / from_usize::<T>(i + 1))
}

fn factorial<T: Scalar>(n: usize) -> T {
    (1..=n).fold(T::one(), |acc, i| acc * from_usize::<T>(i))
}

/// `u = a + b + c + d`: `a` matches the data at 0, `b = t^{H+1} Σ b_i (1−t)^i`
/// the data at 1, `c = c_0 t^{H+1}(1−t)^{H+1}` the integral, and the bump
/// `d = d_0 (1−2t) e^{−1/(t(1−t))} / (t²(1−t)² f)` lifts the running
/// integral without touching the endpoints.
#[derive(Clone)]
pub struct ScalarSteering<T: Scalar> {
    pub h: usize,
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub c0: T,
    pub d0: T,
    /// `a + b + c` in the monomial basis.
    pub poly: Poly<T>,
    /// `|∫₀¹ f u − γ|`
    pub integral_residual: T,
    /// `min_t ∫₀ᵗ f u − ρ(t)` over the check grid.
    pub floor_margin: T,
    f: Weight<T>,
    running: Running<T>,
}

impl<T: Scalar> fmt::Debug for ScalarSteering<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarSteering")
            .field("h", &self.h)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("c0", &self.c0)
            .field("d0", &self.d0)
            .field("integral_residual", &self.integral_residual)
            .field("floor_margin", &self.floor_margin)
            .finish()
    }
}

impl<T: Scalar> ScalarSteering<T> {
    pub fn value(&self, t: T) -> T {
        self.jet(t, 0).value()
    }

    pub fn jet(&self, t: T, order: usize) -> Jet<T> {
        let p = Jet::of_poly(&self.poly, t, order);
        if self.d0 == T::zero() || t <= T::zero() || t >= T::one() {
            return p;
        }
        let one = Jet::constant(T::one(), order);
        let tau = Jet::variable(t, order);
        let w = &tau * &(&one - &tau);
        let e = w.recip().scale(-T::one()).exp();
        let lin = &one - &tau.scale(lit(2.0));
        let d = (&lin * &e).div(&(&(&w * &w) * &(self.f)(t, order))).scale(self.d0);
        &p + &d
    }

    /// `∫₀ᵗ f u`, with the bump part in closed form.
    pub fn integral_to(&self, t: T) -> T {
        self.running.at(t) + self.d0 * bump(t)
    }
}

/// Constructs `u`; `d_0` is the smallest of `0, 10⁻³, 2·10⁻³, …` that keeps
/// `∫₀ᵗ f u > ρ(t)` on 1001 equispaced points, capped at `10⁶`.
pub fn scalar_steering_u<T: Scalar>(prob: &ScalarSteeringProblem<T>) -> Result<ScalarSteering<T>> {
    if prob.alpha.len() != prob.beta.len() || prob.alpha.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "boundary data lengths {} and {}",
            prob.alpha.len(),
            prob.beta.len()
        )));
    }
    let h = prob.h();
    let rho0 = (prob.rho)(T::zero());
    let rho1 = (prob.rho)(T::one());
    if !(rho0 < T::zero() && rho1 < prob.gamma) {
        return Err(Error::Infeasible(format!(
            "floor hypotheses fail: rho(0) = {}, rho(1) = {}, gamma = {}",
            rho0.as_f64(),
            rho1.as_f64(),
            prob.gamma.as_f64()
        )));
    }

    let a: Vec<T> = prob
        .alpha
        .iter()
        .enumerate()
        .map(|(i, x)| *x / factorial::<T>(i))
        .collect();
    let a_poly = Poly::new(a.clone());

    // In s = 1 − t, b = (1−s)^{H+1} Σ b_j s^j and d^i/dt^i = (−1)^i d^i/ds^i.
    let mut b: Vec<T> = Vec::with_capacity(h + 1);
    for i in 0..=h {
        let delta = prob.beta[i] - a_poly.eval(T::one(), i);
        let sign = if i % 2 == 0 { T::one() } else { -T::one() };
        let mut bi = sign * delta / factorial::<T>(i);
        for (j, bj) in b.iter().enumerate() {
            let sgn = if (i - j) % 2 == 0 { T::one() } else { -T::one() };
            bi -= *bj * binomial::<T>(h + 1, i - j) * sgn;
        }
        b.push(bi);
    }
    let t_pow = Poly::new({
        let mut c = vec![T::zero(); h + 2];
        c[h + 1] = T::one();
        c
    });
    let one_minus_t = Poly::new(vec![T::one(), -T::one()]);
    let mut b_poly = Poly::zero();
    let mut s_pow = Poly::constant(T::one());
    for bj in &b {
        b_poly = &b_poly + &s_pow.scale(*bj);
        s_pow = &s_pow * &one_minus_t;
    }
    let b_poly = &t_pow * &b_poly;
    let mut shape = t_pow.clone();
    for _ in 0..=h {
        shape = &shape * &one_minus_t;
    }

    let fv = |t: T| (prob.f)(t, 0).value();
    let ab = &a_poly + &b_poly;
    let tol = lit::<T>(1e-14).max(T::default_epsilon() * lit(16.0));
    let r = quad::integrate(
        |t| {
            let w = fv(t);
            Ok(DVector::from_vec(vec![w * ab.eval(t, 0), w * shape.eval(t, 0)]))
        },
        T::zero(),
        T::one(),
        tol,
        2048,
    )?;
    if r.value[1] <= T::zero() {
        return Err(Error::Infeasible("weight is not positive".into()));
    }
    let c0 = (prob.gamma - r.value[0]) / r.value[1];
    let poly = &ab + &shape.scale(c0);

    let pf = poly.clone();
    let f = prob.f.clone();
    let running = Running::new(Arc::new(move |t| f(t, 0).value() * pf.eval(t, 0)), tol)?;

    let grid: Vec<T> = uniform(FLOOR_GRID);
    let rho: Vec<T> = grid.iter().map(|t| (prob.rho)(*t)).collect();
    let margin = |d0: T| {
        grid.iter()
            .zip(running.table())
            .zip(&rho)
            .map(|((t, v), r)| *v + d0 * bump(*t) - *r)
            .fold(T::max_value().unwrap(), |m, x| m.min(x))
    };
    let mut d0 = T::zero();
    if margin(d0) <= T::zero() {
        d0 = lit(1e-3);
        while margin(d0) <= T::zero() {
            d0 *= lit(2.0);
            if d0 > lit(1e6) {
                return Err(Error::Infeasible(
                    "no bump amplitude up to 1e6 clears the floor".into(),
                ));
            }
        }
    }
    let floor_margin = margin(d0);

    let mut out = ScalarSteering {
        h,
        a,
        b,
        c0,
        d0,
        poly,
        integral_residual: T::zero(),
        floor_margin,
        f: prob.f.clone(),
        running,
    };
    // independent check of the integral, bump included
    let total = quad::integrate_scalar(|t| fv(t) * out.value(t), T::zero(), T::one(), tol)?;
    out.integral_residual = (total - prob.gamma).abs();
    Ok(out)
}
