//! Globally adaptive Gauss–Kronrod (7, 15) quadrature for vector integrands.

use nalgebra::DVector;

use crate::error::Result;
use crate::scalar::{lit, Scalar};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights at the odd Kronrod nodes (indices 1, 3, 5, 7)
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone)]
pub struct QuadResult<T: Scalar> {
    pub value: DVector<T>,
    /// Estimated absolute error (max norm over components).
    pub error: T,
    /// Every abscissa at which the integrand was evaluated, ascending.
    pub nodes: Vec<T>,
    pub intervals: usize,
}

struct Panel<T: Scalar> {
    a: T,
    b: T,
    value: DVector<T>,
    error: T,
}

fn gk15<T, F>(f: &mut F, a: T, b: T, nodes: &mut Vec<T>) -> Result<Panel<T>>
where
    T: Scalar,
    F: FnMut(T) -> Result<DVector<T>>,
{
    let half = (b - a) * lit::<T>(0.5);
    let mid = (a + b) * lit::<T>(0.5);
    let fc = f(mid)?;
    nodes.push(mid);
    let mut kron = &fc * lit::<T>(WGK[7]);
    let mut gauss = &fc * lit::<T>(WG[3]);
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * lit::<T>(x);
        let (t1, t2) = (mid - dx, mid + dx);
        let f1 = f(t1)?;
        let f2 = f(t2)?;
        nodes.push(t1);
        nodes.push(t2);
        let s = f1 + f2;
        kron.axpy(lit(w), &s, T::one());
        if j % 2 == 1 {
            gauss.axpy(lit(WG[j / 2]), &s, T::one());
        }
    }
    kron *= half;
    gauss *= half;
    let error = (&kron - &gauss).amax();
    Ok(Panel {
        a,
        b,
        value: kron,
        error,
    })
}

/// Integrates `f` over `[a, b]` until the summed error estimate is below
/// `abs_tol` or `max_intervals` panels are in use.
pub fn integrate<T, F>(mut f: F, a: T, b: T, abs_tol: T, max_intervals: usize) -> Result<QuadResult<T>>
where
    T: Scalar,
    F: FnMut(T) -> Result<DVector<T>>,
{
    let mut nodes = Vec::new();
    let mut panels = vec![gk15(&mut f, a, b, &mut nodes)?];
    loop {
        let total: T = panels.iter().fold(T::zero(), |s, p| s + p.error);
        if total <= abs_tol || panels.len() >= max_intervals {
            break;
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, -T::one()), |(bi, be), (i, p)| {
                if p.error > be {
                    (i, p.error)
                } else {
                    (bi, be)
                }
            });
        let p = panels.swap_remove(worst);
        let m = (p.a + p.b) * lit::<T>(0.5);
        if m <= p.a || m >= p.b {
            panels.push(p);
            break;
        }
        panels.push(gk15(&mut f, p.a, m, &mut nodes)?);
        panels.push(gk15(&mut f, m, p.b, &mut nodes)?);
    }
    panels.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap());
    let mut value = DVector::zeros(panels[0].value.len());
    let mut error = T::zero();
    for p in &panels {
        value += &p.value;
        error += p.error;
    }
    nodes.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(QuadResult {
        value,
        error,
        nodes,
        intervals: panels.len(),
    })
}

/// Scalar convenience wrapper.
pub fn integrate_scalar<T, F>(mut f: F, a: T, b: T, abs_tol: T) -> Result<T>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    let r = integrate(|t| Ok(DVector::from_element(1, f(t))), a, b, abs_tol, 4096)?;
    Ok(r.value[0])
}

/// Running integrals `∫_{grid[0]}^{grid[k]} f` for every grid point, each
/// panel integrated adaptively.
pub fn cumulative<T, F>(mut f: F, grid: &[T], abs_tol: T) -> Result<Vec<DVector<T>>>
where
    T: Scalar,
    F: FnMut(T) -> Result<DVector<T>>,
{
    let mut out = Vec::with_capacity(grid.len());
    if grid.is_empty() {
        return Ok(out);
    }
    let dim = f(grid[0])?.len();
    let mut acc = DVector::zeros(dim);
    out.push(acc.clone());
    let panels = (grid.len() - 1).max(1);
    let tol = abs_tol / lit::<T>(panels as f64);
    for w in grid.windows(2) {
        let r = integrate(&mut f, w[0], w[1], tol, 256)?;
        acc += r.value;
        out.push(acc.clone());
    }
    Ok(out)
}
