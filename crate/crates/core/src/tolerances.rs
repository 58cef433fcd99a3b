use crate::scalar::{lit, Scalar};

/// Numerical knobs shared by the solver modules.
///
/// The defaults are tuned for `f64`; for lower precision scalars the
/// integration and quadrature tolerances are floored at a small multiple of
/// machine epsilon so the adaptive loops still terminate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    pub ode_rtol: T,
    pub ode_atol: T,
    /// Absolute tolerance of the adaptive Gauss–Kronrod quadrature.
    pub quad_tol: T,
    /// Condition estimate above which an inversion is reported singular.
    pub max_condition: T,
    pub validation_grid: usize,
    pub pd_threshold: T,
    pub psd_threshold: T,
    pub bisection_tol: T,
    pub blowup_norm: T,
    pub newton_tol: T,
    pub newton_max_iter: usize,
    pub newton_max_halvings: usize,
    pub admissibility_margin: T,
    pub homotopy_steps: usize,
    pub rank_tol: T,
    pub probes_per_subinterval: usize,
}

impl<T: Scalar> Default for Tolerances<T> {
    fn default() -> Self {
        let eps = T::default_epsilon();
        let floor = |x: f64, k: f64| lit::<T>(x).max(eps * lit::<T>(k));
        Self {
            ode_rtol: floor(1e-10, 100.0),
            ode_atol: floor(1e-13, 10.0),
            quad_tol: floor(1e-10, 100.0),
            max_condition: lit::<T>(1e12).min(lit::<T>(0.01) / eps),
            validation_grid: 101,
            pd_threshold: lit(1e-12),
            psd_threshold: floor(1e-10, 10.0),
            bisection_tol: floor(1e-6, 100.0),
            blowup_norm: lit(1e12),
            newton_tol: floor(1e-8, 1000.0),
            newton_max_iter: 30,
            newton_max_halvings: 40,
            admissibility_margin: floor(1e-9, 100.0),
            homotopy_steps: 10,
            rank_tol: floor(1e-10, 100.0),
            probes_per_subinterval: 10,
        }
    }
}

impl<T: Scalar> Tolerances<T> {
    /// Same defaults with a tighter integrator, used by oracles in tests.
    pub fn with_ode(mut self, rtol: T, atol: T) -> Self {
        self.ode_rtol = rtol;
        self.ode_atol = atol;
        self
    }
}
