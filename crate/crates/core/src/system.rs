//! Problem instances: the linear stochastic system, its boundary covariances,
//! and grid validation of the standing assumptions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, inv_sqrt_pd, max_abs, min_eigenvalue};
use crate::matfun::MatrixPoly;
use crate::scalar::{from_usize, lit, Scalar};
use crate::tolerances::Tolerances;

/// A multiplicative channel `E_i(t) dμ_i(t) x(t)` with intensity `ν_i(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralChannel<T> {
    pub e: MatrixPoly<T>,
    pub nu: MatrixPoly<T>,
}

/// `dx = A x dt + B u dt + C dm + x dμ` on the horizon `[0, 1]`, with the
/// quadratic cost weights `Q`, `R`. `nu` is the intensity of the identity
/// multiplicative channel; further channels with arbitrary `E_i` go in
/// `general_channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec<T> {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub a: MatrixPoly<T>,
    pub b: MatrixPoly<T>,
    pub c: MatrixPoly<T>,
    pub d: MatrixPoly<T>,
    pub nu: MatrixPoly<T>,
    pub q_weight: MatrixPoly<T>,
    pub r: MatrixPoly<T>,
    pub general_channels: Vec<GeneralChannel<T>>,
}

/// Coefficients of the reduced problem at one time: `A + νI`, `B R^{-1} Bᵀ`,
/// `Q` and `C D Cᵀ`.
#[derive(Debug, Clone)]
pub struct NormalizedCoeffs<T: Scalar> {
    pub a: DMatrix<T>,
    pub g: DMatrix<T>,
    pub q: DMatrix<T>,
    pub noise: DMatrix<T>,
}

impl<T: Scalar> SystemSpec<T> {
    /// Infers `(n, p, q)` from `A`, `B`, `C`; call [`validate_system`] to
    /// check the remaining shapes.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: MatrixPoly<T>,
        b: MatrixPoly<T>,
        c: MatrixPoly<T>,
        d: MatrixPoly<T>,
        nu: MatrixPoly<T>,
        q_weight: MatrixPoly<T>,
        r: MatrixPoly<T>,
    ) -> Self {
        Self {
            n: a.rows(),
            p: b.cols(),
            q: c.cols(),
            a,
            b,
            c,
            d,
            nu,
            q_weight,
            r,
            general_channels: Vec::new(),
        }
    }

    /// Time-invariant system from constant matrices.
    pub fn constant(
        a: &DMatrix<T>,
        b: &DMatrix<T>,
        c: &DMatrix<T>,
        d: &DMatrix<T>,
        nu: T,
        q_weight: &DMatrix<T>,
        r: &DMatrix<T>,
    ) -> Self {
        Self::new(
            MatrixPoly::constant(a),
            MatrixPoly::constant(b),
            MatrixPoly::constant(c),
            MatrixPoly::constant(d),
            MatrixPoly::constant(&DMatrix::from_element(1, 1, nu)),
            MatrixPoly::constant(q_weight),
            MatrixPoly::constant(r),
        )
    }

    pub fn with_channels(mut self, channels: Vec<GeneralChannel<T>>) -> Self {
        self.general_channels = channels;
        self
    }

    pub fn nu_at(&self, t: T) -> T {
        self.nu.scalar_at(t)
    }

    /// `C(t) D(t) C(t)ᵀ`
    pub fn noise_at(&self, t: T) -> DMatrix<T> {
        let c = self.c.evaluate(t, 0);
        &c * self.d.evaluate(t, 0) * c.transpose()
    }

    pub fn r_inv_at(&self, t: T) -> Result<DMatrix<T>> {
        let r = self.r.evaluate(t, 0);
        r.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| {
            Error::Precondition(format!("R not positive definite at t={}", t.as_f64()))
        })
    }

    /// `B(t) R(t)^{-1/2}`
    pub fn b_normalized_at(&self, t: T) -> Result<DMatrix<T>> {
        let r_isqrt = inv_sqrt_pd(&self.r.evaluate(t, 0)).map_err(|_| {
            Error::Precondition(format!("R not positive definite at t={}", t.as_f64()))
        })?;
        Ok(self.b.evaluate(t, 0) * r_isqrt)
    }

    /// Coefficients after the substitution `A ← A + νI`, `B ← B R^{-1/2}`.
    pub fn normalized_at(&self, t: T) -> Result<NormalizedCoeffs<T>> {
        let mut a = self.a.evaluate(t, 0);
        let nu = self.nu_at(t);
        for i in 0..self.n {
            a[(i, i)] += nu;
        }
        let bn = self.b_normalized_at(t)?;
        Ok(NormalizedCoeffs {
            a,
            g: &bn * bn.transpose(),
            q: self.q_weight.evaluate(t, 0),
            noise: self.noise_at(t),
        })
    }

    /// Folds general channels with `E_i ≡ I` into the scalar intensity.
    /// Fails if any channel is not the identity on the validation grid.
    pub fn identity_channel_reduction(&self, grid: usize) -> Result<Self> {
        if self.general_channels.is_empty() {
            return Ok(self.clone());
        }
        let eye = DMatrix::<T>::identity(self.n, self.n);
        let mut nu = self.nu.clone();
        for (k, ch) in self.general_channels.iter().enumerate() {
            if ch.e.shape() != (self.n, self.n) {
                return Err(Error::DimensionMismatch(format!(
                    "channel {k}: E is {:?}, expected {n}x{n}",
                    ch.e.shape(),
                    n = self.n
                )));
            }
            let is_identity = grid_times::<T>(grid)
                .all(|t| max_abs(&(ch.e.evaluate(t, 0) - &eye)) <= lit(1e-12));
            if !is_identity {
                return Err(Error::Precondition(format!(
                    "multiplicative channel {k} has E ≠ I; the boundary solve only covers state-proportional noise"
                )));
            }
            nu = nu.try_add(&ch.nu)?;
        }
        Ok(Self {
            nu,
            general_channels: Vec::new(),
            ..self.clone()
        })
    }
}

/// `grid` uniformly spaced times on `[0, 1]`, both ends included.
pub fn grid_times<T: Scalar>(grid: usize) -> impl Iterator<Item = T> + Clone {
    let m = grid.max(2) - 1;
    (0..=m).map(move |k| from_usize::<T>(k) / from_usize::<T>(m))
}

/// Initial and terminal covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData<T: Scalar> {
    pub sigma0: DMatrix<T>,
    pub sigma1: DMatrix<T>,
}

impl<T: Scalar> BoundaryData<T> {
    pub fn new(sigma0: DMatrix<T>, sigma1: DMatrix<T>) -> Result<Self> {
        let bd = Self { sigma0, sigma1 };
        bd.check()?;
        Ok(bd)
    }

    pub fn check(&self) -> Result<()> {
        for (name, s) in [("Sigma0", &self.sigma0), ("Sigma1", &self.sigma1)] {
            if !s.is_square() {
                return Err(Error::DimensionMismatch(format!("{name} is not square")));
            }
            if asymmetry(s) > lit::<T>(1e-12) * max_abs(s).max(T::one()) {
                return Err(Error::Precondition(format!("{name} is not symmetric")));
            }
            if min_eigenvalue(s) <= T::zero() {
                return Err(Error::Precondition(format!(
                    "{name} is not positive definite"
                )));
            }
        }
        if self.sigma0.shape() != self.sigma1.shape() {
            return Err(Error::DimensionMismatch(
                "Sigma0 and Sigma1 differ in size".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.sigma0.nrows()
    }
}

/// One checked assumption, with the first grid time where it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    pub failed_at: Option<f64>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ValidationCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn expect_shape<T: Scalar>(
    name: &str,
    m: &MatrixPoly<T>,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::DimensionMismatch(format!(
            "{name} declared {rows}x{cols} but given {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// Checks shapes (hard error) and the definiteness assumptions on the
/// validation grid (reported per check).
pub fn validate_system<T: Scalar>(
    sys: &SystemSpec<T>,
    tol: &Tolerances<T>,
) -> Result<ValidationReport> {
    let (n, p, q) = (sys.n, sys.p, sys.q);
    expect_shape("A", &sys.a, n, n)?;
    expect_shape("B", &sys.b, n, p)?;
    expect_shape("C", &sys.c, n, q)?;
    expect_shape("D", &sys.d, q, q)?;
    expect_shape("nu", &sys.nu, 1, 1)?;
    expect_shape("Q", &sys.q_weight, n, n)?;
    expect_shape("R", &sys.r, p, p)?;
    for (k, ch) in sys.general_channels.iter().enumerate() {
        expect_shape(&format!("E_{k}"), &ch.e, n, n)?;
        expect_shape(&format!("nu_{k}"), &ch.nu, 1, 1)?;
    }

    let pd = tol.pd_threshold;
    let psd = -tol.psd_threshold;
    let sym_tol = lit::<T>(1e-12);

    type Probe<'a, T> = Box<dyn Fn(T) -> bool + 'a>;
    let mut probes: Vec<(String, &str, Probe<'_, T>)> = vec![
        (
            "R symmetric positive definite".into(),
            "R not positive definite",
            Box::new(|t| {
                let r = sys.r.evaluate(t, 0);
                asymmetry(&r) <= sym_tol && min_eigenvalue(&r) > pd
            }),
        ),
        (
            "Q symmetric positive semidefinite".into(),
            "Q not positive semidefinite",
            Box::new(|t| {
                let m = sys.q_weight.evaluate(t, 0);
                asymmetry(&m) <= sym_tol && min_eigenvalue(&m) > psd
            }),
        ),
        (
            "D symmetric positive semidefinite".into(),
            "D not positive semidefinite",
            Box::new(|t| {
                let m = sys.d.evaluate(t, 0);
                asymmetry(&m) <= sym_tol && min_eigenvalue(&m) > psd
            }),
        ),
        (
            "nu nonnegative".into(),
            "nu negative",
            Box::new(|t| sys.nu_at(t) >= T::zero()),
        ),
    ];
    for (k, ch) in sys.general_channels.iter().enumerate() {
        probes.push((
            format!("nu_{k} nonnegative"),
            "channel intensity negative",
            Box::new(move |t| ch.nu.scalar_at(t) >= T::zero()),
        ));
    }

    let checks = probes
        .into_iter()
        .map(|(name, msg, ok)| {
            let failed_at = grid_times::<T>(tol.validation_grid).find(|t| !ok(*t));
            ValidationCheck {
                name,
                passed: failed_at.is_none(),
                failed_at: failed_at.map(|t| t.as_f64()),
                message: failed_at.map(|t| format!("{msg} at t={}", t.as_f64())),
            }
        })
        .collect();
    Ok(ValidationReport { checks })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use nalgebra::dmatrix;

    /// The two-state example with compound-Poisson additive noise
    /// (rate 3 + t, jump std 0.5) and a unit multiplicative Wiener channel.
    pub fn example_system() -> SystemSpec<f64> {
        SystemSpec::new(
            MatrixPoly::constant(&dmatrix![-2.0, 1.0; 0.0, 0.0]),
            MatrixPoly::constant(&dmatrix![0.0; 1.0]),
            MatrixPoly::constant(&dmatrix![1.0; 0.0]),
            MatrixPoly::from_coeffs(1, 1, vec![vec![0.75, 0.25]]).unwrap(),
            MatrixPoly::constant(&dmatrix![0.5]),
            MatrixPoly::constant(&dmatrix![1.0, 0.0; 0.0, 0.0]),
            MatrixPoly::constant(&dmatrix![1.0]),
        )
    }

    #[test]
    fn example_passes() {
        let report = validate_system(&example_system(), &Tolerances::default()).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn zero_r_fails_at_start() {
        let mut sys = example_system();
        sys.r = MatrixPoly::constant(&dmatrix![0.0]);
        let report = validate_system(&sys, &Tolerances::default()).unwrap();
        assert!(!report.passed());
        let f = report.failures().next().unwrap();
        assert_eq!(f.message.as_deref(), Some("R not positive definite at t=0"));
    }

    #[test]
    fn single_field_corruptions_fail() {
        let tol = Tolerances::default();
        let mut s = example_system();
        s.r = s.r.scale(-1.0);
        assert!(!validate_system(&s, &tol).unwrap().passed());
        let mut s = example_system();
        s.q_weight = s.q_weight.scale(-1.0);
        assert!(!validate_system(&s, &tol).unwrap().passed());
        let mut s = example_system();
        s.nu = MatrixPoly::constant(&dmatrix![-0.1]);
        assert!(!validate_system(&s, &tol).unwrap().passed());
    }

    #[test]
    fn transposed_b_is_a_shape_error() {
        let mut sys = example_system();
        sys.b = MatrixPoly::constant(&dmatrix![0.0, 1.0]);
        assert!(matches!(
            validate_system(&sys, &Tolerances::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn time_varying_failure_time_is_reported() {
        let mut sys = example_system();
        // nu(t) = 0.25 - t turns negative after t = 0.25
        sys.nu = MatrixPoly::from_coeffs(1, 1, vec![vec![0.25, -1.0]]).unwrap();
        let report = validate_system(&sys, &Tolerances::default()).unwrap();
        let f = report.failures().next().unwrap();
        assert!((f.failed_at.unwrap() - 0.26).abs() < 1e-12);
    }

    #[test]
    fn identity_channels_fold_into_nu() {
        let sys = example_system().with_channels(vec![GeneralChannel {
            e: MatrixPoly::identity(2),
            nu: MatrixPoly::constant(&dmatrix![0.25]),
        }]);
        let reduced = sys.identity_channel_reduction(101).unwrap();
        assert!((reduced.nu_at(0.3) - 0.75).abs() < 1e-15);
        let bad = example_system().with_channels(vec![GeneralChannel {
            e: MatrixPoly::identity(2).scale(2.0),
            nu: MatrixPoly::constant(&dmatrix![0.25]),
        }]);
        assert!(bad.identity_channel_reduction(101).is_err());
    }

    #[test]
    fn boundary_data_rejects_indefinite() {
        assert!(BoundaryData::new(dmatrix![1.0], dmatrix![0.0]).is_err());
        assert!(BoundaryData::new(dmatrix![1.0], dmatrix![2.0]).is_ok());
    }
}
