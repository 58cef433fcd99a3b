//! Time-dependent matrices with polynomial entries, plus the Kronecker and
//! column-stacking utilities used by the Jacobian of the boundary map.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, Scalar};

/// Real polynomial in `t`, coefficients in ascending degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly<T> {
    coeffs: Vec<T>,
}

impl<T: Scalar> Poly<T> {
    pub fn new(mut coeffs: Vec<T>) -> Self {
        if coeffs.is_empty() {
            coeffs.push(T::zero());
        }
        Self { coeffs }
    }

    pub fn constant(c: T) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn zero() -> Self {
        Self::constant(T::zero())
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Degree ignoring trailing zero coefficients.
    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|c| *c != T::zero())
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == T::zero())
    }

    /// `order`-th derivative at `t` (Horner on the differentiated coefficients).
    pub fn eval(&self, t: T, order: usize) -> T {
        let n = self.coeffs.len();
        if order >= n {
            return T::zero();
        }
        let mut acc = T::zero();
        for k in (order..n).rev() {
            acc = acc * t + self.coeffs[k] * falling(k, order);
        }
        acc
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Self::zero();
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| *c * from_usize(k))
                .collect(),
        )
    }

    /// Antiderivative vanishing at zero.
    pub fn integral(&self) -> Self {
        let mut c = Vec::with_capacity(self.coeffs.len() + 1);
        c.push(T::zero());
        c.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| *a / from_usize(k + 1)),
        );
        Self::new(c)
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.coeffs.iter().map(|c| *c * s).collect())
    }

    /// Upper bound on `|p'(t)|` for `|t| <= radius`.
    pub fn derivative_bound(&self, radius: T) -> T {
        let r = radius.abs();
        let mut bound = T::zero();
        let mut rp = T::one();
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            bound += c.abs() * from_usize(k) * rp;
            rp *= r;
        }
        bound
    }
}

/// k·(k-1)···(k-order+1)
fn falling<T: Scalar>(k: usize, order: usize) -> T {
    (0..order).fold(T::one(), |acc, j| acc * from_usize(k - j))
}

impl<T: Scalar> Add for &Poly<T> {
    type Output = Poly<T>;
    fn add(self, rhs: &Poly<T>) -> Poly<T> {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new(
            (0..n)
                .map(|k| {
                    self.coeffs.get(k).copied().unwrap_or_else(T::zero)
                        + rhs.coeffs.get(k).copied().unwrap_or_else(T::zero)
                })
                .collect(),
        )
    }
}

impl<T: Scalar> Sub for &Poly<T> {
    type Output = Poly<T>;
    fn sub(self, rhs: &Poly<T>) -> Poly<T> {
        self + &(-rhs)
    }
}

impl<T: Scalar> Neg for &Poly<T> {
    type Output = Poly<T>;
    fn neg(self) -> Poly<T> {
        self.scale(-T::one())
    }
}

impl<T: Scalar> Mul for &Poly<T> {
    type Output = Poly<T>;
    fn mul(self, rhs: &Poly<T>) -> Poly<T> {
        let mut c = vec![T::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                c[i + j] += *a * *b;
            }
        }
        Poly::new(c)
    }
}

/// Matrix whose entries are polynomials in time. Entries are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPoly<T> {
    rows: usize,
    cols: usize,
    entries: Vec<Poly<T>>,
}

impl<T: Scalar> MatrixPoly<T> {
    /// Builds from per-entry coefficient lists, row-major.
    pub fn from_coeffs(rows: usize, cols: usize, coeffs: Vec<Vec<T>>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix function must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if coeffs.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficient lists for a {rows}x{cols} matrix, got {}",
                rows * cols,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| c.is_empty()) {
            return Err(Error::InvalidArgument(
                "every entry needs at least one coefficient".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            entries: coeffs.into_iter().map(Poly::new).collect(),
        })
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<Poly<T>>) -> Result<Self> {
        if rows == 0 || cols == 0 || entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries do not fill a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn constant(m: &DMatrix<T>) -> Self {
        let (rows, cols) = m.shape();
        let entries = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| Poly::constant(m[(i, j)]))
            .collect();
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn scalar(p: Poly<T>) -> Self {
        Self {
            rows: 1,
            cols: 1,
            entries: vec![p],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(&DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(&DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn entry(&self, i: usize, j: usize) -> &Poly<T> {
        &self.entries[i * self.cols + j]
    }

    pub fn entries(&self) -> &[Poly<T>] {
        &self.entries
    }

    pub fn max_degree(&self) -> usize {
        self.entries.iter().map(Poly::degree).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Poly::is_zero)
    }

    /// Value (`order == 0`) or `order`-th time derivative at `t`.
    pub fn evaluate(&self, t: T, order: usize) -> DMatrix<T> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).eval(t, order))
    }

    /// Value of a 1x1 matrix function.
    pub fn scalar_at(&self, t: T) -> T {
        self.entries[0].eval(t, 0)
    }

    pub fn derivative(&self) -> Self {
        self.map(Poly::derivative)
    }

    pub fn transpose(&self) -> Self {
        let entries = (0..self.cols)
            .flat_map(|j| (0..self.rows).map(move |i| (i, j)))
            .map(|(i, j)| self.entry(i, j).clone())
            .collect();
        Self {
            rows: self.cols,
            cols: self.rows,
            entries,
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|p| p.scale(s))
    }

    fn map(&self, f: impl Fn(&Poly<T>) -> Poly<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(f).collect(),
        }
    }

    pub fn try_add(&self, rhs: &Self) -> Result<Self> {
        self.same_shape(rhs, "add")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn try_sub(&self, rhs: &Self) -> Result<Self> {
        self.try_add(&rhs.scale(-T::one()))
    }

    pub fn try_mul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut entries = Vec::with_capacity(self.rows * rhs.cols);
        for i in 0..self.rows {
            for j in 0..rhs.cols {
                let mut acc = Poly::zero();
                for k in 0..self.cols {
                    acc = &acc + &(self.entry(i, k) * rhs.entry(k, j));
                }
                entries.push(acc);
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: rhs.cols,
            entries,
        })
    }

    fn same_shape(&self, rhs: &Self, op: &str) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::DimensionMismatch(format!(
                "cannot {op} {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(())
    }
}

/// Kronecker product `X ⊗ Y`.
pub fn kron<T: Scalar>(x: &DMatrix<T>, y: &DMatrix<T>) -> DMatrix<T> {
    x.kronecker(y)
}

/// Column-stacking vectorization.
pub fn vec<T: Scalar>(h: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(h.as_slice())
}

/// Inverse of [`vec`] for an `n x n` matrix.
pub fn unvec<T: Scalar>(v: &DVector<T>, n: usize) -> Result<DMatrix<T>> {
    if v.len() != n * n {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} is not vec of a {n}x{n} matrix",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(n, n, v.as_slice()))
}
