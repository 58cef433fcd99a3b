//! Truncated Taylor series for forward-mode derivatives of arbitrary order.

use std::ops::{Add, Mul, Neg, Sub};

use crate::matfun::Poly;
use crate::scalar::{from_usize, Scalar};

/// `c[i] = f⁽ⁱ⁾(t₀) / i!` for `i = 0..=order`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet<T> {
    c: Vec<T>,
}

impl<T: Scalar> Jet<T> {
    pub fn constant(v: T, order: usize) -> Self {
        let mut c = vec![T::zero(); order + 1];
        c[0] = v;
        Self { c }
    }

    pub fn zero(order: usize) -> Self {
        Self::constant(T::zero(), order)
    }

    /// The independent variable expanded at `t`.
    pub fn variable(t: T, order: usize) -> Self {
        let mut j = Self::constant(t, order);
        if order > 0 {
            j.c[1] = T::one();
        }
        j
    }

    pub fn from_coeffs(c: Vec<T>) -> Self {
        assert!(!c.is_empty(), "a jet needs at least the value");
        Self { c }
    }

    /// Expansion of a polynomial at `t`.
    pub fn of_poly(p: &Poly<T>, t: T, order: usize) -> Self {
        let mut fact = T::one();
        let c = (0..=order)
            .map(|i| {
                if i > 0 {
                    fact *= from_usize::<T>(i);
                }
                p.eval(t, i) / fact
            })
            .collect();
        Self { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn coeffs(&self) -> &[T] {
        &self.c
    }

    pub fn value(&self) -> T {
        self.c[0]
    }

    /// `i`-th derivative at the expansion point.
    pub fn derivative_value(&self, i: usize) -> T {
        let mut fact = T::one();
        for k in 2..=i {
            fact *= from_usize::<T>(k);
        }
        self.c.get(i).copied().unwrap_or_else(T::zero) * fact
    }

    pub fn truncate(&self, order: usize) -> Self {
        Self {
            c: self.c[..=order.min(self.order())].to_vec(),
        }
    }

    /// Jet of the derivative; one order shorter.
    pub fn differentiate(&self) -> Self {
        if self.c.len() == 1 {
            return Self::zero(0);
        }
        Self {
            c: (1..self.c.len())
                .map(|i| self.c[i] * from_usize::<T>(i))
                .collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            c: self.c.iter().map(|x| *x * s).collect(),
        }
    }

    pub fn recip(&self) -> Self {
        Self::constant(T::one(), self.order()).div(self)
    }

    pub fn div(&self, rhs: &Self) -> Self {
        let n = self.order().min(rhs.order()) + 1;
        let mut q: Vec<T> = Vec::with_capacity(n);
        for k in 0..n {
            let mut v = self.c[k];
            for j in 0..k {
                v -= q[j] * rhs.c[k - j];
            }
            q.push(v / rhs.c[0]);
        }
        Self { c: q }
    }

    pub fn exp(&self) -> Self {
        let n = self.c.len();
        let mut e = vec![T::zero(); n];
        e[0] = self.c[0].exp();
        // e' = a' e  ⇒  k e_k = Σ j a_j e_{k−j}
        for k in 1..n {
            let mut v = T::zero();
            for j in 1..=k {
                v += from_usize::<T>(j) * self.c[j] * e[k - j];
            }
            e[k] = v / from_usize::<T>(k);
        }
        Self { c: e }
    }
}

fn zip_with<T: Scalar>(a: &Jet<T>, b: &Jet<T>, f: impl Fn(T, T) -> T) -> Jet<T> {
    let n = a.c.len().min(b.c.len());
    Jet {
        c: (0..n).map(|i| f(a.c[i], b.c[i])).collect(),
    }
}

impl<T: Scalar> Add for &Jet<T> {
    type Output = Jet<T>;
    fn add(self, rhs: Self) -> Jet<T> {
        zip_with(self, rhs, |a, b| a + b)
    }
}

impl<T: Scalar> Sub for &Jet<T> {
    type Output = Jet<T>;
    fn sub(self, rhs: Self) -> Jet<T> {
        zip_with(self, rhs, |a, b| a - b)
    }
}

impl<T: Scalar> Neg for &Jet<T> {
    type Output = Jet<T>;
    fn neg(self) -> Jet<T> {
        self.scale(-T::one())
    }
}

impl<T: Scalar> Mul for &Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: Self) -> Jet<T> {
        let n = self.c.len().min(rhs.c.len());
        Jet {
            c: (0..n)
                .map(|k| (0..=k).fold(T::zero(), |s, j| s + self.c[j] * rhs.c[k - j]))
                .collect(),
        }
    }
}
