//! Numeric types the expression evaluator can run on.
//!
//! Real floats, complex numbers and truncated Taylor series (jets) share one
//! trait so that a single tree walk produces values, complex values on a
//! deformed contour, or derivatives.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex;
use num_traits::Float;

/// Pointwise evaluation failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of zero")]
    LogOfZero,
    #[error("{0} evaluated on its branch cut")]
    BranchCut(&'static str),
    #[error("derivative of sqrt at zero")]
    SqrtAtZero,
    #[error("non-finite value")]
    NonFinite,
}

/// Arithmetic needed by the expression evaluator.
///
/// Constants are created from an existing value so that jets carry their
/// truncation order into literals.
pub trait Scalar:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn constant(&self, v: f64) -> Self;
    fn is_zero(&self) -> bool;
    fn is_finite(&self) -> bool;
    fn checked_div(self, rhs: Self) -> Result<Self, DomainError>;
    fn exp(self) -> Self;
    fn ln(self) -> Result<Self, DomainError>;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Result<Self, DomainError>;
}

/// Integer power by binary exponentiation.
///
/// Every scalar type goes through this routine, which keeps real evaluation and
/// the constant term of a jet bit-identical.
pub fn powi<S: Scalar>(x: S, n: i32) -> Result<S, DomainError> {
    let mut e = n.unsigned_abs();
    let mut base = x.clone();
    let mut acc: Option<S> = None;
    while e > 0 {
        if e & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => a * base.clone(),
            });
        }
        e >>= 1;
        if e > 0 {
            base = base.clone() * base;
        }
    }
    let p = acc.unwrap_or_else(|| x.constant(1.0));
    if n < 0 {
        x.constant(1.0).checked_div(p)
    } else {
        Ok(p)
    }
}

macro_rules! real_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn constant(&self, v: f64) -> Self {
                v as $t
            }
            fn is_zero(&self) -> bool {
                *self == 0.0
            }
            fn is_finite(&self) -> bool {
                Float::is_finite(*self)
            }
            fn checked_div(self, rhs: Self) -> Result<Self, DomainError> {
                if rhs == 0.0 {
                    Err(DomainError::DivisionByZero)
                } else {
                    Ok(self / rhs)
                }
            }
            fn exp(self) -> Self {
                Float::exp(self)
            }
            fn ln(self) -> Result<Self, DomainError> {
                if self == 0.0 {
                    Err(DomainError::LogOfZero)
                } else if self < 0.0 {
                    Err(DomainError::BranchCut("log"))
                } else {
                    Ok(Float::ln(self))
                }
            }
            fn sin(self) -> Self {
                Float::sin(self)
            }
            fn cos(self) -> Self {
                Float::cos(self)
            }
            fn sinh(self) -> Self {
                Float::sinh(self)
            }
            fn cosh(self) -> Self {
                Float::cosh(self)
            }
            fn tanh(self) -> Self {
                Float::tanh(self)
            }
            fn sqrt(self) -> Result<Self, DomainError> {
                if self < 0.0 {
                    Err(DomainError::BranchCut("sqrt"))
                } else {
                    Ok(Float::sqrt(self))
                }
            }
        }
    };
}

real_scalar!(f32);
real_scalar!(f64);

// On the real axis the complex functions defer to the real ones so that the
// imaginary part stays exactly zero and the real part matches real evaluation.
impl<T> Scalar for Complex<T>
where
    T: Float + Scalar,
{
    fn constant(&self, v: f64) -> Self {
        Complex::new(self.re.constant(v), T::zero())
    }
    fn is_zero(&self) -> bool {
        self.re == T::zero() && self.im == T::zero()
    }
    fn is_finite(&self) -> bool {
        Float::is_finite(self.re) && Float::is_finite(self.im)
    }
    fn checked_div(self, rhs: Self) -> Result<Self, DomainError> {
        if rhs.is_zero() {
            return Err(DomainError::DivisionByZero);
        }
        if self.im == T::zero() && rhs.im == T::zero() {
            return Ok(Complex::new(self.re / rhs.re, T::zero()));
        }
        Ok(self / rhs)
    }
    fn exp(self) -> Self {
        if self.im == T::zero() {
            Complex::new(Float::exp(self.re), T::zero())
        } else {
            Complex::exp(self)
        }
    }
    fn ln(self) -> Result<Self, DomainError> {
        if self.im == T::zero() {
            return Scalar::ln(self.re).map(|r| Complex::new(r, T::zero()));
        }
        Ok(Complex::ln(self))
    }
    fn sin(self) -> Self {
        if self.im == T::zero() {
            Complex::new(Float::sin(self.re), T::zero())
        } else {
            Complex::sin(self)
        }
    }
    fn cos(self) -> Self {
        if self.im == T::zero() {
            Complex::new(Float::cos(self.re), T::zero())
        } else {
            Complex::cos(self)
        }
    }
    fn sinh(self) -> Self {
        if self.im == T::zero() {
            Complex::new(Float::sinh(self.re), T::zero())
        } else {
            Complex::sinh(self)
        }
    }
    fn cosh(self) -> Self {
        if self.im == T::zero() {
            Complex::new(Float::cosh(self.re), T::zero())
        } else {
            Complex::cosh(self)
        }
    }
    fn tanh(self) -> Self {
        if self.im == T::zero() {
            Complex::new(Float::tanh(self.re), T::zero())
        } else {
            Complex::tanh(self)
        }
    }
    fn sqrt(self) -> Result<Self, DomainError> {
        if self.im == T::zero() {
            return Scalar::sqrt(self.re).map(|r| Complex::new(r, T::zero()));
        }
        Ok(Complex::sqrt(self))
    }
}

/// Truncated Taylor series `c[0] + c[1] t + ... + c[K] t^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet<S> {
    pub c: Vec<S>,
}

impl<S: Scalar> Jet<S> {
    /// The independent variable expanded at `x0`.
    pub fn variable(x0: S, order: usize) -> Self {
        let mut c = vec![x0.constant(0.0); order + 1];
        c[0] = x0.clone();
        if order >= 1 {
            c[1] = x0.constant(1.0);
        }
        Jet { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    fn zero_like(&self) -> S {
        self.c[0].constant(0.0)
    }

    fn scaled(&self, v: &S, k: usize) -> S {
        v.clone() * self.c[0].constant(k as f64)
    }

    fn inv_k(&self, k: usize) -> S {
        self.c[0].constant(1.0 / k as f64)
    }
}

impl<S: Scalar> Add for Jet<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Jet {
            c: self.c.into_iter().zip(rhs.c).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<S: Scalar> Sub for Jet<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Jet {
            c: self.c.into_iter().zip(rhs.c).map(|(a, b)| a - b).collect(),
        }
    }
}

impl<S: Scalar> Neg for Jet<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Jet {
            c: self.c.into_iter().map(|a| -a).collect(),
        }
    }
}

impl<S: Scalar> Mul for Jet<S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let n = self.c.len();
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut acc = self.c[0].clone() * rhs.c[k].clone();
            for j in 1..=k {
                acc = acc + self.c[j].clone() * rhs.c[k - j].clone();
            }
            out.push(acc);
        }
        Jet { c: out }
    }
}

impl<S: Scalar> Jet<S> {
    // f' = a' g(f) style recurrences: out_k = (1/k) sum_j j a_j g_{k-j}
    fn ode_coeff(&self, g: &[S], k: usize) -> S {
        let mut acc = self.zero_like();
        for j in 1..=k {
            acc = acc + self.scaled(&self.c[j], j) * g[k - j].clone();
        }
        acc * self.inv_k(k)
    }
}

impl<S: Scalar> Scalar for Jet<S> {
    fn constant(&self, v: f64) -> Self {
        let mut c = vec![self.zero_like(); self.c.len()];
        c[0] = self.c[0].constant(v);
        Jet { c }
    }
    fn is_zero(&self) -> bool {
        self.c.iter().all(|v| v.is_zero())
    }
    fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }
    fn checked_div(self, rhs: Self) -> Result<Self, DomainError> {
        let b0 = rhs.c[0].clone();
        if b0.is_zero() {
            return Err(DomainError::DivisionByZero);
        }
        let n = self.c.len();
        let mut q: Vec<S> = Vec::with_capacity(n);
        q.push(self.c[0].clone().checked_div(b0.clone())?);
        for k in 1..n {
            let mut acc = self.c[k].clone();
            for j in 1..=k {
                acc = acc - rhs.c[j].clone() * q[k - j].clone();
            }
            q.push(acc.checked_div(b0.clone())?);
        }
        Ok(Jet { c: q })
    }
    fn exp(self) -> Self {
        let n = self.c.len();
        let mut e = Vec::with_capacity(n);
        e.push(self.c[0].clone().exp());
        for k in 1..n {
            let v = self.ode_coeff(&e, k);
            e.push(v);
        }
        Jet { c: e }
    }
    fn ln(self) -> Result<Self, DomainError> {
        let n = self.c.len();
        let a0 = self.c[0].clone();
        let mut l = Vec::with_capacity(n);
        l.push(a0.clone().ln()?);
        for k in 1..n {
            let mut acc = self.zero_like();
            for j in 1..k {
                acc = acc + self.scaled(&l[j], j) * self.c[k - j].clone();
            }
            let num = self.c[k].clone() - acc * self.inv_k(k);
            l.push(num.checked_div(a0.clone())?);
        }
        Ok(Jet { c: l })
    }
    fn sin(self) -> Self {
        self.sin_cos().0
    }
    fn cos(self) -> Self {
        self.sin_cos().1
    }
    fn sinh(self) -> Self {
        self.sinh_cosh().0
    }
    fn cosh(self) -> Self {
        self.sinh_cosh().1
    }
    fn tanh(self) -> Self {
        let n = self.c.len();
        let one = self.c[0].constant(1.0);
        let mut t: Vec<S> = Vec::with_capacity(n);
        let mut u: Vec<S> = Vec::with_capacity(n);
        t.push(self.c[0].clone().tanh());
        u.push(one - t[0].clone() * t[0].clone());
        for k in 1..n {
            let v = self.ode_coeff(&u, k);
            t.push(v);
            let mut sq = t[0].clone() * t[k].clone();
            for i in 1..=k {
                sq = sq + t[i].clone() * t[k - i].clone();
            }
            u.push(-sq);
        }
        Jet { c: t }
    }
    fn sqrt(self) -> Result<Self, DomainError> {
        let n = self.c.len();
        let r0 = self.c[0].clone().sqrt()?;
        if n > 1 && r0.is_zero() {
            return Err(DomainError::SqrtAtZero);
        }
        let two_r0 = r0.clone() + r0.clone();
        let mut r = Vec::with_capacity(n);
        r.push(r0);
        for k in 1..n {
            let mut acc = self.c[k].clone();
            for j in 1..k {
                acc = acc - r[j].clone() * r[k - j].clone();
            }
            r.push(acc.checked_div(two_r0.clone())?);
        }
        Ok(Jet { c: r })
    }
}

impl<S: Scalar> Jet<S> {
    fn sin_cos(&self) -> (Self, Self) {
        let n = self.c.len();
        let mut s = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        s.push(self.c[0].clone().sin());
        c.push(self.c[0].clone().cos());
        for k in 1..n {
            let sk = self.ode_coeff(&c, k);
            let ck = -self.ode_coeff(&s, k);
            s.push(sk);
            c.push(ck);
        }
        (Jet { c: s }, Jet { c })
    }

    fn sinh_cosh(&self) -> (Self, Self) {
        let n = self.c.len();
        let mut s = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        s.push(self.c[0].clone().sinh());
        c.push(self.c[0].clone().cosh());
        for k in 1..n {
            let sk = self.ode_coeff(&c, k);
            let ck = self.ode_coeff(&s, k);
            s.push(sk);
            c.push(ck);
        }
        (Jet { c: s }, Jet { c })
    }
}
