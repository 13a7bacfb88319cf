//! Polynomials in `t` with exact rational coefficients.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// A polynomial `Σ aᵢ tⁱ` over `Q`, usually a probability generating function.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct GenFun {
    coeffs: Vec<BigRational>,
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: impl Into<BigInt>) -> BigRational {
    BigRational::from_integer(n.into())
}

impl GenFun {
    pub fn from_coeffs(mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().map_or(false, |c| c.is_zero()) {
            coeffs.pop();
        }
        GenFun { coeffs }
    }

    pub fn zero() -> Self {
        GenFun { coeffs: Vec::new() }
    }

    pub fn constant(c: BigRational) -> Self {
        Self::from_coeffs(vec![c])
    }

    /// `c·tᵏ`.
    pub fn monomial(c: BigRational, k: usize) -> Self {
        let mut v = vec![BigRational::zero(); k + 1];
        v[k] = c;
        Self::from_coeffs(v)
    }

    pub fn t() -> Self {
        Self::monomial(BigRational::one(), 1)
    }

    /// `∏ (t² − cᵢ)`.
    pub fn product_t2_minus(cs: impl IntoIterator<Item = BigRational>) -> Self {
        cs.into_iter().fold(Self::constant(BigRational::one()), |acc, c| {
            let f = Self::from_coeffs(vec![-c, BigRational::zero(), BigRational::one()]);
            &acc * &f
        })
    }

    /// Degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn coeff(&self, i: usize) -> BigRational {
        self.coeffs.get(i).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        Self::from_coeffs(self.coeffs.iter().map(|a| a * c).collect())
    }

    pub fn eval(&self, t: &BigRational) -> BigRational {
        self.coeffs.iter().rev().fold(BigRational::zero(), |acc, a| acc * t + a)
    }

    /// Substitute `t ↦ t²`.
    pub fn in_t_squared(&self) -> Self {
        let mut v = vec![BigRational::zero(); 2 * self.coeffs.len()];
        for (i, a) in self.coeffs.iter().enumerate() {
            v[2 * i] = a.clone();
        }
        Self::from_coeffs(v)
    }

    /// Nonnegative coefficients summing to one.
    pub fn is_probability(&self) -> bool {
        self.coeffs.iter().all(|c| !c.is_negative()) && self.eval(&BigRational::one()).is_one()
    }

    /// Lagrange interpolation through `(xᵢ, yᵢ)` with distinct `xᵢ`.
    pub fn interpolate(points: &[(BigRational, BigRational)]) -> Self {
        let mut acc = Self::zero();
        for (i, (xi, yi)) in points.iter().enumerate() {
            let mut term = Self::constant(yi.clone());
            for (k, (xk, _)) in points.iter().enumerate() {
                if k != i {
                    let lin = Self::from_coeffs(vec![-xk.clone(), BigRational::one()]);
                    term = &term * &lin.scale(&(BigRational::one() / (xi - xk)));
                }
            }
            acc = &acc + &term;
        }
        acc
    }
}

impl Add for &GenFun {
    type Output = GenFun;
    fn add(self, o: &GenFun) -> GenFun {
        let len = self.coeffs.len().max(o.coeffs.len());
        GenFun::from_coeffs((0..len).map(|i| self.coeff(i) + o.coeff(i)).collect())
    }
}

impl Sub for &GenFun {
    type Output = GenFun;
    fn sub(self, o: &GenFun) -> GenFun {
        let len = self.coeffs.len().max(o.coeffs.len());
        GenFun::from_coeffs((0..len).map(|i| self.coeff(i) - o.coeff(i)).collect())
    }
}

impl Mul for &GenFun {
    type Output = GenFun;
    fn mul(self, o: &GenFun) -> GenFun {
        if self.is_zero() || o.is_zero() {
            return GenFun::zero();
        }
        let mut v = vec![BigRational::zero(); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.coeffs.iter().enumerate() {
                v[i + j] += a * b;
            }
        }
        GenFun::from_coeffs(v)
    }
}

impl fmt::Display for GenFun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match i {
                0 => write!(f, "{c}")?,
                1 => write!(f, "({c})t")?,
                _ => write!(f, "({c})t^{i}")?,
            }
        }
        Ok(())
    }
}
