//! Arithmetic and linear algebra over `Z/nZ`.
//!
//! Composite moduli are handled by splitting into prime-power components with
//! [`crt_split`]. Smith normal form and kernel classes are only defined over
//! `Z/ℓᵉZ`.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[inline]
pub fn mul_mod(a: u64, b: u64, n: u64) -> u64 {
    if n <= u32::MAX as u64 {
        a * b % n
    } else {
        ((a as u128 * b as u128) % n as u128) as u64
    }
}

#[inline]
pub fn add_mod(a: u64, b: u64, n: u64) -> u64 {
    let (s, over) = a.overflowing_add(b);
    if over || s >= n {
        s.wrapping_sub(n)
    } else {
        s
    }
}

#[inline]
pub fn sub_mod(a: u64, b: u64, n: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        n - (b - a)
    }
}

#[inline]
pub fn neg_mod(a: u64, n: u64) -> u64 {
    if a == 0 {
        0
    } else {
        n - a
    }
}

pub fn pow_mod(mut a: u64, mut k: u64, n: u64) -> u64 {
    let mut r = 1 % n;
    a %= n;
    while k > 0 {
        if k & 1 == 1 {
            r = mul_mod(r, a, n);
        }
        a = mul_mod(a, a, n);
        k >>= 1;
    }
    r
}

/// Inverse of `a` modulo `n`, if it exists.
pub fn inv_mod(a: u64, n: u64) -> Option<u64> {
    let (mut r0, mut r1) = (n as i128, (a % n) as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 != 1 {
        return None;
    }
    Some(t0.rem_euclid(n as i128) as u64)
}

/// Reduce a signed integer into `[0, n)`.
#[inline]
pub fn reduce_i64(x: i64, n: u64) -> u64 {
    (x as i128).rem_euclid(n as i128) as u64
}

/// ℓ-adic valuation of `x` viewed in `Z/ℓᵉZ`; zero has valuation `e`.
pub fn valuation(mut x: u64, ell: u64, e: u32) -> u32 {
    if x == 0 {
        return e;
    }
    let mut v = 0;
    while x % ell == 0 && v < e {
        x /= ell;
        v += 1;
    }
    v
}

/// Legendre symbol class of `a` modulo an odd prime `p`: `false` for squares
/// (and zero), `true` for non-squares.
pub fn is_nonsquare_mod_prime(a: u64, p: u64) -> bool {
    let a = a % p;
    if a == 0 {
        return false;
    }
    pow_mod(a, (p - 1) / 2, p) != 1
}

pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p.saturating_mul(p) <= n {
        if n % p == 0 {
            let mut e = 0;
            while n % p == 0 {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// The ring `Z/nZ` together with the factorization of `n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Modulus {
    n: u64,
    factors: Vec<(u64, u32)>,
}

impl Modulus {
    pub fn new(n: u64) -> Result<Self> {
        if n < 2 || n > 1 << 63 {
            return Err(Error::InvalidModulus(n));
        }
        Ok(Modulus { n, factors: factorize(n) })
    }

    pub fn prime_power(ell: u64, e: u32) -> Result<Self> {
        let m = Modulus::new(ell.checked_pow(e).ok_or(Error::InvalidModulus(ell))?)?;
        if m.factors.len() != 1 || m.factors[0].0 != ell {
            return Err(Error::InvalidModulus(ell));
        }
        Ok(m)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    pub fn as_prime_power(&self) -> Option<(u64, u32)> {
        (self.factors.len() == 1).then(|| self.factors[0])
    }

    pub fn is_prime(&self) -> bool {
        matches!(self.as_prime_power(), Some((_, 1)))
    }

    /// The prime-power components `ℓᵉ` as moduli.
    pub fn components(&self) -> Vec<Modulus> {
        self.factors
            .iter()
            .map(|&(p, e)| Modulus { n: p.pow(e), factors: vec![(p, e)] })
            .collect()
    }
}

impl fmt::Display for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Z/{}", self.n)
    }
}

/// Chinese remaindering of residues `(value, modulus)` with coprime moduli.
pub fn crt_combine(parts: &[(u64, u64)]) -> u64 {
    let mut x: u128 = 0;
    let mut m: u128 = 1;
    for &(a, n) in parts {
        let n128 = n as u128;
        let cur = (x % n128) as u64;
        let diff = sub_mod(a % n, cur, n);
        let inv = inv_mod((m % n128) as u64, n).expect("moduli must be coprime");
        let k = mul_mod(diff, inv, n) as u128;
        x += m * k;
        m *= n128;
    }
    x as u64
}

/// Dense matrix with entries in `Z/nZ`, stored row-major as canonical residues.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MatrixMod {
    rows: usize,
    cols: usize,
    n: u64,
    data: Vec<u64>,
}

impl fmt::Debug for MatrixMod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "MatrixMod {}x{} mod {}", self.rows, self.cols, self.n)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

impl MatrixMod {
    pub fn zeros(rows: usize, cols: usize, n: u64) -> Self {
        MatrixMod { rows, cols, n, data: vec![0; rows * cols] }
    }

    pub fn identity(size: usize, n: u64) -> Self {
        let mut m = Self::zeros(size, size, n);
        for i in 0..size {
            m.data[i * size + i] = 1 % n;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, n: u64, data: Vec<u64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length");
        let data = data.into_iter().map(|x| x % n).collect();
        MatrixMod { rows, cols, n, data }
    }

    pub fn from_i64(rows: usize, cols: usize, n: u64, data: &[i64]) -> Self {
        assert_eq!(data.len(), rows * cols, "data length");
        MatrixMod { rows, cols, n, data: data.iter().map(|&x| reduce_i64(x, n)).collect() }
    }

    pub fn from_rows(n: u64, rows: &[Vec<i64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let flat: Vec<i64> = rows.iter().flat_map(|x| x.iter().copied()).collect();
        Self::from_i64(r, c, n, &flat)
    }

    pub fn from_fn(rows: usize, cols: usize, n: u64, mut f: impl FnMut(usize, usize) -> u64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j) % n);
            }
        }
        MatrixMod { rows, cols, n, data }
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(n: u64, cols: &[Vec<u64>]) -> Self {
        let c = cols.len();
        let r = cols.first().map_or(0, |x| x.len());
        Self::from_fn(r, c, n, |i, j| cols[j][i])
    }

    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, n: u64, rng: &mut R) -> Self {
        Self::from_fn(rows, cols, n, |_, _| rng.gen_range(0..n))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn modulus(&self) -> u64 {
        self.n
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: u64) {
        self.data[i * self.cols + j] = v % self.n;
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<u64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[u64]) {
        for (i, &x) in v.iter().enumerate() {
            self.set(i, j, x);
        }
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, self.n, |i, j| self.get(j, i))
    }

    pub fn mul(&self, other: &MatrixMod) -> MatrixMod {
        assert_eq!(self.cols, other.rows, "matrix product dimensions");
        assert_eq!(self.n, other.n, "matrix product moduli");
        let n = self.n;
        let mut out = vec![0u64; self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d = add_mod(*d, mul_mod(a, b, n), n);
                }
            }
        }
        MatrixMod { rows: self.rows, cols: other.cols, n, data: out }
    }

    pub fn apply(&self, v: &[u64]) -> Vec<u64> {
        assert_eq!(self.cols, v.len(), "vector length");
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(0, |acc, (&a, &b)| add_mod(acc, mul_mod(a, b, self.n), self.n))
            })
            .collect()
    }

    pub fn add(&self, other: &MatrixMod) -> MatrixMod {
        assert_eq!((self.rows, self.cols, self.n), (other.rows, other.cols, other.n));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| add_mod(a, b, self.n)).collect();
        MatrixMod { data, ..*self }
    }

    pub fn sub(&self, other: &MatrixMod) -> MatrixMod {
        assert_eq!((self.rows, self.cols, self.n), (other.rows, other.cols, other.n));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| sub_mod(a, b, self.n)).collect();
        MatrixMod { data, ..*self }
    }

    pub fn scale(&self, c: u64) -> MatrixMod {
        let data = self.data.iter().map(|&a| mul_mod(a, c % self.n, self.n)).collect();
        MatrixMod { data, ..*self }
    }

    /// `self − I`.
    pub fn minus_identity(&self) -> MatrixMod {
        assert!(self.is_square());
        let mut m = self.clone();
        for i in 0..self.rows {
            let x = m.get(i, i);
            m.data[i * self.cols + i] = sub_mod(x, 1 % self.n, self.n);
        }
        m
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    pub fn is_identity(&self) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..self.cols).all(|j| self.get(i, j) == u64::from(i == j) % self.n))
    }

    /// Reduce the entries modulo a divisor `m` of the current modulus.
    pub fn reduce(&self, m: u64) -> MatrixMod {
        assert!(m >= 1 && self.n % m == 0, "{m} must divide {}", self.n);
        let data = self.data.iter().map(|&x| x % m).collect();
        MatrixMod { rows: self.rows, cols: self.cols, n: m, data }
    }

    /// Reinterpret the entries modulo a multiple `m` of the current modulus,
    /// using the canonical representatives as lifts.
    pub fn lift(&self, m: u64) -> MatrixMod {
        assert!(m % self.n == 0, "{} must divide {m}", self.n);
        MatrixMod { rows: self.rows, cols: self.cols, n: m, data: self.data.clone() }
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for j in 0..self.cols {
                self.data.swap(a * self.cols + j, b * self.cols + j);
            }
        }
    }

    pub fn swap_cols(&mut self, a: usize, b: usize) {
        if a != b {
            for i in 0..self.rows {
                self.data.swap(i * self.cols + a, i * self.cols + b);
            }
        }
    }

    /// `row[dst] -= c * row[src]`.
    fn row_axpy(&mut self, dst: usize, src: usize, c: u64) {
        let n = self.n;
        for j in 0..self.cols {
            let s = self.data[src * self.cols + j];
            let d = &mut self.data[dst * self.cols + j];
            *d = sub_mod(*d, mul_mod(c, s, n), n);
        }
    }

    /// `col[dst] -= c * col[src]`.
    fn col_axpy(&mut self, dst: usize, src: usize, c: u64) {
        let n = self.n;
        for i in 0..self.rows {
            let s = self.data[i * self.cols + src];
            let d = &mut self.data[i * self.cols + dst];
            *d = sub_mod(*d, mul_mod(c, s, n), n);
        }
    }

    fn scale_row(&mut self, r: usize, c: u64) {
        let n = self.n;
        for j in 0..self.cols {
            let d = &mut self.data[r * self.cols + j];
            *d = mul_mod(*d, c, n);
        }
    }

    /// Rank over a prime field. Panics if the modulus is not prime.
    pub fn rank_mod_prime(&self) -> usize {
        let mut data = self.data.clone();
        rank_in_place(&mut data, self.rows, self.cols, self.n)
    }

    /// Inverse over `Z/nZ`, if the matrix is invertible.
    pub fn inverse(&self) -> Option<MatrixMod> {
        if !self.is_square() {
            return None;
        }
        let parts = crt_split(self).ok()?;
        let mut invs = Vec::new();
        for (ell, e, a) in parts {
            invs.push((ell, e, inverse_prime_power(&a, ell)?));
        }
        Some(crt_join(&invs))
    }

    pub fn is_invertible(&self) -> bool {
        let m = Modulus::new(self.n).expect("modulus");
        self.is_square()
            && m.factors().iter().all(|&(p, _)| self.reduce(p).rank_mod_prime() == self.rows)
    }

    /// Determinant over `Z/nZ`.
    pub fn determinant(&self) -> u64 {
        assert!(self.is_square());
        let parts = crt_split(self).expect("modulus");
        let residues: Vec<(u64, u64)> = parts
            .iter()
            .map(|(ell, e, a)| (det_prime_power(a, *ell, *e), ell.pow(*e)))
            .collect();
        crt_combine(&residues)
    }
}

/// Rank of a row-major matrix over `F_p`, destroying its contents.
pub fn rank_in_place(data: &mut [u64], rows: usize, cols: usize, p: u64) -> usize {
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let Some(piv) = (rank..rows).find(|&r| data[r * cols + c] != 0) else {
            continue;
        };
        if piv != rank {
            for j in 0..cols {
                data.swap(piv * cols + j, rank * cols + j);
            }
        }
        let inv = inv_mod(data[rank * cols + c], p).expect("prime modulus");
        for r in rank + 1..rows {
            let x = data[r * cols + c];
            if x == 0 {
                continue;
            }
            let f = mul_mod(x, inv, p);
            if p < 1 << 16 {
                let pp = p * p;
                for j in c..cols {
                    data[r * cols + j] = (data[r * cols + j] + pp - f * data[rank * cols + j]) % p;
                }
            } else {
                for j in c..cols {
                    let s = data[rank * cols + j];
                    data[r * cols + j] = sub_mod(data[r * cols + j], mul_mod(f, s, p), p);
                }
            }
        }
        rank += 1;
    }
    rank
}

fn inverse_prime_power(a: &MatrixMod, ell: u64) -> Option<MatrixMod> {
    let size = a.rows;
    let n = a.n;
    let mut m = a.clone();
    let mut inv = MatrixMod::identity(size, n);
    for c in 0..size {
        let piv = (c..size).find(|&r| m.get(r, c) % ell != 0)?;
        m.swap_rows(piv, c);
        inv.swap_rows(piv, c);
        let u = inv_mod(m.get(c, c), n)?;
        m.scale_row(c, u);
        inv.scale_row(c, u);
        for r in 0..size {
            if r != c {
                let f = m.get(r, c);
                if f != 0 {
                    m.row_axpy(r, c, f);
                    inv.row_axpy(r, c, f);
                }
            }
        }
    }
    Some(inv)
}

fn det_prime_power(a: &MatrixMod, ell: u64, e: u32) -> u64 {
    let size = a.rows;
    let n = a.n;
    let mut m = a.clone();
    let mut det = 1 % n;
    for k in 0..size {
        let Some((i, j, v)) = min_valuation_entry(&m, k, ell, e) else {
            return 0;
        };
        if v >= e {
            return 0;
        }
        if i != k {
            m.swap_rows(i, k);
            det = neg_mod(det, n);
        }
        if j != k {
            m.swap_cols(j, k);
            det = neg_mod(det, n);
        }
        let p = m.get(k, k);
        let lv = ell.pow(v);
        let uinv = inv_mod(p / lv, n).expect("unit part");
        for r in k + 1..size {
            let c = m.get(r, k) / lv;
            if c != 0 {
                m.row_axpy(r, k, mul_mod(c, uinv, n));
            }
        }
        det = mul_mod(det, p, n);
    }
    det
}

/// Entry of minimal valuation in the lower-right block starting at `(k, k)`;
/// ties broken by lowest `(row, col)`.
fn min_valuation_entry(m: &MatrixMod, k: usize, ell: u64, e: u32) -> Option<(usize, usize, u32)> {
    let mut best: Option<(usize, usize, u32)> = None;
    for i in k..m.rows {
        for j in k..m.cols {
            let x = m.get(i, j);
            if x == 0 {
                continue;
            }
            let v = valuation(x, ell, e);
            if best.map_or(true, |b| v < b.2) {
                best = Some((i, j, v));
                if v == 0 {
                    return best;
                }
            }
        }
    }
    best
}

/// Smith normal form over `Z/ℓᵉZ`: `u * a * v` is diagonal with entries `ℓ^{exponents[i]}`.
#[derive(Clone, Debug)]
pub struct Snf {
    pub ell: u64,
    pub e: u32,
    pub exponents: Vec<u32>,
    pub u: MatrixMod,
    pub v: MatrixMod,
}

fn prime_power_of(n: u64) -> Result<(u64, u32)> {
    Modulus::new(n)?.as_prime_power().ok_or(Error::NotPrimePower(n))
}

pub fn smith_normal_form(a: &MatrixMod) -> Result<Snf> {
    let (ell, e) = prime_power_of(a.n)?;
    let n = a.n;
    let mut m = a.clone();
    let mut u = MatrixMod::identity(a.rows, n);
    let mut v = MatrixMod::identity(a.cols, n);
    let d = a.rows.min(a.cols);
    let mut exponents = Vec::with_capacity(d);
    for k in 0..d {
        let Some((i, j, val)) = min_valuation_entry(&m, k, ell, e) else {
            exponents.resize(d, e);
            break;
        };
        m.swap_rows(i, k);
        u.swap_rows(i, k);
        m.swap_cols(j, k);
        v.swap_cols(j, k);
        let lv = ell.pow(val);
        let uinv = inv_mod(m.get(k, k) / lv, n).expect("unit part");
        m.scale_row(k, uinv);
        u.scale_row(k, uinv);
        for r in k + 1..m.rows {
            let c = m.get(r, k) / lv;
            if c != 0 {
                m.row_axpy(r, k, c);
                u.row_axpy(r, k, c);
            }
        }
        for c in k + 1..m.cols {
            let f = m.get(k, c) / lv;
            if f != 0 {
                m.col_axpy(c, k, f);
                v.col_axpy(c, k, f);
            }
        }
        exponents.push(val);
    }
    Ok(Snf { ell, e, exponents, u, v })
}

/// Smith exponents only (no transforms). Faster path for hot loops.
pub fn snf_exponents(a: &MatrixMod) -> Result<Vec<u32>> {
    let (ell, e) = prime_power_of(a.n)?;
    Ok(snf_exponents_pp(a, ell, e))
}

pub(crate) fn snf_exponents_pp(a: &MatrixMod, ell: u64, e: u32) -> Vec<u32> {
    let n = a.n;
    let mut m = a.clone();
    let d = a.rows.min(a.cols);
    let mut exps = Vec::with_capacity(d);
    for k in 0..d {
        let Some((i, j, val)) = min_valuation_entry(&m, k, ell, e) else {
            exps.resize(d, e);
            break;
        };
        m.swap_rows(i, k);
        m.swap_cols(j, k);
        let lv = ell.pow(val);
        let uinv = inv_mod(m.get(k, k) / lv, n).expect("unit part");
        for r in k + 1..m.rows {
            let c = m.get(r, k) / lv;
            if c != 0 {
                m.row_axpy(r, k, mul_mod(c, uinv, n));
            }
        }
        // Only the row k entries beyond the pivot need clearing, and they do
        // not influence later pivots once the column below is zero.
        for c in k + 1..m.cols {
            m.data[k * m.cols + c] = 0;
        }
        exps.push(val);
    }
    exps
}

/// Isomorphism class of `{x : a·x = 0}` over `Z/ℓᵉZ`.
pub fn kernel_class(a: &MatrixMod) -> Result<ModuleClass> {
    let (ell, e) = prime_power_of(a.n)?;
    let mut exps = snf_exponents_pp(a, ell, e);
    if a.cols > a.rows {
        exps.extend(std::iter::repeat(e).take(a.cols - a.rows));
    }
    Ok(ModuleClass::from_exponents(ell, exps))
}

/// Isomorphism class of `{x : a·x = 0}` over `Z/nZ`, prime by prime.
pub fn kernel_class_mod_n(a: &MatrixMod) -> Result<ModuleClass> {
    let mut out = ModuleClass::trivial();
    for (_, _, part) in crt_split(a)? {
        out = out.direct_sum(&kernel_class(&part)?);
    }
    Ok(out)
}

/// Split a matrix over `Z/nZ` into its prime-power components `(ℓ, e, A mod ℓᵉ)`.
pub fn crt_split(a: &MatrixMod) -> Result<Vec<(u64, u32, MatrixMod)>> {
    let m = Modulus::new(a.n)?;
    Ok(m.factors().iter().map(|&(p, e)| (p, e, a.reduce(p.pow(e)))).collect())
}

/// Inverse of [`crt_split`].
pub fn crt_join(parts: &[(u64, u32, MatrixMod)]) -> MatrixMod {
    assert!(!parts.is_empty());
    let (rows, cols) = (parts[0].2.rows, parts[0].2.cols);
    let n: u64 = parts.iter().map(|(p, e, _)| p.pow(*e)).product();
    let mut data = Vec::with_capacity(rows * cols);
    let mut buf = Vec::with_capacity(parts.len());
    for idx in 0..rows * cols {
        buf.clear();
        buf.extend(parts.iter().map(|(p, e, m)| (m.data[idx], p.pow(*e))));
        data.push(crt_combine(&buf));
    }
    MatrixMod { rows, cols, n, data }
}

/// Isomorphism class of a finite `Z/nZ`-module: per prime, the exponents of
/// its cyclic factors in descending order. Primes with trivial part are omitted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModuleClass {
    parts: BTreeMap<u64, Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct PrimePart {
    ell: u64,
    exps: Vec<u32>,
}

impl ModuleClass {
    pub fn trivial() -> Self {
        Self::default()
    }

    /// `⊕ Z/ℓ^{a}` over the given exponents; zeros are dropped.
    pub fn from_exponents(ell: u64, exps: impl IntoIterator<Item = u32>) -> Self {
        let mut c = Self::default();
        c.add_exponents(ell, exps);
        c
    }

    /// `(Z/ℓ)^dim`.
    pub fn elementary(ell: u64, dim: usize) -> Self {
        Self::from_exponents(ell, std::iter::repeat(1).take(dim))
    }

    fn add_exponents(&mut self, ell: u64, exps: impl IntoIterator<Item = u32>) {
        let entry = self.parts.entry(ell).or_default();
        entry.extend(exps.into_iter().filter(|&a| a > 0));
        entry.sort_unstable_by(|a, b| b.cmp(a));
        if entry.is_empty() {
            self.parts.remove(&ell);
        }
    }

    pub fn direct_sum(&self, other: &ModuleClass) -> ModuleClass {
        let mut out = self.clone();
        for (&ell, exps) in &other.parts {
            out.add_exponents(ell, exps.iter().copied());
        }
        out
    }

    pub fn is_trivial(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.parts.keys().copied()
    }

    pub fn exponents(&self, ell: u64) -> &[u32] {
        self.parts.get(&ell).map_or(&[], |v| v.as_slice())
    }

    /// Number of cyclic factors at `ℓ`, i.e. `dim_{F_ℓ} G/ℓG`.
    pub fn rank_at(&self, ell: u64) -> usize {
        self.exponents(ell).len()
    }

    /// `#{a_i ≥ j}` at `ℓ`, which is `dim_{F_ℓ} ℓ^{j−1}G[ℓʲ]`.
    pub fn count_at_least(&self, ell: u64, j: u32) -> usize {
        self.exponents(ell).iter().filter(|&&a| a >= j).count()
    }

    /// `log_ℓ` of the `ℓ`-part of the order.
    pub fn log_order(&self, ell: u64) -> u32 {
        self.exponents(ell).iter().sum()
    }

    pub fn order(&self) -> BigUint {
        self.parts
            .iter()
            .fold(BigUint::from(1u32), |acc, (&ell, exps)| {
                acc * BigUint::from(ell).pow(exps.iter().sum::<u32>())
            })
    }

    /// `G[ℓᵉ]` at `ℓ`, other primes unchanged.
    pub fn truncate(&self, ell: u64, e: u32) -> ModuleClass {
        let mut out = self.clone();
        if let Some(v) = out.parts.get_mut(&ell) {
            for a in v.iter_mut() {
                *a = (*a).min(e);
            }
        }
        out
    }

    /// The `ℓ`-primary part.
    pub fn primary(&self, ell: u64) -> ModuleClass {
        Self::from_exponents(ell, self.exponents(ell).iter().copied())
    }
}

impl fmt::Display for ModuleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.parts.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (&ell, exps) in &self.parts {
            let mut i = 0;
            while i < exps.len() {
                let a = exps[i];
                let k = exps[i..].iter().take_while(|&&b| b == a).count();
                if !first {
                    write!(f, " + ")?;
                }
                first = false;
                let q = ell.pow(a);
                if k == 1 {
                    write!(f, "Z/{q}")?;
                } else {
                    write!(f, "(Z/{q})^{k}")?;
                }
                i += k;
            }
        }
        Ok(())
    }
}

impl Serialize for ModuleClass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<PrimePart> = self
            .parts
            .iter()
            .map(|(&ell, exps)| PrimePart { ell, exps: exps.clone() })
            .collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModuleClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<PrimePart>::deserialize(d)?;
        let mut c = ModuleClass::default();
        for p in v {
            if p.exps.contains(&0) {
                return Err(serde::de::Error::custom("exponents must be positive"));
            }
            c.add_exponents(p.ell, p.exps);
        }
        Ok(c)
    }
}

/// Reduced row echelon form over `F_p`; returns the pivot columns.
fn rref_mod_prime(m: &mut MatrixMod) -> Vec<usize> {
    let p = m.n;
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..m.cols {
        if r == m.rows {
            break;
        }
        let Some(piv) = (r..m.rows).find(|&i| m.get(i, c) != 0) else {
            continue;
        };
        m.swap_rows(piv, r);
        let inv = inv_mod(m.get(r, c), p).expect("prime modulus");
        m.scale_row(r, inv);
        for i in 0..m.rows {
            if i != r {
                let f = m.get(i, c);
                if f != 0 {
                    m.row_axpy(i, r, f);
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

/// Basis of `{x : a·x = 0}` over `F_p`.
pub fn nullspace_mod_prime(a: &MatrixMod) -> Vec<Vec<u64>> {
    let p = a.n;
    let mut m = a.clone();
    let pivots = rref_mod_prime(&mut m);
    let free: Vec<usize> = (0..a.cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&fc| {
            let mut x = vec![0u64; a.cols];
            x[fc] = 1;
            for (r, &pc) in pivots.iter().enumerate() {
                x[pc] = neg_mod(m.get(r, fc), p);
            }
            x
        })
        .collect()
}

/// One solution of `a·x = b` over `F_p`, if any.
pub fn solve_mod_prime(a: &MatrixMod, b: &[u64]) -> Option<Vec<u64>> {
    let p = a.n;
    let mut aug = MatrixMod::from_fn(a.rows, a.cols + 1, p, |i, j| {
        if j < a.cols {
            a.get(i, j)
        } else {
            b[i]
        }
    });
    let pivots = rref_mod_prime(&mut aug);
    if pivots.last() == Some(&a.cols) {
        return None;
    }
    let mut x = vec![0u64; a.cols];
    for (r, &pc) in pivots.iter().enumerate() {
        x[pc] = aug.get(r, a.cols);
    }
    Some(x)
}
