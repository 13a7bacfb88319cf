//! The orthogonal group `O(Q)`: invariants, uniform sampling, coset sampling
//! and exhaustive enumeration.
//!
//! All heavy lifting happens prime by prime on the standard split form
//! `x₁x₂ + x₃x₄ + ⋯` over `Z/ℓᵉZ`. A general split space is handled by
//! conjugating with a hyperbolic basis.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modring::{
    add_mod, crt_join, inv_mod, is_nonsquare_mod_prime, mul_mod, neg_mod, nullspace_mod_prime,
    pow_mod, rank_in_place, solve_mod_prime, sub_mod, MatrixMod, Modulus,
};
use crate::quadspace::{QuadSpace, Vector};

/// Default bound on the order of a group that may be enumerated.
pub const DEFAULT_BUDGET: u64 = 100_000_000;

/// Default number of rejection rounds in [`sample_coset`].
pub const DEFAULT_RETRY_CAP: usize = 1024;

/// An isometry together with its Dickson invariant and spinor class at each prime.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrthoElem {
    g: MatrixMod,
    /// `(ℓ, D(g mod ℓ))`.
    dickson: Vec<(u64, bool)>,
    /// `(ℓ, nonsquare?)`; `None` where the spinor norm is unsupported (`ℓ = 2`, `e ≥ 2`).
    spinor: Vec<(u64, Option<bool>)>,
}

impl OrthoElem {
    /// Check that `g` preserves the form and compute its invariants.
    pub fn new(space: &QuadSpace, g: MatrixMod) -> Result<Self> {
        if !space.isometry_check(&g) {
            return Err(Error::InvalidParameter("matrix is not an isometry".into()));
        }
        let group = OrthoGroup::new(space)?;
        Ok(group.element(g))
    }

    pub fn matrix(&self) -> &MatrixMod {
        &self.g
    }

    pub fn into_matrix(self) -> MatrixMod {
        self.g
    }

    pub fn dickson_bits(&self) -> &[(u64, bool)] {
        &self.dickson
    }

    pub fn dickson_at(&self, ell: u64) -> Option<bool> {
        self.dickson.iter().find(|d| d.0 == ell).map(|d| d.1)
    }

    /// Spinor classes at every prime; errors where unsupported.
    pub fn spinor_bits(&self) -> Result<Vec<(u64, bool)>> {
        self.spinor
            .iter()
            .map(|&(p, s)| s.map(|b| (p, b)).ok_or(Error::UnsupportedSpinorModulus(p)))
            .collect()
    }

    pub fn spinor_at(&self, ell: u64) -> Result<bool> {
        match self.spinor.iter().find(|s| s.0 == ell) {
            Some(&(_, Some(b))) => Ok(b),
            Some(&(p, None)) => Err(Error::UnsupportedSpinorModulus(p)),
            None => Err(Error::InvalidParameter(format!("{ell} does not divide the modulus"))),
        }
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &OrthoElem) -> OrthoElem {
        let g = self.g.mul(&other.g);
        let dickson = self.dickson.iter().zip(&other.dickson).map(|(a, b)| (a.0, a.1 ^ b.1)).collect();
        let spinor = self
            .spinor
            .iter()
            .zip(&other.spinor)
            .map(|(a, b)| (a.0, a.1.zip(b.1).map(|(x, y)| x ^ y)))
            .collect();
        OrthoElem { g, dickson, spinor }
    }
}

/// Dickson invariant at each prime: `dim ker(g − 1)` over `F_ℓ`, mod 2.
pub fn dickson(g: &OrthoElem) -> Vec<(u64, bool)> {
    g.dickson.clone()
}

/// Spinor class (`true` = non-square) at each prime.
pub fn spinor(g: &OrthoElem) -> Result<Vec<(u64, bool)>> {
    g.spinor_bits()
}

/// Required Dickson value(s) of a coset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DicksonTarget {
    /// Dickson invariant 0 at every prime.
    Zero,
    /// Dickson invariant 1 at every prime.
    One,
    /// Equal at every prime, either value.
    Diagonal,
    /// Unconstrained.
    Any,
}

/// A union of cosets of `Ω(Q)`, described by its Dickson and spinor targets.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CosetSpec {
    pub dickson: DicksonTarget,
    /// `(ℓ, required nonsquare bit)` for each constrained odd prime.
    pub spinor: Vec<(u64, bool)>,
}

impl CosetSpec {
    /// The whole group.
    pub fn full() -> Self {
        CosetSpec { dickson: DicksonTarget::Any, spinor: Vec::new() }
    }

    /// `Ω(Q)`: trivial Dickson invariant and spinor class at every odd prime.
    pub fn omega(modulus: &Modulus) -> Self {
        CosetSpec {
            dickson: DicksonTarget::Zero,
            spinor: odd_primes(modulus).map(|p| (p, false)).collect(),
        }
    }

    /// The kernel of the Dickson invariant.
    pub fn dickson_kernel() -> Self {
        CosetSpec { dickson: DicksonTarget::Zero, spinor: Vec::new() }
    }

    /// The complement of the Dickson kernel.
    pub fn dickson_complement() -> Self {
        CosetSpec { dickson: DicksonTarget::One, spinor: Vec::new() }
    }

    /// `D⁻¹(Δ(Z/2)) ∩ sp⁻¹([q^{d−1}])` for the modulus `n`.
    pub fn from_height(modulus: &Modulus, d: u32, q: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("height must be at least 1".into()));
        }
        if q < 2 || Modulus::new(q)?.as_prime_power().is_none() {
            return Err(Error::InvalidParameter(format!("q = {q} is not a prime power")));
        }
        if num_integer::gcd(q, 2 * modulus.n()) != 1 {
            return Err(Error::InvalidParameter(format!("gcd(q, 2n) must be 1, got q = {q}, n = {}", modulus.n())));
        }
        let spinor = odd_primes(modulus)
            .map(|p| (p, is_nonsquare_mod_prime(pow_mod(q % p, (d - 1) as u64, p), p)))
            .collect();
        Ok(CosetSpec { dickson: DicksonTarget::Diagonal, spinor })
    }

    /// Explicit square classes per odd prime (`true` = non-square).
    pub fn from_square_classes(dickson: DicksonTarget, classes: Vec<(u64, bool)>) -> Self {
        CosetSpec { dickson, spinor: classes }
    }

    pub fn contains(&self, elem: &OrthoElem) -> bool {
        self.contains_bits(&elem.dickson, &elem.spinor)
    }

    pub fn contains_bits(&self, dickson: &[(u64, bool)], spinor: &[(u64, Option<bool>)]) -> bool {
        let ok_d = match self.dickson {
            DicksonTarget::Zero => dickson.iter().all(|d| !d.1),
            DicksonTarget::One => dickson.iter().all(|d| d.1),
            DicksonTarget::Diagonal => dickson.windows(2).all(|w| w[0].1 == w[1].1),
            DicksonTarget::Any => true,
        };
        ok_d && self.spinor.iter().all(|&(p, want)| {
            match spinor.iter().find(|s| s.0 == p) {
                Some(&(_, Some(b))) => b == want,
                Some(&(_, None)) => false,
                // primes not dividing the modulus impose nothing
                None => true,
            }
        })
    }
}

fn odd_primes(m: &Modulus) -> impl Iterator<Item = u64> + '_ {
    m.factors().iter().map(|f| f.0).filter(|&p| p != 2)
}

/// `|O(2m, Z/ℓᵉ)|` for the split form.
pub fn orthogonal_group_order(m: usize, ell: u64, e: u32) -> BigUint {
    let q = BigUint::from(ell);
    let m32 = m as u32;
    let mut order = BigUint::from(2u32) * q.pow(m32 * (m32 - 1)) * (q.pow(m32) - 1u32);
    for i in 1..m32 {
        order *= q.pow(2 * i) - 1u32;
    }
    order * q.pow((e - 1) * m32 * (2 * m32 - 1))
}

// ---------------------------------------------------------------------------
// standard split form helpers (coordinates e₁, f₁, e₂, f₂, …)

/// Below this modulus, sums of products are accumulated unreduced.
const LAZY: u64 = 1 << 16;

#[inline]
fn std_q(x: &[u64], q: u64) -> u64 {
    if q < LAZY {
        return x.chunks_exact(2).map(|p| p[0] * p[1]).sum::<u64>() % q;
    }
    let mut s = 0;
    for k in (0..x.len()).step_by(2) {
        s = add_mod(s, mul_mod(x[k], x[k + 1], q), q);
    }
    s
}

#[inline]
fn std_b(x: &[u64], y: &[u64], q: u64) -> u64 {
    if q < LAZY {
        let s: u64 = x.chunks_exact(2).zip(y.chunks_exact(2)).map(|(a, b)| a[0] * b[1] + a[1] * b[0]).sum();
        return s % q;
    }
    let mut s = 0;
    for k in (0..x.len()).step_by(2) {
        s = add_mod(s, mul_mod(x[k], y[k + 1], q), q);
        s = add_mod(s, mul_mod(x[k + 1], y[k], q), q);
    }
    s
}

/// Apply the reflection `r_w` on the left of the row-major `h`.
fn reflect_left(h: &mut [u64], n: usize, w: &[u64], qw_inv: u64, q: u64) {
    if q < LAZY {
        let mut s = vec![0u64; n];
        for k in (0..n).step_by(2) {
            let (a, b) = (w[k], w[k + 1]);
            if a == 0 && b == 0 {
                continue;
            }
            let (rk, rk1) = (&h[k * n..k * n + n], &h[(k + 1) * n..(k + 2) * n]);
            for j in 0..n {
                s[j] += a * rk1[j] + b * rk[j];
            }
        }
        for sj in s.iter_mut() {
            *sj = *sj % q * qw_inv % q;
        }
        let qq = q * q;
        for i in 0..n {
            let wi = w[i];
            if wi == 0 {
                continue;
            }
            for j in 0..n {
                h[i * n + j] = (h[i * n + j] + qq - wi * s[j]) % q;
            }
        }
        return;
    }
    // s_j = B(w, h e_j)
    let mut s = vec![0u64; n];
    for (j, sj) in s.iter_mut().enumerate() {
        let mut acc = 0;
        for k in (0..n).step_by(2) {
            acc = add_mod(acc, mul_mod(w[k], h[(k + 1) * n + j], q), q);
            acc = add_mod(acc, mul_mod(w[k + 1], h[k * n + j], q), q);
        }
        *sj = mul_mod(acc, qw_inv, q);
    }
    for i in 0..n {
        if w[i] == 0 {
            continue;
        }
        for j in 0..n {
            h[i * n + j] = sub_mod(h[i * n + j], mul_mod(w[i], s[j], q), q);
        }
    }
}

/// Cartan–Dieudonné descent for the standard split form over `Z/ℓᵉ`, `ℓ` odd.
/// Returns `(number of reflections, nonsquare spinor class)`.
pub(crate) fn spinor_descent_std(g: &[u64], n: usize, ell: u64, q: u64) -> (usize, bool) {
    let mut h = g.to_vec();
    let mut count = 0usize;
    let mut class = false;
    let mut x = vec![0u64; n];
    let mut y = vec![0u64; n];
    let mut w = vec![0u64; n];
    for i in 0..n {
        // orthogonal basis: e_k + f_k (norm 1), e_k − f_k (norm −1)
        x.iter_mut().for_each(|c| *c = 0);
        let k = i / 2 * 2;
        x[k] = 1;
        x[k + 1] = if i % 2 == 0 { 1 } else { q - 1 };
        let qx = if i % 2 == 0 { 1 } else { q - 1 };
        for r in 0..n {
            y[r] = add_mod(h[r * n + k], mul_mod(x[k + 1], h[r * n + k + 1], q), q);
        }
        if y == x {
            continue;
        }
        for r in 0..n {
            w[r] = sub_mod(y[r], x[r], q);
        }
        let qw = std_q(&w, q);
        if qw % ell != 0 {
            reflect_left(&mut h, n, &w, inv_mod(qw, q).unwrap(), q);
            class ^= is_nonsquare_mod_prime(neg_mod(qw, q), ell);
            count += 1;
        } else {
            for r in 0..n {
                w[r] = add_mod(y[r], x[r], q);
            }
            let qw2 = std_q(&w, q);
            debug_assert!(qw2 % ell != 0);
            reflect_left(&mut h, n, &w, inv_mod(qw2, q).unwrap(), q);
            reflect_left(&mut h, n, &x, inv_mod(qx, q).unwrap(), q);
            class ^= is_nonsquare_mod_prime(neg_mod(qw2, q), ell);
            class ^= is_nonsquare_mod_prime(neg_mod(qx, q), ell);
            count += 2;
        }
    }
    debug_assert!((0..n).all(|i| (0..n).all(|j| h[i * n + j] == u64::from(i == j))));
    (count, class)
}

/// `dim ker(g − 1)` over `F_p` for a row-major matrix with entries mod a power of `p`.
pub(crate) fn fixed_dim_mod_p(g: &[u64], n: usize, p: u64) -> usize {
    let mut a: Vec<u64> = g.iter().map(|&x| x % p).collect();
    for i in 0..n {
        a[i * n + i] = sub_mod(a[i * n + i], 1, p);
    }
    n - rank_in_place(&mut a, n, n, p)
}

/// Uniform element of `O` of the standard split form over `Z/ℓᵉ`, row-major.
///
/// The images of `e₁, f₁, e₂, f₂, …` are chosen one hyperbolic pair at a
/// time, each uniformly among the pairs in the orthogonal complement of the
/// pairs chosen so far.
pub(crate) fn sample_std<R: Rng + ?Sized>(m: usize, ell: u64, q: u64, rng: &mut R) -> Vec<u64> {
    let n = 2 * m;
    let mut cols: Vec<Vec<u64>> = Vec::with_capacity(n);
    let mut z = vec![0u64; n];
    let project = |z: &mut Vec<u64>, cols: &[Vec<u64>]| {
        for pair in cols.chunks(2) {
            let (e, f) = (&pair[0], &pair[1]);
            let bf = std_b(z, f, q);
            let be = std_b(z, e, q);
            if q < LAZY {
                let qq2 = 2 * q * q;
                for k in 0..n {
                    z[k] = (z[k] + qq2 - bf * e[k] - be * f[k]) % q;
                }
            } else {
                for k in 0..n {
                    z[k] = sub_mod(z[k], add_mod(mul_mod(bf, e[k], q), mul_mod(be, f[k], q), q), q);
                }
            }
        }
    };
    for _ in 0..m {
        let e1 = loop {
            z.iter_mut().for_each(|c| *c = rng.gen_range(0..q));
            project(&mut z, &cols);
            if std_q(&z, q) == 0 && z.iter().any(|&c| c % ell != 0) {
                break z.clone();
            }
        };
        // w₀ with B(e′, w₀) = 1
        let mut w0 = vec![0u64; n];
        for i in 0..n {
            w0.iter_mut().for_each(|c| *c = 0);
            w0[i] = 1;
            project(&mut w0, &cols);
            let c = std_b(&e1, &w0, q);
            if c % ell != 0 {
                let ci = inv_mod(c, q).unwrap();
                w0.iter_mut().for_each(|x| *x = mul_mod(*x, ci, q));
                break;
            }
        }
        let qw = std_q(&w0, q);
        let f0: Vec<u64> = (0..n).map(|k| sub_mod(w0[k], mul_mod(qw, e1[k], q), q)).collect();
        // u uniform in ⟨e′, f₀⟩^⊥ within the current complement
        z.iter_mut().for_each(|c| *c = rng.gen_range(0..q));
        project(&mut z, &cols);
        let bf = std_b(&z, &f0, q);
        let be = std_b(&z, &e1, q);
        let u: Vec<u64> = (0..n)
            .map(|k| sub_mod(z[k], add_mod(mul_mod(bf, e1[k], q), mul_mod(be, f0[k], q), q), q))
            .collect();
        let qu = std_q(&u, q);
        let f1: Vec<u64> =
            (0..n).map(|k| sub_mod(add_mod(f0[k], u[k], q), mul_mod(qu, e1[k], q), q)).collect();
        cols.push(e1);
        cols.push(f1);
    }
    let mut g = vec![0u64; n * n];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            g[i * n + j] = c[i];
        }
    }
    g
}

// ---------------------------------------------------------------------------
// Lie kernel and Hensel lifting

/// `S(M)`: the upper-triangular fold of a square matrix, flattened.
fn fold_flat(m: &[u64], n: usize, q: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        out.push(m[i * n + i]);
        for j in i + 1..n {
            out.push(add_mod(m[i * n + j], m[j * n + i], q));
        }
    }
    out
}

/// `Yᵀ·A + C·Y` where `A = theta·g₀`, `C = g₀ᵀ·theta`, reduced mod `p`.
fn linearized(y: &[u64], a: &[u64], c: &[u64], n: usize, p: u64) -> Vec<u64> {
    let mut out = vec![0u64; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0;
            for k in 0..n {
                s = add_mod(s, mul_mod(y[k * n + i], a[k * n + j], p), p);
                s = add_mod(s, mul_mod(c[i * n + k], y[k * n + j], p), p);
            }
            out[i * n + j] = s;
        }
    }
    out
}

fn mat_mul_flat(a: &[u64], b: &[u64], n: usize, q: u64) -> Vec<u64> {
    let mut out = vec![0u64; n * n];
    for i in 0..n {
        for k in 0..n {
            let x = a[i * n + k];
            if x == 0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] = add_mod(out[i * n + j], mul_mod(x, b[k * n + j], q), q);
            }
        }
    }
    out
}

fn transpose_flat(a: &[u64], n: usize) -> Vec<u64> {
    let mut out = vec![0u64; n * n];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = a[i * n + j];
        }
    }
    out
}

fn std_theta(n: usize) -> Vec<u64> {
    let mut t = vec![0u64; n * n];
    for k in (0..n).step_by(2) {
        t[k * n + k + 1] = 1;
    }
    t
}

/// Matrix (over `F_p`) of the map `Y ↦ S(Yᵀ·theta·g₀ + g₀ᵀ·theta·Y)`.
fn linearization_matrix(g0: &[u64], n: usize, p: u64) -> MatrixMod {
    let theta = std_theta(n);
    let g0p: Vec<u64> = g0.iter().map(|&x| x % p).collect();
    let a = mat_mul_flat(&theta, &g0p, n, p);
    let c = mat_mul_flat(&transpose_flat(&g0p, n), &theta, n, p);
    let rows = n * (n + 1) / 2;
    let mut m = MatrixMod::zeros(rows, n * n, p);
    let mut y = vec![0u64; n * n];
    for idx in 0..n * n {
        y[idx] = 1;
        let img = fold_flat(&linearized(&y, &a, &c, n, p), n, p);
        for (r, &v) in img.iter().enumerate() {
            m.set(r, idx, v);
        }
        y[idx] = 0;
    }
    m
}

/// Basis of the Lie kernel `{X : S(Xᵀ·theta + theta·X) ≡ 0 mod p}` of the
/// standard split form, each element row-major.
pub fn lie_kernel_basis(m: usize, p: u64) -> Vec<Vec<u64>> {
    let n = 2 * m;
    let id: Vec<u64> = (0..n * n).map(|i| u64::from(i % (n + 1) == 0)).collect();
    nullspace_mod_prime(&linearization_matrix(&id, n, p))
}

/// Given `g₀` (entries mod `ℓʲ`) preserving the standard form mod `ℓʲ`,
/// a lift mod `ℓ^{j+1}` preserving it mod `ℓ^{j+1}`.
pub(crate) fn hensel_lift_std(g0: &[u64], n: usize, ell: u64, j: u32) -> Vec<u64> {
    let lj = ell.pow(j);
    let q1 = lj * ell;
    let theta = std_theta(n);
    let gt = transpose_flat(g0, n);
    let e = mat_mul_flat(&mat_mul_flat(&gt, &theta, n, q1), g0, n, q1);
    let mut diff = e;
    for k in (0..n).step_by(2) {
        diff[k * n + k + 1] = sub_mod(diff[k * n + k + 1], 1, q1);
    }
    let s: Vec<u64> = fold_flat(&diff, n, q1)
        .into_iter()
        .map(|x| {
            debug_assert_eq!(x % lj, 0);
            neg_mod((x / lj) % ell, ell)
        })
        .collect();
    let lin = linearization_matrix(g0, n, ell);
    let y = solve_mod_prime(&lin, &s).expect("Hensel step is always solvable for smooth O");
    (0..n * n).map(|i| add_mod(g0[i] % q1, mul_mod(lj, y[i], q1), q1)).collect()
}

// ---------------------------------------------------------------------------
// exhaustive enumeration over a prime field

/// Element of `O(2m, F_p)` of the standard split form with its invariants.
#[derive(Clone, Debug)]
pub(crate) struct FieldElem {
    pub g: Vec<u64>,
    pub dickson: bool,
    pub spinor: bool,
}

/// A coset representative `k` for the decision tree: columns
/// `e′, f′, φ₁, …` with `φ` a hyperbolic basis of `⟨e′, f′⟩^⊥`.
pub(crate) struct TreeNode {
    pub k: Vec<u64>,
    pub dickson: bool,
    pub spinor: bool,
}

fn invariants_field(g: &[u64], n: usize, p: u64) -> (bool, bool) {
    let dickson = fixed_dim_mod_p(g, n, p) % 2 == 1;
    let spinor = if p == 2 { false } else { spinor_descent_std(g, n, p, p).1 };
    (dickson, spinor)
}

/// All hyperbolic pairs `(e′, f′)` of the standard split form over `Z/ℓᵉ`.
pub(crate) fn hyperbolic_pairs(m: usize, ell: u64, q: u64) -> Vec<(Vector, Vector)> {
    let n = 2 * m;
    let space = QuadSpace::build_standard_split(m, &Modulus::new(q).unwrap()).unwrap();
    let mut out = Vec::new();
    let mut x = vec![0u64; n];
    loop {
        let mut k = 0;
        loop {
            if k == n {
                return out;
            }
            x[k] += 1;
            if x[k] < q {
                break;
            }
            x[k] = 0;
            k += 1;
        }
        if std_q(&x, q) != 0 || x.iter().all(|&c| c % ell == 0) {
            continue;
        }
        let f0 = space.complete_pair(&x).unwrap();
        if m == 1 {
            out.push((x.clone(), f0));
            continue;
        }
        let (_, comp) = space.split_off(&x, &f0).unwrap();
        let dim = n - 2;
        let total = (q as u128).pow(dim as u32);
        let mut coef = vec![0u64; dim];
        for _ in 0..total {
            let u = comp.apply(&coef);
            let qu = std_q(&u, q);
            let f: Vec<u64> = (0..n)
                .map(|i| sub_mod(add_mod(f0[i], u[i], q), mul_mod(qu, x[i], q), q))
                .collect();
            out.push((x.clone(), f));
            for c in coef.iter_mut() {
                *c += 1;
                if *c < q {
                    break;
                }
                *c = 0;
            }
        }
    }
}

/// Decision-tree representatives `k(e′, f′)` for `O(2m, F_p)`.
pub(crate) fn tree_nodes(m: usize, p: u64) -> Vec<TreeNode> {
    let n = 2 * m;
    let space = QuadSpace::build_standard_split(m, &Modulus::new(p).unwrap()).unwrap();
    hyperbolic_pairs(m, p, p)
        .into_iter()
        .map(|(e, f)| {
            let mut cols = vec![e.clone(), f.clone()];
            if m > 1 {
                let (sub, c) = space.split_off(&e, &f).unwrap();
                let hb = c.mul(&sub.hyperbolic_basis().unwrap());
                for j in 0..n - 2 {
                    cols.push(hb.column(j));
                }
            }
            let mut k = vec![0u64; n * n];
            for (j, c) in cols.iter().enumerate() {
                for i in 0..n {
                    k[i * n + j] = c[i];
                }
            }
            let (dickson, spinor) = invariants_field(&k, n, p);
            TreeNode { k, dickson, spinor }
        })
        .collect()
}

/// `k·(1 ⊕ h)` into `out`.
pub(crate) fn tree_combine(k: &[u64], h: &[u64], n: usize, p: u64, out: &mut [u64]) {
    let s = n - 2;
    for i in 0..n {
        out[i * n] = k[i * n];
        out[i * n + 1] = k[i * n + 1];
        for j in 0..s {
            let mut acc = 0;
            for t in 0..s {
                acc += k[i * n + 2 + t] * h[t * s + j];
            }
            out[i * n + 2 + j] = acc % p;
        }
    }
}

type FieldCache = Mutex<HashMap<(usize, u64), Arc<Vec<FieldElem>>>>;

fn field_cache() -> &'static FieldCache {
    static CACHE: OnceLock<FieldCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// All of `O(2m, F_p)` (standard split form), materialized and cached.
pub(crate) fn field_group(m: usize, p: u64) -> Arc<Vec<FieldElem>> {
    if let Some(v) = field_cache().lock().unwrap().get(&(m, p)) {
        return v.clone();
    }
    let mut out = Vec::new();
    for_each_field_element(m, p, |g, d, s| {
        out.push(FieldElem { g: g.to_vec(), dickson: d, spinor: s });
    });
    let v = Arc::new(out);
    field_cache().lock().unwrap().insert((m, p), v.clone());
    v
}

/// Visit every element of `O(2m, F_p)` (standard split form) once, as a
/// row-major matrix with its Dickson and spinor bits.
pub(crate) fn for_each_field_element(m: usize, p: u64, mut f: impl FnMut(&[u64], bool, bool)) {
    let n = 2 * m;
    let nodes = tree_nodes(m, p);
    if m == 1 {
        for node in &nodes {
            f(&node.k, node.dickson, node.spinor);
        }
        return;
    }
    let sub = field_group(m - 1, p);
    let mut buf = vec![0u64; n * n];
    for node in &nodes {
        for h in sub.iter() {
            tree_combine(&node.k, &h.g, n, p, &mut buf);
            f(&buf, node.dickson ^ h.dickson, node.spinor ^ h.spinor);
        }
    }
}

/// Visit every element of `O(2m, Z/ℓᵉ)` (standard split form): each residue
/// element is Hensel-lifted once per level and then multiplied by all
/// `1 + ℓʲX` with `X` in the Lie kernel.
pub(crate) fn for_each_std_element(m: usize, ell: u64, e: u32, mut f: impl FnMut(&[u64], bool, bool)) {
    let n = 2 * m;
    if e == 1 {
        for_each_field_element(m, ell, f);
        return;
    }
    let lie = lie_kernel_basis(m, ell);
    let base = field_group(m, ell);
    for h in base.iter() {
        lift_rec(&h.g, 1, e, n, ell, &lie, &mut |g| f(g, h.dickson, h.spinor));
    }
}

fn lift_rec(g: &[u64], j: u32, e: u32, n: usize, ell: u64, lie: &[Vec<u64>], f: &mut dyn FnMut(&[u64])) {
    if j == e {
        f(g);
        return;
    }
    let lj = ell.pow(j);
    let q1 = lj * ell;
    let hat = hensel_lift_std(g, n, ell, j);
    let gp: Vec<u64> = g.iter().map(|&x| x % ell).collect();
    let dirs: Vec<Vec<u64>> = lie.iter().map(|x| mat_mul_flat(&gp, x, n, ell)).collect();
    let mut coef = vec![0u64; dirs.len()];
    let mut cur = hat.clone();
    loop {
        lift_rec(&cur, j + 1, e, n, ell, lie, f);
        // odometer step over F_ℓ^{dim}, updating `cur` incrementally
        let mut k = 0;
        loop {
            if k == dirs.len() {
                return;
            }
            coef[k] += 1;
            let wrap = coef[k] == ell;
            for i in 0..n * n {
                let step = mul_mod(lj, dirs[k][i], q1);
                cur[i] = add_mod(cur[i], step, q1);
            }
            if !wrap {
                break;
            }
            coef[k] = 0;
            k += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// per-prime components and the group object

#[derive(Clone, Debug)]
struct Component {
    ell: u64,
    e: u32,
    q: u64,
    /// Hyperbolic basis `P` and its inverse, when the component form is not standard.
    basis: Option<(MatrixMod, MatrixMod)>,
}

/// `O(Q)` for a split quadratic space, with per-prime data precomputed.
#[derive(Clone, Debug)]
pub struct OrthoGroup {
    space: QuadSpace,
    comps: Vec<Component>,
}

impl OrthoGroup {
    pub fn new(space: &QuadSpace) -> Result<Self> {
        let mut comps = Vec::new();
        for &(ell, e) in space.modulus().factors() {
            let local = space.component(ell)?;
            let basis = if local.is_standard_split() {
                None
            } else {
                let p = local.hyperbolic_basis()?;
                let pi = p.inverse().ok_or(Error::NotSplit)?;
                Some((p, pi))
            };
            comps.push(Component { ell, e, q: ell.pow(e), basis });
        }
        Ok(OrthoGroup { space: space.clone(), comps })
    }

    pub fn space(&self) -> &QuadSpace {
        &self.space
    }

    pub fn order(&self) -> BigUint {
        let m = self.space.half_rank();
        self.comps.iter().map(|c| orthogonal_group_order(m, c.ell, c.e)).product()
    }

    fn to_std(&self, c: &Component, g: &MatrixMod) -> MatrixMod {
        match &c.basis {
            None => g.clone(),
            Some((p, pi)) => pi.mul(g).mul(p),
        }
    }

    fn from_std(&self, c: &Component, g: MatrixMod) -> MatrixMod {
        match &c.basis {
            None => g,
            Some((p, pi)) => p.mul(&g).mul(pi),
        }
    }

    /// Invariants of an isometry `g` (not checked).
    pub fn element(&self, g: MatrixMod) -> OrthoElem {
        let n = self.space.rank();
        let mut dickson = Vec::new();
        let mut spinor = Vec::new();
        for c in &self.comps {
            let local = self.to_std(c, &g.reduce(c.q));
            let d = fixed_dim_mod_p(local.data(), n, c.ell) % 2 == 1;
            let s = if c.ell == 2 {
                (c.e == 1).then_some(false)
            } else {
                Some(spinor_descent_std(local.data(), n, c.ell, c.q).1)
            };
            dickson.push((c.ell, d));
            spinor.push((c.ell, s));
        }
        OrthoElem { g, dickson, spinor }
    }

    /// Reflection count of the descent at an odd prime.
    pub fn reflection_count(&self, g: &OrthoElem, ell: u64) -> Result<usize> {
        let c = self
            .comps
            .iter()
            .find(|c| c.ell == ell)
            .ok_or_else(|| Error::InvalidParameter(format!("{ell} does not divide the modulus")))?;
        if ell == 2 {
            return Err(Error::UnsupportedSpinorModulus(2));
        }
        let local = self.to_std(c, &g.g.reduce(c.q));
        Ok(spinor_descent_std(local.data(), self.space.rank(), ell, c.q).0)
    }

    fn join(&self, parts: Vec<MatrixMod>) -> MatrixMod {
        if parts.len() == 1 {
            return parts.into_iter().next().unwrap();
        }
        let tagged: Vec<(u64, u32, MatrixMod)> =
            self.comps.iter().zip(parts).map(|(c, m)| (c.ell, c.e, m)).collect();
        crt_join(&tagged)
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> OrthoElem {
        let n = self.space.rank();
        let m = n / 2;
        let mut parts = Vec::with_capacity(self.comps.len());
        let mut dickson = Vec::new();
        let mut spinor = Vec::new();
        for c in &self.comps {
            let g = sample_std(m, c.ell, c.q, rng);
            dickson.push((c.ell, fixed_dim_mod_p(&g, n, c.ell) % 2 == 1));
            spinor.push((
                c.ell,
                if c.ell == 2 { (c.e == 1).then_some(false) } else { Some(spinor_descent_std(&g, n, c.ell, c.q).1) },
            ));
            parts.push(self.from_std(c, MatrixMod::from_vec(n, n, c.q, g)));
        }
        OrthoElem { g: self.join(parts), dickson, spinor }
    }

    /// Uniform sample obtained by drawing mod `ℓ` and lifting level by level
    /// with a uniform Lie-kernel correction. Slower than [`Self::sample_uniform`];
    /// kept as an independent construction.
    pub fn sample_uniform_lifted<R: Rng + ?Sized>(&self, rng: &mut R) -> OrthoElem {
        let n = self.space.rank();
        let m = n / 2;
        let mut parts = Vec::new();
        for c in &self.comps {
            let mut g = sample_std(m, c.ell, c.ell, rng);
            if c.e > 1 {
                let lie = lie_kernel_basis(m, c.ell);
                for j in 1..c.e {
                    let lj = c.ell.pow(j);
                    let q1 = lj * c.ell;
                    let hat = hensel_lift_std(&g, n, c.ell, j);
                    let gp: Vec<u64> = g.iter().map(|&x| x % c.ell).collect();
                    let mut x = vec![0u64; n * n];
                    for b in &lie {
                        let t = rng.gen_range(0..c.ell);
                        for i in 0..n * n {
                            x[i] = add_mod(x[i], mul_mod(t, b[i], c.ell), c.ell);
                        }
                    }
                    let gx = mat_mul_flat(&gp, &x, n, c.ell);
                    g = (0..n * n).map(|i| add_mod(hat[i], mul_mod(lj, gx[i], q1), q1)).collect();
                }
            }
            parts.push(self.from_std(c, MatrixMod::from_vec(n, n, c.q, g)));
        }
        self.element(self.join(parts))
    }

    /// Uniform element of the union of cosets `spec`, by rejection.
    pub fn sample_coset<R: Rng + ?Sized>(&self, spec: &CosetSpec, retry_cap: usize, rng: &mut R) -> Result<OrthoElem> {
        for _ in 0..retry_cap {
            let g = self.sample_uniform(rng);
            if spec.contains(&g) {
                return Ok(g);
            }
        }
        Err(Error::EmptyCoset(retry_cap))
    }

    fn check_budget(&self, budget: u64) -> Result<()> {
        let order = self.order();
        if order > BigUint::from(budget) {
            return Err(Error::BudgetExceeded { order: order.to_string(), budget });
        }
        Ok(())
    }

    /// Visit every group element once. The visitor receives the matrix in the
    /// coordinates of the space together with Dickson and spinor bits per prime.
    pub fn for_each_element(&self, budget: u64, mut f: impl FnMut(&OrthoElem)) -> Result<()> {
        self.check_budget(budget)?;
        let n = self.space.rank();
        let m = n / 2;
        let mut lists: Vec<Vec<(MatrixMod, bool, Option<bool>)>> = Vec::new();
        if self.comps.len() == 1 {
            let c = &self.comps[0];
            for_each_std_element(m, c.ell, c.e, |g, d, s| {
                let g = self.from_std(c, MatrixMod::from_vec(n, n, c.q, g.to_vec()));
                let s = if c.ell == 2 && c.e > 1 { None } else { Some(s) };
                f(&OrthoElem { g, dickson: vec![(c.ell, d)], spinor: vec![(c.ell, s)] });
            });
            return Ok(());
        }
        for c in &self.comps {
            let mut v = Vec::new();
            for_each_std_element(m, c.ell, c.e, |g, d, s| {
                let s = if c.ell == 2 && c.e > 1 { None } else { Some(s) };
                v.push((self.from_std(c, MatrixMod::from_vec(n, n, c.q, g.to_vec())), d, s));
            });
            lists.push(v);
        }
        let mut idx = vec![0usize; lists.len()];
        loop {
            let parts: Vec<(u64, u32, MatrixMod)> = self
                .comps
                .iter()
                .zip(&idx)
                .zip(&lists)
                .map(|((c, &i), l)| (c.ell, c.e, l[i].0.clone()))
                .collect();
            let dickson = self.comps.iter().zip(&idx).zip(&lists).map(|((c, &i), l)| (c.ell, l[i].1)).collect();
            let spinor = self.comps.iter().zip(&idx).zip(&lists).map(|((c, &i), l)| (c.ell, l[i].2)).collect();
            f(&OrthoElem { g: crt_join(&parts), dickson, spinor });
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return Ok(());
                }
                idx[k] += 1;
                if idx[k] < lists[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    /// All group elements, collected.
    pub fn enumerate(&self, budget: u64) -> Result<Vec<OrthoElem>> {
        let mut out = Vec::new();
        self.for_each_element(budget, |g| out.push(g.clone()))?;
        Ok(out)
    }
}

/// Uniform element of `O(space)`.
pub fn sample_uniform<R: Rng + ?Sized>(space: &QuadSpace, rng: &mut R) -> Result<OrthoElem> {
    Ok(OrthoGroup::new(space)?.sample_uniform(rng))
}

/// Uniform element of the cosets selected by `spec`.
pub fn sample_coset<R: Rng + ?Sized>(space: &QuadSpace, spec: &CosetSpec, rng: &mut R) -> Result<OrthoElem> {
    OrthoGroup::new(space)?.sample_coset(spec, DEFAULT_RETRY_CAP, rng)
}

/// Every element of `O(space)`, provided the order is at most `budget`.
pub fn enumerate_group(space: &QuadSpace, budget: u64) -> Result<std::vec::IntoIter<OrthoElem>> {
    Ok(OrthoGroup::new(space)?.enumerate(budget)?.into_iter())
}

/// Multiplicity of `(T − 1)` in the characteristic polynomial of `g` over `F_ℓ`,
/// i.e. the dimension of the generalized 1-eigenspace.
pub fn generalized_fixed_rank(g: &MatrixMod) -> Result<usize> {
    let p = g.modulus();
    if !Modulus::new(p)?.is_prime() {
        return Err(Error::InvalidParameter(format!("modulus {p} is not a prime")));
    }
    let n = g.rows();
    let a = g.minus_identity();
    let mut pw = MatrixMod::identity(n, p);
    for _ in 0..n {
        pw = pw.mul(&a);
    }
    Ok(n - pw.rank_mod_prime())
}

/// Spinor class via the Zassenhaus formula `[det(B)·det(1 − g)]` at each odd
/// prime, for `g` with `det(1 − g)` a unit. `None` when `det(1 − g)` is not a unit.
pub fn zassenhaus_spinor(space: &QuadSpace, g: &MatrixMod) -> Option<Vec<(u64, bool)>> {
    let n = space.n();
    let one_minus = MatrixMod::identity(g.rows(), n).sub(g);
    let dg = one_minus.determinant();
    if !space.is_unit(dg) {
        return None;
    }
    let db = space.bilinear().determinant();
    Some(
        space
            .modulus()
            .factors()
            .iter()
            .filter(|f| f.0 != 2)
            .map(|&(p, _)| (p, is_nonsquare_mod_prime(mul_mod(db, dg, n) % p, p)))
            .collect(),
    )
}
