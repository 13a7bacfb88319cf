//! Quadratic spaces over `Z/nZ`.
//!
//! A form is stored as an upper-triangular matrix `theta` with
//! `Q(x) = xᵀ·theta·x`, so that forms over `F_2` are representable.
//! The bilinear form is `B = theta + thetaᵀ`.

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::modring::{add_mod, inv_mod, mul_mod, neg_mod, sub_mod, MatrixMod, Modulus};
use crate::orthogroup::OrthoElem;

/// Coordinates of a vector, as canonical residues.
pub type Vector = Vec<u64>;

/// Gram matrix of the `E8` root lattice in a simple-root basis, nodes
/// numbered along the long chain `1–2–3–4–5–6–7` with node `8` attached to `5`.
pub const E8_GRAM: [[i64; 8]; 8] = [
    [2, -1, 0, 0, 0, 0, 0, 0],
    [-1, 2, -1, 0, 0, 0, 0, 0],
    [0, -1, 2, -1, 0, 0, 0, 0],
    [0, 0, -1, 2, -1, 0, 0, 0],
    [0, 0, 0, -1, 2, -1, 0, -1],
    [0, 0, 0, 0, -1, 2, -1, 0],
    [0, 0, 0, 0, 0, -1, 2, 0],
    [0, 0, 0, 0, -1, 0, 0, 2],
];

/// A nondegenerate quadratic form on `(Z/nZ)^rank`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadSpace {
    modulus: Modulus,
    rank: usize,
    theta: MatrixMod,
    bilinear: MatrixMod,
}

impl Serialize for QuadSpace {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let theta: Vec<&[u64]> = (0..self.rank).map(|i| self.theta.row(i)).collect();
        let mut st = s.serialize_struct("QuadSpace", 3)?;
        st.serialize_field("modulus", &self.modulus.n())?;
        st.serialize_field("rank", &self.rank)?;
        st.serialize_field("theta", &theta)?;
        st.end()
    }
}

/// Upper-triangular matrix representing the same quadratic form as `m`.
pub fn fold_upper(m: &MatrixMod) -> MatrixMod {
    let n = m.modulus();
    MatrixMod::from_fn(m.rows(), m.cols(), n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Less => add_mod(m.get(i, j), m.get(j, i), n),
        std::cmp::Ordering::Equal => m.get(i, i),
        std::cmp::Ordering::Greater => 0,
    })
}

impl QuadSpace {
    /// Build from any matrix `theta` with `Q(x) = xᵀ·theta·x`.
    pub fn from_theta(theta: &MatrixMod) -> Result<Self> {
        if !theta.is_square() {
            return Err(Error::Dimension("theta must be square".into()));
        }
        let rank = theta.rows();
        if rank == 0 || rank % 2 != 0 {
            return Err(Error::InvalidParameter(format!("rank {rank} must be even and positive")));
        }
        let modulus = Modulus::new(theta.modulus())?;
        let theta = fold_upper(theta);
        let bilinear = theta.add(&theta.transpose());
        for &(p, _) in modulus.factors() {
            if bilinear.reduce(p).rank_mod_prime() != rank {
                return Err(Error::Degenerate(p));
            }
        }
        Ok(QuadSpace { modulus, rank, theta, bilinear })
    }

    /// Form `Q(x) = xᵀ·G·x / 2` for an integral Gram matrix `G` with even diagonal.
    pub fn from_even_gram(gram: &[Vec<i64>], modulus: &Modulus) -> Result<Self> {
        let r = gram.len();
        let mut t = vec![0i64; r * r];
        for i in 0..r {
            if gram[i].len() != r {
                return Err(Error::Dimension("gram must be square".into()));
            }
            if gram[i][i] % 2 != 0 {
                return Err(Error::InvalidParameter("gram diagonal must be even".into()));
            }
            t[i * r + i] = gram[i][i] / 2;
            for j in i + 1..r {
                if gram[i][j] != gram[j][i] {
                    return Err(Error::InvalidParameter("gram must be symmetric".into()));
                }
                t[i * r + j] = gram[i][j];
            }
        }
        Self::from_theta(&MatrixMod::from_i64(r, r, modulus.n(), &t))
    }

    /// `Q(x) = x₁x₂ + x₃x₄ + ⋯` on `(Z/nZ)^{2m}`.
    pub fn build_standard_split(m: usize, modulus: &Modulus) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("half-rank must be at least 1".into()));
        }
        let r = 2 * m;
        let theta = MatrixMod::from_fn(r, r, modulus.n(), |i, j| u64::from(i % 2 == 0 && j == i + 1));
        Self::from_theta(&theta)
    }

    /// `U^{2d−2} ⊕ (−E8)^d`, of rank `12d − 4`.
    pub fn build_qsel(d: usize, modulus: &Modulus) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("height must be at least 1".into()));
        }
        let r = 12 * d - 4;
        let mut gram = vec![vec![0i64; r]; r];
        let planes = 2 * d - 2;
        for k in 0..planes {
            gram[2 * k][2 * k + 1] = 1;
            gram[2 * k + 1][2 * k] = 1;
        }
        for b in 0..d {
            let off = 2 * planes + 8 * b;
            for i in 0..8 {
                for j in 0..8 {
                    gram[off + i][off + j] = -E8_GRAM[i][j];
                }
            }
        }
        Self::from_even_gram(&gram, modulus)
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn n(&self) -> u64 {
        self.modulus.n()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn half_rank(&self) -> usize {
        self.rank / 2
    }

    pub fn theta(&self) -> &MatrixMod {
        &self.theta
    }

    pub fn bilinear(&self) -> &MatrixMod {
        &self.bilinear
    }

    pub fn is_standard_split(&self) -> bool {
        (0..self.rank).all(|i| {
            (0..self.rank).all(|j| self.theta.get(i, j) == u64::from(i % 2 == 0 && j == i + 1))
        })
    }

    pub fn q(&self, x: &[u64]) -> u64 {
        let n = self.n();
        let mut acc = 0;
        for i in 0..self.rank {
            if x[i] == 0 {
                continue;
            }
            let row = self.theta.row(i);
            let mut s = 0;
            for j in i..self.rank {
                s = add_mod(s, mul_mod(row[j], x[j], n), n);
            }
            acc = add_mod(acc, mul_mod(x[i], s, n), n);
        }
        acc
    }

    pub fn b(&self, x: &[u64], y: &[u64]) -> u64 {
        let n = self.n();
        let mut acc = 0;
        for i in 0..self.rank {
            if x[i] == 0 {
                continue;
            }
            let row = self.bilinear.row(i);
            let mut s = 0;
            for j in 0..self.rank {
                s = add_mod(s, mul_mod(row[j], y[j], n), n);
            }
            acc = add_mod(acc, mul_mod(x[i], s, n), n);
        }
        acc
    }

    /// Row vector `xᵀ·B`.
    pub fn b_row(&self, x: &[u64]) -> Vector {
        self.bilinear.transpose().apply(x)
    }

    pub fn is_unit(&self, a: u64) -> bool {
        self.modulus.factors().iter().all(|&(p, _)| a % p != 0)
    }

    /// True when `x` is nonzero modulo every prime of the modulus.
    pub fn is_primitive(&self, x: &[u64]) -> bool {
        self.modulus.factors().iter().all(|&(p, _)| x.iter().any(|&c| c % p != 0))
    }

    /// Matrix of `w ↦ w − B(w,v)/Q(v)·v`.
    pub fn reflection_matrix(&self, v: &[u64]) -> Result<MatrixMod> {
        let n = self.n();
        let qv = self.q(v);
        let inv = inv_mod(qv, n).ok_or(Error::NonUnitNorm)?;
        let bv = self.b_row(v);
        Ok(MatrixMod::from_fn(self.rank, self.rank, n, |i, j| {
            let t = mul_mod(mul_mod(v[i], bv[j], n), inv, n);
            sub_mod(u64::from(i == j), t, n)
        }))
    }

    /// The reflection `r_v` as a group element.
    pub fn reflection(&self, v: &[u64]) -> Result<OrthoElem> {
        OrthoElem::new(self, self.reflection_matrix(v)?)
    }

    /// True iff `g` preserves `Q`, i.e. `gᵀ·theta·g − theta` is alternating.
    pub fn isometry_check(&self, g: &MatrixMod) -> bool {
        if g.rows() != self.rank || g.cols() != self.rank || g.modulus() != self.n() {
            return false;
        }
        let m = g.transpose().mul(&self.theta).mul(g).sub(&self.theta);
        fold_upper(&m).is_zero()
    }

    /// Form restricted to the span of the columns of `basis`.
    pub fn restrict(&self, basis: &MatrixMod) -> Result<QuadSpace> {
        let t = basis.transpose().mul(&self.theta).mul(basis);
        Self::from_theta(&t)
    }

    /// The prime-power component of the form at `ℓ`.
    pub fn component(&self, ell: u64) -> Result<QuadSpace> {
        let (_, e) = self
            .modulus
            .factors()
            .iter()
            .copied()
            .find(|&(p, _)| p == ell)
            .ok_or_else(|| Error::InvalidParameter(format!("{ell} does not divide {}", self.n())))?;
        Self::from_theta(&self.theta.reduce(ell.pow(e)))
    }

    /// A hyperbolic pair `(e, f)`: `Q(e) = Q(f) = 0`, `B(e, f) = 1`.
    ///
    /// Candidates for `e` are scanned with the first coordinate varying
    /// fastest; `f` is then obtained from the first basis vector pairing to a
    /// unit with `e`.
    pub fn find_hyperbolic_pair(&self) -> Result<(Vector, Vector)> {
        if self.modulus.as_prime_power().is_none() {
            let mut es = Vec::new();
            let mut fs = Vec::new();
            for c in self.modulus.components() {
                let (ell, _) = c.as_prime_power().unwrap();
                let (e, f) = self.component(ell)?.find_hyperbolic_pair()?;
                es.push((e, c.n()));
                fs.push((f, c.n()));
            }
            return Ok((join_vectors(&es), join_vectors(&fs)));
        }
        let n = self.n();
        const SCAN_BUDGET: u64 = 1 << 24;
        let mut x = vec![0u64; self.rank];
        let mut scanned = 0u64;
        loop {
            // advance the counter; first coordinate fastest
            let mut k = 0;
            loop {
                if k == self.rank {
                    return Err(Error::NotSplit);
                }
                x[k] += 1;
                if x[k] < n {
                    break;
                }
                x[k] = 0;
                k += 1;
            }
            scanned += 1;
            if scanned > SCAN_BUDGET {
                return Err(Error::NotSplit);
            }
            if self.q(&x) == 0 && self.is_primitive(&x) {
                let f = self.complete_pair(&x)?;
                return Ok((x, f));
            }
        }
    }

    /// Given primitive isotropic `e`, the deterministic `f` with
    /// `Q(f) = 0`, `B(e, f) = 1`.
    pub fn complete_pair(&self, e: &[u64]) -> Result<Vector> {
        let n = self.n();
        let be = self.b_row(e);
        let i = (0..self.rank).find(|&i| self.is_unit(be[i])).ok_or(Error::NotSplit)?;
        let c = inv_mod(be[i], n).unwrap();
        let mut w = vec![0u64; self.rank];
        w[i] = c;
        let qw = self.q(&w);
        Ok((0..self.rank).map(|k| sub_mod(w[k], mul_mod(qw, e[k], n), n)).collect())
    }

    /// Orthogonal complement of the hyperbolic plane `⟨e, f⟩`, returned as the
    /// restricted form together with the basis embedding it (as columns).
    pub fn split_off(&self, e: &[u64], f: &[u64]) -> Result<(QuadSpace, MatrixMod)> {
        let n = self.n();
        if self.q(e) != 0 || self.q(f) != 0 || self.b(e, f) != 1 % n {
            return Err(Error::InvalidParameter("(e, f) is not a hyperbolic pair".into()));
        }
        if self.rank == 2 {
            return Err(Error::InvalidParameter("complement of a plane in a plane is zero".into()));
        }
        let be = self.b_row(e);
        let bf = self.b_row(f);
        let proj = |i: usize| -> Vector {
            (0..self.rank)
                .map(|k| {
                    let mut y = u64::from(i == k);
                    y = sub_mod(y, mul_mod(bf[i], e[k], n), n);
                    sub_mod(y, mul_mod(be[i], f[k], n), n)
                })
                .collect()
        };
        let target = self.rank - 2;
        let basis = if self.modulus.as_prime_power().is_some() {
            let p = self.modulus.factors()[0].0;
            select_independent((0..self.rank).map(proj), p, target)
        } else {
            // choose independently per prime, then glue columnwise
            let all: Vec<Vector> = (0..self.rank).map(proj).collect();
            let mut per_prime = Vec::new();
            for c in self.modulus.components() {
                let p = c.as_prime_power().unwrap().0;
                let local: Vec<Vector> =
                    all.iter().map(|v| v.iter().map(|&x| x % c.n()).collect()).collect();
                per_prime.push((select_independent(local.into_iter(), p, target), c.n()));
            }
            (0..target)
                .map(|k| {
                    let parts: Vec<(Vector, u64)> =
                        per_prime.iter().map(|(b, m)| (b[k].clone(), *m)).collect();
                    join_vectors(&parts)
                })
                .collect()
        };
        if basis.len() != target {
            return Err(Error::NotSplit);
        }
        let c = MatrixMod::from_columns(n, &basis);
        Ok((self.restrict(&c)?, c))
    }

    /// A basis `e₁, f₁, e₂, f₂, …` (as columns) in which the form is the
    /// standard split form, found by repeatedly splitting off hyperbolic pairs.
    pub fn hyperbolic_basis(&self) -> Result<MatrixMod> {
        let n = self.n();
        let mut cols: Vec<Vector> = Vec::with_capacity(self.rank);
        let mut space = self.clone();
        let mut embed = MatrixMod::identity(self.rank, n);
        loop {
            let (e, f) = space.find_hyperbolic_pair()?;
            cols.push(embed.apply(&e));
            cols.push(embed.apply(&f));
            if space.rank == 2 {
                break;
            }
            let (next, c) = space.split_off(&e, &f)?;
            embed = embed.mul(&c);
            space = next;
        }
        Ok(MatrixMod::from_columns(n, &cols))
    }

    /// Negation `x ↦ −x` on coordinates.
    pub fn neg(&self, x: &[u64]) -> Vector {
        x.iter().map(|&a| neg_mod(a, self.n())).collect()
    }
}

/// Greedily keep vectors whose reductions mod `p` stay independent.
fn select_independent(cands: impl Iterator<Item = Vector>, p: u64, target: usize) -> Vec<Vector> {
    let mut chosen: Vec<Vector> = Vec::new();
    let mut echelon: Vec<Vec<u64>> = Vec::new();
    for v in cands {
        if chosen.len() == target {
            break;
        }
        let mut r: Vec<u64> = v.iter().map(|&x| x % p).collect();
        for row in &echelon {
            let piv = row.iter().position(|&x| x != 0).unwrap();
            if r[piv] != 0 {
                let f = mul_mod(r[piv], inv_mod(row[piv], p).unwrap(), p);
                for k in 0..r.len() {
                    r[k] = sub_mod(r[k], mul_mod(f, row[k], p), p);
                }
            }
        }
        if r.iter().any(|&x| x != 0) {
            echelon.push(r);
            chosen.push(v);
        }
    }
    chosen
}

fn join_vectors(parts: &[(Vector, u64)]) -> Vector {
    let len = parts[0].0.len();
    (0..len)
        .map(|k| {
            let residues: Vec<(u64, u64)> = parts.iter().map(|(v, m)| (v[k], *m)).collect();
            crate::modring::crt_combine(&residues)
        })
        .collect()
}
