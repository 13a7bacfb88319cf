//! The BKLPR model: Selmer groups as intersections of two random maximal
//! isotropic summands, the alternating-matrix model of the torsion, and the
//! joint rank/Selmer law for composite `n`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distrib::{Distribution, RankClass};
use crate::error::{Error, Result};
use crate::kernelmodel::{CLASS_KEYS, JOINT_KEYS};
use crate::modring::{kernel_class, smith_normal_form, snf_exponents_pp, MatrixMod, ModuleClass, Modulus};
use crate::orthogroup::sample_std;
use crate::quadspace::QuadSpace;
use crate::rng::{self, SelmerRng};

/// Default precision buffer of the alternating model.
pub const DEFAULT_BUFFER: u32 = 4;
/// Rejection rounds before the alternating model gives up.
pub const ALT_RETRY_CAP: usize = 1024;
/// Samples per random stream.
pub const CHUNK: u64 = 4096;
/// Key space of torsion laws.
pub const TORSION_KEYS: &str = "torsion-class";

/// Two maximal isotropic free summands of the split space of rank `2m` over `Z/ℓᵉ`.
#[derive(Clone, Debug)]
pub struct LagrangianPair {
    pub space: QuadSpace,
    pub ell: u64,
    pub e: u32,
    /// Basis of `Z` as the columns of a `2m × m` matrix.
    pub z: MatrixMod,
    /// Basis of `W`, likewise.
    pub w: MatrixMod,
}

impl LagrangianPair {
    /// A pair from explicit bases (not checked).
    pub fn new(space: QuadSpace, z: MatrixMod, w: MatrixMod) -> Result<Self> {
        let (ell, e) = space.modulus().as_prime_power().ok_or(Error::NotPrimePower(space.n()))?;
        Ok(LagrangianPair { space, ell, e, z, w })
    }

    pub fn half_rank(&self) -> usize {
        self.z.cols()
    }

    /// `Q` vanishes on the span of `basis`.
    pub fn is_isotropic(&self, basis: &MatrixMod) -> bool {
        let cols: Vec<Vec<u64>> = (0..basis.cols()).map(|j| basis.column(j)).collect();
        cols.iter().all(|c| self.space.q(c) == 0)
            && cols.iter().enumerate().all(|(i, a)| cols[i + 1..].iter().all(|b| self.space.b(a, b) == 0))
    }

    /// The `m × m` matrix `Zᵀ·B·W`. Since `Z = Z^⊥`, `Z ∩ W` is isomorphic
    /// to its kernel.
    pub fn d_block(&self) -> MatrixMod {
        self.z.transpose().mul(self.space.bilinear()).mul(&self.w)
    }
}

/// The coordinate Lagrangian `span(e₁, e₂, …)` of the standard split form.
pub fn coordinate_lagrangian(m: usize, q: u64) -> MatrixMod {
    MatrixMod::from_fn(2 * m, m, q, |i, k| u64::from(i == 2 * k))
}

/// Its transverse partner `span(f₁, f₂, …)`.
pub fn dual_coordinate_lagrangian(m: usize, q: u64) -> MatrixMod {
    MatrixMod::from_fn(2 * m, m, q, |i, k| u64::from(i == 2 * k + 1))
}

fn image_of_coordinate_lagrangian(g: &[u64], m: usize, q: u64) -> MatrixMod {
    let n = 2 * m;
    MatrixMod::from_fn(n, m, q, |i, k| g[i * n + 2 * k])
}

/// `Z = g₁·Z₀`, `W = g₂·Z₀` for independent uniform `g₁, g₂ ∈ O(2m, Z/ℓᵉ)`.
pub fn sample_lagrangian_pair(m: usize, ell: u64, e: u32, rng: &mut SelmerRng) -> Result<LagrangianPair> {
    if m == 0 {
        return Err(Error::InvalidParameter("half-rank must be at least 1".into()));
    }
    let modulus = Modulus::prime_power(ell, e)?;
    let q = modulus.n();
    let space = QuadSpace::build_standard_split(m, &modulus)?;
    let g1 = sample_std(m, ell, q, rng);
    let g2 = sample_std(m, ell, q, rng);
    Ok(LagrangianPair {
        space,
        ell,
        e,
        z: image_of_coordinate_lagrangian(&g1, m, q),
        w: image_of_coordinate_lagrangian(&g2, m, q),
    })
}

/// One draw of the intersection model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelmerSample {
    /// Class of `S[ℓᵉ]`.
    pub s: ModuleClass,
    /// Model rank.
    pub rank: u32,
    /// Torsion part: `S[ℓᵉ] = (Z/ℓᵉ)^rank ⊕ T`.
    pub t: ModuleClass,
    /// `d_1, …, d_e` with `d_j = dim S_j`.
    pub chain: Vec<u32>,
}

/// Compute `S_j = (W/ℓʲ ∩ Z/ℓʲ + ℓV/ℓʲV)/ℓV` for `j ≤ e` and the class of
/// `S[ℓᵉ] = Z/ℓᵉ ∩ W/ℓᵉ`.
///
/// The rank is `d_1 mod 2`: the chain `d_j` keeps the parity of `d_1` and
/// tends to the free rank, which is 0 or 1 almost surely.
pub fn intersect_selmer(pair: &LagrangianPair) -> Result<SelmerSample> {
    let (ell, e) = (pair.ell, pair.e);
    let m = pair.half_rank();
    let n = 2 * m;
    let q = pair.space.n();
    // x = Z·a = W·c  ⇔  [Z | −W]·(a, c) = 0
    let mut cols: Vec<Vec<u64>> = (0..m).map(|j| pair.z.column(j)).collect();
    cols.extend((0..m).map(|j| pair.w.column(j).iter().map(|&x| (q - x) % q).collect::<Vec<u64>>()));
    let big = MatrixMod::from_columns(q, &cols);
    let snf = smith_normal_form(&big)?;
    // kernel generators mod ℓ with exponent ≥ j come from the columns of V
    // whose Smith exponent is at least j; their images Z·a span S_j
    let mut chain = Vec::with_capacity(e as usize);
    for j in 1..=e {
        let gens: Vec<Vec<u64>> = (0..n)
            .filter(|&i| snf.exponents[i] >= j)
            .map(|i| {
                let a: Vec<u64> = (0..m).map(|r| snf.v.get(r, i)).collect();
                pair.z.apply(&a).into_iter().map(|x| x % ell).collect()
            })
            .collect();
        let d = if gens.is_empty() { 0 } else { MatrixMod::from_columns(ell, &gens).rank_mod_prime() };
        chain.push(d as u32);
    }
    let s = ModuleClass::from_exponents(ell, snf.exponents.iter().copied());
    let rank = chain[0] % 2;
    let mut t_exps: Vec<u32> = s.exponents(ell).to_vec();
    for _ in 0..rank {
        let pos = t_exps.iter().position(|&a| a == e).expect("the free part has exponent e");
        t_exps.remove(pos);
    }
    Ok(SelmerSample { s, rank, t: ModuleClass::from_exponents(ell, t_exps), chain })
}

/// Class of `Z ∩ W` from the kernel of the `Zᵀ·B·W` block.
pub fn intersection_class_via_block(pair: &LagrangianPair) -> Result<ModuleClass> {
    kernel_class(&pair.d_block())
}

/// Uniform alternating `m × m` matrix over `Z/qZ`.
pub fn random_alternating(m: usize, q: u64, rng: &mut SelmerRng) -> MatrixMod {
    let mut a = MatrixMod::zeros(m, m, q);
    for i in 0..m {
        for j in i + 1..m {
            let x = rng.gen_range(0..q);
            a.set(i, j, x);
            a.set(j, i, (q - x) % q);
        }
    }
    a
}

/// Torsion of the cokernel of a random alternating `m × m` matrix of
/// corank `r`, truncated at `ℓᵉ`.
///
/// Matrices are drawn over `Z/ℓ^{e+b}`. For `r ≤ 1` (with `m − r` even) the
/// corank condition holds almost surely, so every draw is used: `r` of the
/// exponents equal to `e + b` are the free part and the rest is truncated.
/// For `r ≥ 2` a draw is kept when exactly `r` exponents equal `e + b`.
pub fn sample_alternating_model(m: usize, r: usize, ell: u64, e: u32, buffer: u32, rng: &mut SelmerRng) -> Result<ModuleClass> {
    if r > m || (m - r) % 2 != 0 {
        return Err(Error::InvalidParameter(format!("need m ≥ r and m − r even, got m = {m}, r = {r}")));
    }
    let k = e + buffer;
    let q = ell.checked_pow(k).ok_or_else(|| Error::InvalidParameter("precision too large".into()))?;
    for _ in 0..ALT_RETRY_CAP {
        let a = random_alternating(m, q, rng);
        let exps = snf_exponents_pp(&a, ell, k);
        let full = exps.iter().filter(|&&c| c == k).count();
        if full < r || (r >= 2 && full != r) {
            continue;
        }
        let mut skip = r;
        let torsion = exps.into_iter().filter(|&c| {
            if c == k && skip > 0 {
                skip -= 1;
                false
            } else {
                true
            }
        });
        return Ok(ModuleClass::from_exponents(ell, torsion.map(|c| c.min(e))));
    }
    Err(Error::AcceptanceFailure { tries: ALT_RETRY_CAP, buffer })
}

/// Empirical law of [`sample_alternating_model`].
pub fn alternating_model_distribution(
    m: usize,
    r: usize,
    ell: u64,
    e: u32,
    buffer: u32,
    samples: u64,
    seed: u64,
) -> Result<Distribution<ModuleClass>> {
    let mut dist = Distribution::empirical(TORSION_KEYS, Some(seed));
    for (stream, size) in rng::chunks(samples, CHUNK) {
        let mut rng = rng::stream(seed, stream);
        for _ in 0..size {
            dist.add(sample_alternating_model(m, r, ell, e, buffer, &mut rng)?);
        }
    }
    Ok(dist)
}

/// `size` intersection-model draws from stream `stream` of `seed`.
pub fn intersection_samples(m: usize, ell: u64, e: u32, seed: u64, stream: u64, size: u64) -> Result<Vec<SelmerSample>> {
    let mut rng = rng::stream(seed, stream);
    (0..size).map(|_| intersect_selmer(&sample_lagrangian_pair(m, ell, e, &mut rng)?)).collect()
}

/// Empirical joint law of `(rank, S[ℓᵉ])` under the intersection model.
pub fn intersection_distribution(m: usize, ell: u64, e: u32, samples: u64, seed: u64) -> Result<Distribution<RankClass>> {
    let mut dist = Distribution::empirical(JOINT_KEYS, Some(seed));
    for (stream, size) in rng::chunks(samples, CHUNK) {
        for s in intersection_samples(m, ell, e, seed, stream, size)? {
            dist.add(RankClass::new(s.rank, s.s));
        }
    }
    Ok(dist)
}

/// Which realization of the rank-conditioned torsion law to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TorsionSampler {
    /// Cokernels of random alternating matrices.
    Alternating,
    /// The intersection model, redrawn until its rank matches.
    Intersection,
}

/// Parameters of the joint rank/Selmer model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BklprParams {
    pub n: u64,
    /// Matrix size (alternating sampler) or half-rank (intersection sampler).
    pub m: usize,
    pub sampler: TorsionSampler,
    pub buffer: u32,
    pub samples: u64,
    pub seed: u64,
}

impl BklprParams {
    pub fn new(n: u64, m: usize, samples: u64, seed: u64) -> Self {
        BklprParams { n, m, sampler: TorsionSampler::Alternating, buffer: DEFAULT_BUFFER, samples, seed }
    }
}

/// The law the model rank is drawn from: 0 and 1 with probability ½ each.
pub fn bklpr_rank_law() -> Distribution<u32> {
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    Distribution::exact("rank", BTreeMap::from([(0, half.clone()), (1, half)])).expect("sums to one")
}

fn draw_torsion(p: &BklprParams, r: u32, ell: u64, a: u32, rng: &mut SelmerRng) -> Result<ModuleClass> {
    match p.sampler {
        TorsionSampler::Alternating => {
            // 𝒜_{m,r,ℓ} needs m ≡ r mod 2
            let m = if (p.m + r as usize) % 2 == 0 { p.m } else { p.m + 1 };
            sample_alternating_model(m, r as usize, ell, a, p.buffer, rng)
        }
        TorsionSampler::Intersection => {
            for _ in 0..ALT_RETRY_CAP {
                let s = intersect_selmer(&sample_lagrangian_pair(p.m, ell, a, rng)?)?;
                if s.rank == r {
                    return Ok(s.t);
                }
            }
            Err(Error::AcceptanceFailure { tries: ALT_RETRY_CAP, buffer: 0 })
        }
    }
}

/// One chunk of [`bklpr_joint`].
pub fn bklpr_chunk(p: &BklprParams, stream: u64, size: u64) -> Result<Distribution<RankClass>> {
    let modulus = Modulus::new(p.n)?;
    if p.m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let mut rng = rng::stream(p.seed, stream);
    let mut dist = Distribution::empirical(JOINT_KEYS, Some(p.seed));
    for _ in 0..size {
        let r = u32::from(rng.gen::<bool>());
        let mut g = ModuleClass::trivial();
        for &(ell, a) in modulus.factors() {
            let free = ModuleClass::from_exponents(ell, std::iter::repeat(a).take(r as usize));
            g = g.direct_sum(&free).direct_sum(&draw_torsion(p, r, ell, a, &mut rng)?);
        }
        dist.add(RankClass::new(r, g));
    }
    Ok(dist)
}

/// Joint law of `(r, G)` with `r ∈ {0, 1}` uniform and
/// `G = (Z/n)^r ⊕ ⨁_ℓ T_ℓ[ℓ^{a_ℓ}]`, the `T_ℓ` drawn independently given `r`.
pub fn bklpr_joint(p: &BklprParams) -> Result<Distribution<RankClass>> {
    let mut dist = Distribution::empirical(JOINT_KEYS, Some(p.seed));
    for (stream, size) in rng::chunks(p.samples, CHUNK) {
        dist.merge(&bklpr_chunk(p, stream, size)?)?;
    }
    Ok(dist)
}

/// The Selmer part of a joint law.
pub fn selmer_law(joint: &Distribution<RankClass>) -> Distribution<ModuleClass> {
    joint.map(CLASS_KEYS, |k| k.class.clone())
}
