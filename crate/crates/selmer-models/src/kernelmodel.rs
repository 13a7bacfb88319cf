//! The random kernel model: laws of `ker(g − 1)` for `g` uniform in a union
//! of `Ω`-cosets, sampled or exact, together with the closed forms that
//! describe them (Rudvalis–Shinoda, coset generating functions, moments and
//! orbit counts).

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::distrib::{Distribution, RankClass};
use crate::error::{Error, Result};
use crate::genfun::{int, GenFun};
use crate::modring::{kernel_class_mod_n, snf_exponents_pp, MatrixMod, ModuleClass, Modulus};
use crate::orthogroup::{
    fixed_dim_mod_p, for_each_field_element, for_each_std_element, orthogonal_group_order, CosetSpec,
    DicksonTarget, OrthoGroup, DEFAULT_BUDGET, DEFAULT_RETRY_CAP,
};
use crate::quadspace::QuadSpace;
use crate::rng;

/// Key space label of distributions over [`ModuleClass`].
pub const CLASS_KEYS: &str = "module-class";
/// Key space label of joint `(rank, class)` distributions.
pub const JOINT_KEYS: &str = "rank-class";
/// Samples per random stream in Monte Carlo runs.
pub const MC_CHUNK: u64 = 4096;

fn pow_int(ell: u64, k: u32) -> BigInt {
    BigInt::from(ell).pow(k)
}

fn pow_rat(ell: u64, k: u32) -> BigRational {
    BigRational::from_integer(pow_int(ell, k))
}

// ---------------------------------------------------------------------------
// moments and orbit counts

/// `M_j = ∏_{i=1}^{j} (ℓ^i + 1)`.
pub fn moments_closed_form(ell: u64, j: u32) -> BigUint {
    (1..=j).map(|i| BigUint::from(ell).pow(i) + 1u32).product()
}

/// `E[#ker(g − 1)^r]` over the Dickson kernel (`M_r + 1`) or its complement
/// (`M_r − 1`) in `O(2r, F_ℓ)`.
pub fn edge_moment(ell: u64, r: u32, dickson_kernel: bool) -> BigUint {
    let m = moments_closed_form(ell, r);
    if dickson_kernel {
        m + 1u32
    } else {
        m - 1u32
    }
}

/// The table `f(n, i)` for `0 ≤ i ≤ n ≤ m`, from
/// `f(n, i) = f(n−1, i−1)·ℓ^i + f(n−1, i)·ℓ^i` with `f(0, 0) = 1`.
pub fn orbit_count_table(ell: u64, m: usize) -> Vec<Vec<BigUint>> {
    let mut table = vec![vec![BigUint::one()]];
    for n in 1..=m {
        let prev = &table[n - 1];
        let row = (0..=n)
            .map(|i| {
                let li = BigUint::from(ell).pow(i as u32);
                let a = if i >= 1 { prev[i - 1].clone() } else { BigUint::zero() };
                let b = prev.get(i).cloned().unwrap_or_default();
                (a + b) * li
            })
            .collect();
        table.push(row);
    }
    table
}

/// `Σ^{(s)}(m) = Σ_i f(m, i)·ℓ^{is}`, read off the table.
pub fn sigma_from_table(ell: u64, m: usize, s: u32) -> BigUint {
    orbit_count_table(ell, m)[m]
        .iter()
        .enumerate()
        .map(|(i, f)| f * BigUint::from(ell).pow(i as u32 * s))
        .sum()
}

/// `Σ^{(s)}(m)` by `Σ^{(s)}(m) = (1 + ℓ^{s+1})·Σ^{(s+1)}(m−1)`, `Σ^{(s)}(0) = 1`.
pub fn sigma_recursive(ell: u64, m: usize, s: u32) -> BigUint {
    if m == 0 {
        return BigUint::one();
    }
    (BigUint::from(ell).pow(s + 1) + 1u32) * sigma_recursive(ell, m - 1, s + 1)
}

/// Number of orbits of the split orthogonal group on `V^m` for large rank,
/// `Σ^{(0)}(m) = ∏_{i=1}^m (1 + ℓ^i)`.
pub fn orbit_count_recursive(ell: u64, m: usize) -> BigUint {
    sigma_recursive(ell, m, 0)
}

// ---------------------------------------------------------------------------
// group orders and generating functions over F_ℓ

/// `|O(2r, F_ℓ)|`.
pub fn full_order(ell: u64, r: usize) -> BigUint {
    orthogonal_group_order(r, ell, 1)
}

/// `#H_{2r}`, the kernel of the Dickson invariant.
pub fn dickson_kernel_order(ell: u64, r: usize) -> BigUint {
    full_order(ell, r) / 2u32
}

/// `#Ω_{2r}`.
pub fn omega_order(ell: u64, r: usize) -> BigUint {
    if ell == 2 {
        full_order(ell, r) / 2u32
    } else {
        full_order(ell, r) / 4u32
    }
}

/// `∏_{0≤j<r} (t² − ℓ^{2j})`.
fn vanishing(ell: u64, r: u32) -> GenFun {
    GenFun::product_t2_minus((0..r).map(|j| pow_rat(ell, 2 * j)))
}

/// `(P_r, P′_r)`: `P_r` is the even polynomial of degree `2r` with
/// `P_r(ℓ^j) = M_j` for `0 ≤ j ≤ r`; `P′_r` is the odd polynomial of degree
/// `2r − 1` with `P′_r(ℓ^j) = M_j` for `0 ≤ j < r`.
pub fn interpolation_polys(ell: u64, r: u32) -> (GenFun, GenFun) {
    let m = |j: u32| BigRational::from_integer(BigInt::from(moments_closed_form(ell, j)));
    // even: interpolate in s = t² through (ℓ^{2j}, M_j)
    let even: Vec<_> = (0..=r).map(|j| (pow_rat(ell, 2 * j), m(j))).collect();
    let p = GenFun::interpolate(&even).in_t_squared();
    // odd: t·R(t²) with R(ℓ^{2j}) = M_j / ℓ^j
    let odd: Vec<_> = (0..r).map(|j| (pow_rat(ell, 2 * j), m(j) / pow_rat(ell, j))).collect();
    let q = &GenFun::t() * &GenFun::interpolate(&odd).in_t_squared();
    (p, q)
}

/// `G_r`, the generating function of `dim ker(g − 1)` on the Dickson kernel of `O(2r, F_ℓ)`.
pub fn g_r(ell: u64, r: u32) -> GenFun {
    let (p, _) = interpolation_polys(ell, r);
    let denom: BigRational = (0..r).map(|j| pow_rat(ell, 2 * r) - pow_rat(ell, 2 * j)).product();
    &p + &vanishing(ell, r).scale(&(BigRational::one() / denom))
}

/// `G′_r`, the same on the complement of the Dickson kernel.
pub fn g_prime_r(ell: u64, r: u32) -> GenFun {
    interpolation_polys(ell, r).1
}

/// Named unions of cosets of `Ω` in `O(2r, F_ℓ)`. For odd `ℓ`:
/// `Ω` (both invariants trivial), `A` (spinor nontrivial), `B` (Dickson
/// nontrivial), `C` (both nontrivial).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CosetName {
    Full,
    DicksonKernel,
    DicksonComplement,
    Omega,
    A,
    B,
    C,
}

impl CosetName {
    /// The coset with the given Dickson bit and spinor bit (`true` = nonsquare).
    pub fn from_bits(dickson: bool, spinor: bool) -> Self {
        match (dickson, spinor) {
            (false, false) => CosetName::Omega,
            (false, true) => CosetName::A,
            (true, false) => CosetName::B,
            (true, true) => CosetName::C,
        }
    }

    /// Membership test on `(Dickson, spinor)` bits.
    pub fn contains(self, dickson: bool, spinor: bool) -> bool {
        match self {
            CosetName::Full => true,
            CosetName::DicksonKernel => !dickson,
            CosetName::DicksonComplement => dickson,
            named => named == CosetName::from_bits(dickson, spinor),
        }
    }
}

impl std::str::FromStr for CosetName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "full" | "o" => CosetName::Full,
            "dickson-kernel" | "h" | "so" => CosetName::DicksonKernel,
            "dickson-complement" => CosetName::DicksonComplement,
            "omega" => CosetName::Omega,
            "a" => CosetName::A,
            "b" => CosetName::B,
            "c" => CosetName::C,
            _ => return Err(Error::InvalidParameter(format!("unknown coset {s}"))),
        })
    }
}

/// Generating function `E[t^{dim ker(g−1)}]` for `g` uniform in the named
/// coset(s) of `O(2r, F_ℓ)`.
pub fn coset_pgf(ell: u64, r: u32, coset: CosetName) -> Result<GenFun> {
    if r == 0 {
        return Err(Error::InvalidParameter("half-rank must be at least 1".into()));
    }
    let g = g_r(ell, r);
    let gp = g_prime_r(ell, r);
    let half = BigRational::new(1.into(), 2.into());
    if ell == 2 {
        return match coset {
            CosetName::Full => Ok((&g + &gp).scale(&half)),
            CosetName::DicksonKernel | CosetName::Omega => Ok(g),
            CosetName::DicksonComplement | CosetName::B => Ok(gp),
            CosetName::A | CosetName::C => {
                Err(Error::InvalidParameter("the spinor norm is trivial for ℓ = 2".into()))
            }
        };
    }
    let omega = BigRational::from_integer(BigInt::from(omega_order(ell, r as usize)));
    let x = vanishing(ell, r).scale(&(half.clone() / omega));
    Ok(match coset {
        CosetName::Full => (&g + &gp).scale(&half),
        CosetName::DicksonKernel => g,
        CosetName::DicksonComplement | CosetName::B | CosetName::C => gp,
        CosetName::Omega => &g + &x,
        CosetName::A => &g - &x,
    })
}

/// Generating function of the union of the cosets with Dickson bit `dickson`
/// and spinor bit in `spinor` (equal-size cosets, so the pgfs average).
fn coset_union_pgf(ell: u64, r: u32, dickson: bool, spinor: &[bool]) -> Result<GenFun> {
    if spinor.is_empty() {
        return Err(Error::EmptyCoset(0));
    }
    if ell == 2 {
        return coset_pgf(ell, r, if dickson { CosetName::DicksonComplement } else { CosetName::DicksonKernel });
    }
    let mut acc = GenFun::zero();
    for &s in spinor {
        acc = &acc + &coset_pgf(ell, r, CosetName::from_bits(dickson, s))?;
    }
    Ok(acc.scale(&BigRational::new(1.into(), BigInt::from(spinor.len()))))
}

// ---------------------------------------------------------------------------
// Rudvalis–Shinoda

/// `|GL_z(F_{ℓ²})| = ∏_{i<z} (ℓ^{2z} − ℓ^{2i})`.
pub fn gl_order_quadratic(ell: u64, z: u32) -> BigInt {
    (0..z).map(|i| pow_int(ell, 2 * z) - pow_int(ell, 2 * i)).product()
}

fn rs_impl(ell: u64, n_half: u32, v: u32, literal_odd_bound: bool) -> BigRational {
    if v > 2 * n_half {
        return BigRational::zero();
    }
    let sign = |i: u32| if i % 2 == 0 { BigRational::one() } else { -BigRational::one() };
    let z = v / 2;
    let gl = BigRational::from_integer(gl_order_quadratic(ell, z));
    let half = BigRational::new(1.into(), 2.into());
    if v % 2 == 0 {
        let mut sum = BigRational::zero();
        let mut prod = BigRational::one(); // ∏_{k=1}^{i} (ℓ^{2k} − 1)
        for i in 0..=n_half - z {
            if i > 0 {
                prod *= pow_rat(ell, 2 * i) - BigRational::one();
            }
            // ℓ^{(2z−1)i}, which is ℓ^{−i} when z = 0
            let scale = if z == 0 { BigRational::one() / pow_rat(ell, i) } else { pow_rat(ell, (2 * z - 1) * i) };
            sum += sign(i) / (scale * &prod);
        }
        let head = pow_rat(ell, z) * &half / &gl * sum;
        let k = n_half - z;
        let tail_prod: BigRational = (1..=k).map(|j| pow_rat(ell, 2 * j) - BigRational::one()).product();
        let tail = &half * sign(k) / (pow_rat(ell, 2 * z * k) * &gl * tail_prod);
        head + tail
    } else {
        let top = if literal_odd_bound { n_half - z } else { n_half - 1 - z };
        let mut sum = BigRational::zero();
        let mut prod = BigRational::one(); // ∏_{k=1}^{i} (1 − ℓ^{−2k})
        for i in 0..=top {
            if i > 0 {
                prod *= BigRational::one() - BigRational::one() / pow_rat(ell, 2 * i);
            }
            sum += sign(i) / (pow_rat(ell, i * i + 2 * (z + 1) * i) * &prod);
        }
        half / (pow_rat(ell, z) * gl) * sum
    }
}

/// `P(dim ker(g − 1) = v)` for `g` uniform in `O(2N, F_ℓ)` (split), exact.
///
/// The odd case sums over `0 ≤ i ≤ N − 1 − z`; see
/// [`rudvalis_shinoda_pmf_literal`] for the bound `N − z`.
pub fn rudvalis_shinoda_pmf(ell: u64, n_half: u32, v: u32) -> BigRational {
    rs_impl(ell, n_half, v, false)
}

/// As [`rudvalis_shinoda_pmf`], but with the odd-case summation running to
/// `N − z`. This version is not normalized; it is kept for comparison.
pub fn rudvalis_shinoda_pmf_literal(ell: u64, n_half: u32, v: u32) -> BigRational {
    rs_impl(ell, n_half, v, true)
}

/// The full Rudvalis–Shinoda law as a generating function.
pub fn rudvalis_shinoda_pgf(ell: u64, n_half: u32) -> GenFun {
    GenFun::from_coeffs((0..=2 * n_half).map(|v| rudvalis_shinoda_pmf(ell, n_half, v)).collect())
}

/// `∏_{j=0}^{depth} (1 + ℓ^{−j})^{−1}`.
pub fn rs_limit_constant(ell: u64, depth: u32) -> BigRational {
    (0..=depth)
        .map(|j| BigRational::one() / (BigRational::one() + BigRational::one() / pow_rat(ell, j)))
        .product()
}

/// Large-rank limit of the Rudvalis–Shinoda law at `v`, with the infinite
/// product truncated after `depth` factors.
pub fn rs_limit(ell: u64, v: u32, depth: u32) -> BigRational {
    let denom: BigRational = (1..=v).map(|i| BigRational::one() - BigRational::one() / pow_rat(ell, i)).product();
    rs_limit_constant(ell, depth) / (pow_rat(ell, (v * v - v) / 2) * denom)
}

/// Leading constant used in [`prime_moments_pmf`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `∏_{j≥0} (1 + ℓ^{−j})^{−1}`.
    Plus,
    /// `∏_{j≥1} (1 − ℓ^{−j})^{−1}`, the other reading with the undefined
    /// `j = 0` factor dropped. Does not sum to one.
    Minus,
}

/// Limit probability that the `ℓ`-Selmer group is `(Z/ℓ)^c`:
/// `C·∏_{j=1}^{c} ℓ/(ℓ^j − 1)`, with the constant `C` truncated at `depth`.
pub fn prime_moments_pmf(ell: u64, c: u32, depth: u32, norm: Normalization) -> BigRational {
    let constant = match norm {
        Normalization::Plus => rs_limit_constant(ell, depth),
        Normalization::Minus => (1..=depth)
            .map(|j| BigRational::one() / (BigRational::one() - BigRational::one() / pow_rat(ell, j)))
            .product(),
    };
    let tail: BigRational = (1..=c)
        .map(|j| BigRational::new(BigInt::from(ell), pow_int(ell, j) - 1))
        .product();
    constant * tail
}

// ---------------------------------------------------------------------------
// exact histograms

/// Counts of `(Dickson bit, spinor bit, class of ker(g − 1))` over
/// `O(2m, Z/ℓᵉ)`. The spinor bit is `None` where it is not supported.
pub type ComponentHistogram = BTreeMap<(bool, Option<bool>, ModuleClass), u64>;

type HistCache = Mutex<HashMap<(usize, u64, u32), Arc<ComponentHistogram>>>;

fn hist_cache() -> &'static HistCache {
    static CACHE: OnceLock<HistCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Histogram of the split orthogonal group `O(2m, Z/ℓᵉ)` by invariants and
/// kernel class, by exhaustive enumeration. Cached per process.
pub fn component_histogram(m: usize, ell: u64, e: u32, budget: u64) -> Result<Arc<ComponentHistogram>> {
    if m == 0 {
        return Err(Error::InvalidParameter("half-rank must be at least 1".into()));
    }
    let order = orthogonal_group_order(m, ell, e);
    if order > BigUint::from(budget) {
        return Err(Error::BudgetExceeded { order: order.to_string(), budget });
    }
    if let Some(h) = hist_cache().lock().unwrap().get(&(m, ell, e)) {
        return Ok(h.clone());
    }
    let n = 2 * m;
    let mut hist = ComponentHistogram::new();
    if e == 1 {
        let mut by_dim: BTreeMap<(bool, bool, usize), u64> = BTreeMap::new();
        for_each_field_element(m, ell, |g, d, s| {
            *by_dim.entry((d, s, fixed_dim_mod_p(g, n, ell))).or_insert(0) += 1;
        });
        for ((d, s), dim, c) in by_dim.into_iter().map(|((d, s, k), c)| ((d, s), k, c)) {
            *hist.entry((d, Some(s), ModuleClass::elementary(ell, dim))).or_insert(0) += c;
        }
    } else {
        let q = ell.pow(e);
        let supported = ell != 2;
        let mut by_exps: BTreeMap<(bool, bool, Vec<u32>), u64> = BTreeMap::new();
        for_each_std_element(m, ell, e, |g, d, s| {
            let a = MatrixMod::from_vec(n, n, q, g.to_vec()).minus_identity();
            let mut exps = snf_exponents_pp(&a, ell, e);
            exps.sort_unstable();
            *by_exps.entry((d, s, exps)).or_insert(0) += 1;
        });
        for ((d, s, exps), c) in by_exps {
            let key = (d, supported.then_some(s), ModuleClass::from_exponents(ell, exps));
            *hist.entry(key).or_insert(0) += c;
        }
    }
    let h = Arc::new(hist);
    hist_cache().lock().unwrap().insert((m, ell, e), h.clone());
    Ok(h)
}

/// Invariants of a group element, prime by prime.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Invariants {
    pub dickson: Vec<(u64, bool)>,
    pub spinor: Vec<(u64, Option<bool>)>,
}

/// Counts of `(invariants, kernel class)` over a whole split orthogonal group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupHistogram {
    pub cells: BTreeMap<(Invariants, ModuleClass), BigUint>,
}

impl GroupHistogram {
    pub fn order(&self) -> BigUint {
        self.cells.values().sum()
    }

    /// Elements of the cosets `spec`, counted by kernel class.
    pub fn restrict(&self, spec: &CosetSpec) -> BTreeMap<ModuleClass, BigUint> {
        let mut out = BTreeMap::new();
        for ((inv, class), c) in &self.cells {
            if spec.contains_bits(&inv.dickson, &inv.spinor) {
                *out.entry(class.clone()).or_insert_with(BigUint::zero) += c;
            }
        }
        out
    }

    /// Average of `|ker(g − 1)|^j` over the cosets `spec`.
    pub fn fixed_point_moment(&self, spec: &CosetSpec, j: u32) -> Result<BigRational> {
        let cells = self.restrict(spec);
        let total: BigUint = cells.values().sum();
        if total.is_zero() {
            return Err(Error::EmptyCoset(0));
        }
        let sum: BigUint = cells.iter().map(|(k, c)| c * k.order().pow(j)).sum();
        Ok(BigRational::new(BigInt::from(sum), BigInt::from(total)))
    }
}

/// Exact histogram of `O(2m, Z/nZ)` (standard split form) as the product of
/// its prime components. `budget` bounds the order of the whole group.
pub fn group_histogram(m: usize, modulus: &Modulus, budget: u64) -> Result<GroupHistogram> {
    let order: BigUint = modulus.factors().iter().map(|&(l, e)| orthogonal_group_order(m, l, e)).product();
    if order > BigUint::from(budget) {
        return Err(Error::BudgetExceeded { order: order.to_string(), budget });
    }
    let mut cells: BTreeMap<(Invariants, ModuleClass), BigUint> = BTreeMap::new();
    cells.insert((Invariants { dickson: vec![], spinor: vec![] }, ModuleClass::trivial()), BigUint::one());
    for &(ell, e) in modulus.factors() {
        let comp = component_histogram(m, ell, e, budget)?;
        let mut next = BTreeMap::new();
        for ((inv, class), c) in &cells {
            for ((d, s, k), c2) in comp.iter() {
                let mut inv2 = inv.clone();
                inv2.dickson.push((ell, *d));
                inv2.spinor.push((ell, *s));
                *next.entry((inv2, class.direct_sum(k))).or_insert_with(BigUint::zero) += c * c2;
            }
        }
        cells = next;
    }
    Ok(GroupHistogram { cells })
}

/// The same histogram computed element by element through
/// [`OrthoGroup::for_each_element`] on an arbitrary split space. Much slower;
/// an independent check of [`group_histogram`].
pub fn group_histogram_direct(space: &QuadSpace, budget: u64) -> Result<GroupHistogram> {
    let group = OrthoGroup::new(space)?;
    let mut cells: BTreeMap<(Invariants, ModuleClass), BigUint> = BTreeMap::new();
    let mut err = None;
    group.for_each_element(budget, |g| {
        let inv = Invariants {
            dickson: g.dickson_bits().to_vec(),
            spinor: space
                .modulus()
                .factors()
                .iter()
                .map(|&(p, _)| (p, g.spinor_at(p).ok()))
                .collect(),
        };
        match kernel_class_mod_n(&g.matrix().minus_identity()) {
            Ok(class) => *cells.entry((inv, class)).or_insert_with(BigUint::zero) += 1u32,
            Err(e) => err = Some(e),
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(GroupHistogram { cells }),
    }
}

/// Generating function of `dim ker(g − 1)` over the named coset of
/// `O(2r, F_ℓ)`, by exhaustive enumeration.
pub fn enumerated_pgf(ell: u64, r: usize, coset: CosetName, budget: u64) -> Result<GenFun> {
    let hist = component_histogram(r, ell, 1, budget)?;
    let mut counts = vec![0u64; 2 * r + 1];
    let mut total = 0u64;
    for ((d, s, class), c) in hist.iter() {
        if coset.contains(*d, s.unwrap_or(false)) {
            counts[class.rank_at(ell)] += c;
            total += c;
        }
    }
    if total == 0 {
        return Err(Error::EmptyCoset(0));
    }
    Ok(GenFun::from_coeffs(
        counts.into_iter().map(|c| BigRational::new(BigInt::from(c), BigInt::from(total))).collect(),
    ))
}

/// Which elements a Burnside count averages over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selector {
    /// The whole orthogonal group.
    Full,
    /// The trivial group.
    Trivial,
    /// A union of `Ω`-cosets; a subgroup for `Ω` and the Dickson kernel.
    Coset(CosetSpec),
}

/// Average of `|V^m|^g = |ker(g − 1)|^m` over the selected elements.
pub fn fixed_point_average(space: &QuadSpace, selector: &Selector, m: u32, budget: u64) -> Result<BigRational> {
    if *selector == Selector::Trivial {
        return Ok(BigRational::from_integer(BigInt::from(space.n()).pow(space.rank() as u32 * m)));
    }
    // invariants and kernel classes are conjugation invariant, so the
    // standard split group gives the same counts as any split space
    OrthoGroup::new(space)?;
    let hist = group_histogram(space.half_rank(), space.modulus(), budget)?;
    let spec = match selector {
        Selector::Coset(c) => c.clone(),
        _ => CosetSpec::full(),
    };
    hist.fixed_point_moment(&spec, m)
}

/// Number of orbits of the selected subgroup on `V^m` (diagonal action), by
/// Burnside's lemma over exhaustive enumeration.
pub fn burnside_orbit_count(space: &QuadSpace, selector: &Selector, m: u32, budget: u64) -> Result<BigUint> {
    let avg = fixed_point_average(space, selector, m, budget)?;
    if !avg.is_integer() {
        return Err(Error::InvalidParameter(format!(
            "fixed-point average {avg} is not an integer; the selection is not a subgroup"
        )));
    }
    Ok(avg.to_integer().to_biguint().expect("nonnegative"))
}

/// `E[|ker(g − 1)|^j]` over `spec` by visiting every element of the product
/// `∏_ℓ O(2m, Z/ℓᵉ) = O(2m, Z/n)` one tuple at a time.
pub fn enumerated_moment(m: usize, modulus: &Modulus, spec: &CosetSpec, j: u32, budget: u64) -> Result<BigRational> {
    let order: BigUint = modulus.factors().iter().map(|&(l, e)| orthogonal_group_order(m, l, e)).product();
    if order > BigUint::from(budget) {
        return Err(Error::BudgetExceeded { order: order.to_string(), budget });
    }
    // per component: every element as (dickson, spinor, |ker|^j)
    let mut lists: Vec<Vec<(bool, Option<bool>, u128)>> = Vec::new();
    for &(ell, e) in modulus.factors() {
        let hist = component_histogram(m, ell, e, budget)?;
        let mut v = Vec::new();
        for ((d, s, class), c) in hist.iter() {
            let size: u128 = (ell as u128).pow(class.log_order(ell) * j);
            v.extend(std::iter::repeat((*d, *s, size)).take(*c as usize));
        }
        lists.push(v);
    }
    let primes: Vec<u64> = modulus.factors().iter().map(|f| f.0).collect();
    let mut idx = vec![0usize; lists.len()];
    let mut sum = BigUint::zero();
    let mut acc: u128 = 0;
    let mut count: u64 = 0;
    let mut dickson: Vec<(u64, bool)> = primes.iter().map(|&p| (p, false)).collect();
    let mut spinor: Vec<(u64, Option<bool>)> = primes.iter().map(|&p| (p, None)).collect();
    loop {
        let mut size: u128 = 1;
        for (k, l) in lists.iter().enumerate() {
            let (d, s, sz) = l[idx[k]];
            dickson[k].1 = d;
            spinor[k].1 = s;
            size *= sz;
        }
        if spec.contains_bits(&dickson, &spinor) {
            match acc.checked_add(size) {
                Some(a) => acc = a,
                None => {
                    sum += acc;
                    acc = size;
                }
            }
            count += 1;
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                sum += acc;
                if count == 0 {
                    return Err(Error::EmptyCoset(0));
                }
                return Ok(BigRational::new(BigInt::from(sum), BigInt::from(count)));
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

// ---------------------------------------------------------------------------
// the kernel distribution

/// How [`kernel_distribution`] is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mode {
    /// Exhaustive enumeration of the group.
    Exact,
    /// Seeded sampling.
    MonteCarlo { samples: u64 },
    /// Coset generating functions (squarefree moduli only).
    ClosedForm,
}

/// Parameters of the random kernel model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelDistParams {
    pub n: u64,
    /// Half of the rank of the quadratic space.
    pub half_rank: usize,
    pub coset: CosetSpec,
    pub mode: Mode,
    pub seed: u64,
    pub budget: u64,
    pub retry_cap: usize,
}

impl KernelDistParams {
    pub fn new(n: u64, half_rank: usize, coset: CosetSpec, mode: Mode) -> Self {
        KernelDistParams { n, half_rank, coset, mode, seed: 0, budget: DEFAULT_BUDGET, retry_cap: DEFAULT_RETRY_CAP }
    }

    /// Height `d` (rank `12d − 4`) and the coset selected by `[q^{d−1}]`.
    pub fn from_height(n: u64, d: u32, q: u64, mode: Mode) -> Result<Self> {
        let modulus = Modulus::new(n)?;
        let coset = CosetSpec::from_height(&modulus, d, q)?;
        Ok(Self::new(n, 6 * d as usize - 2, coset, mode))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn modulus(&self) -> Result<Modulus> {
        Modulus::new(self.n)
    }

    fn validate(&self) -> Result<Modulus> {
        let modulus = self.modulus()?;
        if self.half_rank == 0 {
            return Err(Error::InvalidParameter("half-rank must be at least 1".into()));
        }
        if self.mode == Mode::ClosedForm && modulus.factors().iter().any(|f| f.1 > 1) {
            return Err(Error::InvalidParameter("closed-form mode requires a squarefree modulus".into()));
        }
        if let Mode::MonteCarlo { samples: 0 } = self.mode {
            return Err(Error::InvalidParameter("at least one sample is required".into()));
        }
        Ok(modulus)
    }
}

/// The model rank attached to a Dickson vector: the bit at the smallest prime.
fn rank_of(dickson: &[(u64, bool)]) -> u32 {
    dickson.first().map_or(0, |d| u32::from(d.1))
}

/// Law of `(r, ker(g − 1))` with `r` the Dickson bit of `g`.
pub fn kernel_distribution_joint(p: &KernelDistParams) -> Result<Distribution<RankClass>> {
    let modulus = p.validate()?;
    match p.mode {
        Mode::Exact => {
            let hist = group_histogram(p.half_rank, &modulus, p.budget)?;
            let mut counts: BTreeMap<RankClass, BigUint> = BTreeMap::new();
            for ((inv, class), c) in &hist.cells {
                if p.coset.contains_bits(&inv.dickson, &inv.spinor) {
                    let key = RankClass::new(rank_of(&inv.dickson), class.clone());
                    *counts.entry(key).or_insert_with(BigUint::zero) += c;
                }
            }
            if counts.is_empty() {
                return Err(Error::EmptyCoset(0));
            }
            Distribution::from_exact_counts(JOINT_KEYS, counts)
        }
        Mode::MonteCarlo { samples } => {
            let group = OrthoGroup::new(&QuadSpace::build_standard_split(p.half_rank, &modulus)?)?;
            let mut dist = Distribution::empirical(JOINT_KEYS, Some(p.seed));
            for (stream, size) in rng::chunks(samples, MC_CHUNK) {
                dist.merge(&sample_chunk_with(&group, p, stream, size)?)?;
            }
            Ok(dist)
        }
        Mode::ClosedForm => closed_form_joint(p, &modulus),
    }
}

/// Law of `ker(g − 1)`.
pub fn kernel_distribution(p: &KernelDistParams) -> Result<Distribution<ModuleClass>> {
    Ok(kernel_distribution_joint(p)?.map(CLASS_KEYS, |k| k.class.clone()))
}

/// One Monte Carlo chunk: `size` draws from stream `stream` of `p.seed`.
/// Merging the chunks of [`rng::chunks`] in any order reproduces the
/// Monte Carlo mode of [`kernel_distribution_joint`].
pub fn kernel_sample_chunk(p: &KernelDistParams, stream: u64, size: u64) -> Result<Distribution<RankClass>> {
    let modulus = p.validate()?;
    let group = OrthoGroup::new(&QuadSpace::build_standard_split(p.half_rank, &modulus)?)?;
    sample_chunk_with(&group, p, stream, size)
}

fn sample_chunk_with(group: &OrthoGroup, p: &KernelDistParams, stream: u64, size: u64) -> Result<Distribution<RankClass>> {
    let mut rng = rng::stream(p.seed, stream);
    let mut dist = Distribution::empirical(JOINT_KEYS, Some(p.seed));
    for _ in 0..size {
        let g = group.sample_coset(&p.coset, p.retry_cap, &mut rng)?;
        let class = kernel_class_mod_n(&g.matrix().minus_identity())?;
        dist.add(RankClass::new(rank_of(g.dickson_bits()), class));
    }
    Ok(dist)
}

fn closed_form_joint(p: &KernelDistParams, modulus: &Modulus) -> Result<Distribution<RankClass>> {
    let r = p.half_rank as u32;
    let primes: Vec<u64> = modulus.factors().iter().map(|f| f.0).collect();
    let spinor_sets: Vec<Vec<bool>> = primes
        .iter()
        .map(|&l| {
            let all: &[bool] = if l == 2 { &[false] } else { &[false, true] };
            match p.coset.spinor.iter().find(|s| s.0 == l) {
                Some(&(_, want)) => all.iter().copied().filter(|&b| b == want).collect(),
                None => all.to_vec(),
            }
        })
        .collect();
    let k = primes.len();
    let vectors: Vec<Vec<bool>> = match p.coset.dickson {
        DicksonTarget::Zero => vec![vec![false; k]],
        DicksonTarget::One => vec![vec![true; k]],
        DicksonTarget::Diagonal => vec![vec![false; k], vec![true; k]],
        DicksonTarget::Any => (0..1u32 << k).map(|b| (0..k).map(|i| b >> i & 1 == 1).collect()).collect(),
    };
    // all admissible Dickson vectors carry the same number of elements
    let weight = BigRational::new(1.into(), BigInt::from(vectors.len()));
    let mut probs: BTreeMap<RankClass, BigRational> = BTreeMap::new();
    for dv in &vectors {
        let mut partial: Vec<(ModuleClass, BigRational)> = vec![(ModuleClass::trivial(), weight.clone())];
        for (i, &ell) in primes.iter().enumerate() {
            let pgf = coset_union_pgf(ell, r, dv[i], &spinor_sets[i])?;
            let mut next = Vec::new();
            for (class, w) in &partial {
                for (v, c) in pgf.coeffs().iter().enumerate() {
                    if !c.is_zero() {
                        next.push((class.direct_sum(&ModuleClass::elementary(ell, v)), w * c));
                    }
                }
            }
            partial = next;
        }
        let rank = u32::from(dv.first().copied().unwrap_or(false));
        for (class, w) in partial {
            *probs.entry(RankClass::new(rank, class)).or_insert_with(BigRational::zero) += w;
        }
    }
    debug_assert!(probs.values().all(|w| !w.is_negative()));
    Distribution::exact(JOINT_KEYS, probs)
}

/// The law of `dim ker(g − 1)` of a distribution over classes at a prime `ℓ`.
pub fn dimension_law(dist: &Distribution<ModuleClass>, ell: u64) -> Distribution<u32> {
    dist.map("dimension", |c| c.rank_at(ell) as u32)
}

/// Exact distribution over dimensions given by a generating function.
pub fn pgf_distribution(pgf: &GenFun) -> Result<Distribution<u32>> {
    let probs = pgf.coeffs().iter().enumerate().map(|(v, c)| (v as u32, c.clone())).collect();
    Distribution::exact("dimension", probs)
}

/// `E[|G|^j]` for a law on dimensions over `F_ℓ`, i.e. `G(ℓ^j)`.
pub fn pgf_moment(pgf: &GenFun, ell: u64, j: u32) -> BigRational {
    pgf.eval(&int(BigInt::from(ell).pow(j)))
}
