//! The corank chain of random alternating forms: exact transition kernel,
//! sampled and exact evolution, and checks of the Markov property.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::distrib::{to_f64, Distribution};
use crate::modring::ModuleClass;
use crate::rng::SelmerRng;

/// `A(n, r)`: number of alternating `n × n` matrices over `F_ℓ` of rank `r`,
/// indexed by `r`. Bordering recursion: a new last row/column either lies in
/// the row space of the old matrix or raises the rank by two.
pub fn alternating_rank_counts(ell: u64, n: usize) -> Vec<BigUint> {
    let l = BigUint::from(ell);
    let mut counts = vec![BigUint::from(1u32)];
    for k in 1..=n {
        let mut next = vec![BigUint::zero(); k + 1];
        for (r, c) in counts.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            // stays at rank r: the new column lies in the column space
            next[r] += c * l.pow(r as u32);
            // rank r + 2
            if r + 2 <= k {
                next[r + 2] += c * (l.pow(k as u32 - 1) - l.pow(r as u32));
            }
        }
        counts = next;
    }
    counts
}

/// The same counts by enumerating all `ℓ^{n(n−1)/2}` matrices.
pub fn alternating_rank_counts_brute(ell: u64, n: usize) -> Vec<BigUint> {
    let slots: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let mut counts = vec![0u64; n + 1];
    let mut vals = vec![0u64; slots.len()];
    let mut buf = vec![0u64; n * n];
    loop {
        buf.iter_mut().for_each(|x| *x = 0);
        for (&(i, j), &v) in slots.iter().zip(&vals) {
            buf[i * n + j] = v;
            buf[j * n + i] = (ell - v) % ell;
        }
        counts[crate::modring::rank_in_place(&mut buf, n, n, ell)] += 1;
        let mut k = 0;
        loop {
            if k == vals.len() {
                return counts.into_iter().map(BigUint::from).collect();
            }
            vals[k] += 1;
            if vals[k] < ell {
                break;
            }
            vals[k] = 0;
            k += 1;
        }
    }
}

/// Exact law of `dim ker` of a uniform alternating `n × n` matrix over `F_ℓ`.
pub fn alternating_corank_pmf(ell: u64, n: usize) -> Distribution<u32> {
    let counts: BTreeMap<u32, BigUint> = alternating_rank_counts(ell, n)
        .into_iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(r, c)| ((n - r) as u32, c))
        .collect();
    Distribution::from_exact_counts("corank", counts).expect("nonempty")
}

/// Transition probabilities `P(d → d′)` of the corank chain for `d ≤ n_max`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorankKernel {
    pub ell: u64,
    pub n_max: u32,
    rows: Vec<BTreeMap<u32, BigRational>>,
}

impl CorankKernel {
    pub fn new(ell: u64, n_max: u32) -> Self {
        let rows = (0..=n_max).map(|d| alternating_corank_pmf(ell, d as usize).probabilities()).collect();
        CorankKernel { ell, n_max, rows }
    }

    /// Row `d`.
    pub fn row(&self, d: u32) -> &BTreeMap<u32, BigRational> {
        &self.rows[d as usize]
    }

    pub fn prob(&self, from: u32, to: u32) -> BigRational {
        self.rows[from as usize].get(&to).cloned().unwrap_or_else(BigRational::zero)
    }

    /// Exact laws of `d_1, …, d_steps` starting from `d_1 = start`.
    pub fn pushforward(&self, start: u32, steps: usize) -> Vec<BTreeMap<u32, BigRational>> {
        let mut out = Vec::with_capacity(steps);
        if steps == 0 {
            return out;
        }
        let mut cur = BTreeMap::from([(start, BigRational::from_integer(1.into()))]);
        out.push(cur.clone());
        for _ in 1..steps {
            let mut next: BTreeMap<u32, BigRational> = BTreeMap::new();
            for (d, p) in &cur {
                for (d2, q) in self.row(*d) {
                    *next.entry(*d2).or_insert_with(BigRational::zero) += p * q;
                }
            }
            cur = next;
            out.push(cur.clone());
        }
        out
    }
}

/// Corank of a uniform random alternating `d × d` matrix over `F_ℓ`.
pub fn sample_corank(d: u32, ell: u64, rng: &mut SelmerRng) -> u32 {
    if d < 2 {
        return d;
    }
    let a = crate::bklpr::random_alternating(d as usize, ell, rng);
    d - a.rank_mod_prime() as u32
}

/// A sampled chain `d_1 = start, d_2, …` of length `steps`.
pub fn evolve_chain(start: u32, ell: u64, steps: usize, rng: &mut SelmerRng) -> Vec<u32> {
    let mut out = Vec::with_capacity(steps);
    let mut d = start;
    for i in 0..steps {
        if i > 0 {
            d = sample_corank(d, ell, rng);
        }
        out.push(d);
    }
    out
}

/// The chain `d_j = #{exponents ≥ j}` of a class, `1 ≤ j ≤ e`.
pub fn chain_from_class(class: &ModuleClass, ell: u64, e: u32) -> Vec<u32> {
    (1..=e).map(|j| class.count_at_least(ell, j) as u32).collect()
}

/// Counts of consecutive pairs `(d_i, d_{i+1})` over weighted classes.
pub fn transition_counts<'a>(
    classes: impl IntoIterator<Item = (&'a ModuleClass, &'a BigUint)>,
    ell: u64,
    i: u32,
) -> BTreeMap<(u32, u32), BigUint> {
    let mut out = BTreeMap::new();
    for (class, c) in classes {
        let a = class.count_at_least(ell, i) as u32;
        let b = class.count_at_least(ell, i + 1) as u32;
        *out.entry((a, b)).or_insert_with(BigUint::zero) += c;
    }
    out
}

/// Exact comparison of one conditional law with a kernel row.
#[derive(Clone, Debug, Serialize)]
pub struct ExactRow {
    pub from: u32,
    /// `(d′, probability)` of the observed conditional law.
    pub observed: Vec<(u32, String)>,
    pub expected: Vec<(u32, String)>,
    pub equal: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExactMarkovReport {
    pub rows: Vec<ExactRow>,
    pub pass: bool,
}

/// Check that `P(d_{i+1} = b | d_i = a)` equals the kernel row `a` exactly for
/// every `a` with positive mass.
pub fn verify_markov_exact(counts: &BTreeMap<(u32, u32), BigUint>, kernel: &CorankKernel) -> ExactMarkovReport {
    let mut by_from: BTreeMap<u32, BTreeMap<u32, BigUint>> = BTreeMap::new();
    for (&(a, b), c) in counts {
        *by_from.entry(a).or_default().entry(b).or_insert_with(BigUint::zero) += c;
    }
    let mut rows = Vec::new();
    for (a, row) in by_from {
        let total: BigUint = row.values().sum();
        let observed: BTreeMap<u32, BigRational> = row
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|(b, c)| (b, BigRational::new(BigInt::from(c), BigInt::from(total.clone()))))
            .collect();
        let expected = if a <= kernel.n_max { kernel.row(a).clone() } else { BTreeMap::new() };
        let equal = observed == expected;
        let fmt = |m: &BTreeMap<u32, BigRational>| m.iter().map(|(k, v)| (*k, v.to_string())).collect();
        rows.push(ExactRow { from: a, observed: fmt(&observed), expected: fmt(&expected), equal });
    }
    let pass = rows.iter().all(|r| r.equal);
    ExactMarkovReport { rows, pass }
}

/// Settings of [`verify_markov`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarkovOptions {
    /// Family-wise significance level, split across tested buckets.
    pub alpha: f64,
    /// Cells with smaller expected count are pooled with their neighbours.
    pub min_expected: f64,
    /// Buckets with fewer transitions are skipped.
    pub min_count: u64,
    /// A bucket `d_i = a` reported separately and excluded from the verdict
    /// (the `ℓ = 2`, `d_i = 2m` case).
    pub separate: Option<u32>,
}

impl Default for MarkovOptions {
    fn default() -> Self {
        MarkovOptions { alpha: 1e-3, min_expected: 5.0, min_count: 20, separate: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
    Separate,
}

#[derive(Clone, Debug, Serialize)]
pub struct BucketReport {
    pub from: u32,
    pub transitions: u64,
    pub observed: BTreeMap<u32, u64>,
    pub expected: BTreeMap<u32, f64>,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Observations outside the support of the kernel row.
    pub off_support: u64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct MarkovReport {
    pub buckets: Vec<BucketReport>,
    /// Per-bucket p-value threshold after the Bonferroni correction.
    pub threshold: f64,
    pub pass: bool,
    pub notices: Vec<String>,
}

/// χ² test of each bucket `d_i = a` of the observed chains against row `a`.
pub fn verify_markov(chains: &[Vec<u32>], kernel: &CorankKernel, opts: &MarkovOptions) -> MarkovReport {
    let mut buckets: BTreeMap<u32, BTreeMap<u32, u64>> = BTreeMap::new();
    for ch in chains {
        for w in ch.windows(2) {
            *buckets.entry(w[0]).or_default().entry(w[1]).or_insert(0) += 1;
        }
    }
    let mut notices = Vec::new();
    let mut reports = Vec::new();
    for (a, observed) in buckets {
        let n: u64 = observed.values().sum();
        let row: BTreeMap<u32, f64> = if a <= kernel.n_max {
            kernel.row(a).iter().map(|(k, v)| (*k, to_f64(v))).collect()
        } else {
            notices.push(format!("bucket d = {a} exceeds the kernel size {}", kernel.n_max));
            BTreeMap::new()
        };
        let off_support: u64 = observed.iter().filter(|(b, _)| !row.contains_key(b)).map(|(_, c)| c).sum();
        let expected: BTreeMap<u32, f64> = row.iter().map(|(b, p)| (*b, p * n as f64)).collect();
        // pool small cells in order of d′
        let mut pooled: Vec<(f64, f64)> = Vec::new();
        let mut cur = (0.0, 0.0);
        for (b, e) in &expected {
            cur.0 += *observed.get(b).unwrap_or(&0) as f64;
            cur.1 += e;
            if cur.1 >= opts.min_expected {
                pooled.push(cur);
                cur = (0.0, 0.0);
            }
        }
        if cur.1 > 0.0 {
            match pooled.last_mut() {
                Some(last) => {
                    last.0 += cur.0;
                    last.1 += cur.1;
                }
                None => pooled.push(cur),
            }
        }
        let statistic: f64 = pooled.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
        let dof = pooled.len().saturating_sub(1);
        let p_value = if dof == 0 {
            1.0
        } else {
            ChiSquared::new(dof as f64).map(|c| c.sf(statistic)).unwrap_or(0.0)
        };
        let verdict = if Some(a) == opts.separate {
            Verdict::Separate
        } else if n < opts.min_count {
            notices.push(format!("bucket d = {a} skipped: only {n} transitions"));
            Verdict::Skipped
        } else {
            Verdict::Pass
        };
        reports.push(BucketReport { from: a, transitions: n, observed, expected, statistic, dof, p_value, off_support, verdict });
    }
    let tested = reports.iter().filter(|r| r.verdict == Verdict::Pass).count().max(1);
    let threshold = opts.alpha / tested as f64;
    for r in reports.iter_mut() {
        if r.verdict == Verdict::Pass && (r.off_support > 0 || r.p_value < threshold) {
            r.verdict = Verdict::Fail;
        }
    }
    let pass = reports.iter().all(|r| r.verdict != Verdict::Fail);
    MarkovReport { buckets: reports, threshold, pass, notices }
}
