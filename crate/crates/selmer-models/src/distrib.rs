//! Exact and empirical distributions, moments, total variation and model comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Display};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::modring::ModuleClass;

/// Outcomes whose cardinality can be measured, for moments.
pub trait Cardinality {
    fn size(&self) -> BigUint;
}

impl Cardinality for ModuleClass {
    fn size(&self) -> BigUint {
        self.order()
    }
}

/// A model rank together with a module class, the key of joint rank/Selmer laws.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RankClass {
    pub rank: u32,
    pub class: ModuleClass,
}

impl RankClass {
    pub fn new(rank: u32, class: ModuleClass) -> Self {
        RankClass { rank, class }
    }
}

impl fmt::Display for RankClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r={}; {}", self.rank, self.class)
    }
}

impl Cardinality for RankClass {
    fn size(&self) -> BigUint {
        self.class.order()
    }
}

/// Weights of a distribution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Weights<K: Ord> {
    /// Exact probabilities summing to one.
    Exact(BTreeMap<K, BigRational>),
    /// Raw sample counts.
    Empirical { counts: BTreeMap<K, u64>, total: u64 },
}

/// A probability distribution over outcomes `K`, with provenance metadata.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Distribution<K: Ord> {
    weights: Weights<K>,
    /// Label of the outcome space; distributions are only comparable when equal.
    pub key_space: String,
    pub seed: Option<u64>,
}

impl<K: Ord + Clone> Distribution<K> {
    /// Exact distribution; weights must be nonnegative and sum to one.
    pub fn exact(key_space: impl Into<String>, probs: BTreeMap<K, BigRational>) -> Result<Self> {
        let total: BigRational = probs.values().sum();
        if !total.is_one() || probs.values().any(|p| p.is_negative()) {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, not 1")));
        }
        let probs = probs.into_iter().filter(|(_, p)| !p.is_zero()).collect();
        Ok(Distribution { weights: Weights::Exact(probs), key_space: key_space.into(), seed: None })
    }

    /// Exact distribution from integer counts (normalized by their sum).
    pub fn from_exact_counts(key_space: impl Into<String>, counts: BTreeMap<K, BigUint>) -> Result<Self> {
        let total: BigUint = counts.values().sum();
        if total.is_zero() {
            return Err(Error::InvalidParameter("no mass".into()));
        }
        let t = BigInt::from(total);
        let probs = counts
            .into_iter()
            .map(|(k, c)| (k, BigRational::new(BigInt::from(c), t.clone())))
            .collect();
        Self::exact(key_space, probs)
    }

    /// Empty empirical accumulator.
    pub fn empirical(key_space: impl Into<String>, seed: Option<u64>) -> Self {
        Distribution {
            weights: Weights::Empirical { counts: BTreeMap::new(), total: 0 },
            key_space: key_space.into(),
            seed,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.weights, Weights::Exact(_))
    }

    pub fn weights(&self) -> &Weights<K> {
        &self.weights
    }

    /// Record one sample. Panics on exact distributions.
    pub fn add(&mut self, key: K) {
        self.add_n(key, 1)
    }

    pub fn add_n(&mut self, key: K, n: u64) {
        match &mut self.weights {
            Weights::Empirical { counts, total } => {
                *counts.entry(key).or_insert(0) += n;
                *total += n;
            }
            Weights::Exact(_) => panic!("cannot add samples to an exact distribution"),
        }
    }

    /// Merge two empirical accumulators. Associative and commutative.
    pub fn merge(&mut self, other: &Distribution<K>) -> Result<()> {
        if self.key_space != other.key_space {
            return Err(Error::KeyMismatch(format!("{} vs {}", self.key_space, other.key_space)));
        }
        match (&mut self.weights, &other.weights) {
            (Weights::Empirical { counts, total }, Weights::Empirical { counts: c2, total: t2 }) => {
                for (k, v) in c2 {
                    *counts.entry(k.clone()).or_insert(0) += v;
                }
                *total += t2;
                Ok(())
            }
            _ => Err(Error::InvalidParameter("only empirical distributions can be merged".into())),
        }
    }

    /// Number of samples; `None` for exact distributions.
    pub fn samples(&self) -> Option<u64> {
        match &self.weights {
            Weights::Exact(_) => None,
            Weights::Empirical { total, .. } => Some(*total),
        }
    }

    pub fn count(&self, key: &K) -> u64 {
        match &self.weights {
            Weights::Empirical { counts, .. } => counts.get(key).copied().unwrap_or(0),
            Weights::Exact(_) => 0,
        }
    }

    pub fn probability(&self, key: &K) -> BigRational {
        match &self.weights {
            Weights::Exact(p) => p.get(key).cloned().unwrap_or_else(BigRational::zero),
            Weights::Empirical { counts, total } => {
                if *total == 0 {
                    return BigRational::zero();
                }
                BigRational::new(
                    BigInt::from(counts.get(key).copied().unwrap_or(0)),
                    BigInt::from(*total),
                )
            }
        }
    }

    pub fn support(&self) -> Vec<K> {
        match &self.weights {
            Weights::Exact(p) => p.keys().cloned().collect(),
            Weights::Empirical { counts, .. } => counts.keys().cloned().collect(),
        }
    }

    /// Probabilities (empirical frequencies for empirical inputs).
    pub fn probabilities(&self) -> BTreeMap<K, BigRational> {
        self.support().into_iter().map(|k| {
            let p = self.probability(&k);
            (k, p)
        }).collect()
    }

    /// Push forward along `f`.
    pub fn map<K2: Ord + Clone>(&self, key_space: impl Into<String>, f: impl Fn(&K) -> K2) -> Distribution<K2> {
        let weights = match &self.weights {
            Weights::Exact(p) => {
                let mut out: BTreeMap<K2, BigRational> = BTreeMap::new();
                for (k, v) in p {
                    *out.entry(f(k)).or_insert_with(BigRational::zero) += v;
                }
                Weights::Exact(out)
            }
            Weights::Empirical { counts, total } => {
                let mut out: BTreeMap<K2, u64> = BTreeMap::new();
                for (k, v) in counts {
                    *out.entry(f(k)).or_insert(0) += v;
                }
                Weights::Empirical { counts: out, total: *total }
            }
        };
        Distribution { weights, key_space: key_space.into(), seed: self.seed }
    }

    /// Condition on an event.
    pub fn condition(&self, pred: impl Fn(&K) -> bool) -> Result<Distribution<K>> {
        let weights = match &self.weights {
            Weights::Exact(p) => {
                let kept: BTreeMap<K, BigRational> = p.iter().filter(|(k, _)| pred(k)).map(|(k, v)| (k.clone(), v.clone())).collect();
                let mass: BigRational = kept.values().sum();
                if mass.is_zero() {
                    return Err(Error::InvalidParameter("conditioning on a null event".into()));
                }
                Weights::Exact(kept.into_iter().map(|(k, v)| (k, v / &mass)).collect())
            }
            Weights::Empirical { counts, .. } => {
                let kept: BTreeMap<K, u64> = counts.iter().filter(|(k, _)| pred(k)).map(|(k, v)| (k.clone(), *v)).collect();
                let total = kept.values().sum();
                Weights::Empirical { counts: kept, total }
            }
        };
        Ok(Distribution { weights, key_space: self.key_space.clone(), seed: self.seed })
    }
}

/// `½ Σ |P(x) − P′(x)|`, exact (empirical inputs use their frequencies).
pub fn tv_distance<K: Ord + Clone>(a: &Distribution<K>, b: &Distribution<K>) -> Result<BigRational> {
    if a.key_space != b.key_space {
        return Err(Error::KeyMismatch(format!("{} vs {}", a.key_space, b.key_space)));
    }
    let keys: BTreeSet<K> = a.support().into_iter().chain(b.support()).collect();
    let sum: BigRational = keys.iter().map(|k| (a.probability(k) - b.probability(k)).abs()).sum();
    Ok(sum / BigRational::from_integer(2.into()))
}

/// `E[|G|^j]`.
pub fn moment<K: Ord + Clone + Cardinality>(p: &Distribution<K>, j: u32) -> BigRational {
    p.probabilities()
        .iter()
        .map(|(k, w)| w * BigRational::from_integer(BigInt::from(k.size().pow(j))))
        .sum()
}

/// `E[|G|]`.
pub fn mean_size<K: Ord + Clone + Cardinality>(p: &Distribution<K>) -> BigRational {
    moment(p, 1)
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// How `compare_models` decides pass/fail.
#[derive(Clone, Debug, PartialEq)]
pub enum TolerancePolicy {
    /// Pass iff the exact TV is at most the given value.
    Exact(BigRational),
    /// Pass iff TV ≤ `factor·Σ √(K/Nᵢ)` over empirical inputs, `K` the joint support size.
    Statistical { factor: f64 },
    /// Pass iff TV ≤ the given value.
    Absolute(f64),
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy::Statistical { factor: 5.0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OutcomeDelta {
    pub outcome: String,
    pub p_a: f64,
    pub p_b: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    /// Exact TV as `num/den`.
    pub tv_exact: String,
    pub tv: f64,
    /// Threshold applied by the policy.
    pub bound: f64,
    pub pass: bool,
    pub outcomes: Vec<OutcomeDelta>,
    /// `(j, E_A[|G|^j], E_B[|G|^j])`.
    pub moments: Vec<(u32, f64, f64)>,
}

/// Compare two distributions on the same outcome space.
pub fn compare_models<K: Ord + Clone + Display + Cardinality>(
    a: &Distribution<K>,
    b: &Distribution<K>,
    policy: &TolerancePolicy,
    max_moment: u32,
) -> Result<ComparisonReport> {
    let tv = tv_distance(a, b)?;
    let keys: BTreeSet<K> = a.support().into_iter().chain(b.support()).collect();
    let outcomes = keys
        .iter()
        .map(|k| {
            let (pa, pb) = (to_f64(&a.probability(k)), to_f64(&b.probability(k)));
            OutcomeDelta { outcome: k.to_string(), p_a: pa, p_b: pb, delta: pa - pb }
        })
        .collect();
    let moments = (1..=max_moment).map(|j| (j, to_f64(&moment(a, j)), to_f64(&moment(b, j)))).collect();
    let (bound, pass) = match policy {
        TolerancePolicy::Exact(t) => (to_f64(t), &tv <= t),
        TolerancePolicy::Absolute(t) => (*t, to_f64(&tv) <= *t),
        TolerancePolicy::Statistical { factor } => {
            let k = keys.len().max(1) as f64;
            let noise: f64 = [a.samples(), b.samples()]
                .iter()
                .flatten()
                .map(|&n| (k / n.max(1) as f64).sqrt())
                .sum();
            let bound = factor * noise;
            (bound, to_f64(&tv) <= bound)
        }
    };
    Ok(ComparisonReport { tv_exact: tv.to_string(), tv: to_f64(&tv), bound, pass, outcomes, moments })
}

impl<K: Ord + Clone + Serialize> Distribution<K> {
    /// `{"kind", "key_space", "seed", "samples", "pmf": [[key, num, den], …]}`;
    /// empirical entries carry raw counts over the total.
    pub fn to_json(&self) -> Value {
        let pmf: Vec<Value> = match &self.weights {
            Weights::Exact(p) => p
                .iter()
                .map(|(k, v)| json!([k, v.numer().to_string(), v.denom().to_string()]))
                .collect(),
            Weights::Empirical { counts, total } => {
                counts.iter().map(|(k, c)| json!([k, c.to_string(), total.to_string()])).collect()
            }
        };
        json!({
            "kind": if self.is_exact() { "exact" } else { "empirical" },
            "key_space": self.key_space,
            "seed": self.seed,
            "samples": self.samples(),
            "pmf": pmf,
        })
    }
}

impl<K: Ord + Clone + Display> Distribution<K> {
    /// CSV rows `outcome,numerator,denominator,probability`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("outcome,numerator,denominator,probability\n");
        for (k, p) in self.probabilities() {
            let (num, den) = match &self.weights {
                Weights::Empirical { counts, total } => (counts[&k].to_string(), total.to_string()),
                Weights::Exact(_) => (p.numer().to_string(), p.denom().to_string()),
            };
            s.push_str(&format!("\"{}\",{},{},{}\n", k, num, den, to_f64(&p)));
        }
        s
    }
}
