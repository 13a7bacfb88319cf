use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};

use selmer_models::bklpr::intersection_samples;
use selmer_models::distrib::to_f64;
use selmer_models::kernelmodel::component_histogram;
use selmer_models::markov::*;
use selmer_models::modring::ModuleClass;
use selmer_models::orthogroup::DEFAULT_BUDGET;
use selmer_models::rng;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

#[test]
fn corank_examples() {
    let p = alternating_corank_pmf(3, 2);
    assert_eq!(p.probability(&0), q(2, 3));
    assert_eq!(p.probability(&2), q(1, 3));
    assert_eq!(alternating_corank_pmf(3, 0).probability(&0), BigRational::one());
    assert_eq!(alternating_corank_pmf(5, 1).probability(&1), BigRational::one());
}

#[test]
fn rank_counts_match_brute_force() {
    for ell in [2u64, 3, 5] {
        let max_n = if ell == 5 { 4 } else { 5 };
        for n in 0..=max_n {
            assert_eq!(alternating_rank_counts(ell, n), alternating_rank_counts_brute(ell, n), "ℓ={ell} n={n}");
            let total: BigUint = alternating_rank_counts(ell, n).iter().sum();
            assert_eq!(total, BigUint::from(ell).pow((n * n.saturating_sub(1) / 2) as u32));
        }
    }
}

#[test]
fn kernel_rows() {
    for ell in [2u64, 3, 7] {
        let k = CorankKernel::new(ell, 12);
        for d in 0..=12u32 {
            let row = k.row(d);
            assert!(row.values().sum::<BigRational>().is_one());
            assert!(row.keys().all(|&b| b <= d && (d - b) % 2 == 0));
            // corank d only for the zero form
            let zero = BigRational::one() / BigRational::from_integer(BigInt::from(ell).pow(d * d.saturating_sub(1) / 2));
            assert_eq!(k.prob(d, d), zero);
        }
    }
}

#[test]
fn chains_absorb_and_keep_parity() {
    let k = CorankKernel::new(3, 10);
    let push = k.pushforward(0, 5);
    assert!(push.iter().all(|m| m.len() == 1 && m[&0].is_one()));
    for start in [7u32, 8] {
        for law in k.pushforward(start, 6) {
            assert!(law.keys().all(|&d| d % 2 == start % 2));
            assert!(law.values().sum::<BigRational>().is_one());
        }
    }
    let mut r = rng::stream(101, 0);
    assert_eq!(evolve_chain(0, 3, 5, &mut r), vec![0; 5]);
    for _ in 0..200 {
        let ch = evolve_chain(9, 3, 5, &mut r);
        assert_eq!(ch[0], 9);
        assert!(ch.windows(2).all(|w| w[1] <= w[0] && (w[0] - w[1]) % 2 == 0));
    }
}

#[test]
fn pushforward_matches_sampled_chains() {
    let (ell, start, steps) = (3u64, 6u32, 4usize);
    let k = CorankKernel::new(ell, start);
    let exact = &k.pushforward(start, steps)[steps - 1];
    let mut r = rng::stream(103, 0);
    let n = 20_000u64;
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for _ in 0..n {
        *counts.entry(*evolve_chain(start, ell, steps, &mut r).last().unwrap()).or_insert(0) += 1;
    }
    for (d, p) in exact {
        let p = to_f64(p);
        let p_hat = *counts.get(d).unwrap_or(&0) as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((p_hat - p).abs() <= 4.0 * sigma + 1e-9, "d={d}: {p_hat} vs {p}");
    }
    assert!(counts.keys().all(|d| exact.contains_key(d)));
}

#[test]
fn chain_of_a_class() {
    let c = ModuleClass::from_exponents(3, [1, 2, 2, 3]);
    assert_eq!(chain_from_class(&c, 3, 4), vec![4, 3, 1, 0]);
    assert_eq!(chain_from_class(&ModuleClass::trivial(), 3, 2), vec![0, 0]);
}

#[test]
fn exact_markov_over_small_groups() {
    for (m, ell, e) in [(1usize, 3u64, 2u32), (1, 5, 2), (1, 3, 3), (2, 3, 2)] {
        let hist = component_histogram(m, ell, e, DEFAULT_BUDGET).unwrap();
        let mut classes: BTreeMap<ModuleClass, BigUint> = BTreeMap::new();
        for ((_, _, class), c) in hist.iter() {
            *classes.entry(class.clone()).or_insert_with(BigUint::zero) += *c;
        }
        let kernel = CorankKernel::new(ell, 2 * m as u32);
        for i in 1..e {
            let counts = transition_counts(classes.iter(), ell, i);
            let report = verify_markov_exact(&counts, &kernel);
            assert!(report.pass, "m={m} ℓ={ell} e={e} i={i}: {:?}", report.rows);
        }
    }
}

#[test]
fn two_adic_top_bucket_is_measured() {
    // O(4, Z/4): the d_1 = 4 bucket falls outside the theorem, here it happens to agree
    let hist = component_histogram(2, 2, 2, DEFAULT_BUDGET).unwrap();
    let mut classes: BTreeMap<ModuleClass, BigUint> = BTreeMap::new();
    for ((_, _, class), c) in hist.iter() {
        *classes.entry(class.clone()).or_insert_with(BigUint::zero) += *c;
    }
    let report = verify_markov_exact(&transition_counts(classes.iter(), 2, 1), &CorankKernel::new(2, 4));
    assert!(report.rows.iter().all(|r| r.equal), "{:?}", report.rows);
    let top = report.rows.iter().find(|r| r.from == 4).unwrap();
    assert_eq!(top.observed, vec![(0, "7/16".to_string()), (2, "35/64".to_string()), (4, "1/64".to_string())]);
}

#[test]
fn intersection_chains_pass_the_chi_square_test() {
    let mut chains = Vec::new();
    for stream in 0..3 {
        chains.extend(intersection_samples(6, 3, 3, 107, stream, 2000).unwrap().into_iter().map(|s| s.chain));
    }
    let kernel = CorankKernel::new(3, 12);
    let report = verify_markov(&chains, &kernel, &MarkovOptions::default());
    assert!(report.pass, "{:?}", report.buckets);
    assert!(report.buckets.iter().any(|b| b.verdict == Verdict::Pass && b.dof >= 1));
}

#[test]
fn chi_square_test_rejects_a_wrong_kernel() {
    // chains driven by ℓ = 2 tested against the ℓ = 5 kernel
    let mut r = rng::stream(109, 0);
    let chains: Vec<Vec<u32>> = (0..3000).map(|_| evolve_chain(6, 2, 3, &mut r)).collect();
    let report = verify_markov(&chains, &CorankKernel::new(5, 6), &MarkovOptions::default());
    assert!(!report.pass);
    let ok = verify_markov(&chains, &CorankKernel::new(2, 6), &MarkovOptions::default());
    assert!(ok.pass, "{:?}", ok.buckets);
}

#[test]
fn small_and_separate_buckets() {
    let chains = vec![vec![4, 2, 2], vec![4, 4, 4]];
    let opts = MarkovOptions { separate: Some(4), ..MarkovOptions::default() };
    let report = verify_markov(&chains, &CorankKernel::new(3, 4), &opts);
    let b4 = report.buckets.iter().find(|b| b.from == 4).unwrap();
    assert_eq!(b4.verdict, Verdict::Separate);
    let b2 = report.buckets.iter().find(|b| b.from == 2).unwrap();
    assert_eq!(b2.verdict, Verdict::Skipped);
    assert!(report.pass);
    assert!(!report.notices.is_empty());
}
