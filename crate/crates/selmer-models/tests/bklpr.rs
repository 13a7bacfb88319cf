use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use selmer_models::bklpr::*;
use selmer_models::distrib::{to_f64, tv_distance, Distribution};
use selmer_models::kernelmodel::{prime_moments_pmf, Normalization};
use selmer_models::markov::alternating_corank_pmf;
use selmer_models::modring::{snf_exponents, ModuleClass, Modulus};
use selmer_models::quadspace::QuadSpace;
use selmer_models::{rng, Error};

fn within(p_hat: f64, p: f64, n: u64, sigmas: f64) -> bool {
    (p_hat - p).abs() <= sigmas * (p * (1.0 - p) / n as f64).sqrt()
}

fn split_pair(m: usize, ell: u64, e: u32, z: MatrixKind, w: MatrixKind) -> LagrangianPair {
    let q = ell.pow(e);
    let space = QuadSpace::build_standard_split(m, &Modulus::prime_power(ell, e).unwrap()).unwrap();
    let pick = |k: MatrixKind| match k {
        MatrixKind::Coordinate => coordinate_lagrangian(m, q),
        MatrixKind::Dual => dual_coordinate_lagrangian(m, q),
    };
    LagrangianPair::new(space, pick(z), pick(w)).unwrap()
}

#[derive(Clone, Copy)]
enum MatrixKind {
    Coordinate,
    Dual,
}

/// Corank law of alternating `m × m` matrices shifted down by `r`, as torsion classes.
fn torsion_law_e1(ell: u64, m: usize, r: u32) -> Distribution<ModuleClass> {
    alternating_corank_pmf(ell, m).map(TORSION_KEYS, |&c| ModuleClass::elementary(ell, (c - r) as usize))
}

#[test]
fn identical_and_transverse_pairs() {
    let same = split_pair(3, 3, 2, MatrixKind::Coordinate, MatrixKind::Coordinate);
    let s = intersect_selmer(&same).unwrap();
    assert_eq!(s.chain, vec![3, 3]);
    assert_eq!(s.s, ModuleClass::from_exponents(3, [2, 2, 2]));
    let apart = split_pair(3, 3, 2, MatrixKind::Coordinate, MatrixKind::Dual);
    let t = intersect_selmer(&apart).unwrap();
    assert_eq!(t.chain, vec![0, 0]);
    assert!(t.s.is_trivial() && t.t.is_trivial());
    assert_eq!(t.rank, 0);
}

#[test]
fn sampled_lagrangians_are_isotropic_summands() {
    let mut r = rng::stream(41, 0);
    for (m, ell, e) in [(1usize, 3u64, 1u32), (3, 3, 2), (4, 5, 1), (2, 2, 2), (3, 7, 2)] {
        for _ in 0..30 {
            let p = sample_lagrangian_pair(m, ell, e, &mut r).unwrap();
            assert!(p.is_isotropic(&p.z) && p.is_isotropic(&p.w));
            assert!(snf_exponents(&p.z).unwrap().iter().all(|&x| x == 0));
            assert!(snf_exponents(&p.w).unwrap().iter().all(|&x| x == 0));
        }
    }
    assert!(sample_lagrangian_pair(0, 3, 1, &mut r).is_err());
}

#[test]
fn isotropic_lines_of_the_plane_are_uniform() {
    // the split plane mod 3 has nonzero isotropic vectors (1,0), (2,0), (0,1),
    // (0,2): two lines, each with two spanning vectors
    let mut r = rng::stream(43, 0);
    let mut by_vector: BTreeMap<Vec<u64>, u64> = BTreeMap::new();
    let draws = 10_000u64;
    for _ in 0..draws {
        let p = sample_lagrangian_pair(1, 3, 1, &mut r).unwrap();
        *by_vector.entry(p.z.column(0)).or_insert(0) += 1;
    }
    assert_eq!(by_vector.len(), 4);
    for (v, &c) in &by_vector {
        assert!(v[0] == 0 || v[1] == 0, "{v:?}");
        assert!(within(c as f64 / draws as f64, 0.25, draws, 3.0), "{by_vector:?}");
    }
    let first_line: u64 = by_vector.iter().filter(|(v, _)| v[1] == 0).map(|(_, c)| c).sum();
    assert!(within(first_line as f64 / draws as f64, 0.5, draws, 3.0));
}

#[test]
fn intersection_samples_are_consistent() {
    let mut checked = 0;
    for stream in 0..3 {
        for s in intersection_samples(5, 3, 3, 47, stream, 400).unwrap() {
            // parity lock and monotone chain
            assert!(s.chain.windows(2).all(|w| w[1] <= w[0] && (w[0] - w[1]) % 2 == 0), "{:?}", s.chain);
            assert_eq!(s.rank, s.chain[0] % 2);
            // S = (Z/ℓᵉ)^rank ⊕ T
            let free = ModuleClass::from_exponents(3, std::iter::repeat(3).take(s.rank as usize));
            assert_eq!(free.direct_sum(&s.t), s.s);
            // d_j counts the exponents ≥ j
            for (j, &d) in s.chain.iter().enumerate() {
                assert_eq!(s.s.count_at_least(3, j as u32 + 1), d as usize);
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 1200);
}

#[test]
fn intersection_agrees_with_block_kernel() {
    let mut r = rng::stream(53, 0);
    for (m, ell, e) in [(2usize, 3u64, 2u32), (4, 3, 3), (3, 5, 2), (3, 2, 3)] {
        for _ in 0..50 {
            let p = sample_lagrangian_pair(m, ell, e, &mut r).unwrap();
            let s = intersect_selmer(&p).unwrap();
            assert_eq!(s.s, intersection_class_via_block(&p).unwrap());
        }
    }
}

#[test]
fn alternating_model_small_cases() {
    let mut r = rng::stream(59, 0);
    let draws = 6000u64;
    let mut trivial = 0u64;
    for _ in 0..draws {
        let c = sample_alternating_model(2, 0, 3, 1, DEFAULT_BUFFER, &mut r).unwrap();
        if c.is_trivial() {
            trivial += 1;
        } else {
            assert_eq!(c, ModuleClass::elementary(3, 2));
        }
    }
    assert!(within(trivial as f64 / draws as f64, 2.0 / 3.0, draws, 3.0), "{trivial}");
    // m = r: only the zero matrix has corank m
    for _ in 0..20 {
        assert!(sample_alternating_model(2, 2, 3, 1, 0, &mut r).unwrap().is_trivial());
        assert!(sample_alternating_model(1, 1, 3, 2, 2, &mut r).unwrap().is_trivial());
    }
    assert!(sample_alternating_model(3, 0, 3, 1, 4, &mut r).is_err());
    assert!(sample_alternating_model(2, 3, 3, 1, 4, &mut r).is_err());
    // corank 4 of a 4 × 4 matrix mod 3³ needs the zero matrix: retries run out
    assert!(matches!(sample_alternating_model(4, 4, 3, 1, 2, &mut r), Err(Error::AcceptanceFailure { .. })));
}

#[test]
fn alternating_model_matches_corank_law_at_e1() {
    for (m, r) in [(4usize, 0u32), (6, 0), (5, 1)] {
        let samples = 20_000;
        let emp = alternating_model_distribution(m, r as usize, 3, 1, DEFAULT_BUFFER, samples, 61).unwrap();
        let exact = torsion_law_e1(3, m, r);
        let k = exact.support().len() as f64;
        let tv = to_f64(&tv_distance(&emp, &exact).unwrap());
        assert!(tv <= 5.0 * (k / samples as f64).sqrt(), "m={m} r={r}: {tv}");
    }
}

#[test]
fn finite_alternating_laws_approach_the_limit() {
    for (r, ms) in [(0u32, [2usize, 4, 6]), (1, [3, 5, 7])] {
        let limit = torsion_law_e1(3, 40 + r as usize, r);
        let tvs: Vec<BigRational> = ms.iter().map(|&m| tv_distance(&torsion_law_e1(3, m, r), &limit).unwrap()).collect();
        assert!(tvs[0] > tvs[1] && tvs[1] > tvs[2], "r={r}: {tvs:?}");
    }
}

#[test]
fn intersection_torsion_matches_alternating_model() {
    let samples = 6000u64;
    let mut inter: [Distribution<ModuleClass>; 2] =
        [Distribution::empirical(TORSION_KEYS, None), Distribution::empirical(TORSION_KEYS, None)];
    for (stream, size) in rng::chunks(samples, CHUNK) {
        for s in intersection_samples(6, 3, 2, 67, stream, size).unwrap() {
            inter[s.rank as usize].add(s.t);
        }
    }
    for r in 0..2usize {
        let n = inter[r].samples().unwrap();
        let alt = alternating_model_distribution(6 + r, r, 3, 2, DEFAULT_BUFFER, n, 71 + r as u64).unwrap();
        let k = inter[r].support().len().max(alt.support().len()) as f64;
        let tv = to_f64(&tv_distance(&inter[r], &alt).unwrap());
        assert!(tv <= 5.0 * (2.0 * k / n as f64).sqrt(), "r={r}: tv {tv} with {n} samples");
    }
}

#[test]
fn rank_law_is_half_half() {
    let law = bklpr_rank_law();
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    assert_eq!(law.probability(&0), half);
    assert_eq!(law.probability(&1), half);
    let joint = bklpr_joint(&BklprParams::new(3, 8, 20_000, 73)).unwrap();
    let ranks = joint.map("rank", |k| k.rank);
    assert!(within(to_f64(&ranks.probability(&0)), 0.5, 20_000, 3.0));
    for k in joint.support() {
        // G = (Z/n)^r ⊕ T and the 3-rank has the parity of r
        assert_eq!(k.class.rank_at(3) % 2, k.rank as usize);
    }
}

#[test]
fn selmer_law_matches_prime_moments() {
    let samples = 100_000u64;
    let joint = bklpr_joint(&BklprParams::new(3, 12, samples, 79)).unwrap();
    let dims = selmer_law(&joint).map("dimension", |c| c.rank_at(3) as u32);
    for c in 0..5u32 {
        let p = to_f64(&prime_moments_pmf(3, c, 60, Normalization::Plus));
        let p_hat = to_f64(&dims.probability(&c));
        assert!(within(p_hat, p, samples, 3.0), "c={c}: {p_hat} vs {p}");
    }
}

#[test]
fn composite_components_independent_given_rank() {
    let samples = 20_000u64;
    let joint = bklpr_joint(&BklprParams::new(15, 8, samples, 83)).unwrap();
    for r in 0..2u32 {
        // contingency table of (3-rank bucket, 5-rank bucket)
        let mut table = [[0f64; 2]; 2];
        for k in joint.support().iter().filter(|k| k.rank == r) {
            let a = usize::from(k.class.rank_at(3) > r as usize);
            let b = usize::from(k.class.rank_at(5) > r as usize);
            table[a][b] += joint.count(k) as f64;
        }
        let total: f64 = table.iter().flatten().sum();
        let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
        let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
        let mut stat = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let e = rows[i] * cols[j] / total;
                stat += (table[i][j] - e).powi(2) / e;
            }
        }
        let p = ChiSquared::new(1.0).unwrap().sf(stat);
        assert!(p > 1e-3, "rank {r}: χ² = {stat}, p = {p}");
    }
}

#[test]
fn joint_sampler_is_chunk_deterministic() {
    let p = BklprParams { sampler: TorsionSampler::Intersection, ..BklprParams::new(9, 4, 5000, 89) };
    let a = bklpr_joint(&p).unwrap();
    let mut b = Distribution::empirical(a.key_space.clone(), Some(89));
    for (stream, size) in rng::chunks(5000, CHUNK).into_iter().rev() {
        b.merge(&bklpr_chunk(&p, stream, size).unwrap()).unwrap();
    }
    assert_eq!(a, b);
    for k in a.support() {
        // truncated at 9, with the free part (Z/9)^r inside
        assert!(k.class.exponents(3).iter().all(|&x| x <= 2));
        assert!(k.class.count_at_least(3, 2) >= k.rank as usize);
        assert_eq!(k.class.rank_at(3) % 2, k.rank as usize);
    }
}
