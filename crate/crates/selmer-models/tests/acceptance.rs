//! Acceptance run: one line per criterion, nonzero exit if any fails.
//!
//! Every check is computed from scratch against an independent oracle
//! (exhaustive enumeration, brute force, or a direct formula evaluation).

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use selmer_models::bklpr::{intersection_samples, CHUNK};
use selmer_models::distrib::{tv_distance, to_f64, Distribution};
use selmer_models::genfun::GenFun;
use selmer_models::kernelmodel::{self as km, CosetName, KernelDistParams, Mode, Selector};
use selmer_models::markov::{alternating_rank_counts, alternating_rank_counts_brute, transition_counts, verify_markov_exact, CorankKernel};
use selmer_models::modring::{ModuleClass, Modulus};
use selmer_models::orthogroup::{CosetSpec, DEFAULT_BUDGET};
use selmer_models::quadspace::QuadSpace;
use selmer_models::rng;

type Check = Result<String, String>;

const BUDGET: u64 = DEFAULT_BUDGET;
const SAMPLES: u64 = 100_000;
const SEED: u64 = 20_240_601;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

fn rat(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn pow(ell: u64, k: u32) -> BigRational {
    BigRational::from_integer(BigInt::from(ell).pow(k))
}

/// `∏_{i=1}^{j} (ℓ^i + 1)` written out.
fn product_moment(ell: u64, j: u32) -> BigRational {
    let mut acc = BigRational::one();
    for i in 1..=j {
        acc *= pow(ell, i) + BigRational::one();
    }
    acc
}

fn c1_moments() -> Check {
    let mut checked = 0;
    for (ell, m) in [(2u64, 2usize), (2, 3), (3, 2), (3, 3), (5, 2)] {
        let modulus = Modulus::prime_power(ell, 1).map_err(e)?;
        let hist = km::group_histogram(m, &modulus, BUDGET).map_err(e)?;
        for j in 0..m as u32 {
            let got = hist.fixed_point_moment(&CosetSpec::full(), j).map_err(e)?;
            let want = product_moment(ell, j);
            ensure(got == want, || format!("ℓ={ell} m={m} j={j}: {got} ≠ {want}"))?;
            checked += 1;
        }
        let j = m as u32;
        let k = hist.fixed_point_moment(&CosetSpec::dickson_kernel(), j).map_err(e)?;
        let c = hist.fixed_point_moment(&CosetSpec::dickson_complement(), j).map_err(e)?;
        let mm = product_moment(ell, j);
        ensure(k == &mm + BigRational::one(), || format!("ℓ={ell} m={m}: Dickson-kernel edge {k}"))?;
        ensure(c == &mm - BigRational::one(), || format!("ℓ={ell} m={m}: complement edge {c}"))?;
        checked += 2;
    }
    Ok(format!("{checked} moments equal, including M_m ± 1 edges"))
}

fn c2_orbits() -> Check {
    let f3 = Modulus::new(3).map_err(e)?;
    let v6 = QuadSpace::build_standard_split(3, &f3).map_err(e)?;
    let v4 = QuadSpace::build_standard_split(2, &f3).map_err(e)?;
    let o6 = km::burnside_orbit_count(&v6, &Selector::Full, 2, BUDGET).map_err(e)?;
    let w6 = km::burnside_orbit_count(&v6, &Selector::Coset(CosetSpec::omega(&f3)), 2, BUDGET).map_err(e)?;
    let o4 = km::burnside_orbit_count(&v4, &Selector::Full, 2, BUDGET).map_err(e)?;
    let so4 = km::burnside_orbit_count(&v4, &Selector::Coset(CosetSpec::dickson_kernel()), 2, BUDGET).map_err(e)?;
    let forty = BigUint::from(40u32);
    ensure(o6 == forty && w6 == forty, || format!("O(6,F3): {o6}, Ω(6,F3): {w6}"))?;
    ensure(so4 == &o4 + 1u32, || format!("SO(4,F3): {so4}, O(4,F3): {o4}"))?;
    Ok(format!("O(6)={o6} Ω(6)={w6} SO(4)={so4} O(4)={o4}"))
}

fn c3_rudvalis_shinoda() -> Check {
    for ell in [2u64, 3, 5] {
        for n in 2..=10u32 {
            let total: BigRational = (0..=2 * n).map(|v| km::rudvalis_shinoda_pmf(ell, n, v)).sum();
            ensure(total.is_one(), || format!("ℓ={ell} N={n}: sum {total}"))?;
        }
    }
    for n in [2u32, 3] {
        let enumerated = km::enumerated_pgf(3, n as usize, CosetName::Full, BUDGET).map_err(e)?;
        let rs = km::rudvalis_shinoda_pgf(3, n);
        ensure(enumerated == rs, || format!("N={n}: enumeration {enumerated} vs formula {rs}"))?;
    }
    let mut worst: f64 = 0.0;
    for ell in [2u64, 3, 5] {
        // direct floating-point evaluation of ∏_{j≥0} (1 + ℓ^{−j})^{−1}
        let direct: f64 = (0..200).map(|j| 1.0 / (1.0 + (ell as f64).powi(-j))).product();
        let ours = to_f64(&km::rs_limit(ell, 0, 60));
        let rel = ((ours - direct) / direct).abs();
        worst = worst.max(rel);
        ensure(rel < 1e-12, || format!("ℓ={ell}: limit {ours} vs {direct}"))?;
    }
    Ok(format!("normalized for 27 (ℓ,N); enumeration equal at N=2,3; limit rel. error {worst:.1e}"))
}

fn c4_gen_identities() -> Check {
    let ell = 3u64;
    let mut count = 0;
    for r in [2u32, 3] {
        let pgf = |c| km::enumerated_pgf(ell, r as usize, c, BUDGET).map_err(e);
        let (g, gp) = (pgf(CosetName::DicksonKernel)?, pgf(CosetName::DicksonComplement)?);
        let (om, a, b, c) = (pgf(CosetName::Omega)?, pgf(CosetName::A)?, pgf(CosetName::B)?, pgf(CosetName::C)?);
        let vanish = |k: u32| GenFun::product_t2_minus((0..k).map(|j| pow(ell, 2 * j)));
        let denom = |k: u32| -> BigRational { (0..k).map(|j| pow(ell, 2 * k) - pow(ell, 2 * j)).product() };
        let h_order = BigRational::from_integer(BigInt::from(km::dickson_kernel_order(ell, r as usize)));
        let omega_order = BigRational::from_integer(BigInt::from(km::omega_order(ell, r as usize)));
        // G_r = P_{r−1} + (1/#H_{2r}) ∏_{j<r} (t² − ℓ^{2j})
        let (p_prev, _) = km::interpolation_polys(ell, r - 1);
        let rhs = &p_prev + &vanish(r).scale(&(BigRational::one() / &h_order));
        ensure(g == rhs, || format!("r={r}: first identity"))?;
        // G_r = P_r + ∏_{j<r} (t² − ℓ^{2j})/(ℓ^{2r} − ℓ^{2j})
        let (p_r, _) = km::interpolation_polys(ell, r);
        let rhs = &p_r + &vanish(r).scale(&(BigRational::one() / denom(r)));
        ensure(g == rhs, || format!("r={r}: second identity"))?;
        // with s = r − 1: G′_{s+1} = P′_s + ℓ^{−s} t ∏_{j<s} (t² − ℓ^{2j})/(ℓ^{2s} − ℓ^{2j})
        let s = r - 1;
        let (_, pp_s) = km::interpolation_polys(ell, s);
        let tail = (&GenFun::t() * &vanish(s)).scale(&(BigRational::one() / (pow(ell, s) * denom(s))));
        ensure(gp == &pp_s + &tail, || format!("r={r}: third identity"))?;
        // G′_{s+1} = P′_{s+1}
        let (_, pp_r) = km::interpolation_polys(ell, r);
        ensure(gp == pp_r, || format!("r={r}: fourth identity"))?;
        // G_B = G_C and G_Ω = G_A + (1/#Ω) ∏ (t² − ℓ^{2i})
        ensure(b == c, || format!("r={r}: G_B ≠ G_C"))?;
        let rhs = &a + &vanish(r).scale(&(BigRational::one() / omega_order));
        ensure(om == rhs, || format!("r={r}: G_Ω ≠ G_A + X"))?;
        count += 6;
    }
    Ok(format!("{count} identities exact at ℓ=3, r=2,3"))
}

fn c5_markov_exact() -> Check {
    let hist = km::component_histogram(2, 3, 2, BUDGET).map_err(e)?;
    let order: u64 = hist.values().sum();
    ensure(order == 839_808, || format!("enumerated {order} elements"))?;
    let mut by_class: BTreeMap<ModuleClass, BigUint> = BTreeMap::new();
    for ((_, _, class), c) in hist.iter() {
        *by_class.entry(class.clone()).or_insert_with(BigUint::zero) += *c;
    }
    let counts = transition_counts(by_class.iter(), 3, 1);
    let report = verify_markov_exact(&counts, &CorankKernel::new(3, 4));
    let bad: Vec<u32> = report.rows.iter().filter(|r| !r.equal).map(|r| r.from).collect();
    ensure(report.pass, || format!("rows d_1 = {bad:?} differ"))?;
    Ok(format!("{order} elements; {} rows d_1 → d_2 equal", report.rows.len()))
}

fn c6_alternating() -> Check {
    for ell in [2u64, 3] {
        for n in 0..=6usize {
            let a = alternating_rank_counts(ell, n);
            let b = alternating_rank_counts_brute(ell, n);
            ensure(a == b, || format!("ℓ={ell} n={n}: {a:?} vs {b:?}"))?;
        }
    }
    Ok("recursion equals brute force for n ≤ 6, ℓ = 2, 3".into())
}

/// Largest `|p̂ − p| / σ` over outcomes.
fn max_sigma(emp: &Distribution<u32>, exact: &Distribution<u32>) -> f64 {
    let n = emp.samples().unwrap_or(1) as f64;
    let mut keys = exact.support();
    keys.extend(emp.support());
    keys.sort_unstable();
    keys.dedup();
    keys.iter()
        .map(|k| {
            let p = to_f64(&exact.probability(k));
            let ph = emp.count(k) as f64 / n;
            let sd = (p * (1.0 - p) / n).sqrt();
            if sd == 0.0 {
                if (ph - p).abs() == 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                (ph - p).abs() / sd
            }
        })
        .fold(0.0, f64::max)
}

fn c7_monte_carlo() -> Check {
    let start = Instant::now();
    let mc = KernelDistParams::from_height(3, 2, 5, Mode::MonteCarlo { samples: SAMPLES }).map_err(e)?.with_seed(SEED);
    let emp = km::dimension_law(&km::kernel_distribution(&mc).map_err(e)?, 3);
    // [5] is a nonsquare mod 3: the selected cosets are A ∪ C
    let a = km::coset_pgf(3, 10, CosetName::A).map_err(e)?;
    let c = km::coset_pgf(3, 10, CosetName::C).map_err(e)?;
    let exact = km::pgf_distribution(&(&a + &c).scale(&rat(1, 2))).map_err(e)?;
    let z = max_sigma(&emp, &exact);
    let secs = start.elapsed().as_secs_f64();
    ensure(z <= 3.0, || format!("max deviation {z:.2}σ"))?;
    ensure(secs < 300.0, || format!("took {secs:.0} s"))?;
    Ok(format!("{SAMPLES} samples, max deviation {z:.2}σ, {secs:.0} s"))
}

fn intersection_runs(m: usize, e2: u32) -> Result<Vec<selmer_models::bklpr::SelmerSample>, String> {
    let mut out = Vec::new();
    for (stream, size) in rng::chunks(SAMPLES, CHUNK) {
        out.extend(intersection_samples(m, 3, e2, SEED + 1, stream, size).map_err(e)?);
    }
    Ok(out)
}

type Samples = Result<Vec<selmer_models::bklpr::SelmerSample>, String>;

fn c8_models(samples: &Samples) -> Check {
    let samples = samples.as_ref().map_err(Clone::clone)?;
    let mut bk = Distribution::empirical(km::CLASS_KEYS, Some(SEED + 1));
    for s in samples {
        bk.add(s.s.clone());
    }
    let modulus = Modulus::new(9).map_err(e)?;
    let coset = CosetSpec::from_height(&modulus, 2, 5).map_err(e)?;
    let p = KernelDistParams::new(9, 10, coset, Mode::MonteCarlo { samples: SAMPLES }).with_seed(SEED);
    let kd = km::kernel_distribution(&p).map_err(e)?;
    let tv = to_f64(&tv_distance(&bk, &kd).map_err(e)?);
    ensure(tv <= 0.02, || format!("TV {tv:.4} > 0.02"))?;
    Ok(format!("TV {tv:.4} ≤ 0.02 at {SAMPLES} samples per model"))
}

fn c9_rank_split(samples: &Samples) -> Check {
    let samples = samples.as_ref().map_err(Clone::clone)?;
    let law = selmer_models::bklpr::bklpr_rank_law();
    ensure(law.probability(&0) == rat(1, 2) && law.probability(&1) == rat(1, 2), || "rank law".into())?;
    let n = samples.len() as f64;
    let zeros = samples.iter().filter(|s| s.rank == 0).count() as f64;
    let z = (zeros / n - 0.5).abs() / (0.25 / n).sqrt();
    ensure(z <= 3.0, || format!("P(rank 0) = {:.4}, {z:.2}σ from 1/2", zeros / n))?;
    Ok(format!("joint law ½/½ exactly; intersection P(rank 0) = {:.4} ({z:.2}σ)", zeros / n))
}

fn c10_composite_mean() -> Check {
    let start = Instant::now();
    let modulus = Modulus::new(15).map_err(e)?;
    let spec = CosetSpec::from_height(&modulus, 2, 7).map_err(e)?;
    let order = km::full_order(3, 2) * km::full_order(5, 2);
    let mean = km::enumerated_moment(2, &modulus, &spec, 1, BUDGET).map_err(e)?;
    // σ(15) = 1 + 3 + 5 + 15
    let sigma: u64 = (1..=15).filter(|s| 15 % s == 0).sum();
    ensure(mean == rat(sigma, 1), || format!("mean {mean}"))?;
    Ok(format!("mean |ker| = {mean} = σ(15) over a group of order {order}, {:.0} s", start.elapsed().as_secs_f64()))
}

fn c11_same_moments() -> Check {
    let k = km::enumerated_pgf(3, 3, CosetName::DicksonKernel, BUDGET).map_err(e)?;
    let c = km::enumerated_pgf(3, 3, CosetName::DicksonComplement, BUDGET).map_err(e)?;
    for j in 0..=2 {
        let (a, b) = (km::pgf_moment(&k, 3, j), km::pgf_moment(&c, 3, j));
        ensure(a == b, || format!("j={j}: {a} vs {b}"))?;
    }
    let tv = tv_distance(&km::pgf_distribution(&k).map_err(e)?, &km::pgf_distribution(&c).map_err(e)?).map_err(e)?;
    ensure(tv > BigRational::zero(), || "TV is zero".into())?;
    // the supports have opposite parity, so the distance is in fact 1
    Ok(format!("moments j ≤ 2 equal; TV = {tv} ≈ {:.4}", tv.to_f64().unwrap_or(f64::NAN)))
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, &str, Check, f64)> = Vec::new();
    let mut run = |id: &'static str, name: &'static str, f: &dyn Fn() -> Check| {
        let t = Instant::now();
        let r = f();
        results.push((id, name, r, t.elapsed().as_secs_f64()));
        let (id, name, r, secs) = results.last().unwrap();
        match r {
            Ok(msg) => println!("{id:<4} PASS  {name}: {msg} [{secs:.1}s]"),
            Err(msg) => println!("{id:<4} FAIL  {name}: {msg} [{secs:.1}s]"),
        }
    };
    run("C1", "moment identities", &c1_moments);
    run("C2", "orbit counts", &c2_orbits);
    run("C3", "Rudvalis–Shinoda pmf", &c3_rudvalis_shinoda);
    run("C4", "coset generating functions", &c4_gen_identities);
    run("C5", "Markov property over Z/9", &c5_markov_exact);
    run("C6", "alternating corank oracle", &c6_alternating);
    run("C7", "Monte Carlo vs exact pgf", &c7_monte_carlo);
    // the intersection draws are shared by C8 and C9
    let samples = std::cell::OnceCell::new();
    let draws = || samples.get_or_init(|| intersection_runs(10, 2));
    run("C8", "BKLPR vs kernel model", &|| c8_models(draws()));
    run("C9", "rank split", &|| c9_rank_split(draws()));
    run("C10", "composite mean over Z/15", &c10_composite_mean);
    run("C11", "same moments, different laws", &c11_same_moments);
    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
