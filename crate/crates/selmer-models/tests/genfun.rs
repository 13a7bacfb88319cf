use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

use selmer_models::genfun::{int, rat, GenFun};

fn poly(c: &[i64]) -> GenFun {
    GenFun::from_coeffs(c.iter().map(|&x| int(x)).collect())
}

#[test]
fn basic_arithmetic() {
    let a = poly(&[1, 2]);
    let b = poly(&[-1, 0, 3]);
    assert_eq!(&a * &b, poly(&[-1, -2, 3, 6]));
    assert_eq!(&a + &b, poly(&[0, 2, 3]));
    assert_eq!(&a - &a, GenFun::zero());
    assert_eq!(poly(&[1, 0, 0]).degree(), 0);
    assert_eq!(GenFun::t().in_t_squared(), GenFun::monomial(int(1), 2));
    assert_eq!(GenFun::product_t2_minus([int(1), int(4)]), poly(&[4, 0, -5, 0, 1]));
    assert_eq!(b.eval(&rat(1, 2)), rat(-1, 4));
    assert_eq!(poly(&[1, 2]).to_string().is_empty(), false);
}

#[test]
fn probability_check() {
    assert!(GenFun::from_coeffs(vec![rat(1, 3), rat(2, 3)]).is_probability());
    assert!(!GenFun::from_coeffs(vec![rat(4, 3), rat(-1, 3)]).is_probability());
    assert!(!GenFun::from_coeffs(vec![rat(1, 3)]).is_probability());
}

#[test]
fn interpolation_recovers_a_cubic() {
    let f = poly(&[5, -1, 0, 2]);
    let pts: Vec<(BigRational, BigRational)> = (0..4).map(|x| (int(x), f.eval(&int(x)))).collect();
    assert_eq!(GenFun::interpolate(&pts), f);
}

proptest! {
    #[test]
    fn interpolation_through_points(ys in prop::collection::vec(-50i64..50, 1..7)) {
        let pts: Vec<(BigRational, BigRational)> =
            ys.iter().enumerate().map(|(i, &y)| (int(BigInt::from(i * i + 1)), int(y))).collect();
        let p = GenFun::interpolate(&pts);
        prop_assert!(p.degree() < ys.len());
        for (x, y) in &pts {
            prop_assert_eq!(&p.eval(x), y);
        }
    }

    #[test]
    fn product_evaluates_to_product(a in prop::collection::vec(-9i64..9, 0..5), b in prop::collection::vec(-9i64..9, 0..5), t in -5i64..5) {
        let (pa, pb) = (poly(&a), poly(&b));
        let t = int(t);
        prop_assert_eq!((&pa * &pb).eval(&t), pa.eval(&t) * pb.eval(&t));
        prop_assert_eq!((&pa + &pb).eval(&t), pa.eval(&t) + pb.eval(&t));
    }
}
