use opacity_core::{compose_rational, monomial_basis, Monomial, Polynomial, RationalMap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_poly<R: Rng>(rng: &mut R, n: usize, degree: usize, density: f64) -> Polynomial {
    let mut p = Polynomial::zero(n);
    for m in monomial_basis(n, degree) {
        if rng.gen_bool(density) {
            p.add_term(m, rng.gen_range(-2.0..2.0));
        }
    }
    p
}

fn random_map<R: Rng>(rng: &mut R, n: usize) -> RationalMap {
    let nums: Vec<Polynomial> = (0..n)
        .map(|_| {
            let row: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            Polynomial::affine(&row, 0.0)
        })
        .collect();
    let mut den = Polynomial::zero(n);
    for s in &nums {
        den = den.add(s).unwrap();
    }
    RationalMap::new(nums, den).unwrap()
}

#[test]
fn compose_rational_matches_pointwise_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    while checked < 100 {
        let n = rng.gen_range(1..4);
        let deg = rng.gen_range(1..5);
        let b = random_poly(&mut rng, n, deg, 0.6);
        if b.is_zero() {
            continue;
        }
        let map = random_map(&mut rng, n);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let r = map.denominator().eval(&x).unwrap();
        if r <= 0.1 {
            continue;
        }
        // Oracle: R(x)^d · B(S(x) / R(x)) evaluated directly.
        let d = b.degree() as i32;
        let y: Vec<f64> = map
            .numerators()
            .iter()
            .map(|s| s.eval(&x).unwrap() / r)
            .collect();
        let expected = r.powi(d) * b.eval(&y).unwrap();
        let got = compose_rational(&b, &map).unwrap().eval(&x).unwrap();
        let scale = expected.abs().max(1e-12);
        assert!(
            (got - expected).abs() <= 1e-8 * scale.max(1.0),
            "{got} vs {expected} for {b}"
        );
        checked += 1;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ring_laws_hold_coefficientwise(seed in any::<u64>(), n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_poly(&mut rng, n, 3, 0.5);
        let q = random_poly(&mut rng, n, 3, 0.5);
        let r = random_poly(&mut rng, n, 2, 0.5);
        let assoc_l = p.mul(&q).unwrap().mul(&r).unwrap();
        let assoc_r = p.mul(&q.mul(&r).unwrap()).unwrap();
        prop_assert!(assoc_l.max_coeff_diff(&assoc_r) <= 1e-12);
        let dist_l = p.mul(&q.add(&r).unwrap()).unwrap();
        let dist_r = p.mul(&q).unwrap().add(&p.mul(&r).unwrap()).unwrap();
        prop_assert!(dist_l.max_coeff_diff(&dist_r) <= 1e-12);
        prop_assert!(p.mul(&q).unwrap().max_coeff_diff(&q.mul(&p).unwrap()) <= 1e-12);
        prop_assert!(p.add(&q).unwrap().max_coeff_diff(&q.add(&p).unwrap()) <= 1e-12);
        prop_assert!(p.sub(&p).unwrap().is_zero());
    }

    #[test]
    fn product_evaluates_to_product_of_values(seed in any::<u64>(), n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_poly(&mut rng, n, 3, 0.5);
        let q = random_poly(&mut rng, n, 3, 0.5);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lhs = p.mul(&q).unwrap().eval(&x).unwrap();
        let rhs = p.eval(&x).unwrap() * q.eval(&x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn monomial_basis_is_sorted_and_complete(n in 1usize..5, d in 0usize..6) {
        let basis = monomial_basis(n, d);
        for w in basis.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        // C(n + d, d) monomials of degree at most d.
        let expected = (1..=d).fold(1usize, |acc, k| acc * (n + k) / k);
        prop_assert_eq!(basis.len(), expected);
        prop_assert!(basis.iter().all(|m: &Monomial| m.degree() <= d));
    }
}
