use opacity_core::{
    monomial_basis, solve, Monomial, PolyExpression, Polynomial, SolveStatus, SolverOptions,
    SosProgram,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sum_of_squares<R: Rng>(rng: &mut R, n: usize, k: usize) -> Polynomial {
    let mut p = Polynomial::zero(n);
    for _ in 0..k {
        let mut q = Polynomial::zero(n);
        for m in monomial_basis(n, 3) {
            if rng.gen_bool(0.5) {
                q.add_term(m, rng.gen_range(-1.0..1.0));
            }
        }
        p = p.add(&q.mul(&q).unwrap()).unwrap();
    }
    p
}

fn sos_status(p: &Polynomial) -> (SolveStatus, SosProgram, opacity_core::ConicSolution) {
    let mut s = SosProgram::new(p.n_vars());
    s.assert_sos(&PolyExpression::from_poly(p), "p").unwrap();
    let sol = solve(s.program(), &SolverOptions::default()).unwrap();
    (sol.status, s, sol)
}

#[test]
fn square_of_binomial_has_rank_one_gram() {
    let mut q = Polynomial::zero(2);
    q.add_term(Monomial::new(vec![1, 0]), 1.0);
    q.add_term(Monomial::new(vec![0, 1]), 1.0);
    let (status, s, sol) = sos_status(&q.mul(&q).unwrap());
    assert_eq!(status, SolveStatus::Feasible);
    let cert = s.extract_certificate(&sol).unwrap();
    let g = &cert.gram_factors[0];
    let significant = g
        .factor
        .iter()
        .filter(|l| l.iter().map(|v| v * v).sum::<f64>() > 1e-6)
        .count();
    assert_eq!(significant, 1);
    assert!(g.roundtrip_error <= 1e-6);
}

#[test]
fn motzkin_polynomial_is_rejected() {
    let mut m = Polynomial::zero(2);
    m.add_term(Monomial::new(vec![4, 2]), 1.0);
    m.add_term(Monomial::new(vec![2, 4]), 1.0);
    m.add_term(Monomial::new(vec![2, 2]), -3.0);
    m.add_term(Monomial::new(vec![0, 0]), 1.0);
    let (status, ..) = sos_status(&m);
    assert!(
        matches!(
            status,
            SolveStatus::Infeasible | SolveStatus::MarginalFeasible
        ),
        "{status}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sums_of_squares_are_certified(seed in any::<u64>(), k in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_sum_of_squares(&mut rng, 3, k);
        prop_assume!(p.degree() >= 2 && p.degree() % 2 == 0);
        let (status, s, sol) = sos_status(&p);
        prop_assert_eq!(status, SolveStatus::Feasible);
        prop_assert!(sol.residuals.max_equality <= 1e-7, "eq residual {} max coeff {}", sol.residuals.max_equality, p.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max));
        let cert = s.extract_certificate(&sol).unwrap();
        prop_assert!(cert.max_roundtrip_error() <= 1e-6, "{}", cert.max_roundtrip_error());
    }

    #[test]
    fn shifting_below_the_minimum_loses_the_certificate(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_sum_of_squares(&mut rng, 2, 2);
        prop_assume!(p.degree() >= 2 && p.degree() % 2 == 0);
        let mut min = f64::INFINITY;
        for i in 0..=40 {
            for j in 0..=40 {
                let x = [-2.0 + 0.1 * i as f64, -2.0 + 0.1 * j as f64];
                min = min.min(p.eval(&x).unwrap());
            }
        }
        let shifted = p.sub(&Polynomial::constant(2, min + 0.1)).unwrap();
        let (status, ..) = sos_status(&shifted);
        prop_assert!(
            matches!(status, SolveStatus::Infeasible | SolveStatus::MarginalFeasible),
            "{}", status
        );
    }
}
