use nalgebra::DMatrix;
use opacity_core::{solve, validate_solution, ConicProgram, LmiBlock, SolveStatus, SolverOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sym<R: Rng>(rng: &mut R, k: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

fn push(block: &mut LmiBlock, var: Option<usize>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            match var {
                Some(v) => block.add_term(v, i, j, m[(i, j)]),
                None => block.add_constant(i, j, m[(i, j)]),
            }
        }
    }
}

/// Random LMI built around a point `x0` where it holds with slack `slack`
/// (negative slack makes that point infeasible, not the program).
fn lmi_around<R: Rng>(
    rng: &mut R,
    p: &mut ConicProgram,
    vars: &[usize],
    x0: &[f64],
    k: usize,
    strict: bool,
) {
    let fs: Vec<DMatrix<f64>> = vars.iter().map(|_| random_sym(rng, k)).collect();
    let c = random_sym(rng, k);
    let c = &c * c.transpose() + DMatrix::identity(k, k) * 0.5;
    let mut f0 = c;
    for (f, &x) in fs.iter().zip(x0) {
        f0 -= f * x;
    }
    let mut b = LmiBlock::new(k, strict, "lmi");
    push(&mut b, None, &f0);
    for (f, &v) in fs.iter().zip(vars) {
        push(&mut b, Some(v), f);
    }
    p.add_block(b);
}

fn random_feasible(seed: u64) -> ConicProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..5);
    let mut p = ConicProgram::new();
    let vars: Vec<usize> = (0..n).map(|i| p.new_var(format!("x{i}"))).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    for _ in 0..rng.gen_range(1..4) {
        let k = rng.gen_range(1..5);
        let strict = rng.gen_bool(0.5);
        lmi_around(&mut rng, &mut p, &vars, &x0, k, strict);
    }
    if rng.gen_bool(0.5) {
        let row: Vec<(usize, f64)> = vars
            .iter()
            .map(|&v| (v, rng.gen_range(-1.0..1.0)))
            .collect();
        let rhs = row.iter().map(|&(v, a)| a * x0[v]).sum();
        p.add_equality(row, rhs);
    }
    p
}

/// `x ≥ 1 + a` and `x ≤ 1 − a` with `a > 0`, each as a strict scalar block.
fn random_infeasible(seed: u64) -> ConicProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = rng.gen_range(0.1..2.0);
    let mut p = ConicProgram::new();
    let x = p.new_var("x");
    let mut lo = LmiBlock::new(1, true, "lo");
    lo.add_term(x, 0, 0, 1.0);
    lo.add_constant(0, 0, -(1.0 + a));
    let mut hi = LmiBlock::new(1, false, "hi");
    hi.add_term(x, 0, 0, -1.0);
    hi.add_constant(0, 0, 1.0 - a);
    p.add_block(lo);
    p.add_block(hi);
    p
}

#[test]
fn two_by_two_optimum_is_analytic() {
    // max x s.t. [[1, x], [x, 1]] ⪰ 0 has x* = 1.
    let mut p = ConicProgram::new();
    let x = p.new_var("x");
    let mut b = LmiBlock::new(2, false, "2x2");
    b.add_constant(0, 0, 1.0);
    b.add_constant(1, 1, 1.0);
    b.add_term(x, 0, 1, 1.0);
    p.add_block(b);
    p.set_objective(vec![(x, 1.0)]);
    let s = solve(&p, &SolverOptions::default()).unwrap();
    assert_eq!(s.status, SolveStatus::Feasible);
    assert!((s.x[0] - 1.0).abs() <= 1e-6, "{}", s.x[0]);
    assert!((s.objective.unwrap() - 1.0).abs() <= 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn feasible_programs_are_found_and_validate(seed in any::<u64>()) {
        let p = random_feasible(seed);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        prop_assert_eq!(s.status, SolveStatus::Feasible);
        let rep = validate_solution(&p, &s, 1e-7);
        prop_assert!(rep.max_equality_residual <= 1e-7);
        for (check, block) in rep.blocks.iter().zip(&p.blocks) {
            if block.strict {
                // The reported margin never exceeds what an independent
                // eigendecomposition finds.
                prop_assert!(check.min_eig >= s.margin - 1e-9, "{} < {}", check.min_eig, s.margin);
                prop_assert!(check.min_eig > 0.0);
            } else {
                prop_assert!(check.min_eig >= -1e-7);
            }
        }
    }

    #[test]
    fn scaling_blocks_keeps_the_status(seed in any::<u64>(), infeasible in any::<bool>()) {
        let p = if infeasible { random_infeasible(seed) } else { random_feasible(seed) };
        let s = solve(&p, &SolverOptions::default()).unwrap();
        let mut q = p.clone();
        q.blocks = q.blocks.iter().map(|b| b.scaled(10.0)).collect();
        let t = solve(&q, &SolverOptions::default()).unwrap();
        prop_assert_eq!(s.status, t.status);
        if infeasible {
            prop_assert_eq!(s.status, SolveStatus::Infeasible);
        }
    }

    #[test]
    fn warm_start_from_a_solution_is_idempotent(seed in any::<u64>()) {
        let p = random_feasible(seed);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        let opts = SolverOptions { warm_start: Some(s.x.clone()), ..SolverOptions::default() };
        let again = solve(&p, &opts).unwrap();
        prop_assert_eq!(s.status, again.status);
        prop_assert!(validate_solution(&p, &again, 1e-7).ok);
    }
}
