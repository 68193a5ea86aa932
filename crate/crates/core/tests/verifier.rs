mod common;

use common::*;
use nalgebra::DMatrix;
use opacity_core::{
    default_grid, falsify, mdp_update, min_certified_gamma, pomdp_update, verify, Belief, Error,
    FalsifyOptions, Horizon, Method, Model, PrivacySpec, Status, VerifyOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quick() -> VerifyOptions {
    VerifyOptions {
        n_samples: 2000,
        falsify_depth: None,
        ..VerifyOptions::default()
    }
}

fn has_witness(m: &Model, spec: &PrivacySpec, depth: usize) -> bool {
    let grid = default_grid(m, spec, 0, 0).unwrap();
    falsify(m, spec, depth, &grid, FalsifyOptions::default())
        .unwrap()
        .witness
        .is_some()
}

#[test]
fn example_i_is_certified_at_085() {
    let (m, spec) = load("example1.json", "gamma085.json");
    let o = verify(&m, &spec, Method::MdpSdp, &VerifyOptions::default()).unwrap();
    assert_eq!(o.status, Status::Certified);
    let v = o.diagnostics.validation.as_ref().unwrap();
    assert!(v.ok, "{:?}", v.violations);
    assert!(v.worst_decrease.unwrap() <= 1e-7);
    let f = o.diagnostics.falsifier.as_ref().unwrap();
    assert!(f.witness.is_none());
    assert!(f.lower_bound <= 0.85);
}

#[test]
fn example_i_certification_is_monotone_in_the_threshold() {
    let (m, spec) = load("example1.json", "gamma085.json");
    let mut seen_certified = false;
    for gamma in [0.45, 0.55, 0.65, 0.75, 0.85, 0.95, 1.0] {
        let o = verify(&m, &spec.with_lambda(gamma), Method::MdpSdp, &quick()).unwrap();
        if seen_certified {
            assert_eq!(o.status, Status::Certified, "lost certificate at {gamma}");
        }
        seen_certified |= o.status == Status::Certified;
    }
    assert!(seen_certified);
}

#[test]
fn bisection_result_is_certified_and_above_the_falsifier_bound() {
    let (m, spec) = load("example1.json", "gamma085.json");
    let s = min_certified_gamma(&m, &spec, Method::MdpSdp, 0.02, 10, &quick()).unwrap();
    let g = s.gamma_star.unwrap();
    assert!(g >= s.lower_bound);
    assert_eq!(s.outcome.as_ref().unwrap().status, Status::Certified);
    assert!(!has_witness(&m, &spec.with_lambda(g), 10));
    for w in s.trace.windows(2) {
        assert_ne!(w[0].0, w[1].0);
    }
}

#[test]
fn odd_degree_is_rejected() {
    let (m, spec) = load("example2.json", "gamma095.json");
    let r = verify(&m, &spec, Method::PomdpInfiniteSos { degree: 3 }, &quick());
    assert!(matches!(r, Err(Error::OddDegree(3))), "{r:?}");
}

#[test]
fn example_ii_at_042_is_not_certified() {
    let (m, spec) = load("example2.json", "gamma042.json");
    let o = verify(&m, &spec, Method::PomdpInfiniteSos { degree: 2 }, &quick()).unwrap();
    assert_eq!(o.status, Status::Unknown);
}

#[test]
fn finite_horizon_certificates_survive_the_falsifier() {
    let mut certified = 0;
    for seed in 0..6 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..4);
        let nz = rng.gen_range(1..3);
        let m = reset_pomdp(&mut rng, n, nz);
        let mut spec = point_spec(&m, vec![0], rng.gen_range(0.5..1.0));
        spec.horizon = Horizon::Finite(2);
        if spec.validate(&m).is_err() || spec.check_disjoint(&m).is_err() {
            continue;
        }
        let method = Method::for_spec(&m, &spec, 2);
        assert_eq!(
            method,
            Method::PomdpFiniteSos {
                horizon: 2,
                degree: 2
            }
        );
        let o = verify(&m, &spec, method, &quick()).unwrap();
        if o.status == Status::Certified {
            certified += 1;
            assert_eq!(o.certificate.as_ref().unwrap().last_step(), 2);
            assert!(!has_witness(&m, &spec, 2), "seed {seed}");
        }
    }
    assert!(certified >= 2, "only {certified} certified");
}

#[test]
fn lifted_mdp_has_the_same_belief_dynamics() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let m = random_mdp(&mut rng, 4, 2);
        let lifted = m.lift_to_pomdp();
        assert!(lifted.is_pomdp());
        let b = Belief::new(simplex_point(&mut rng, 4)).unwrap();
        for a in 0..2 {
            let x = mdp_update(&m, &b, a).unwrap();
            let y = pomdp_update(&lifted, &b, a, 0).unwrap();
            for (u, v) in x.values().iter().zip(y.values()) {
                assert!((u - v).abs() <= 1e-12);
            }
        }
        let spec = point_spec(&m, vec![0, 1], 0.99);
        let g1 = default_grid(&m, &spec, 0, 0).unwrap();
        let g2 = default_grid(&lifted, &spec, 0, 0).unwrap();
        let l1 = falsify(&m, &spec, 6, &g1, FalsifyOptions::default()).unwrap();
        let l2 = falsify(&lifted, &spec, 6, &g2, FalsifyOptions::default()).unwrap();
        assert!((l1.lower_bound - l2.lower_bound).abs() <= 1e-12);
    }
}

/// MDP with the initial distribution scaled to total mass `mass`.
fn scaled_mdp(rng: &mut ChaCha8Rng, n: usize, na: usize, mass: f64) -> Model {
    let m = random_mdp(rng, n, na);
    let init = m.initial().iter().map(|v| v * mass).collect();
    let hs = (0..na).map(|a| m.transition(a).clone()).collect();
    Model::new(m.states().to_vec(), init, m.actions().to_vec(), hs, None).unwrap()
}

/// POMDP whose single action resets to a random distribution `p`, observed
/// through a random channel. Every branch maps all beliefs to one point.
fn reset_pomdp(rng: &mut ChaCha8Rng, n: usize, nz: usize) -> Model {
    let p = simplex_point(rng, n);
    let h = DMatrix::from_fn(n, n, |i, _| p[i]);
    let obs = stochastic_rows(rng, n, nz);
    let states = (0..n).map(|i| format!("q{i}")).collect();
    let zs = (0..nz).map(|i| format!("z{i}")).collect();
    let init = simplex_point(rng, n);
    Model::new(
        states,
        init,
        vec!["a".into()],
        vec![h],
        Some((zs, vec![obs])),
    )
    .unwrap()
}

// Quadratic barriers with non-strict decrease exist for these families (mass
// below one, or a single action), so the soundness checks are not vacuous.
#[test]
fn certified_mdps_have_no_short_witness() {
    let mut certified = 0;
    for seed in 0..24 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..5);
        let na = rng.gen_range(1..3);
        let mass = rng.gen_range(0.3..1.0);
        let m = scaled_mdp(&mut rng, n, na, mass);
        let spec = point_spec(&m, vec![0], rng.gen_range(0.3..1.0));
        if spec.validate(&m).is_err() || spec.check_disjoint(&m).is_err() {
            continue;
        }
        let o = verify(&m, &spec, Method::MdpSdp, &quick()).unwrap();
        if o.status == Status::Certified {
            certified += 1;
            assert!(!has_witness(&m, &spec, 10), "seed {seed}");
        }
    }
    assert!(certified >= 8, "only {certified} certified");
}

#[test]
fn certified_pomdps_have_no_short_witness() {
    let mut certified = 0;
    for seed in 0..6 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..4);
        let nz = rng.gen_range(1..3);
        let m = reset_pomdp(&mut rng, n, nz);
        let spec = point_spec(&m, vec![0], rng.gen_range(0.5..1.0));
        if spec.validate(&m).is_err() || spec.check_disjoint(&m).is_err() {
            continue;
        }
        let o = verify(&m, &spec, Method::PomdpInfiniteSos { degree: 4 }, &quick()).unwrap();
        if o.status == Status::Certified {
            certified += 1;
            assert!(!has_witness(&m, &spec, 10), "seed {seed}");
        }
    }
    assert!(certified >= 1, "nothing certified");
}
