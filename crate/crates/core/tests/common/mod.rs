#![allow(dead_code)]

use nalgebra::DMatrix;
use opacity_core::{Horizon, InitialSet, Model, ParseOptions, PrivacySpec};
use rand::Rng;
use rand_distr::Exp1;

pub fn fixture(name: &str) -> String {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/").to_string() + name;
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn load(model: &str, spec: &str) -> (Model, PrivacySpec) {
    let m = Model::from_json_str(&fixture(model), ParseOptions::default())
        .unwrap()
        .model;
    let s = PrivacySpec::from_json_str(&fixture(spec), &m).unwrap();
    (m, s)
}

/// Uniform point of the probability simplex.
pub fn simplex_point<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| (v / s).min(1.0)).collect()
}

/// Column-stochastic `n × n` matrix with some exact zeros.
pub fn stochastic_columns<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut col = simplex_point(rng, n);
        if n > 1 && rng.gen_bool(0.3) {
            let k = rng.gen_range(0..n);
            let moved = col[k];
            col[k] = 0.0;
            col[(k + 1) % n] = (col[(k + 1) % n] + moved).min(1.0);
        }
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    m
}

/// Row-stochastic `n × k` observation matrix.
pub fn stochastic_rows<R: Rng>(rng: &mut R, n: usize, k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, k);
    for i in 0..n {
        let row = simplex_point(rng, k);
        for z in 0..k {
            m[(i, z)] = row[z];
        }
    }
    m
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn random_mdp<R: Rng>(rng: &mut R, n: usize, n_actions: usize) -> Model {
    let initial = simplex_point(rng, n);
    let transitions = (0..n_actions).map(|_| stochastic_columns(rng, n)).collect();
    Model::new(
        names("q", n),
        initial,
        names("a", n_actions),
        transitions,
        None,
    )
    .unwrap()
}

pub fn random_pomdp<R: Rng>(rng: &mut R, n: usize, n_actions: usize, n_obs: usize) -> Model {
    let initial = simplex_point(rng, n);
    let transitions = (0..n_actions).map(|_| stochastic_columns(rng, n)).collect();
    let obs = (0..n_actions)
        .map(|_| stochastic_rows(rng, n, n_obs))
        .collect();
    Model::new(
        names("q", n),
        initial,
        names("a", n_actions),
        transitions,
        Some((names("z", n_obs), obs)),
    )
    .unwrap()
}

pub fn point_spec(model: &Model, secret: Vec<usize>, lambda: f64) -> PrivacySpec {
    PrivacySpec {
        secret,
        lambda,
        initial_set: InitialSet::Point(model.initial().to_vec()),
        horizon: Horizon::Infinite,
    }
}
