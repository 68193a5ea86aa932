//! Belief updates, trajectory simulation, and the exhaustive falsifier.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{polytope_vertices, sample_semialgebraic, InitialSet, Model, PrivacySpec};

/// Entries in `[-CLAMP_TOL, 0)` are rounding noise and get clamped to zero.
pub const CLAMP_TOL: f64 = 1e-12;
/// Normalizers at or below this mark an impossible observation.
pub const ZERO_PROB_TOL: f64 = 1e-12;
pub const MASS_TOL: f64 = 1e-9;

/// A distribution over states.
///
/// Beliefs built with [`Belief::new`] sum to one. [`Belief::unnormalized`]
/// admits any positive mass. Updates through column-stochastic matrices keep
/// that mass, which is what a model with an unnormalized initial vector needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Belief {
    values: Vec<f64>,
}

fn clamp(values: &mut [f64]) -> Result<()> {
    for (i, v) in values.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(Error::Belief(format!("entry {i} is not finite")));
        }
        if *v < 0.0 {
            if *v < -CLAMP_TOL {
                return Err(Error::Belief(format!("entry {i} is negative ({v:e})")));
            }
            *v = 0.0;
        }
    }
    Ok(())
}

impl Belief {
    pub fn new(mut values: Vec<f64>) -> Result<Belief> {
        clamp(&mut values)?;
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() > MASS_TOL {
            return Err(Error::Belief(format!("entries sum to {s}, expected 1")));
        }
        Ok(Belief { values })
    }

    pub fn unnormalized(mut values: Vec<f64>) -> Result<Belief> {
        clamp(&mut values)?;
        let s: f64 = values.iter().sum();
        if s <= 0.0 {
            return Err(Error::Belief("belief has no mass".into()));
        }
        Ok(Belief { values })
    }

    /// `Belief::new` when the mass is one, `Belief::unnormalized` otherwise.
    pub fn from_vec(values: Vec<f64>) -> Result<Belief> {
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() <= MASS_TOL {
            Belief::new(values)
        } else {
            Belief::unnormalized(values)
        }
    }

    /// Clamps roundoff negatives and rescales to `mass`.
    fn rescaled(mut values: Vec<f64>, mass: f64) -> Result<Belief> {
        clamp(&mut values)?;
        let s: f64 = values.iter().sum();
        if s > 0.0 {
            let k = mass / s;
            values.iter_mut().for_each(|v| *v *= k);
        }
        Ok(Belief { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

fn check_len(model: &Model, b: &Belief) -> Result<()> {
    if b.len() != model.n_states() {
        return Err(Error::Dimension(format!(
            "belief has {} entries for {} states",
            b.len(),
            model.n_states()
        )));
    }
    Ok(())
}

fn apply(h: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    (0..n)
        .map(|i| (0..n).map(|j| h[(i, j)] * b[j]).sum())
        .collect()
}

/// `H_a b`.
pub fn mdp_update(model: &Model, b: &Belief, a: usize) -> Result<Belief> {
    check_len(model, b)?;
    if a >= model.n_actions() {
        return Err(Error::UnknownAction(format!("#{a}")));
    }
    Belief::rescaled(apply(model.transition(a), &b.values), b.mass())
}

/// Unnormalized Bayesian posterior `O(·,a,z) ⊙ (H_a b)` and its normalizer.
fn bayes_numerator(model: &Model, b: &[f64], a: usize, z: usize) -> Result<(Vec<f64>, f64)> {
    let o = model
        .observation_matrix(a)
        .ok_or_else(|| Error::Precondition("model has no observation function".into()))?;
    if z >= o.ncols() {
        return Err(Error::UnknownObservation(format!("#{z}")));
    }
    let mut pred = apply(model.transition(a), b);
    for (i, p) in pred.iter_mut().enumerate() {
        *p *= o[(i, z)];
    }
    let r = pred.iter().sum();
    Ok((pred, r))
}

/// Probability of observing `z` after action `a` from belief `b`.
pub fn observation_probability(model: &Model, b: &Belief, a: usize, z: usize) -> Result<f64> {
    check_len(model, b)?;
    if a >= model.n_actions() {
        return Err(Error::UnknownAction(format!("#{a}")));
    }
    let (_, r) = bayes_numerator(model, &b.values, a, z)?;
    Ok(r / b.mass())
}

/// Bayesian update after action `a` and observation `z`. The result sums to one.
pub fn pomdp_update(model: &Model, b: &Belief, a: usize, z: usize) -> Result<Belief> {
    check_len(model, b)?;
    if a >= model.n_actions() {
        return Err(Error::UnknownAction(format!("#{a}")));
    }
    let (num, r) = bayes_numerator(model, &b.values, a, z)?;
    if r <= ZERO_PROB_TOL {
        return Err(Error::ZeroProbabilityObservation {
            action: model.actions()[a].clone(),
            observation: model
                .observations()
                .map_or_else(String::new, |zs| zs[z].clone()),
            normalizer: r,
        });
    }
    Belief::rescaled(num.into_iter().map(|v| v / r).collect(), 1.0)
}

pub fn secret_mass(b: &Belief, spec: &PrivacySpec) -> f64 {
    spec.secret.iter().map(|&i| b.values[i]).sum()
}

/// One step label: an action and, for POMDPs, the observation that followed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct Label {
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
}

impl Label {
    pub fn action(a: impl Into<String>) -> Label {
        Label {
            action: a.into(),
            observation: None,
        }
    }

    pub fn with_observation(a: impl Into<String>, z: impl Into<String>) -> Label {
        Label {
            action: a.into(),
            observation: Some(z.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub beliefs: Vec<Belief>,
    pub labels: Vec<Label>,
    pub secret_mass_series: Vec<f64>,
}

fn step(model: &Model, b: &Belief, label: &Label) -> Result<Belief> {
    let a = model.action_index(&label.action)?;
    match (&label.observation, model.is_pomdp()) {
        (Some(z), true) => pomdp_update(model, b, a, model.observation_index(z)?),
        (None, false) => mdp_update(model, b, a),
        (None, true) => Err(Error::Precondition(
            "POMDP step is missing its observation".into(),
        )),
        (Some(_), false) => Err(Error::Precondition(
            "MDP step carries an observation".into(),
        )),
    }
}

/// Runs the belief dynamics along `labels` starting from `b0`.
pub fn simulate(
    model: &Model,
    spec: &PrivacySpec,
    b0: &Belief,
    labels: &[Label],
) -> Result<Trajectory> {
    check_len(model, b0)?;
    let mut beliefs = vec![b0.clone()];
    for (t, label) in labels.iter().enumerate() {
        let next = step(model, &beliefs[t], label).map_err(|e| e.at_step(t + 1))?;
        beliefs.push(next);
    }
    let secret_mass_series = beliefs.iter().map(|b| secret_mass(b, spec)).collect();
    Ok(Trajectory {
        beliefs,
        labels: labels.to_vec(),
        secret_mass_series,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FalsificationWitness {
    pub trajectory: Trajectory,
    pub violation_time: usize,
    pub attained_mass: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FalsifyOptions {
    /// Abort once this many belief nodes have been visited.
    pub node_cap: u64,
}

impl Default for FalsifyOptions {
    fn default() -> Self {
        FalsifyOptions {
            node_cap: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FalsifyReport {
    pub lambda: f64,
    pub depth: usize,
    pub grid_size: usize,
    pub nodes: u64,
    /// Largest secret mass seen over every visited belief.
    pub lower_bound: f64,
    pub witness: Option<FalsificationWitness>,
}

/// Best node found in a subtree: mass, grid index, and the label path.
#[derive(Debug, Clone)]
struct Best {
    mass: f64,
    grid: usize,
    path: Vec<(usize, Option<usize>)>,
}

impl Best {
    fn none() -> Best {
        Best {
            mass: f64::NEG_INFINITY,
            grid: usize::MAX,
            path: Vec::new(),
        }
    }

    /// Larger mass wins; ties go to the earlier node in depth-first order.
    fn better(self, other: Best) -> Best {
        if other.mass > self.mass
            || (other.mass == self.mass && (other.grid, &other.path) < (self.grid, &self.path))
        {
            other
        } else {
            self
        }
    }
}

struct Search<'a> {
    model: &'a Model,
    w: Vec<f64>,
    counter: &'a AtomicU64,
    cap: u64,
}

impl Search<'_> {
    fn mass(&self, b: &[f64]) -> f64 {
        self.w.iter().zip(b).map(|(w, x)| w * x).sum()
    }

    fn visit(&self) -> Result<()> {
        if self.counter.fetch_add(1, Ordering::Relaxed) >= self.cap {
            return Err(Error::BudgetExceeded { cap: self.cap });
        }
        Ok(())
    }

    /// Children of `b` with the labels leading to them.
    fn children(&self, b: &[f64]) -> Vec<((usize, Option<usize>), Vec<f64>)> {
        let mut out = Vec::new();
        for a in 0..self.model.n_actions() {
            let h = self.model.transition(a);
            if self.model.is_pomdp() {
                let mass: f64 = b.iter().sum();
                for z in 0..self.model.n_observations() {
                    let (num, r) = bayes_numerator(self.model, b, a, z).expect("valid indices");
                    if r / mass > ZERO_PROB_TOL && r > ZERO_PROB_TOL {
                        out.push(((a, Some(z)), num.into_iter().map(|v| v / r).collect()));
                    }
                }
            } else {
                out.push(((a, None), apply(h, b)));
            }
        }
        out
    }

    fn dfs(
        &self,
        b: &[f64],
        depth_left: usize,
        grid: usize,
        path: &mut Vec<(usize, Option<usize>)>,
        best: &mut Best,
    ) -> Result<()> {
        self.visit()?;
        let m = self.mass(b);
        if m > best.mass {
            *best = Best {
                mass: m,
                grid,
                path: path.clone(),
            };
        }
        if depth_left == 0 {
            return Ok(());
        }
        for (label, child) in self.children(b) {
            path.push(label);
            self.dfs(&child, depth_left - 1, grid, path, best)?;
            path.pop();
        }
        Ok(())
    }
}

/// Enumerates every label sequence of length at most `depth` from every grid
/// belief and records the largest secret mass reached.
///
/// For POMDPs only observations with positive probability are branched on.
/// A witness is returned when that mass exceeds `spec.lambda`.
pub fn falsify(
    model: &Model,
    spec: &PrivacySpec,
    depth: usize,
    grid: &[Belief],
    opts: FalsifyOptions,
) -> Result<FalsifyReport> {
    if grid.is_empty() {
        return Err(Error::Precondition("falsifier grid is empty".into()));
    }
    for b in grid {
        check_len(model, b)?;
    }
    let counter = AtomicU64::new(0);
    let search = Search {
        model,
        w: spec.secret_indicator(model.n_states()),
        counter: &counter,
        cap: opts.node_cap,
    };

    // Roots are scored sequentially; subtrees below the first step run in parallel.
    let mut best = Best::none();
    let mut tasks = Vec::new();
    for (g, b) in grid.iter().enumerate() {
        search.visit()?;
        let m = search.mass(b.values());
        best = best.better(Best {
            mass: m,
            grid: g,
            path: Vec::new(),
        });
        if depth > 0 {
            for (label, child) in search.children(b.values()) {
                tasks.push((g, label, child));
            }
        }
    }
    let sub = tasks
        .par_iter()
        .map(|(g, label, child)| {
            let mut path = vec![*label];
            let mut local = Best::none();
            search.dfs(child, depth - 1, *g, &mut path, &mut local)?;
            Ok(local)
        })
        .collect::<Result<Vec<Best>>>()?;
    for s in sub {
        best = best.clone().better(s);
    }

    let witness = if best.mass > spec.lambda {
        let labels: Vec<Label> = best
            .path
            .iter()
            .map(|(a, z)| Label {
                action: model.actions()[*a].clone(),
                observation: z.map(|z| model.observations().expect("pomdp")[z].clone()),
            })
            .collect();
        let trajectory = simulate(model, spec, &grid[best.grid], &labels)?;
        let violation_time = labels.len();
        let attained_mass = trajectory.secret_mass_series[violation_time];
        Some(FalsificationWitness {
            trajectory,
            violation_time,
            attained_mass,
        })
    } else {
        None
    };
    Ok(FalsifyReport {
        lambda: spec.lambda,
        depth,
        grid_size: grid.len(),
        nodes: counter.load(Ordering::Relaxed),
        lower_bound: best.mass,
        witness,
    })
}

/// Beliefs sampled from the initial set: the point itself, or polytope
/// vertices plus `interior` Dirichlet mixtures of them, or rejection samples
/// of a semialgebraic set.
pub fn default_grid(
    model: &Model,
    spec: &PrivacySpec,
    interior: usize,
    seed: u64,
) -> Result<Vec<Belief>> {
    let n = model.n_states();
    let raw: Vec<Vec<f64>> = match &spec.initial_set {
        InitialSet::Point(p) => vec![p.clone()],
        InitialSet::Polytope(rows) => {
            let verts = polytope_vertices(rows, n, true)?;
            if verts.is_empty() {
                return Err(Error::Spec("initial polytope is empty".into()));
            }
            let mut pts = verts.clone();
            if verts.len() > 1 && interior > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let dir = Dirichlet::new_with_size(1.0, verts.len())
                    .map_err(|e| Error::Numerical(e.to_string()))?;
                for _ in 0..interior {
                    let wts = dir.sample(&mut rng);
                    let mut p = vec![0.0; n];
                    for (w, v) in wts.iter().zip(&verts) {
                        for i in 0..n {
                            p[i] += w * v[i];
                        }
                    }
                    pts.push(p);
                }
            }
            pts
        }
        InitialSet::Semialgebraic(ps) => {
            let mut pts = sample_semialgebraic(ps, n, 200 * interior.max(1), seed);
            pts.truncate(interior.max(1));
            if pts.is_empty() {
                return Err(Error::Spec(
                    "no sample of the semialgebraic initial set was found".into(),
                ));
            }
            pts
        }
    };
    raw.into_iter().map(Belief::from_vec).collect()
}
