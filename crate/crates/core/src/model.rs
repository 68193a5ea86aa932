//! MDP/POMDP models, privacy specifications, and the geometric encodings of
//! the initial and unsafe belief sets.
//!
//! Transition matrices are stored column-stochastic: `H_a[(i, j)]` is the
//! probability of moving from state `j` to state `i` under action `a`, so a
//! belief column vector updates as `b' = H_a b`. Observation matrices are
//! row-stochastic: `O_a[(i, k)]` is the probability of seeing observation `k`
//! when action `a` lands in state `i`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::poly::{Polynomial, TermJson};

/// Stochasticity tolerance for rows/columns of transition and observation matrices.
pub const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    states: Vec<String>,
    initial: Vec<f64>,
    actions: Vec<String>,
    transitions: Vec<DMatrix<f64>>,
    observations: Option<Vec<String>>,
    observation_fn: Option<Vec<DMatrix<f64>>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Scale the initial distribution to unit mass when it does not sum to 1.
    pub renormalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    InitialNotNormalized { sum: f64, renormalized: bool },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::InitialNotNormalized { sum, renormalized } => {
                if *renormalized {
                    write!(f, "initial distribution sums to {sum}; rescaled to 1")
                } else {
                    write!(
                        f,
                        "initial distribution sums to {sum}; kept as given (pass --renormalize to rescale)"
                    )
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedModel {
    pub model: Model,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    states: Vec<String>,
    initial: Vec<f64>,
    actions: Vec<String>,
    /// `"column"` (default, H convention) or `"row"` (T-table, rows = source state).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transition_convention: Option<String>,
    transitions: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    observations: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    observation_fn: Option<BTreeMap<String, Vec<Vec<f64>>>>,
}

fn dense(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!(
            "{what}: expected a {nrows}x{ncols} matrix"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn check_entries(m: &DMatrix<f64>, what: &str) -> Result<()> {
    for v in m.iter() {
        if !(0.0..=1.0).contains(v) {
            return Err(Error::Probability(format!(
                "{what} has entry {v} outside [0, 1]"
            )));
        }
    }
    Ok(())
}

impl Model {
    /// Builds and validates a model from column-stochastic transition matrices.
    pub fn new(
        states: Vec<String>,
        initial: Vec<f64>,
        actions: Vec<String>,
        transitions: Vec<DMatrix<f64>>,
        observations: Option<(Vec<String>, Vec<DMatrix<f64>>)>,
    ) -> Result<Self> {
        let (observations, observation_fn) = match observations {
            Some((z, o)) => (Some(z), Some(o)),
            None => (None, None),
        };
        let model = Model {
            states,
            initial,
            actions,
            transitions,
            observations,
            observation_fn,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if n == 0 {
            return Err(Error::Dimension("model has no states".into()));
        }
        if self.actions.is_empty() {
            return Err(Error::Dimension("model has no actions".into()));
        }
        if self.initial.len() != n {
            return Err(Error::Dimension(format!(
                "initial distribution has {} entries for {} states",
                self.initial.len(),
                n
            )));
        }
        for (i, &p) in self.initial.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Probability(format!(
                    "initial probability of `{}` is {p}",
                    self.states[i]
                )));
            }
        }
        if self.transitions.len() != self.actions.len() {
            return Err(Error::Dimension(
                "one transition matrix per action is required".into(),
            ));
        }
        for (a, h) in self.actions.iter().zip(&self.transitions) {
            if h.nrows() != n || h.ncols() != n {
                return Err(Error::Dimension(format!(
                    "transition matrix for `{a}` is {}x{}, expected {n}x{n}",
                    h.nrows(),
                    h.ncols()
                )));
            }
            check_entries(h, &format!("transition matrix for `{a}`"))?;
            for j in 0..n {
                let sum: f64 = h.column(j).iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::ColumnSum {
                        action: a.clone(),
                        column: j,
                        sum,
                    });
                }
            }
        }
        match (&self.observations, &self.observation_fn) {
            (None, None) => {}
            (Some(z), Some(o)) => {
                if z.is_empty() {
                    return Err(Error::Dimension("observation set is empty".into()));
                }
                if o.len() != self.actions.len() {
                    return Err(Error::Dimension(
                        "one observation matrix per action is required".into(),
                    ));
                }
                for (a, m) in self.actions.iter().zip(o) {
                    if m.nrows() != n || m.ncols() != z.len() {
                        return Err(Error::Dimension(format!(
                            "observation matrix for `{a}` is {}x{}, expected {n}x{}",
                            m.nrows(),
                            m.ncols(),
                            z.len()
                        )));
                    }
                    check_entries(m, &format!("observation matrix for `{a}`"))?;
                    for i in 0..n {
                        let sum: f64 = m.row(i).iter().sum();
                        if (sum - 1.0).abs() > STOCHASTIC_TOL {
                            return Err(Error::RowSum {
                                action: a.clone(),
                                row: i,
                                sum,
                            });
                        }
                    }
                }
            }
            _ => {
                return Err(Error::Dimension(
                    "`observations` and `observation_fn` must be given together".into(),
                ))
            }
        }
        Ok(())
    }

    /// Parses the JSON model format.
    pub fn from_json_str(text: &str, opts: ParseOptions) -> Result<ParsedModel> {
        let file: ModelFile = serde_json::from_str(text)?;
        let n = file.states.len();
        let row_form = match file.transition_convention.as_deref() {
            None | Some("column") => false,
            Some("row") => true,
            Some(other) => {
                return Err(Error::Dimension(format!(
                    "unknown transition_convention `{other}` (expected `column` or `row`)"
                )))
            }
        };
        if file.transitions.len() != file.actions.len() {
            return Err(Error::Dimension(format!(
                "{} transition matrices for {} actions",
                file.transitions.len(),
                file.actions.len()
            )));
        }
        let mut transitions = Vec::with_capacity(file.actions.len());
        for a in &file.actions {
            let rows = file
                .transitions
                .get(a)
                .ok_or_else(|| Error::UnknownAction(format!("{a} (no transition matrix)")))?;
            let m = dense(rows, n, n, &format!("transitions[{a}]"))?;
            transitions.push(if row_form { m.transpose() } else { m });
        }
        let observations = match (file.observations, file.observation_fn) {
            (None, None) => None,
            (Some(z), Some(o)) => {
                if o.len() != file.actions.len() {
                    return Err(Error::Dimension(format!(
                        "{} observation matrices for {} actions",
                        o.len(),
                        file.actions.len()
                    )));
                }
                let mut mats = Vec::new();
                for a in &file.actions {
                    let rows = o.get(a).ok_or_else(|| {
                        Error::UnknownAction(format!("{a} (no observation matrix)"))
                    })?;
                    mats.push(dense(rows, n, z.len(), &format!("observation_fn[{a}]"))?);
                }
                Some((z, mats))
            }
            _ => {
                return Err(Error::Dimension(
                    "`observations` and `observation_fn` must be given together".into(),
                ))
            }
        };

        let mut warnings = Vec::new();
        let mut initial = file.initial;
        let sum: f64 = initial.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            if opts.renormalize && sum > 0.0 {
                initial.iter_mut().for_each(|p| *p /= sum);
            }
            warnings.push(Warning::InitialNotNormalized {
                sum,
                renormalized: opts.renormalize && sum > 0.0,
            });
        }
        let model = Model::new(
            file.states,
            initial,
            file.actions,
            transitions,
            observations,
        )?;
        Ok(ParsedModel { model, warnings })
    }

    pub fn to_json_value(&self) -> Value {
        let transitions = self
            .actions
            .iter()
            .zip(&self.transitions)
            .map(|(a, h)| (a.clone(), rows_of(h)))
            .collect();
        let observation_fn = self.observation_fn.as_ref().map(|o| {
            self.actions
                .iter()
                .zip(o)
                .map(|(a, m)| (a.clone(), rows_of(m)))
                .collect()
        });
        let file = ModelFile {
            states: self.states.clone(),
            initial: self.initial.clone(),
            actions: self.actions.clone(),
            transition_convention: None,
            transitions,
            observations: self.observations.clone(),
            observation_fn,
        };
        serde_json::to_value(file).expect("model serializes")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("model serializes")
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_observations(&self) -> usize {
        self.observations.as_ref().map_or(0, Vec::len)
    }

    pub fn is_pomdp(&self) -> bool {
        self.observations.is_some()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn observations(&self) -> Option<&[String]> {
        self.observations.as_deref()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn initial_mass(&self) -> f64 {
        self.initial.iter().sum()
    }

    /// Column-stochastic transition matrix of action `a`.
    pub fn transition(&self, a: usize) -> &DMatrix<f64> {
        &self.transitions[a]
    }

    /// Row-stochastic observation matrix of action `a`, if this is a POMDP.
    pub fn observation_matrix(&self, a: usize) -> Option<&DMatrix<f64>> {
        self.observation_fn.as_ref().map(|o| &o[a])
    }

    pub fn state_index(&self, name: &str) -> Result<usize> {
        self.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::UnknownState(name.to_string()))
    }

    pub fn action_index(&self, name: &str) -> Result<usize> {
        self.actions
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::UnknownAction(name.to_string()))
    }

    pub fn observation_index(&self, name: &str) -> Result<usize> {
        self.observations
            .as_ref()
            .and_then(|z| z.iter().position(|s| s == name))
            .ok_or_else(|| Error::UnknownObservation(name.to_string()))
    }

    /// Observation indices `z` with `O_a(q, z) > 0` for some state `q`.
    pub fn live_observations(&self, a: usize) -> Vec<usize> {
        match self.observation_matrix(a) {
            None => Vec::new(),
            Some(o) => (0..o.ncols())
                .filter(|&k| o.column(k).iter().any(|&p| p > 0.0))
                .collect(),
        }
    }

    /// Same model seen through a single uninformative observation.
    pub fn lift_to_pomdp(&self) -> Model {
        let n = self.n_states();
        let obs = vec!["none".to_string()];
        let o = vec![DMatrix::from_element(n, 1, 1.0); self.n_actions()];
        Model {
            states: self.states.clone(),
            initial: self.initial.clone(),
            actions: self.actions.clone(),
            transitions: self.transitions.clone(),
            observations: Some(obs),
            observation_fn: Some(o),
        }
    }

    /// Copy with the initial distribution scaled to unit mass.
    pub fn normalized(&self) -> Model {
        let mut m = self.clone();
        let s = m.initial_mass();
        if s > 0.0 {
            m.initial.iter_mut().for_each(|p| *p /= s);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSet {
    /// A single belief.
    Point(Vec<f64>),
    /// `{ b : E b̄ ⪰ 0 }` with `b̄ = (b, 1)`; one row per half-space, `n + 1` columns.
    Polytope(Vec<Vec<f64>>),
    /// `{ b : l_i(b) ≤ 0 for all i }`.
    Semialgebraic(Vec<Polynomial>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrivacySpec {
    pub secret: Vec<usize>,
    pub lambda: f64,
    pub initial_set: InitialSet,
    pub horizon: Horizon,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    secret: Vec<String>,
    lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial_set: Option<InitialSetFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon: Option<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum InitialSetFile {
    Point(Vec<f64>),
    Polytope {
        #[serde(rename = "E0")]
        e0: Vec<Vec<f64>>,
    },
    Semialgebraic {
        polys: Vec<Vec<TermJson>>,
    },
}

impl PrivacySpec {
    /// Parses the JSON privacy specification and validates it against `model`.
    /// A missing `initial_set` means the model's initial distribution.
    pub fn from_json_str(text: &str, model: &Model) -> Result<PrivacySpec> {
        let file: SpecFile = serde_json::from_str(text)?;
        let n = model.n_states();
        let secret = file
            .secret
            .iter()
            .map(|s| model.state_index(s))
            .collect::<Result<Vec<_>>>()?;
        let initial_set = match file.initial_set {
            None => InitialSet::Point(model.initial().to_vec()),
            Some(InitialSetFile::Point(p)) => InitialSet::Point(p),
            Some(InitialSetFile::Polytope { e0 }) => InitialSet::Polytope(e0),
            Some(InitialSetFile::Semialgebraic { polys }) => InitialSet::Semialgebraic(
                polys
                    .iter()
                    .map(|t| Polynomial::from_json_terms(n, t))
                    .collect::<Result<_>>()?,
            ),
        };
        let horizon = match file.horizon {
            None => Horizon::Infinite,
            Some(Value::String(s)) if s == "infinite" => Horizon::Infinite,
            Some(Value::Number(k)) => match k.as_u64() {
                Some(t) if t >= 1 => Horizon::Finite(t as usize),
                _ => {
                    return Err(Error::Spec(format!(
                        "horizon must be a positive integer, got {k}"
                    )))
                }
            },
            Some(other) => {
                return Err(Error::Spec(format!(
                    "horizon must be \"infinite\" or an integer, got {other}"
                )))
            }
        };
        let spec = PrivacySpec {
            secret,
            lambda: file.lambda,
            initial_set,
            horizon,
        };
        spec.validate(model)?;
        Ok(spec)
    }

    pub fn to_json_value(&self, model: &Model) -> Value {
        let initial_set = match &self.initial_set {
            InitialSet::Point(p) => InitialSetFile::Point(p.clone()),
            InitialSet::Polytope(e) => InitialSetFile::Polytope { e0: e.clone() },
            InitialSet::Semialgebraic(ps) => InitialSetFile::Semialgebraic {
                polys: ps.iter().map(Polynomial::to_json_terms).collect(),
            },
        };
        let horizon = match self.horizon {
            Horizon::Infinite => Value::from("infinite"),
            Horizon::Finite(t) => Value::from(t),
        };
        serde_json::to_value(SpecFile {
            secret: self
                .secret
                .iter()
                .map(|&i| model.states()[i].clone())
                .collect(),
            lambda: self.lambda,
            initial_set: Some(initial_set),
            horizon: Some(horizon),
        })
        .expect("spec serializes")
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        let n = model.n_states();
        if self.secret.is_empty() {
            return Err(Error::Spec("secret state set is empty".into()));
        }
        let mut sorted = self.secret.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.secret.len() {
            return Err(Error::Spec("secret state listed twice".into()));
        }
        if sorted.iter().any(|&i| i >= n) {
            return Err(Error::Spec("secret state index out of range".into()));
        }
        if sorted.len() == n {
            return Err(Error::Spec(
                "secret set must be a proper subset of the states".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Spec(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        match &self.initial_set {
            InitialSet::Point(p) => {
                if p.len() != n {
                    return Err(Error::Dimension(format!(
                        "initial point has {} entries for {n} states",
                        p.len()
                    )));
                }
                if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::Probability(
                        "initial point entry outside [0, 1]".into(),
                    ));
                }
            }
            InitialSet::Polytope(rows) => {
                if rows.is_empty() || rows.iter().any(|r| r.len() != n + 1) {
                    return Err(Error::Dimension(format!(
                        "polytope rows must have {} entries (states plus constant)",
                        n + 1
                    )));
                }
            }
            InitialSet::Semialgebraic(ps) => {
                if ps.is_empty() {
                    return Err(Error::Spec(
                        "semialgebraic initial set has no polynomials".into(),
                    ));
                }
                if let Some(p) = ps.iter().find(|p| p.n_vars() != n) {
                    return Err(Error::VarsMismatch {
                        left: n,
                        right: p.n_vars(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Indicator vector of the secret states.
    pub fn secret_indicator(&self, n: usize) -> Vec<f64> {
        let mut w = vec![0.0; n];
        for &i in &self.secret {
            w[i] = 1.0;
        }
        w
    }

    pub fn with_lambda(&self, lambda: f64) -> PrivacySpec {
        PrivacySpec {
            lambda,
            ..self.clone()
        }
    }

    /// Largest secret mass over the initial set, when it can be computed exactly.
    ///
    /// Points and polytopes are exact (polytopes via vertex enumeration after
    /// clipping to the unit cube). Semialgebraic sets are sampled.
    pub fn initial_secret_mass_max(&self, model: &Model) -> Result<f64> {
        let n = model.n_states();
        let w = self.secret_indicator(n);
        let pts = match &self.initial_set {
            InitialSet::Point(p) => vec![p.clone()],
            InitialSet::Polytope(rows) => polytope_vertices(rows, n, true)?,
            InitialSet::Semialgebraic(ps) => sample_semialgebraic(ps, n, 20_000, 0x5eed),
        };
        Ok(pts
            .iter()
            .map(|b| w.iter().zip(b).map(|(wi, bi)| wi * bi).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Errors with [`Error::Overlap`] when the initial set meets the unsafe set.
    pub fn check_disjoint(&self, model: &Model) -> Result<()> {
        let mass = self.initial_secret_mass_max(model)?;
        if mass > self.lambda {
            return Err(Error::Overlap {
                mass,
                lambda: self.lambda,
            });
        }
        Ok(())
    }

    /// Range of the total mass `Σ b` over the initial set.
    pub fn initial_mass_range(&self, model: &Model) -> Result<(f64, f64)> {
        let n = model.n_states();
        let pts = match &self.initial_set {
            InitialSet::Point(p) => vec![p.clone()],
            InitialSet::Polytope(rows) => polytope_vertices(rows, n, true)?,
            InitialSet::Semialgebraic(ps) => sample_semialgebraic(ps, n, 20_000, 0x5eed),
        };
        if pts.is_empty() {
            return Err(Error::Spec("initial set is empty".into()));
        }
        let masses = pts.iter().map(|b| b.iter().sum::<f64>());
        let (lo, hi) = masses.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
            (lo.min(m), hi.max(m))
        });
        Ok((lo, hi))
    }

    /// Defining polynomials `l_i ≤ 0` of the initial set.
    pub fn initial_polynomials(&self, model: &Model) -> Vec<Polynomial> {
        let n = model.n_states();
        match &self.initial_set {
            InitialSet::Semialgebraic(ps) => ps.clone(),
            _ => {
                let rows = initial_polytope_matrix(self, model).expect("point or polytope");
                rows.iter()
                    .map(|r| Polynomial::affine(&r[..n], r[n]).scale(-1.0))
                    .collect()
            }
        }
    }
}

/// The privacy-unsafe half-space `{ b : wᵀb > λ }`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnsafeHalfspace {
    pub w: Vec<f64>,
    pub lambda: f64,
}

impl UnsafeHalfspace {
    /// `wᵀb − λ`.
    pub fn margin(&self, b: &[f64]) -> f64 {
        self.w.iter().zip(b).map(|(w, x)| w * x).sum::<f64>() - self.lambda
    }

    pub fn contains(&self, b: &[f64]) -> bool {
        self.margin(b) > 0.0
    }

    /// Symmetric `(n+1)×(n+1)` matrix with `b̄ᵀ W b̄ = wᵀb − λ` on `b̄ = (b, 1)`.
    pub fn quadratic_form(&self) -> DMatrix<f64> {
        let n = self.w.len();
        let mut m = DMatrix::zeros(n + 1, n + 1);
        for i in 0..n {
            m[(i, n)] = self.w[i] / 2.0;
            m[(n, i)] = self.w[i] / 2.0;
        }
        m[(n, n)] = -self.lambda;
        m
    }

    pub fn as_polynomial(&self) -> Polynomial {
        Polynomial::affine(&self.w, -self.lambda)
    }
}

pub fn unsafe_halfspace(spec: &PrivacySpec, model: &Model) -> UnsafeHalfspace {
    UnsafeHalfspace {
        w: spec.secret_indicator(model.n_states()),
        lambda: spec.lambda,
    }
}

/// Half-space matrix (`n₀ × (n+1)`, rows `e` with `e·(b,1) ≥ 0`) of a point
/// or polytope initial set. A point contributes one opposing pair per state.
pub fn initial_polytope_matrix(spec: &PrivacySpec, model: &Model) -> Result<Vec<Vec<f64>>> {
    let n = model.n_states();
    match &spec.initial_set {
        InitialSet::Point(p) => {
            let mut rows = Vec::with_capacity(2 * n);
            for (i, &pi) in p.iter().enumerate() {
                let mut up = vec![0.0; n + 1];
                up[i] = 1.0;
                up[n] = -pi;
                let down: Vec<f64> = up.iter().map(|v| -v).collect();
                rows.push(up);
                rows.push(down);
            }
            Ok(rows)
        }
        InitialSet::Polytope(rows) => {
            if rows.iter().any(|r| r.len() != n + 1) {
                return Err(Error::Dimension("polytope row length must be n + 1".into()));
            }
            Ok(rows.clone())
        }
        InitialSet::Semialgebraic(_) => Err(Error::UnsupportedEncoding(
            "semialgebraic initial sets have no half-space form".into(),
        )),
    }
}

/// Rows of the ∞-norm ball `{ b : |b − c|∞ ≤ r }` in `E b̄ ⪰ 0` form.
pub fn linf_ball_rows(center: &[f64], radius: f64) -> Vec<Vec<f64>> {
    let n = center.len();
    let mut rows = Vec::with_capacity(2 * n);
    for (i, &c) in center.iter().enumerate() {
        let mut lo = vec![0.0; n + 1];
        lo[i] = 1.0;
        lo[n] = -(c - radius);
        let mut hi = vec![0.0; n + 1];
        hi[i] = -1.0;
        hi[n] = c + radius;
        rows.push(lo);
        rows.push(hi);
    }
    rows
}

/// Rows pinning `Σ b = mass` as two opposing half-spaces.
pub fn mass_equality_rows(n: usize, mass: f64) -> Vec<Vec<f64>> {
    let mut up = vec![1.0; n + 1];
    up[n] = -mass;
    let down = up.iter().map(|v| -v).collect();
    vec![up, down]
}

const VERTEX_TOL: f64 = 1e-9;
const MAX_VERTEX_COMBINATIONS: u64 = 2_000_000;

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u64, |acc, i| {
        acc.saturating_mul((n - i) as u64) / (i as u64 + 1)
    })
}

/// Vertices of `{ b : E b̄ ⪰ 0 }`, optionally clipped to `[0, 1]^n`.
pub fn polytope_vertices(
    rows: &[Vec<f64>],
    n: usize,
    clip_unit_box: bool,
) -> Result<Vec<Vec<f64>>> {
    let mut all: Vec<Vec<f64>> = rows.to_vec();
    if clip_unit_box {
        all.extend(linf_ball_rows(&vec![0.5; n], 0.5));
    }
    if binomial(all.len(), n) > MAX_VERTEX_COMBINATIONS {
        return Err(Error::Precondition(format!(
            "vertex enumeration of {} half-spaces in dimension {n} is too large",
            all.len()
        )));
    }
    let mut verts: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..n).collect();
    if all.len() < n {
        return Ok(verts);
    }
    loop {
        let a = DMatrix::from_fn(n, n, |i, j| all[idx[i]][j]);
        let rhs = DVector::from_fn(n, |i, _| -all[idx[i]][n]);
        if let Some(sol) = a.clone().lu().solve(&rhs) {
            let cond_ok = (&a * &sol - &rhs).amax() < 1e-9;
            let v: Vec<f64> = sol.iter().copied().collect();
            let feasible = all.iter().all(|r| {
                r[..n].iter().zip(&v).map(|(e, x)| e * x).sum::<f64>() + r[n] >= -VERTEX_TOL
            });
            if cond_ok
                && feasible
                && !verts
                    .iter()
                    .any(|u| u.iter().zip(&v).all(|(p, q)| (p - q).abs() < 1e-9))
            {
                verts.push(v);
            }
        }
        // next combination
        let m = all.len();
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(verts);
            }
            i -= 1;
            if idx[i] != i + m - n {
                break;
            }
            if i == 0 && idx[0] == m - n {
                return Ok(verts);
            }
        }
        idx[i] += 1;
        for j in i + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Rejection samples of `{ l_i ≤ 0 } ∩ [0,1]^n`.
pub(crate) fn sample_semialgebraic(
    ps: &[Polynomial],
    n: usize,
    tries: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..tries {
        let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        if ps.iter().all(|p| p.eval(&b).map_or(false, |v| v <= 0.0)) {
            out.push(b);
        }
    }
    out
}
