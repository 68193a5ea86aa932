//! Semidefinite feasibility programs and a dense barrier solver.
//!
//! A [`ConicProgram`] has decision vector `x ∈ ℝ^m`, linear matrix
//! inequalities `F₀ + Σ xᵢ Fᵢ ⪰ 0` (or `≻ 0` when a block is strict), linear
//! equalities `A x = c`, linear inequalities `G x ⪰ h`, and an optional linear
//! objective to maximize.

mod barrier;
mod kkt;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

pub use barrier::solve;

/// Symmetric matrix stored by its upper triangle.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymMatrix {
    dim: usize,
    upper: BTreeMap<(usize, usize), f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> SymMatrix {
        SymMatrix {
            dim,
            upper: BTreeMap::new(),
        }
    }

    pub fn identity(dim: usize) -> SymMatrix {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            m.add(i, i, 1.0);
        }
        m
    }

    /// Errors unless `m` is square and symmetric within `1e-12`.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<SymMatrix> {
        if m.nrows() != m.ncols() {
            return Err(Error::Program("matrix is not square".into()));
        }
        let mut s = SymMatrix::zeros(m.nrows());
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Program(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
                if m[(i, j)] != 0.0 {
                    s.upper.insert((i, j), m[(i, j)]);
                }
            }
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds `v` at `(r, c)` and, off the diagonal, at `(c, r)` too.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(r < self.dim && c < self.dim, "entry outside the block");
        let key = if r <= c { (r, c) } else { (c, r) };
        *self.upper.entry(key).or_insert(0.0) += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let key = if r <= c { (r, c) } else { (c, r) };
        self.upper.get(&key).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.upper.values().all(|v| *v == 0.0)
    }

    /// Upper-triangle entries `(r, c, v)` with `r ≤ c`.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.upper.iter().map(|(&(r, c), &v)| (r, c, v))
    }

    /// Every stored entry of the full matrix, both triangles.
    pub fn full_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.upper.len());
        for (&(r, c), &v) in &self.upper {
            if v == 0.0 {
                continue;
            }
            out.push((r, c, v));
            if r != c {
                out.push((c, r, v));
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (&(r, c), &v) in &self.upper {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
        m
    }

    pub fn scaled(&self, k: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            upper: self.upper.iter().map(|(&key, &v)| (key, k * v)).collect(),
        }
    }
}

/// `F₀ + Σ xᵢ Fᵢ ⪰ 0`, or `≻ 0` when `strict`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub dim: usize,
    pub constant: SymMatrix,
    pub terms: BTreeMap<usize, SymMatrix>,
    pub strict: bool,
    pub label: String,
}

impl LmiBlock {
    pub fn new(dim: usize, strict: bool, label: impl Into<String>) -> LmiBlock {
        LmiBlock {
            dim,
            constant: SymMatrix::zeros(dim),
            terms: BTreeMap::new(),
            strict,
            label: label.into(),
        }
    }

    pub fn add_constant(&mut self, r: usize, c: usize, v: f64) {
        self.constant.add(r, c, v);
    }

    pub fn add_term(&mut self, var: usize, r: usize, c: usize, v: f64) {
        let dim = self.dim;
        self.terms
            .entry(var)
            .or_insert_with(|| SymMatrix::zeros(dim))
            .add(r, c, v);
    }

    /// Dense `F(x)`.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.to_dense();
        for (&i, f) in &self.terms {
            for (r, c, v) in f.full_entries() {
                m[(r, c)] += x[i] * v;
            }
        }
        m
    }

    /// The same block with every matrix multiplied by `k > 0`.
    pub fn scaled(&self, k: f64) -> LmiBlock {
        LmiBlock {
            dim: self.dim,
            constant: self.constant.scaled(k),
            terms: self.terms.iter().map(|(&i, f)| (i, f.scaled(k))).collect(),
            strict: self.strict,
            label: self.label.clone(),
        }
    }
}

/// `Σ coeffs · x` compared against `rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(i, a)| a * x[i]).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    var_names: Vec<String>,
    pub blocks: Vec<LmiBlock>,
    /// `row · x = rhs`.
    pub equalities: Vec<LinearRow>,
    /// `row · x ≥ rhs`.
    pub inequalities: Vec<LinearRow>,
    /// Maximized when present.
    pub objective: Option<Vec<(usize, f64)>>,
}

impl ConicProgram {
    pub fn new() -> ConicProgram {
        ConicProgram::default()
    }

    pub fn new_var(&mut self, name: impl Into<String>) -> usize {
        self.var_names.push(name.into());
        self.var_names.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn var_name(&self, i: usize) -> &str {
        &self.var_names[i]
    }

    pub fn add_block(&mut self, block: LmiBlock) {
        self.blocks.push(block);
    }

    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearRow { coeffs, rhs });
    }

    pub fn add_inequality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.inequalities.push(LinearRow { coeffs, rhs });
    }

    pub fn set_objective(&mut self, coeffs: Vec<(usize, f64)>) {
        self.objective = Some(coeffs);
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.n_vars();
        for b in &self.blocks {
            if b.dim == 0 {
                return Err(Error::Program(format!("block `{}` is empty", b.label)));
            }
            if b.constant.dim() != b.dim || b.terms.values().any(|f| f.dim() != b.dim) {
                return Err(Error::Program(format!(
                    "block `{}` mixes matrix sizes",
                    b.label
                )));
            }
            if let Some((&i, _)) = b.terms.iter().next_back() {
                if i >= m {
                    return Err(Error::Program(format!(
                        "block `{}` references variable {i} of {m}",
                        b.label
                    )));
                }
            }
        }
        let rows = self
            .equalities
            .iter()
            .chain(&self.inequalities)
            .flat_map(|r| r.coeffs.iter())
            .chain(self.objective.iter().flatten());
        for &(i, a) in rows {
            if i >= m {
                return Err(Error::Program(format!(
                    "row references variable {i} of {m}"
                )));
            }
            if !a.is_finite() {
                return Err(Error::Program("non-finite coefficient".into()));
            }
        }
        Ok(())
    }

    /// Dense debug dump for cross-checking with external solvers.
    pub fn to_json(&self) -> serde_json::Value {
        let dense = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect()
        };
        let blocks: Vec<_> = self
            .blocks
            .iter()
            .map(|b| {
                serde_json::json!({
                    "label": b.label,
                    "dim": b.dim,
                    "strict": b.strict,
                    "F0": dense(&b.constant.to_dense()),
                    "terms": b.terms.iter().map(|(i, f)| serde_json::json!({
                        "var": i,
                        "F": dense(&f.to_dense()),
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "n_vars": self.n_vars(),
            "var_names": self.var_names,
            "blocks": blocks,
            "equalities": self.equalities,
            "inequalities": self.inequalities,
            "objective": self.objective,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    MarginalFeasible,
    NumericalFailure,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MarginalFeasible => "marginal",
            SolveStatus::NumericalFailure => "numerical failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Duality-gap and residual tolerance.
    pub tol: f64,
    /// Smallest margin that counts as strict feasibility. A proven margin
    /// bound below `−strict_eps` counts as infeasibility; anything between
    /// is marginal.
    pub strict_eps: f64,
    /// Newton-step budget per phase.
    pub max_iter: usize,
    /// Cap on the margin variable.
    pub t_max: f64,
    /// Every variable is kept in `[-var_bound, var_bound]`.
    pub var_bound: f64,
    /// Weight on the elastic slack of non-strict constraints.
    pub penalty: f64,
    pub warm_start: Option<Vec<f64>>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-7,
            strict_eps: 1e-6,
            max_iter: 200,
            t_max: 1.0,
            var_bound: 1e4,
            penalty: 1e4,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Residuals {
    pub max_equality: f64,
    pub min_inequality_slack: f64,
    pub block_min_eigs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Smallest eigenvalue over the strict blocks at `x`.
    pub margin: f64,
    /// Elastic slack left on non-strict constraints.
    pub elastic: f64,
    /// Upper bound on the best attainable margin.
    pub margin_bound: f64,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub residuals: Residuals,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockCheck {
    pub label: String,
    pub strict: bool,
    pub min_eig: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub blocks: Vec<BlockCheck>,
    pub max_equality_residual: f64,
    pub min_inequality_slack: f64,
    pub ok: bool,
}

pub(crate) fn min_eig_eigen(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.min()
}

/// Recomputes every residual at `solution.x` with an eigendecomposition.
///
/// Non-strict blocks pass with min eigenvalue `≥ −sample_tol`, strict blocks
/// need `> sample_tol`, equalities need residual `≤ sample_tol`.
pub fn validate_solution(
    program: &ConicProgram,
    solution: &ConicSolution,
    sample_tol: f64,
) -> ValidationReport {
    let x = &solution.x;
    let blocks: Vec<BlockCheck> = program
        .blocks
        .iter()
        .map(|b| {
            let min_eig = min_eig_eigen(b.evaluate(x));
            let ok = if b.strict {
                min_eig > sample_tol
            } else {
                min_eig >= -sample_tol
            };
            BlockCheck {
                label: b.label.clone(),
                strict: b.strict,
                min_eig,
                ok,
            }
        })
        .collect();
    let max_equality_residual = program
        .equalities
        .iter()
        .map(|r| (r.eval(x) - r.rhs).abs())
        .fold(0.0, f64::max);
    let min_inequality_slack = program
        .inequalities
        .iter()
        .map(|r| r.eval(x) - r.rhs)
        .fold(f64::INFINITY, f64::min);
    let ok = blocks.iter().all(|b| b.ok)
        && max_equality_residual <= sample_tol
        && min_inequality_slack >= -sample_tol;
    ValidationReport {
        blocks,
        max_equality_residual,
        min_inequality_slack,
        ok,
    }
}

/// JSON dump of a program together with its solution.
pub fn dump(program: &ConicProgram, solution: Option<&ConicSolution>) -> serde_json::Value {
    serde_json::json!({
        "program": program.to_json(),
        "solution": solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_matrix_roundtrip() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]);
        let s = SymMatrix::from_dense(&d).unwrap();
        assert_eq!(s.to_dense(), d);
        assert_eq!(s.full_entries().len(), 4);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 3.0]);
        assert!(SymMatrix::from_dense(&bad).is_err());
    }

    #[test]
    fn validate_rejects_bad_index() {
        let mut p = ConicProgram::new();
        let mut b = LmiBlock::new(1, false, "b");
        b.add_term(3, 0, 0, 1.0);
        p.add_block(b);
        assert!(p.validate().is_err());
    }
}
