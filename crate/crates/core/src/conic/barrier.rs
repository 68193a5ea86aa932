//! Log-barrier path-following solver.
//!
//! Phase 1 maximizes `t − M·r` where every strict block must satisfy
//! `F(x) − t·I ⪰ 0`, every non-strict block `F(x) + r·I ⪰ 0`, and every linear
//! inequality `g·x − h + r ≥ 0`, with `t ≤ t_max`, `r ≥ 0`, and a box on `x`.
//! The elastic slack `r` makes a strictly feasible start trivial. Equalities
//! are kept in every Newton step through the KKT system, starting from a
//! projected point.
//! When the penalty lets phase 1 trade slack for margin, a repair pass fixes
//! the strict blocks at part of the margin found and minimizes `r` alone.
//! Phase 2, run only for programs with an objective, maximizes `cᵀx − M·r`
//! with the strict blocks shifted by the strictness threshold.

use log::debug;
use nalgebra::{DMatrix, DVector};

use super::kkt::{EqualityBasis, Hessian, Structure};
use super::{ConicProgram, ConicSolution, Residuals, SolveStatus, SolverOptions};
use crate::error::{Error, Result};

const MU: f64 = 10.0;
const CENTER_TOL: f64 = 1e-7;

struct Term {
    var: usize,
    /// Full-matrix entries, both triangles.
    entries: Vec<(usize, usize, f64)>,
}

struct Block {
    f0: DMatrix<f64>,
    terms: Vec<Term>,
}

impl Block {
    fn slack(&self, z: &[f64]) -> DMatrix<f64> {
        let mut s = self.f0.clone();
        for t in &self.terms {
            let zi = z[t.var];
            if zi != 0.0 {
                for &(r, c, v) in &t.entries {
                    s[(r, c)] += zi * v;
                }
            }
        }
        s
    }

    fn direction(&self, dz: &[f64]) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.f0.nrows(), self.f0.ncols());
        for t in &self.terms {
            for &(r, c, v) in &t.entries {
                s[(r, c)] += dz[t.var] * v;
            }
        }
        s
    }
}

/// `coeffs · z + c > 0`.
struct Scalar {
    coeffs: Vec<(usize, f64)>,
    c: f64,
}

impl Scalar {
    fn value(&self, z: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(i, a)| a * z[i]).sum::<f64>() + self.c
    }
}

struct Problem {
    nz: usize,
    blocks: Vec<Block>,
    scalars: Vec<Scalar>,
    /// Maximized.
    obj: Vec<(usize, f64)>,
    /// Barrier parameter: total block dimension plus scalar count.
    nu: f64,
    structure: Structure,
}

fn log_det(s: DMatrix<f64>) -> Option<f64> {
    let chol = s.cholesky()?;
    Some(
        2.0 * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>(),
    )
}

impl Problem {
    fn objective(&self, z: &[f64]) -> f64 {
        self.obj.iter().map(|&(i, c)| c * z[i]).sum()
    }

    /// Barrier function value; `None` outside the interior.
    fn phi(&self, z: &[f64], eta: f64) -> Option<f64> {
        let mut v = -eta * self.objective(z);
        for s in &self.scalars {
            let x = s.value(z);
            if x <= 0.0 {
                return None;
            }
            v -= x.ln();
        }
        for b in &self.blocks {
            v -= log_det(b.slack(z))?;
        }
        Some(v)
    }

    fn newton_system(&self, z: &[f64], eta: f64) -> Option<(DVector<f64>, Hessian)> {
        let nz = self.nz;
        let mut g = DVector::zeros(nz);
        let st = &self.structure;
        let mut h = st.hessian();
        for b in &self.blocks {
            let chol = b.slack(z).cholesky()?;
            let p = chol.inverse();
            let k = p.nrows();
            let mut m = DMatrix::zeros(k, k);
            for ti in &b.terms {
                let mut tr = 0.0;
                m.fill(0.0);
                for &(r, c, v) in &ti.entries {
                    tr += v * p[(c, r)];
                    m.ger(v, &p.column(r), &p.column(c), 1.0);
                }
                g[ti.var] -= tr;
                for tj in &b.terms {
                    let acc: f64 = tj.entries.iter().map(|&(s, u, w)| w * m[(u, s)]).sum();
                    if acc != 0.0 {
                        st.add(&mut h, ti.var, tj.var, acc);
                    }
                }
            }
        }
        for s in &self.scalars {
            let v = s.value(z);
            if v <= 0.0 {
                return None;
            }
            for &(i, a) in &s.coeffs {
                g[i] -= a / v;
                for &(j, b) in &s.coeffs {
                    st.add(&mut h, i, j, a * b / (v * v));
                }
            }
        }
        for &(i, c) in &self.obj {
            g[i] -= eta * c;
        }
        Some((g, h))
    }

    /// Largest step keeping every scalar constraint positive.
    fn scalar_step_limit(&self, z: &[f64], dz: &[f64]) -> f64 {
        let mut alpha = f64::INFINITY;
        for s in &self.scalars {
            let ds: f64 = s.coeffs.iter().map(|&(i, a)| a * dz[i]).sum();
            if ds < 0.0 {
                alpha = alpha.min(-s.value(z) / ds);
            }
        }
        alpha
    }
}

enum Centering {
    Centered,
    Stalled,
    Budget,
}

struct PathState {
    z: Vec<f64>,
    eta: f64,
    iterations: usize,
}

/// Newton centering at the current `eta`.
fn center(prob: &Problem, st: &mut PathState, max_iter: usize) -> Centering {
    loop {
        if st.iterations >= max_iter {
            return Centering::Budget;
        }
        let Some((g, h)) = prob.newton_system(&st.z, st.eta) else {
            return Centering::Stalled;
        };
        let rp = prob.structure.residual(&st.z);
        let Some(dz) = prob.structure.direction(h, &g, &rp) else {
            return Centering::Stalled;
        };
        let decrement = -g.dot(&dz);
        st.iterations += 1;
        if !decrement.is_finite() {
            return Centering::Stalled;
        }
        if decrement / 2.0 <= CENTER_TOL {
            return Centering::Centered;
        }
        let dz = dz.as_slice();
        let Some(phi0) = prob.phi(&st.z, st.eta) else {
            return Centering::Stalled;
        };
        let dirs: Vec<DMatrix<f64>> = prob.blocks.iter().map(|b| b.direction(dz)).collect();
        let mut alpha = (0.99 * prob.scalar_step_limit(&st.z, dz)).min(1.0);
        let mut accepted = false;
        for _ in 0..80 {
            let trial: Vec<f64> = st.z.iter().zip(dz).map(|(z, d)| z + alpha * d).collect();
            let in_blocks = prob
                .blocks
                .iter()
                .zip(&dirs)
                .all(|(b, d)| (b.slack(&st.z) + d * alpha).cholesky().is_some());
            if in_blocks {
                if let Some(phi) = prob.phi(&trial, st.eta) {
                    if phi <= phi0 - 0.01 * alpha * decrement {
                        st.z = trial;
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Roundoff floor: the decrement cannot be realized any more.
            return if decrement < 1e-4 {
                Centering::Centered
            } else {
                Centering::Stalled
            };
        }
    }
}

enum PathEnd {
    Converged,
    /// Phase-1 bound proves the margin is negative.
    Infeasible,
    Stalled,
    Budget,
}

fn follow_path(
    prob: &Problem,
    st: &mut PathState,
    opts: &SolverOptions,
    stop_when_negative: bool,
) -> PathEnd {
    loop {
        match center(prob, st, opts.max_iter) {
            Centering::Centered => {}
            Centering::Stalled => return PathEnd::Stalled,
            Centering::Budget => return PathEnd::Budget,
        }
        let gap = prob.nu / st.eta;
        let obj = prob.objective(&st.z);
        debug!(
            "barrier eta={:.1e} obj={obj:.6e} gap={gap:.1e} iter={}",
            st.eta, st.iterations
        );
        if stop_when_negative && obj + gap < -opts.strict_eps {
            return PathEnd::Infeasible;
        }
        if gap <= opts.tol * obj.abs().max(1.0) {
            return PathEnd::Converged;
        }
        st.eta *= MU;
    }
}

/// Smallest eigenvalue by bisection on Cholesky success.
pub(crate) fn min_eig_bisect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut lo = f64::INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
        lo = lo.min(m[(i, i)] - off);
        hi = hi.min(m[(i, i)]);
    }
    let shifted_ok = |s: f64| {
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] -= s;
        }
        a.cholesky().is_some()
    };
    if !shifted_ok(lo) {
        lo -= 1e-12 * (1.0 + lo.abs());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if shifted_ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn residuals(program: &ConicProgram, x: &[f64]) -> Residuals {
    Residuals {
        max_equality: program
            .equalities
            .iter()
            .map(|r| (r.eval(x) - r.rhs).abs())
            .fold(0.0, f64::max),
        min_inequality_slack: program
            .inequalities
            .iter()
            .map(|r| r.eval(x) - r.rhs)
            .fold(f64::INFINITY, f64::min),
        block_min_eigs: program
            .blocks
            .iter()
            .map(|b| min_eig_bisect(&b.evaluate(x)))
            .collect(),
    }
}

fn identity_entries(dim: usize, v: f64) -> Vec<(usize, usize, f64)> {
    (0..dim).map(|i| (i, i, v)).collect()
}

/// Layout of the extended variable vector `(x, t?, r?)`.
struct Layout {
    t: Option<usize>,
    r: Option<usize>,
}

/// `shift = None` builds phase 1 (margin variable `t` in strict blocks);
/// `Some(s)` builds phase 2 with strict blocks required `⪰ s·I`.
fn build(
    program: &ConicProgram,
    eqs: &EqualityBasis,
    opts: &SolverOptions,
    shift: Option<f64>,
    objective: bool,
) -> (Problem, Layout) {
    let m = program.n_vars();
    let has_strict = program.blocks.iter().any(|b| b.strict);
    let has_elastic = program.blocks.iter().any(|b| !b.strict) || !program.inequalities.is_empty();
    let mut next = m;
    let t = (shift.is_none() && has_strict).then(|| {
        next += 1;
        next - 1
    });
    let r = has_elastic.then(|| {
        next += 1;
        next - 1
    });
    let nz = next;

    let mut blocks = Vec::new();
    let mut nu = 0.0;
    for b in &program.blocks {
        let mut f0 = b.constant.to_dense();
        let mut terms: Vec<Term> = b
            .terms
            .iter()
            .map(|(&var, f)| Term {
                var,
                entries: f.full_entries(),
            })
            .filter(|t| !t.entries.is_empty())
            .collect();
        if b.strict {
            match (t, shift) {
                (Some(t), _) => terms.push(Term {
                    var: t,
                    entries: identity_entries(b.dim, -1.0),
                }),
                (None, Some(s)) => {
                    for i in 0..b.dim {
                        f0[(i, i)] -= s;
                    }
                }
                (None, None) => {}
            }
        } else if let Some(r) = r {
            terms.push(Term {
                var: r,
                entries: identity_entries(b.dim, 1.0),
            });
        }
        nu += b.dim as f64;
        blocks.push(Block { f0, terms });
    }

    let mut scalars = Vec::new();
    for row in &program.inequalities {
        let mut coeffs = row.coeffs.clone();
        coeffs.push((r.expect("elastic slack exists"), 1.0));
        scalars.push(Scalar {
            coeffs,
            c: -row.rhs,
        });
    }
    if let Some(r) = r {
        scalars.push(Scalar {
            coeffs: vec![(r, 1.0)],
            c: 0.0,
        });
    }
    if let Some(t) = t {
        scalars.push(Scalar {
            coeffs: vec![(t, -1.0)],
            c: opts.t_max,
        });
    }
    for i in 0..m {
        scalars.push(Scalar {
            coeffs: vec![(i, -1.0)],
            c: opts.var_bound,
        });
        scalars.push(Scalar {
            coeffs: vec![(i, 1.0)],
            c: opts.var_bound,
        });
    }
    nu += scalars.len() as f64;

    let mut obj = Vec::new();
    match shift {
        None => {
            if let Some(t) = t {
                obj.push((t, 1.0));
            }
        }
        Some(_) if objective => obj.extend(program.objective.iter().flatten().copied()),
        Some(_) => {}
    }
    if let Some(r) = r {
        obj.push((r, -opts.penalty));
    }
    let groups = blocks
        .iter()
        .map(|b| b.terms.iter().map(|t| t.var).collect::<Vec<_>>())
        .chain(
            scalars
                .iter()
                .map(|s| s.coeffs.iter().map(|c| c.0).collect::<Vec<_>>()),
        );
    let border: Vec<usize> = t.into_iter().chain(r).collect();
    let structure = Structure::new(nz, &border, groups, eqs.rows.clone());
    (
        Problem {
            nz,
            blocks,
            scalars,
            obj,
            nu,
            structure,
        },
        Layout { t, r },
    )
}

fn failure(
    program: &ConicProgram,
    opts: &SolverOptions,
    x: Vec<f64>,
    iterations: usize,
    status: SolveStatus,
) -> ConicSolution {
    let residuals = residuals(program, &x);
    ConicSolution {
        status,
        margin: strict_margin(program, &residuals, opts.t_max),
        x,
        elastic: 0.0,
        margin_bound: f64::NAN,
        objective: None,
        iterations,
        residuals,
    }
}

/// Smallest `r` making every non-strict block and inequality hold at `x`.
fn elastic_start(program: &ConicProgram, x: &[f64]) -> f64 {
    let mut r: f64 = 0.0;
    for b in program.blocks.iter().filter(|b| !b.strict) {
        r = r.max(-super::min_eig_eigen(b.evaluate(x)));
    }
    for row in &program.inequalities {
        r = r.max(row.rhs - row.eval(x));
    }
    r
}

/// Smallest strict-block eigenvalue, capped like the margin variable.
fn strict_margin(program: &ConicProgram, res: &Residuals, t_max: f64) -> f64 {
    let m = program
        .blocks
        .iter()
        .zip(&res.block_min_eigs)
        .filter(|(b, _)| b.strict)
        .map(|(_, &e)| e)
        .fold(f64::INFINITY, f64::min);
    m.min(t_max)
}

/// Decides strict feasibility of `program` and, when it has an objective,
/// maximizes it over the feasible set.
pub fn solve(program: &ConicProgram, opts: &SolverOptions) -> Result<ConicSolution> {
    program.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::Program("tolerance must be positive".into()));
    }
    let m = program.n_vars();
    let eqs = EqualityBasis::new(&program.equalities, m);
    let mut x: DVector<f64> = eqs.project(&DVector::zeros(m));
    let c_scale = program
        .equalities
        .iter()
        .map(|r| r.rhs.abs())
        .fold(1.0, f64::max);
    let eq_residual = program
        .equalities
        .iter()
        .map(|r| (r.eval(x.as_slice()) - r.rhs).abs())
        .fold(0.0, f64::max);
    if eq_residual > 10.0 * opts.tol * c_scale {
        debug!("equalities inconsistent (residual {eq_residual:e})");
        return Ok(failure(
            program,
            opts,
            x.iter().copied().collect(),
            0,
            SolveStatus::Infeasible,
        ));
    }
    if let Some(w) = &opts.warm_start {
        if w.len() != m {
            return Err(Error::Program("warm start has the wrong length".into()));
        }
        x = eqs.project(&DVector::from_column_slice(w));
    }
    if x.iter().any(|v| v.abs() >= 0.999 * opts.var_bound) {
        return Ok(failure(
            program,
            opts,
            x.iter().copied().collect(),
            0,
            SolveStatus::NumericalFailure,
        ));
    }
    let xs: Vec<f64> = x.iter().copied().collect();

    // Phase 1.
    let (prob, layout) = build(program, &eqs, opts, None, false);
    let mut z = xs.clone();
    z.resize(prob.nz, 0.0);
    let mut t_start = f64::INFINITY;
    for b in program.blocks.iter().filter(|b| b.strict) {
        t_start = t_start.min(super::min_eig_eigen(b.evaluate(&xs)));
    }
    if let Some(t) = layout.t {
        z[t] = (t_start - 1.0).min(opts.t_max - 1.0);
    }
    if let Some(r) = layout.r {
        z[r] = elastic_start(program, &xs) + 1.0;
    }
    let mut st = PathState {
        z,
        eta: 1.0,
        iterations: 0,
    };
    let end = if layout.t.is_none() && layout.r.is_none() {
        PathEnd::Converged
    } else {
        follow_path(&prob, &mut st, opts, layout.t.is_some())
    };
    let gap = prob.nu / st.eta;
    let t_val = layout.t.map(|t| st.z[t]);
    let mut r_val = layout.r.map_or(0.0, |r| st.z[r]);
    let obj = prob.objective(&st.z);
    let mut x: Vec<f64> = st.z[..m].to_vec();
    let mut iterations = st.iterations;
    let bound_trusted = matches!(end, PathEnd::Converged | PathEnd::Infeasible);
    let margin_of = |x: &[f64]| {
        if layout.t.is_some() {
            strict_margin(program, &residuals(program, x), opts.t_max)
        } else {
            opts.t_max
        }
    };
    let feas_tol = opts.tol;

    // Repair: the margin is there but the penalty left slack behind.
    let margin = margin_of(&x);
    if bound_trusted && layout.t.is_some() && r_val > feas_tol && margin >= 2.0 * opts.strict_eps {
        let mut shift = 0.5 * margin;
        while shift >= opts.strict_eps {
            let (prob1, layout1) = build(program, &eqs, opts, Some(shift), false);
            let r = layout1.r.expect("slack is present");
            let mut z1 = x.clone();
            z1.resize(prob1.nz, 0.0);
            z1[r] = elastic_start(program, &x) * 2.0 + 1e-9;
            let mut st1 = PathState {
                z: z1,
                eta: 1.0,
                iterations: 0,
            };
            if prob1.phi(&st1.z, 1.0).is_none() {
                break;
            }
            let end1 = follow_path(&prob1, &mut st1, opts, false);
            iterations += st1.iterations;
            let r1 = st1.z[r];
            debug!("repair at shift {shift:.1e}: r={r1:.2e}");
            if r1 < r_val {
                x = st1.z[..m].to_vec();
                r_val = r1;
            }
            if r1 <= feas_tol || !matches!(end1, PathEnd::Converged) {
                break;
            }
            shift *= 0.1;
        }
    }

    let res = residuals(program, &x);
    let margin = margin_of(&x);
    let eq_ok = res.max_equality <= 10.0 * opts.tol * c_scale;
    let qualifies = margin >= opts.strict_eps && r_val <= feas_tol && eq_ok;
    let status = if qualifies {
        SolveStatus::Feasible
    } else if bound_trusted && layout.t.is_some() && obj + gap < -opts.strict_eps {
        SolveStatus::Infeasible
    } else if bound_trusted && layout.t.is_none() && r_val - gap / opts.penalty > feas_tol {
        SolveStatus::Infeasible
    } else if bound_trusted && eq_ok {
        SolveStatus::MarginalFeasible
    } else {
        SolveStatus::NumericalFailure
    };
    debug!(
        "phase 1 done: status={status} t={t_val:?} r={r_val:.2e} margin={margin:.3e} iters={iterations}"
    );
    let margin_bound = match t_val {
        Some(_) => obj + gap,
        None => opts.t_max,
    };
    let mut elastic = r_val;

    // Phase 2.
    let mut objective = None;
    if let (SolveStatus::Feasible, Some(c)) = (status, &program.objective) {
        let shift = if layout.t.is_some() {
            opts.strict_eps
        } else {
            0.0
        };
        if margin > shift * (1.0 + 1e-9) || layout.t.is_none() {
            let (prob2, layout2) = build(program, &eqs, opts, Some(shift), true);
            let mut z2 = x.clone();
            z2.resize(prob2.nz, 0.0);
            if let Some(r) = layout2.r {
                z2[r] = r_val.max(1e-300);
                if prob2.phi(&z2, 1.0).is_none() {
                    z2[r] = r_val * 2.0 + 1e-9;
                }
            }
            let mut st2 = PathState {
                z: z2,
                eta: 1.0,
                iterations: 0,
            };
            if prob2.phi(&st2.z, 1.0).is_some() {
                let end2 = follow_path(&prob2, &mut st2, opts, false);
                iterations += st2.iterations;
                let r2 = layout2.r.map_or(0.0, |r| st2.z[r]);
                if matches!(end2, PathEnd::Converged) && r2 <= feas_tol {
                    x = st2.z[..m].to_vec();
                    elastic = r2;
                }
            }
        }
        objective = Some(c.iter().map(|&(i, a)| a * x[i]).sum());
    }
    let residuals = residuals(program, &x);
    let margin = if layout.t.is_some() {
        strict_margin(program, &residuals, opts.t_max)
    } else {
        opts.t_max
    };
    Ok(ConicSolution {
        status,
        x,
        margin,
        elastic,
        margin_bound,
        objective,
        iterations,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{validate_solution, LmiBlock};

    fn scalar_block(var: usize, coef: f64, constant: f64, strict: bool) -> LmiBlock {
        let mut b = LmiBlock::new(1, strict, "s");
        b.add_term(var, 0, 0, coef);
        b.add_constant(0, 0, constant);
        b
    }

    #[test]
    fn free_strict_scalar_hits_margin_cap() {
        let mut p = ConicProgram::new();
        let x = p.new_var("x");
        p.add_block(scalar_block(x, 1.0, -1.0, true));
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Feasible);
        assert!((s.margin - 1.0).abs() < 1e-5, "margin {}", s.margin);
    }

    #[test]
    fn contradictory_scalars_are_infeasible() {
        let mut p = ConicProgram::new();
        let x = p.new_var("x");
        p.add_block(scalar_block(x, 1.0, -1.0, true));
        p.add_block(scalar_block(x, -1.0, 0.0, true));
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    fn two_by_two() -> ConicProgram {
        let mut p = ConicProgram::new();
        let x = p.new_var("x");
        let mut b = LmiBlock::new(2, false, "2x2");
        b.add_constant(0, 0, 1.0);
        b.add_constant(1, 1, 1.0);
        b.add_term(x, 0, 1, 1.0);
        p.add_block(b);
        p.set_objective(vec![(x, 1.0)]);
        p
    }

    #[test]
    fn analytic_two_by_two_optimum() {
        let p = two_by_two();
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Feasible);
        assert!((s.x[0] - 1.0).abs() < 1e-6, "x = {}", s.x[0]);
        let rep = validate_solution(&p, &s, 1e-6);
        assert!(rep.blocks[0].min_eig.abs() < 1e-6);
        assert!(rep.ok);
    }

    #[test]
    fn perturbed_point_flags_block() {
        let p = two_by_two();
        let mut s = solve(&p, &SolverOptions::default()).unwrap();
        s.x[0] += 0.1;
        let rep = validate_solution(&p, &s, 1e-6);
        assert!(!rep.blocks[0].ok);
        assert!(!rep.ok);
    }

    #[test]
    fn equality_constrained_block() {
        // x + y = 2, [[x, 0], [0, y]] ≻ 0: best margin is 1 at x = y = 1.
        let mut p = ConicProgram::new();
        let x = p.new_var("x");
        let y = p.new_var("y");
        let mut b = LmiBlock::new(2, true, "diag");
        b.add_term(x, 0, 0, 1.0);
        b.add_term(y, 1, 1, 1.0);
        p.add_block(b);
        p.add_equality(vec![(x, 1.0), (y, 1.0)], 2.0);
        let opts = SolverOptions {
            t_max: 10.0,
            ..SolverOptions::default()
        };
        let s = solve(&p, &opts).unwrap();
        assert_eq!(s.status, SolveStatus::Feasible);
        assert!((s.margin - 1.0).abs() < 1e-5);
        assert!(
            s.residuals.max_equality < 1e-9,
            "{:?} {:?}",
            s.residuals,
            s.x
        );
    }

    #[test]
    fn inconsistent_equalities() {
        let mut p = ConicProgram::new();
        let x = p.new_var("x");
        p.add_equality(vec![(x, 1.0)], 1.0);
        p.add_equality(vec![(x, 1.0)], 2.0);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn linear_inequalities_feasible_and_infeasible() {
        let mut p = ConicProgram::new();
        let x = p.new_var("x");
        p.add_inequality(vec![(x, 1.0)], 1.0);
        p.add_block(scalar_block(x, -1.0, 3.0, true));
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Feasible);
        assert!(s.x[0] >= 1.0 - 1e-7);
        p.add_inequality(vec![(x, 1.0)], 4.0);
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn bisection_min_eig_matches_eigen() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let exact = 2.0 - 2f64.sqrt();
        assert!((min_eig_bisect(&m) - exact).abs() < 1e-10);
    }

    #[test]
    fn warm_start_reproduces_status() {
        let p = two_by_two();
        let s = solve(&p, &SolverOptions::default()).unwrap();
        let again = solve(
            &p,
            &SolverOptions {
                warm_start: Some(vec![0.5]),
                ..SolverOptions::default()
            },
        )
        .unwrap();
        assert_eq!(s.status, again.status);
    }
}
