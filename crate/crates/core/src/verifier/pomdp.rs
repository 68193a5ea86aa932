//! Polynomial barriers for POMDP belief dynamics as SOS programs.
//!
//! Every `(a, z)` branch with a nonzero observation column gives the rational
//! map `b ↦ S(b) / R(b)` with `S_i = O(i, a, z) (H_a b)_i` and `R = Σ S_i`.
//! The decrease condition is cleared of denominators:
//! `Rᵈ B_prev − Rᵈ B_next(S/R) ∈ Σ`.

use std::time::Instant;

use log::debug;

use super::{finish, write_dump, Certificate, Diagnostics, Method, SolverDiagnostics};
use super::{VerificationOutcome, VerifyOptions};
use crate::conic::{solve, SolveStatus};
use crate::error::{Error, Result};
use crate::model::{unsafe_halfspace, Horizon, Model, PrivacySpec};
use crate::poly::{Monomial, Polynomial, RationalMap};
use crate::sos::{Affine, Margin, PolyExpression, SosProgram};

/// Rational belief maps of every branch, labelled `action/observation`.
pub(crate) fn branch_maps(model: &Model) -> Result<Vec<(String, RationalMap)>> {
    let n = model.n_states();
    let obs = model
        .observations()
        .ok_or_else(|| Error::Precondition("model has no observations".into()))?;
    let mut out = Vec::new();
    for a in 0..model.n_actions() {
        let h = model.transition(a);
        let o = model.observation_matrix(a).expect("POMDP");
        for z in model.live_observations(a) {
            let numerators: Vec<Polynomial> = (0..n)
                .map(|i| {
                    let row: Vec<f64> = (0..n).map(|j| o[(i, z)] * h[(i, j)]).collect();
                    Polynomial::affine(&row, 0.0)
                })
                .collect();
            let mut denominator = Polynomial::zero(n);
            for s in &numerators {
                denominator = denominator.add(s)?;
            }
            let label = format!("{}/{}", model.actions()[a], obs[z]);
            out.push((label, RationalMap::new(numerators, denominator)?));
        }
    }
    Ok(out)
}

/// Constraint sets shared by the conditions of one program.
struct Sets {
    unsafe_ineqs: Vec<Polynomial>,
    initial_ineqs: Vec<Polynomial>,
    decrease_ineqs: Vec<Polynomial>,
    decrease_eqs: Vec<Polynomial>,
}

fn sets(model: &Model, spec: &PrivacySpec, opts: &VerifyOptions) -> Result<Sets> {
    let n = model.n_states();
    let ball = opts.archimedean_radius.map(|r| {
        let mut p = Polynomial::constant(n, r);
        for i in 0..n {
            let mut e = vec![0; n];
            e[i] = 2;
            p.add_term(Monomial::new(e), -1.0);
        }
        p
    });
    let mut unsafe_ineqs = vec![unsafe_halfspace(spec, model).as_polynomial()];
    let mut initial_ineqs: Vec<Polynomial> = spec
        .initial_polynomials(model)
        .iter()
        .map(|l| l.scale(-1.0))
        .collect();
    let mut decrease_ineqs = Vec::new();
    let mut decrease_eqs = Vec::new();
    if opts.localize_simplex {
        decrease_ineqs.extend((0..n).map(|i| Polynomial::var(n, i)));
        let (lo, hi) = spec.initial_mass_range(model)?;
        if (lo - 1.0).abs() <= 1e-9 && (hi - 1.0).abs() <= 1e-9 {
            decrease_eqs.push(Polynomial::affine(&vec![1.0; n], -1.0));
        }
    }
    if let Some(b) = ball {
        unsafe_ineqs.push(b.clone());
        initial_ineqs.push(b.clone());
        decrease_ineqs.push(b);
    }
    Ok(Sets {
        unsafe_ineqs,
        initial_ineqs,
        decrease_ineqs,
        decrease_eqs,
    })
}

fn check_inputs(model: &Model, spec: &PrivacySpec, degree: usize) -> Result<()> {
    if !model.is_pomdp() {
        return Err(Error::Precondition(
            "the SOS methods need a POMDP; lift the MDP first".into(),
        ));
    }
    if degree % 2 == 1 {
        return Err(Error::OddDegree(degree));
    }
    if degree == 0 {
        return Err(Error::Precondition(
            "barrier degree must be at least 2".into(),
        ));
    }
    spec.validate(model)?;
    spec.check_disjoint(model)
}

/// `B_prev · Rᵈ − Rᵈ B_next(S/R)` for one branch.
fn decrease_expr(
    prev: &PolyExpression,
    next: &PolyExpression,
    map: &RationalMap,
    degree: usize,
) -> Result<PolyExpression> {
    let rd = map.denominator().pow(degree);
    prev.mul_poly(&rd)?
        .sub(&next.compose_rational(map, degree)?)
}

/// Free polynomial of `degree` in `n_vars` variables (which may differ from
/// the program's ring).
fn free_poly_in(s: &mut SosProgram, n_vars: usize, degree: usize, name: &str) -> PolyExpression {
    let mut e = PolyExpression::zero(n_vars);
    for m in crate::poly::monomial_basis(n_vars, degree) {
        let v = s.program_mut().new_var(format!("{name}[{m}]"));
        e.add_term(m, &Affine::var(v), 1.0);
    }
    e
}

fn solve_and_finish(
    model: &Model,
    spec: &PrivacySpec,
    method: Method,
    opts: &VerifyOptions,
    s: &SosProgram,
    names: &[String],
    started: Instant,
) -> Result<VerificationOutcome> {
    debug!(
        "{method}: {} variables, {} blocks, {} equalities",
        s.program().n_vars(),
        s.program().blocks.len(),
        s.program().equalities.len()
    );
    let sol = solve(s.program(), &opts.solver)?;
    write_dump(opts, s.program(), &sol)?;
    let mut diagnostics = Diagnostics {
        solver: Some(SolverDiagnostics::new(s.program(), &sol)),
        ..Diagnostics::default()
    };
    let mut certificate = None;
    if sol.status == SolveStatus::Feasible {
        match s.extract_certificate(&sol) {
            Ok(sos) => {
                let barriers = names.iter().map(|n| sos.polynomials[n].clone()).collect();
                certificate = Some(Certificate::Polynomial { barriers, sos });
            }
            Err(e) => diagnostics.notes.push(format!("extraction failed: {e}")),
        }
    } else {
        diagnostics
            .notes
            .push(format!("solver status {}", sol.status));
    }
    finish(model, spec, method, opts, certificate, diagnostics, started)
}

fn new_program(n: usize, opts: &VerifyOptions) -> SosProgram {
    let mut s = SosProgram::new(n);
    s.degree_cap = opts.degree_cap;
    s.prune = opts.prune;
    s
}

/// All-time privacy with a single polynomial barrier `B` of `degree`.
pub fn verify_pomdp_infinite(
    model: &Model,
    spec: &PrivacySpec,
    degree: usize,
    opts: &VerifyOptions,
) -> Result<VerificationOutcome> {
    let started = Instant::now();
    check_inputs(model, spec, degree)?;
    let n = model.n_states();
    let sets = sets(model, spec, opts)?;
    let mut s = new_program(n, opts);
    let b = s.free_poly(degree, "B")?;
    s.assert_positive_on_set(
        &b,
        &sets.unsafe_ineqs,
        &[],
        None,
        Margin::Variable,
        "unsafe",
    )?;
    s.assert_positive_on_set(
        &b.scale(-1.0),
        &sets.initial_ineqs,
        &[],
        None,
        Margin::Variable,
        "initial",
    )?;
    for (label, map) in branch_maps(model)? {
        let e = decrease_expr(&b, &b, &map, degree)?;
        s.assert_positive_on_set(
            &e,
            &sets.decrease_ineqs,
            &sets.decrease_eqs,
            None,
            Margin::None,
            &format!("decrease:{label}"),
        )?;
    }
    solve_and_finish(
        model,
        spec,
        Method::PomdpInfiniteSos { degree },
        opts,
        &s,
        &["B".to_string()],
        started,
    )
}

/// Privacy at step `T` with barriers `B_0 … B_T` of `degree`.
pub fn verify_pomdp_finite(
    model: &Model,
    spec: &PrivacySpec,
    degree: usize,
    opts: &VerifyOptions,
) -> Result<VerificationOutcome> {
    let started = Instant::now();
    let Horizon::Finite(horizon) = spec.horizon else {
        return Err(Error::Precondition(
            "finite-horizon verification needs a finite horizon".into(),
        ));
    };
    if horizon == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    check_inputs(model, spec, degree)?;
    let n = model.n_states();
    let sets = sets(model, spec, opts)?;
    let mut s = new_program(n, opts);
    let names: Vec<String> = (0..=horizon).map(|t| format!("B_{t}")).collect();
    let bs: Vec<PolyExpression> = if opts.time_polynomial {
        // Last variable is t.
        let full = free_poly_in(&mut s, n + 1, degree, "B");
        s.record("B(b,t)", &full);
        names
            .iter()
            .enumerate()
            .map(|(t, name)| {
                let bt = full.fix_last_var(t as f64);
                s.record(name, &bt);
                bt
            })
            .collect()
    } else {
        names
            .iter()
            .map(|name| s.free_poly(degree, name))
            .collect::<Result<_>>()?
    };
    s.assert_positive_on_set(
        &bs[horizon],
        &sets.unsafe_ineqs,
        &[],
        None,
        Margin::Variable,
        "unsafe",
    )?;
    s.assert_positive_on_set(
        &bs[0].scale(-1.0),
        &sets.initial_ineqs,
        &[],
        None,
        Margin::Variable,
        "initial",
    )?;
    let maps = branch_maps(model)?;
    for t in 1..=horizon {
        for (label, map) in &maps {
            let e = decrease_expr(&bs[t - 1], &bs[t], map, degree)?;
            s.assert_positive_on_set(
                &e,
                &sets.decrease_ineqs,
                &sets.decrease_eqs,
                None,
                Margin::None,
                &format!("decrease:{t}:{label}"),
            )?;
        }
    }
    solve_and_finish(
        model,
        spec,
        Method::PomdpFiniteSos { horizon, degree },
        opts,
        &s,
        &names,
        started,
    )
}
