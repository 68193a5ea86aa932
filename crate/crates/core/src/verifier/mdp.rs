//! Quadratic barrier `B(b) = b̄ᵀ V b̄` for MDP belief dynamics as an SDP.
//!
//! Blocks, with `b̄ = (b, 1)` and `H̄_a = diag(H_a, 1)`:
//!
//! * unsafe: `V − s_u W − μ Q_band − N ≻ 0`
//! * initial: `−V − Eᵀ U E ≻ 0`
//! * decrease, per action: `V − H̄_aᵀ V H̄_a − μ_a Q_band − N_a ⪰ 0`
//!
//! `W` is the symmetric form of `wᵀb − λ`, `E` the initial half-space rows,
//! `U`, `N`, `N_a` entrywise nonnegative and `μ`, `μ_a ≥ 0`. The band and
//! orthant terms localize to `{c_lo ≤ Σb ≤ c_hi, b ⪰ 0}`, which every belief
//! trajectory from the initial set stays in.

use std::time::Instant;

use nalgebra::DMatrix;

use super::{finish, write_dump, Certificate, Diagnostics, Method, SolverDiagnostics};
use super::{VerificationOutcome, VerifyOptions};
use crate::conic::{solve, ConicProgram, LmiBlock, SolveStatus};
use crate::error::{Error, Result};
use crate::model::{initial_polytope_matrix, unsafe_halfspace, Model, PrivacySpec};

/// Symmetric matrix of decision variables, upper triangle row-major.
struct SymVars {
    dim: usize,
    vars: Vec<usize>,
}

impl SymVars {
    fn new(p: &mut ConicProgram, dim: usize, name: &str, nonneg: bool) -> SymVars {
        let mut vars = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in i..dim {
                let v = p.new_var(format!("{name}[{i},{j}]"));
                if nonneg {
                    p.add_inequality(vec![(v, 1.0)], 0.0);
                }
                vars.push(v);
            }
        }
        SymVars { dim, vars }
    }

    fn entries(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let d = self.dim;
        (0..d)
            .flat_map(move |i| (i..d).map(move |j| (i, j)))
            .zip(&self.vars)
            .map(|((i, j), &v)| (i, j, v))
    }

    /// Adds `k · X` to `block`.
    fn add_to(&self, block: &mut LmiBlock, k: f64) {
        for (i, j, v) in self.entries() {
            block.add_term(v, i, j, k);
        }
    }

    fn value(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.entries() {
            m[(i, j)] = x[v];
            m[(j, i)] = x[v];
        }
        m
    }
}

/// Adds `k · M` for a fixed symmetric `M` times variable `var`.
fn add_dense_term(block: &mut LmiBlock, var: usize, m: &DMatrix<f64>, k: f64) {
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            let v = m[(i, j)];
            if v != 0.0 {
                block.add_term(var, i, j, k * v);
            }
        }
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// `sym(ℓ_lo ℓ_hiᵀ)` with `ℓ_lo·b̄ = Σb − lo` and `ℓ_hi·b̄ = hi − Σb`.
fn band_form(n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let mut l_lo = vec![1.0; n + 1];
    l_lo[n] = -lo;
    let mut l_hi = vec![-1.0; n + 1];
    l_hi[n] = hi;
    DMatrix::from_fn(n + 1, n + 1, |i, j| {
        0.5 * (l_lo[i] * l_hi[j] + l_hi[i] * l_lo[j])
    })
}

/// Certifies the privacy threshold `spec.lambda` for an MDP with a
/// quadratic barrier.
pub fn verify_mdp(
    model: &Model,
    spec: &PrivacySpec,
    opts: &VerifyOptions,
) -> Result<VerificationOutcome> {
    let started = Instant::now();
    if model.is_pomdp() {
        return Err(Error::Precondition(
            "the quadratic method needs an MDP; use a POMDP method".into(),
        ));
    }
    spec.validate(model)?;
    spec.check_disjoint(model)?;
    let n = model.n_states();
    let d = n + 1;
    let e = initial_polytope_matrix(spec, model)?;
    let n0 = e.len();
    let w = unsafe_halfspace(spec, model).quadratic_form();
    let band = if opts.mass_band {
        Some(spec.initial_mass_range(model)?)
    } else {
        None
    };
    let q_band = band.map(|(lo, hi)| band_form(n, lo, hi));

    let mut p = ConicProgram::new();
    let v = SymVars::new(&mut p, d, "V", false);
    let u = SymVars::new(&mut p, n0, "U", true);
    let s_u = p.new_var("s_u");
    let mut pos = LmiBlock::new(1, true, "s_u > 0");
    pos.add_term(s_u, 0, 0, 1.0);
    p.add_block(pos);

    // Localization terms for one block: −μ Q_band − N.
    let localize = |p: &mut ConicProgram, block: &mut LmiBlock, tag: &str| {
        if let Some(q) = &q_band {
            let mu = p.new_var(format!("mu_{tag}"));
            p.add_inequality(vec![(mu, 1.0)], 0.0);
            add_dense_term(block, mu, q, -1.0);
        }
        if opts.orthant {
            let nn = SymVars::new(p, d, &format!("N_{tag}"), true);
            nn.add_to(block, -1.0);
        }
    };

    let mut unsafe_block = LmiBlock::new(d, true, "unsafe");
    v.add_to(&mut unsafe_block, 1.0);
    add_dense_term(&mut unsafe_block, s_u, &w, -1.0);
    localize(&mut p, &mut unsafe_block, "unsafe");
    p.add_block(unsafe_block);

    let mut init_block = LmiBlock::new(d, true, "initial");
    v.add_to(&mut init_block, -1.0);
    for (k, l, var) in u.entries() {
        for i in 0..d {
            for j in i..d {
                let mut c = e[k][i] * e[l][j];
                if k != l {
                    c += e[l][i] * e[k][j];
                }
                if c != 0.0 {
                    init_block.add_term(var, i, j, -c);
                }
            }
        }
    }
    p.add_block(init_block);

    for a in 0..model.n_actions() {
        let h = model.transition(a);
        let mut hbar = DMatrix::zeros(d, d);
        hbar.view_mut((0, 0), (n, n)).copy_from(h);
        hbar[(n, n)] = 1.0;
        let mut block = LmiBlock::new(d, false, format!("decrease:{}", model.actions()[a]));
        for (i, j, var) in v.entries() {
            let mut basis = DMatrix::zeros(d, d);
            basis[(i, j)] = 1.0;
            basis[(j, i)] = 1.0;
            let t = &basis - hbar.transpose() * &basis * &hbar;
            add_dense_term(&mut block, var, &t, 1.0);
        }
        localize(&mut p, &mut block, &format!("decrease{a}"));
        p.add_block(block);
    }

    let sol = solve(&p, &opts.solver)?;
    write_dump(opts, &p, &sol)?;
    let mut diagnostics = Diagnostics {
        solver: Some(SolverDiagnostics::new(&p, &sol)),
        ..Diagnostics::default()
    };
    let certificate = if sol.status == SolveStatus::Feasible {
        Some(Certificate::Quadratic {
            v: rows(&v.value(&sol.x)),
            u: rows(&u.value(&sol.x)),
            s_u: sol.x[s_u],
            mass_band: band,
            orthant: opts.orthant,
        })
    } else {
        diagnostics
            .notes
            .push(format!("solver status {}", sol.status));
        None
    };
    finish(
        model,
        spec,
        Method::MdpSdp,
        opts,
        certificate,
        diagnostics,
        started,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_form_is_product_of_band_slacks() {
        let q = band_form(3, 0.4, 0.7);
        for b in [[0.1, 0.2, 0.3], [0.0, 0.0, 1.0], [0.5, 0.1, 0.05]] {
            let bar = nalgebra::DVector::from_vec(vec![b[0], b[1], b[2], 1.0]);
            let m: f64 = b.iter().sum();
            let expected = (m - 0.4) * (0.7 - m);
            assert!((bar.dot(&(&q * &bar)) - expected).abs() <= 1e-14);
        }
    }

    #[test]
    fn sym_vars_value_is_symmetric() {
        let mut p = ConicProgram::new();
        let s = SymVars::new(&mut p, 3, "X", false);
        let x: Vec<f64> = (0..p.n_vars()).map(|i| i as f64).collect();
        let m = s.value(&x);
        assert_eq!(m, m.transpose());
        assert_eq!(m[(0, 2)], 2.0);
        assert_eq!(m[(2, 2)], 5.0);
    }
}
