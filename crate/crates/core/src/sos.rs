//! Sum-of-squares programs compiled to [`ConicProgram`]s.
//!
//! A polynomial `p` is SOS when `p = zᵀ Q z` for a monomial vector `z` and
//! some `Q ⪰ 0`. Each SOS constraint gets its own Gram block and one linear
//! equality per monomial matching the coefficients on both sides.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::conic::{ConicProgram, ConicSolution, LmiBlock, SolveStatus};
use crate::error::{Error, Result};
use crate::poly::{monomial_basis, Monomial, Polynomial, RationalMap};

/// Gram eigenvalues below this fail extraction; the rest are clipped at zero.
pub const CLIP_TOL: f64 = 1e-7;
/// Allowed coefficient mismatch between a constraint and its Gram expansion.
pub const ROUNDTRIP_TOL: f64 = 1e-6;

/// `constant + Σ coef · x[var]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Affine {
    pub constant: f64,
    pub terms: BTreeMap<usize, f64>,
}

impl Affine {
    pub fn constant(c: f64) -> Affine {
        Affine {
            constant: c,
            terms: BTreeMap::new(),
        }
    }

    pub fn var(i: usize) -> Affine {
        Affine {
            constant: 0.0,
            terms: BTreeMap::from([(i, 1.0)]),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.values().all(|v| *v == 0.0)
    }

    pub fn add_scaled(&mut self, other: &Affine, k: f64) {
        self.constant += k * other.constant;
        for (&i, &v) in &other.terms {
            *self.terms.entry(i).or_insert(0.0) += k * v;
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(&i, &v)| v * x[i]).sum::<f64>()
    }
}

/// A polynomial whose coefficients are affine in the conic decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyExpression {
    n_vars: usize,
    terms: BTreeMap<Monomial, Affine>,
}

impl PolyExpression {
    pub fn zero(n_vars: usize) -> PolyExpression {
        PolyExpression {
            n_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_poly(p: &Polynomial) -> PolyExpression {
        let mut e = PolyExpression::zero(p.n_vars());
        for (m, c) in p.terms() {
            e.terms.insert(m.clone(), Affine::constant(c));
        }
        e
    }

    /// The scalar decision variable `var` as a constant polynomial.
    pub fn scalar_var(n_vars: usize, var: usize) -> PolyExpression {
        let mut e = PolyExpression::zero(n_vars);
        e.terms.insert(Monomial::one(n_vars), Affine::var(var));
        e
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Affine)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> Option<&Affine> {
        self.terms.get(m)
    }

    /// Highest degree among monomials whose coefficient is not identically zero.
    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .filter(|(_, a)| !a.is_zero())
            .map(|(m, _)| m.degree())
            .max()
            .unwrap_or(0)
    }

    pub fn add_term(&mut self, m: Monomial, a: &Affine, k: f64) {
        self.terms.entry(m).or_default().add_scaled(a, k);
    }

    fn check_ring(&self, n: usize) -> Result<()> {
        if self.n_vars != n {
            return Err(Error::VarsMismatch {
                left: self.n_vars,
                right: n,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &PolyExpression) -> Result<PolyExpression> {
        self.check_ring(other.n_vars)?;
        let mut out = self.clone();
        for (m, a) in &other.terms {
            out.add_term(m.clone(), a, 1.0);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &PolyExpression) -> Result<PolyExpression> {
        self.add(&other.scale(-1.0))
    }

    pub fn add_poly(&self, p: &Polynomial) -> Result<PolyExpression> {
        self.add(&PolyExpression::from_poly(p))
    }

    pub fn scale(&self, k: f64) -> PolyExpression {
        let mut out = PolyExpression::zero(self.n_vars);
        for (m, a) in &self.terms {
            out.add_term(m.clone(), a, k);
        }
        out
    }

    /// Product with a fixed polynomial.
    pub fn mul_poly(&self, p: &Polynomial) -> Result<PolyExpression> {
        self.check_ring(p.n_vars())?;
        let mut out = PolyExpression::zero(self.n_vars);
        for (m, a) in &self.terms {
            for (pm, c) in p.terms() {
                out.add_term(m.mul(pm), a, c);
            }
        }
        Ok(out)
    }

    /// `Rᵈ · B(S/R)`, term by term as in [`crate::poly::compose_rational`].
    pub fn compose_rational(&self, map: &RationalMap, d: usize) -> Result<PolyExpression> {
        self.check_ring(map.output_dim())?;
        let mut out = PolyExpression::zero(map.input_vars());
        for (m, a) in &self.terms {
            if a.is_zero() {
                continue;
            }
            let h = map.homogenize_monomial(m, d)?;
            for (hm, c) in h.terms() {
                out.add_term(hm.clone(), a, c);
            }
        }
        Ok(out)
    }

    /// Substitutes `value` for the last variable, dropping it from the ring.
    pub fn fix_last_var(&self, value: f64) -> PolyExpression {
        let n = self.n_vars - 1;
        let mut out = PolyExpression::zero(n);
        for (m, a) in &self.terms {
            let e = m.exponents();
            let k = value.powi(e[n] as i32);
            out.add_term(Monomial::new(e[..n].to_vec()), a, k);
        }
        out
    }

    /// Numeric polynomial at decision vector `x`.
    pub fn eval(&self, x: &[f64]) -> Polynomial {
        let mut p = Polynomial::zero(self.n_vars);
        for (m, a) in &self.terms {
            p.add_term(m.clone(), a.eval(x));
        }
        p
    }
}

/// `zᵀ Q z` with `Q` a Gram block of the program.
#[derive(Debug, Clone)]
pub struct SosVariable {
    pub basis: Vec<Monomial>,
    /// Decision variable of `Q[i][j]`, `i ≤ j`, row-major over the upper triangle.
    gram_vars: Vec<usize>,
    pub block: usize,
}

impl SosVariable {
    pub fn size(&self) -> usize {
        self.basis.len()
    }

    pub fn gram_var(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let k = self.basis.len();
        self.gram_vars[i * k - i * (i + 1) / 2 + j]
    }

    pub fn expression(&self, n_vars: usize) -> PolyExpression {
        let mut e = PolyExpression::zero(n_vars);
        let k = self.basis.len();
        for i in 0..k {
            for j in i..k {
                let w = if i == j { 1.0 } else { 2.0 };
                e.add_term(
                    self.basis[i].mul(&self.basis[j]),
                    &Affine::var(self.gram_var(i, j)),
                    w,
                );
            }
        }
        e
    }

    pub fn gram_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let k = self.basis.len();
        DMatrix::from_fn(k, k, |i, j| x[self.gram_var(i, j)])
    }
}

/// How the strict positivity margin of [`SosProgram::assert_positive_on_set`] is realized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Margin {
    None,
    Fixed(f64),
    /// A fresh scalar `s` kept strictly positive and maximized with the conic margin.
    Variable,
}

#[derive(Debug, Clone)]
struct Constraint {
    label: String,
    expr: PolyExpression,
    gram: Option<SosVariable>,
}

/// Handles created by one [`SosProgram::assert_positive_on_set`] call.
#[derive(Debug, Clone)]
pub struct PositivityHandles {
    pub sos_multipliers: Vec<PolyExpression>,
    pub free_multipliers: Vec<PolyExpression>,
    pub margin_var: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SosProgram {
    n_vars: usize,
    program: ConicProgram,
    constraints: Vec<Constraint>,
    named_polys: Vec<(String, PolyExpression)>,
    named_scalars: Vec<(String, usize)>,
    pub degree_cap: usize,
    /// Restrict Gram bases to the exponent box of the constrained support.
    pub prune: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GramFactor {
    pub label: String,
    pub basis: Vec<Vec<u32>>,
    pub gram: Vec<Vec<f64>>,
    /// Rows `l_k` with `Q = Σ l_k l_kᵀ`, so the constraint is `Σ (l_k · z)²`.
    pub factor: Vec<Vec<f64>>,
    pub min_eig: f64,
    /// Largest coefficient mismatch between the constraint and `zᵀ Lᵀ L z`.
    pub roundtrip_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SosCertificate {
    pub polynomials: BTreeMap<String, Polynomial>,
    pub scalars: BTreeMap<String, f64>,
    pub gram_factors: Vec<GramFactor>,
}

impl SosCertificate {
    pub fn max_roundtrip_error(&self) -> f64 {
        self.gram_factors
            .iter()
            .map(|g| g.roundtrip_error)
            .fold(0.0, f64::max)
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl SosProgram {
    pub fn new(n_vars: usize) -> SosProgram {
        SosProgram {
            n_vars,
            program: ConicProgram::new(),
            constraints: Vec::new(),
            named_polys: Vec::new(),
            named_scalars: Vec::new(),
            degree_cap: 12,
            prune: true,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn program(&self) -> &ConicProgram {
        &self.program
    }

    pub fn program_mut(&mut self) -> &mut ConicProgram {
        &mut self.program
    }

    fn check_degree(&self, degree: usize) -> Result<()> {
        if degree > self.degree_cap {
            return Err(Error::DegreeCap {
                degree,
                cap: self.degree_cap,
            });
        }
        Ok(())
    }

    /// Polynomial of the given degree with one free coefficient per monomial.
    pub fn free_poly(&mut self, degree: usize, name: &str) -> Result<PolyExpression> {
        self.check_degree(degree)?;
        let mut e = PolyExpression::zero(self.n_vars);
        for m in monomial_basis(self.n_vars, degree) {
            let v = self.program.new_var(format!("{name}[{m}]"));
            e.add_term(m, &Affine::var(v), 1.0);
        }
        self.named_polys.push((name.to_string(), e.clone()));
        Ok(e)
    }

    pub fn scalar(&mut self, name: &str) -> usize {
        let v = self.program.new_var(name);
        self.named_scalars.push((name.to_string(), v));
        v
    }

    /// Scalar constrained by a strict `1×1` block, so it is `> 0` with the
    /// solver's margin.
    pub fn positive_scalar(&mut self, name: &str) -> usize {
        let v = self.scalar(name);
        let mut b = LmiBlock::new(1, true, name);
        b.add_term(v, 0, 0, 1.0);
        self.program.add_block(b);
        v
    }

    fn gram_block(&mut self, basis: Vec<Monomial>, name: &str) -> SosVariable {
        let k = basis.len();
        let mut gram_vars = Vec::with_capacity(k * (k + 1) / 2);
        let mut block = LmiBlock::new(k, false, format!("gram:{name}"));
        for i in 0..k {
            for j in i..k {
                let v = self.program.new_var(format!("{name}.Q[{i},{j}]"));
                block.add_term(v, i, j, 1.0);
                gram_vars.push(v);
            }
        }
        self.program.add_block(block);
        SosVariable {
            basis,
            gram_vars,
            block: self.program.blocks.len() - 1,
        }
    }

    /// A fresh SOS polynomial of even `degree`.
    pub fn new_sos_var(&mut self, degree: usize, name: &str) -> Result<SosVariable> {
        if degree % 2 == 1 {
            return Err(Error::OddDegree(degree));
        }
        self.check_degree(degree)?;
        let basis = monomial_basis(self.n_vars, degree / 2);
        let s = self.gram_block(basis, name);
        self.named_polys
            .push((name.to_string(), s.expression(self.n_vars)));
        Ok(s)
    }

    /// Basis for a Gram representation of a polynomial with the given support.
    ///
    /// Keeps `α` only when `2α` lies in the exponent bounding box and degree
    /// range of the support; that box contains the Newton polytope, so no
    /// needed monomial is dropped.
    fn gram_basis(&self, support: &[&Monomial], degree: usize) -> Vec<Monomial> {
        let full = monomial_basis(self.n_vars, degree / 2);
        if !self.prune || support.is_empty() {
            return full;
        }
        let n = self.n_vars;
        let mut lo = vec![u32::MAX; n];
        let mut hi = vec![0u32; n];
        let (mut dlo, mut dhi) = (usize::MAX, 0usize);
        for m in support {
            for (i, &e) in m.exponents().iter().enumerate() {
                lo[i] = lo[i].min(e);
                hi[i] = hi[i].max(e);
            }
            dlo = dlo.min(m.degree());
            dhi = dhi.max(m.degree());
        }
        full.into_iter()
            .filter(|a| {
                let d2 = 2 * a.degree();
                d2 >= dlo
                    && d2 <= dhi
                    && a.exponents()
                        .iter()
                        .enumerate()
                        .all(|(i, &e)| 2 * e >= lo[i] && 2 * e <= hi[i])
            })
            .collect()
    }

    /// Requires `expr` to be a sum of squares.
    pub fn assert_sos(
        &mut self,
        expr: &PolyExpression,
        label: &str,
    ) -> Result<Option<SosVariable>> {
        if expr.n_vars != self.n_vars {
            return Err(Error::VarsMismatch {
                left: self.n_vars,
                right: expr.n_vars,
            });
        }
        let support: Vec<&Monomial> = expr
            .terms
            .iter()
            .filter(|(_, a)| !a.is_zero())
            .map(|(m, _)| m)
            .collect();
        if support.is_empty() {
            self.constraints.push(Constraint {
                label: label.to_string(),
                expr: expr.clone(),
                gram: None,
            });
            return Ok(None);
        }
        let mut degree = expr.degree();
        if degree % 2 == 1 {
            // Odd top terms that are fixed can never cancel; variable ones may.
            let fixed_top = expr
                .terms
                .iter()
                .filter(|(m, a)| m.degree() == degree && !a.is_zero())
                .any(|(_, a)| a.terms.values().all(|v| *v == 0.0));
            if fixed_top {
                return Err(Error::OddDegree(degree));
            }
            degree += 1;
        }
        self.check_degree(degree)?;
        let basis = self.gram_basis(&support, degree);
        let gram = self.gram_block(basis, label);
        let gexpr = gram.expression(self.n_vars);
        let monomials: BTreeSet<&Monomial> = expr.terms.keys().chain(gexpr.terms.keys()).collect();
        for m in monomials {
            // coeff(zᵀQz, m) − coeff(expr, m) = 0
            let mut row = Affine::default();
            if let Some(a) = gexpr.terms.get(m) {
                row.add_scaled(a, 1.0);
            }
            if let Some(a) = expr.terms.get(m) {
                row.add_scaled(a, -1.0);
            }
            let coeffs: Vec<(usize, f64)> = row
                .terms
                .iter()
                .filter(|(_, v)| **v != 0.0)
                .map(|(&i, &v)| (i, v))
                .collect();
            if coeffs.is_empty() && row.constant == 0.0 {
                continue;
            }
            self.program.add_equality(coeffs, -row.constant);
        }
        self.constraints.push(Constraint {
            label: label.to_string(),
            expr: expr.clone(),
            gram: Some(gram.clone()),
        });
        Ok(Some(gram))
    }

    /// Requires `f > 0` on `{ g ≥ 0 for g in ineqs, a = 0 for a in eqs }`
    /// through `f − Σ sᵢ gᵢ − Σ rⱼ aⱼ − margin ∈ Σ` with SOS `sᵢ` and free `rⱼ`.
    ///
    /// Each multiplier gets the largest degree keeping its product within
    /// `deg f` rounded up to even, unless `multiplier_degree` fixes the SOS
    /// multiplier degree.
    pub fn assert_positive_on_set(
        &mut self,
        f: &PolyExpression,
        ineqs: &[Polynomial],
        eqs: &[Polynomial],
        multiplier_degree: Option<usize>,
        margin: Margin,
        label: &str,
    ) -> Result<PositivityHandles> {
        let d = f.degree();
        let target = d + d % 2;
        let mut expr = f.clone();
        let mut sos_multipliers = Vec::new();
        for (i, g) in ineqs.iter().enumerate() {
            let k = match multiplier_degree {
                Some(k) => {
                    if k % 2 == 1 {
                        return Err(Error::OddDegree(k));
                    }
                    k
                }
                None => {
                    if g.degree() > target {
                        return Err(Error::DegreeCap {
                            degree: g.degree(),
                            cap: target,
                        });
                    }
                    let room = target - g.degree();
                    room - room % 2
                }
            };
            self.check_degree(k + g.degree())?;
            let s = self.new_sos_var(k, &format!("{label}.s{i}"))?;
            let se = s.expression(self.n_vars);
            expr = expr.sub(&se.mul_poly(g)?)?;
            sos_multipliers.push(se);
        }
        let mut free_multipliers = Vec::new();
        for (j, a) in eqs.iter().enumerate() {
            let k = target.saturating_sub(a.degree());
            let r = self.free_poly(k, &format!("{label}.r{j}"))?;
            expr = expr.sub(&r.mul_poly(a)?)?;
            free_multipliers.push(r);
        }
        let margin_var = match margin {
            Margin::None => None,
            Margin::Fixed(eps) => {
                expr = expr.add_poly(&Polynomial::constant(self.n_vars, -eps))?;
                None
            }
            Margin::Variable => {
                let v = self.positive_scalar(&format!("{label}.margin"));
                expr = expr.sub(&PolyExpression::scalar_var(self.n_vars, v))?;
                Some(v)
            }
        };
        self.assert_sos(&expr, label)?;
        Ok(PositivityHandles {
            sos_multipliers,
            free_multipliers,
            margin_var,
        })
    }

    /// Registers an expression to be reported by name in the certificate.
    pub fn record(&mut self, name: &str, expr: &PolyExpression) {
        self.named_polys.push((name.to_string(), expr.clone()));
    }

    /// Numeric certificate from a solved program.
    pub fn extract_certificate(&self, solution: &ConicSolution) -> Result<SosCertificate> {
        if solution.status != SolveStatus::Feasible {
            return Err(Error::Precondition(format!(
                "certificate extraction needs a feasible solution, got {}",
                solution.status
            )));
        }
        let x = &solution.x;
        let mut gram_factors = Vec::new();
        for c in &self.constraints {
            let Some(g) = &c.gram else { continue };
            let q = g.gram_matrix(x);
            let eig = SymmetricEigen::new(q.clone());
            let min_eig = eig.eigenvalues.min();
            if min_eig < -CLIP_TOL {
                return Err(Error::Numerical(format!(
                    "Gram matrix of `{}` has eigenvalue {min_eig:e}",
                    c.label
                )));
            }
            let mut factor = Vec::new();
            for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam > 0.0 {
                    let s = lam.sqrt();
                    factor.push(
                        eig.eigenvectors
                            .column(k)
                            .iter()
                            .map(|v| s * v)
                            .collect::<Vec<f64>>(),
                    );
                }
            }
            // Re-expand Σ (l · z)² and compare with the constrained polynomial.
            let mut recon = Polynomial::zero(self.n_vars);
            for l in &factor {
                let mut lin = Polynomial::zero(self.n_vars);
                for (coef, m) in l.iter().zip(&g.basis) {
                    lin.add_term(m.clone(), *coef);
                }
                recon = recon.add(&lin.mul(&lin)?)?;
            }
            let target = c.expr.eval(x);
            gram_factors.push(GramFactor {
                label: c.label.clone(),
                basis: g.basis.iter().map(|m| m.exponents().to_vec()).collect(),
                gram: rows(&q),
                factor,
                min_eig,
                roundtrip_error: recon.max_coeff_diff(&target),
            });
        }
        let polynomials = self
            .named_polys
            .iter()
            .map(|(n, e)| (n.clone(), e.eval(x)))
            .collect();
        let scalars = self
            .named_scalars
            .iter()
            .map(|(n, v)| (n.clone(), x[*v]))
            .collect();
        Ok(SosCertificate {
            polynomials,
            scalars,
            gram_factors,
        })
    }
}
