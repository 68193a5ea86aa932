//! Sparse multivariate polynomials over `f64`.
//!
//! Monomials are ordered graded-lexicographically: lower total degree first,
//! and within one degree the monomial with the larger leading exponent comes
//! first, so the degree-one block reads `x1, x2, ..., xn`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients with magnitude at or below this are dropped.
pub const PRUNE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(n_vars: usize) -> Self {
        Monomial(vec![0; n_vars])
    }

    pub fn var(n_vars: usize, i: usize) -> Self {
        let mut e = vec![0; n_vars];
        e[i] = 1;
        Monomial(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn n_vars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.0.len(), other.0.len());
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(point)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.degree() == 0 {
            return write!(f, "1");
        }
        let mut first = true;
        for (i, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, e)?;
            }
        }
        Ok(())
    }
}

/// All monomials in `n_vars` variables of total degree at most `max_degree`,
/// sorted in graded-lex order.
pub fn monomial_basis(n_vars: usize, max_degree: usize) -> Vec<Monomial> {
    fn fill(prefix: &mut Vec<u32>, n_vars: usize, budget: u32, out: &mut Vec<Monomial>) {
        if prefix.len() == n_vars {
            out.push(Monomial(prefix.clone()));
            return;
        }
        for e in 0..=budget {
            prefix.push(e);
            fill(prefix, n_vars, budget - e, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    fill(
        &mut Vec::with_capacity(n_vars),
        n_vars,
        max_degree as u32,
        &mut out,
    );
    out.sort();
    out
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n_vars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(n_vars: usize) -> Self {
        Polynomial {
            n_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n_vars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(n_vars);
        p.add_term(Monomial::one(n_vars), c);
        p
    }

    /// The coordinate polynomial `x_{i+1}`.
    pub fn var(n_vars: usize, i: usize) -> Self {
        let mut p = Polynomial::zero(n_vars);
        p.add_term(Monomial::var(n_vars, i), 1.0);
        p
    }

    /// Affine polynomial `Σ coeffs[i]·x_i + constant`.
    pub fn affine(coeffs: &[f64], constant: f64) -> Self {
        let n = coeffs.len();
        let mut p = Polynomial::constant(n, constant);
        for (i, &c) in coeffs.iter().enumerate() {
            p.add_term(Monomial::var(n, i), c);
        }
        p
    }

    pub fn from_terms<I>(n_vars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Polynomial::zero(n_vars);
        for (m, c) in terms {
            if m.n_vars() != n_vars {
                return Err(Error::VarsMismatch {
                    left: n_vars,
                    right: m.n_vars(),
                });
            }
            p.add_term(m, c);
        }
        Ok(p)
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        use std::collections::btree_map::Entry;
        debug_assert_eq!(m.n_vars(), self.n_vars);
        match self.terms.entry(m) {
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().abs() <= PRUNE_TOL {
                    e.remove();
                }
            }
            Entry::Vacant(v) => {
                if c.abs() > PRUNE_TOL {
                    v.insert(c);
                }
            }
        }
    }

    fn check(&self, other: &Polynomial) -> Result<()> {
        if self.n_vars != other.n_vars {
            return Err(Error::VarsMismatch {
                left: self.n_vars,
                right: other.n_vars,
            });
        }
        Ok(())
    }

    fn pruned(mut self) -> Self {
        self.terms.retain(|_, c| c.abs() > PRUNE_TOL);
        self
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check(other)?;
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            *terms.entry(m.clone()).or_insert(0.0) += c;
        }
        Ok(Polynomial {
            n_vars: self.n_vars,
            terms,
        }
        .pruned())
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial> {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check(other)?;
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                *terms.entry(ma.mul(mb)).or_insert(0.0) += ca * cb;
            }
        }
        Ok(Polynomial {
            n_vars: self.n_vars,
            terms,
        }
        .pruned())
    }

    pub fn scale(&self, c: f64) -> Polynomial {
        Polynomial {
            n_vars: self.n_vars,
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
        .pruned()
    }

    pub fn pow(&self, k: usize) -> Polynomial {
        let mut acc = Polynomial::constant(self.n_vars, 1.0);
        for _ in 0..k {
            acc = acc.mul(self).expect("same ring");
        }
        acc
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.n_vars {
            return Err(Error::VarsMismatch {
                left: self.n_vars,
                right: point.len(),
            });
        }
        Ok(compensated_sum(
            self.terms.iter().map(|(m, c)| c * m.eval(point)),
        ))
    }

    /// Largest coefficientwise absolute difference.
    pub fn max_coeff_diff(&self, other: &Polynomial) -> f64 {
        let mut worst = 0.0f64;
        for (m, c) in &self.terms {
            worst = worst.max((c - other.coeff(m)).abs());
        }
        for (m, c) in &other.terms {
            if !self.terms.contains_key(m) {
                worst = worst.max(c.abs());
            }
        }
        worst
    }

    /// Drops terms with `|c| <= threshold`.
    pub fn truncate(&self, threshold: f64) -> Polynomial {
        let mut p = self.clone();
        p.terms.retain(|_, c| c.abs() > threshold);
        p
    }

    pub fn to_json_terms(&self) -> Vec<TermJson> {
        self.terms
            .iter()
            .map(|(m, &c)| TermJson {
                coeff: c,
                monomial: m.exponents().to_vec(),
            })
            .collect()
    }

    pub fn from_json_terms(n_vars: usize, terms: &[TermJson]) -> Result<Polynomial> {
        Polynomial::from_terms(
            n_vars,
            terms
                .iter()
                .map(|t| (Monomial::new(t.monomial.clone()), t.coeff)),
        )
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().rev().enumerate() {
            if i > 0 {
                write!(f, " {} ", if *c < 0.0 { '-' } else { '+' })?;
            } else if *c < 0.0 {
                write!(f, "-")?;
            }
            write!(f, "{}", c.abs())?;
            if m.degree() > 0 {
                write!(f, "*{}", m)?;
            }
        }
        Ok(())
    }
}

/// JSON form of one polynomial term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermJson {
    pub coeff: f64,
    pub monomial: Vec<u32>,
}

impl Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json_terms().serialize(s)
    }
}

/// `numerators[i] / denominator` per output coordinate.
#[derive(Debug, Clone)]
pub struct RationalMap {
    numerators: Vec<Polynomial>,
    denominator: Polynomial,
}

impl RationalMap {
    pub fn new(numerators: Vec<Polynomial>, denominator: Polynomial) -> Result<Self> {
        if denominator.is_zero() {
            return Err(Error::Precondition(
                "rational map denominator is identically zero".into(),
            ));
        }
        for p in &numerators {
            denominator.check(p)?;
        }
        Ok(RationalMap {
            numerators,
            denominator,
        })
    }

    pub fn numerators(&self) -> &[Polynomial] {
        &self.numerators
    }

    pub fn denominator(&self) -> &Polynomial {
        &self.denominator
    }

    pub fn input_vars(&self) -> usize {
        self.denominator.n_vars()
    }

    pub fn output_dim(&self) -> usize {
        self.numerators.len()
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>> {
        let r = self.denominator.eval(point)?;
        self.numerators
            .iter()
            .map(|s| Ok(s.eval(point)? / r))
            .collect()
    }

    /// `R^(d - |m|) · Π S_i^(m_i)`: the image of one monomial of a degree-`d`
    /// polynomial under denominator clearing.
    pub fn homogenize_monomial(&self, m: &Monomial, d: usize) -> Result<Polynomial> {
        if m.n_vars() != self.output_dim() {
            return Err(Error::VarsMismatch {
                left: self.output_dim(),
                right: m.n_vars(),
            });
        }
        if m.degree() > d {
            return Err(Error::Precondition(format!(
                "monomial {} exceeds homogenization degree {}",
                m, d
            )));
        }
        let mut acc = self.denominator.pow(d - m.degree());
        for (s, &e) in self.numerators.iter().zip(m.exponents()) {
            if e > 0 {
                acc = acc.mul(&s.pow(e as usize))?;
            }
        }
        Ok(acc)
    }
}

/// `R^d · B(S/R)` with `d = deg B`; each term of degree `k` picks up `R^(d-k)`.
pub fn compose_rational(b: &Polynomial, map: &RationalMap) -> Result<Polynomial> {
    if b.n_vars() != map.output_dim() {
        return Err(Error::VarsMismatch {
            left: b.n_vars(),
            right: map.output_dim(),
        });
    }
    let d = b.degree();
    let mut out = Polynomial::zero(map.input_vars());
    for (m, c) in b.terms() {
        out = out.add(&map.homogenize_monomial(m, d)?.scale(c))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(n: usize, i: usize) -> Polynomial {
        Polynomial::var(n, i)
    }

    #[test]
    fn difference_of_squares() {
        let s = x(2, 0).add(&x(2, 1)).unwrap();
        let d = x(2, 0).sub(&x(2, 1)).unwrap();
        let p = s.mul(&d).unwrap();
        let expected = x(2, 0).pow(2).sub(&x(2, 1).pow(2)).unwrap();
        assert_eq!(p, expected);
        assert_eq!(p.n_terms(), 2);
    }

    #[test]
    fn eval_square() {
        let p = x(2, 0).add(&x(2, 1)).unwrap().pow(2);
        assert_eq!(p.eval(&[1.0, 1.0]).unwrap(), 4.0);
    }

    #[test]
    fn mismatched_rings_error() {
        assert!(matches!(
            x(2, 0).add(&x(3, 0)),
            Err(Error::VarsMismatch { left: 2, right: 3 })
        ));
        assert!(x(2, 0).eval(&[1.0]).is_err());
    }

    #[test]
    fn basis_order_and_counts() {
        let b = monomial_basis(2, 1);
        assert_eq!(
            b,
            vec![Monomial::one(2), Monomial::var(2, 0), Monomial::var(2, 1)]
        );
        assert_eq!(monomial_basis(3, 2).len(), 10);
        assert_eq!(monomial_basis(3, 5).len(), 56);
        assert_eq!(monomial_basis(1, 0), vec![Monomial::one(1)]);
    }

    #[test]
    fn basis_is_strictly_sorted() {
        let b = monomial_basis(3, 4);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn compose_linear_cancels_denominator() {
        // B = b1, S1 = b1 + b2, R = b1 + 2 b2.
        let s1 = x(2, 0).add(&x(2, 1)).unwrap();
        let s2 = x(2, 1);
        let r = x(2, 0).add(&x(2, 1).scale(2.0)).unwrap();
        let map = RationalMap::new(vec![s1.clone(), s2], r).unwrap();
        assert_eq!(compose_rational(&x(2, 0), &map).unwrap(), s1);

        let c = Polynomial::constant(2, 3.5);
        assert_eq!(compose_rational(&c, &map).unwrap(), c);

        let sq = compose_rational(&x(2, 0).pow(2), &map).unwrap();
        assert!(sq.max_coeff_diff(&s1.pow(2)) < 1e-15);
    }

    #[test]
    fn compose_mixed_degree_uses_denominator_powers() {
        // B = b1^2 + b2 + 1 with d = 2: R^2 B(S/R) = S1^2 + R S2 + R^2.
        let s1 = x(2, 0);
        let s2 = x(2, 1);
        let r = x(2, 0).add(&x(2, 1)).unwrap();
        let map = RationalMap::new(vec![s1.clone(), s2.clone()], r.clone()).unwrap();
        let b = x(2, 0)
            .pow(2)
            .add(&x(2, 1))
            .unwrap()
            .add(&Polynomial::constant(2, 1.0))
            .unwrap();
        let got = compose_rational(&b, &map).unwrap();
        let want = s1
            .pow(2)
            .add(&r.mul(&s2).unwrap())
            .unwrap()
            .add(&r.pow(2))
            .unwrap();
        assert!(got.max_coeff_diff(&want) < 1e-15);
    }

    #[test]
    fn zero_denominator_rejected() {
        assert!(RationalMap::new(vec![x(1, 0)], Polynomial::zero(1)).is_err());
    }

    #[test]
    fn cancellation_prunes_terms() {
        let p = x(2, 0).sub(&x(2, 0)).unwrap();
        assert!(p.is_zero());
        let mut q = Polynomial::zero(1);
        q.add_term(Monomial::var(1, 0), 1.0);
        q.add_term(Monomial::var(1, 0), -1.0);
        assert!(q.is_zero());
    }

    #[test]
    fn display_is_readable() {
        let p = x(2, 0).pow(2).sub(&Polynomial::constant(2, 2.0)).unwrap();
        assert_eq!(p.to_string(), "1*x1^2 - 2");
    }
}
