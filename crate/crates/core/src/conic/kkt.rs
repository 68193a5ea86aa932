//! Newton systems for the barrier solver.
//!
//! Variables that share an LMI block or a scalar constraint form a cluster.
//! The barrier Hessian is block diagonal over clusters except for a few border
//! variables (the margin and the elastic slack) that touch many blocks, so it
//! is stored per cluster and assembled into a sparse KKT matrix.

use log::debug;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::LinearRow;

#[derive(Debug, Clone, Copy)]
enum Slot {
    Cluster(usize, usize),
    Border(usize),
}

struct Cluster {
    vars: Vec<usize>,
}

pub(super) struct Structure {
    nz: usize,
    nb: usize,
    slots: Vec<Slot>,
    clusters: Vec<Cluster>,
    eqs: Vec<LinearRow>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl Structure {
    /// `groups` lists sets of variables coupled in the Hessian.
    pub(super) fn new(
        nz: usize,
        border: &[usize],
        groups: impl Iterator<Item = Vec<usize>>,
        eqs: Vec<LinearRow>,
    ) -> Structure {
        let mut is_border = vec![None; nz];
        for (k, &b) in border.iter().enumerate() {
            is_border[b] = Some(k);
        }
        let mut parent: Vec<usize> = (0..nz).collect();
        for g in groups {
            let inner: Vec<usize> = g.into_iter().filter(|&v| is_border[v].is_none()).collect();
            for w in inner.windows(2) {
                let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut root_cluster = vec![usize::MAX; nz];
        let mut slots = vec![Slot::Border(0); nz];
        let mut clusters: Vec<Cluster> = Vec::new();
        for v in 0..nz {
            if let Some(k) = is_border[v] {
                slots[v] = Slot::Border(k);
                continue;
            }
            let r = find(&mut parent, v);
            if root_cluster[r] == usize::MAX {
                root_cluster[r] = clusters.len();
                clusters.push(Cluster { vars: Vec::new() });
            }
            let c = root_cluster[r];
            slots[v] = Slot::Cluster(c, clusters[c].vars.len());
            clusters[c].vars.push(v);
        }
        Structure {
            nz,
            nb: border.len(),
            slots,
            clusters,
            eqs,
        }
    }

    pub(super) fn hessian(&self) -> Hessian {
        Hessian {
            cluster: self
                .clusters
                .iter()
                .map(|c| DMatrix::zeros(c.vars.len(), c.vars.len()))
                .collect(),
            cross: self
                .clusters
                .iter()
                .map(|c| DMatrix::zeros(c.vars.len(), self.nb))
                .collect(),
            border: DMatrix::zeros(self.nb, self.nb),
        }
    }

    /// Adds `v` to `H[i][j]`. Callers add both `(i, j)` and `(j, i)`.
    pub(super) fn add(&self, h: &mut Hessian, i: usize, j: usize, v: f64) {
        match (self.slots[i], self.slots[j]) {
            (Slot::Cluster(c, li), Slot::Cluster(c2, lj)) => {
                debug_assert_eq!(c, c2, "coupled variables in different clusters");
                h.cluster[c][(li, lj)] += v;
            }
            (Slot::Cluster(c, li), Slot::Border(bj)) => h.cross[c][(li, bj)] += v,
            (Slot::Border(_), Slot::Cluster(..)) => {}
            (Slot::Border(bi), Slot::Border(bj)) => h.border[(bi, bj)] += v,
        }
    }

    /// Equality residual `c − A z`.
    pub(super) fn residual(&self, z: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.eqs.len(), self.eqs.iter().map(|r| r.rhs - r.eval(z)))
    }

    /// Newton direction for the barrier with gradient `g` and Hessian `h`,
    /// also driving the equality residual `rp` to zero.
    ///
    /// The full KKT system `[[H, Aᵀ], [A, 0]]` is symmetrically equilibrated
    /// and factored by LU: dense for small programs, sparse otherwise. A few
    /// rounds of refinement against the unscaled system follow.
    pub(super) fn direction(
        &self,
        h: Hessian,
        g: &DVector<f64>,
        rp: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        let sparse = !dense_enough(self.nz, self.eqs.len());
        self.direction_with(&h, g, rp, sparse)
    }

    fn direction_with(
        &self,
        h: &Hessian,
        g: &DVector<f64>,
        rp: &DVector<f64>,
        sparse: bool,
    ) -> Option<DVector<f64>> {
        let (nz, p) = (self.nz, self.eqs.len());
        let k = self.kkt_triplets(h);
        let mut rhs = DVector::zeros(nz + p);
        rhs.rows_mut(0, nz).copy_from(&(-g));
        rhs.rows_mut(nz, p).copy_from(rp);
        let sol = solve_kkt(nz + p, &k, &rhs, sparse)?;
        Some(sol.rows(0, nz).into_owned())
    }

    /// Entries of the KKT matrix; duplicates are summed.
    fn kkt_triplets(&self, h: &Hessian) -> Vec<(usize, usize, f64)> {
        let border: Vec<(usize, usize)> = (0..self.nz)
            .filter_map(|i| match self.slots[i] {
                Slot::Border(k) => Some((i, k)),
                _ => None,
            })
            .collect();
        let mut t = Vec::new();
        for (c, cl) in self.clusters.iter().enumerate() {
            for (a, &i) in cl.vars.iter().enumerate() {
                for (b, &j) in cl.vars.iter().enumerate() {
                    let v = h.cluster[c][(a, b)];
                    if v != 0.0 {
                        t.push((i, j, v));
                    }
                }
                for &(j, k) in &border {
                    let v = h.cross[c][(a, k)];
                    if v != 0.0 {
                        t.push((i, j, v));
                        t.push((j, i, v));
                    }
                }
            }
        }
        for &(i, k) in &border {
            for &(j, l) in &border {
                let v = h.border[(k, l)];
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        for (r, row) in self.eqs.iter().enumerate() {
            for &(i, a) in &row.coeffs {
                t.push((self.nz + r, i, a));
                t.push((i, self.nz + r, a));
            }
        }
        t
    }
}

/// Programs up to this many variables plus equalities use a dense KKT solve.
const DENSE_LIMIT: usize = 600;

/// Whether the full KKT matrix is small enough to factor densely.
pub(super) fn dense_enough(n_vars: usize, n_eqs: usize) -> bool {
    n_vars + n_eqs <= DENSE_LIMIT
}

#[derive(Clone)]
pub(super) struct Hessian {
    cluster: Vec<DMatrix<f64>>,
    cross: Vec<DMatrix<f64>>,
    border: DMatrix<f64>,
}

/// Refinement rounds after the factored solve.
const REFINE_STEPS: usize = 3;

/// Equilibration sweeps before factoring.
const RUIZ_STEPS: usize = 10;

fn matvec(n: usize, k: &[(usize, usize, f64)], x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(n);
    for &(i, j, v) in k {
        y[i] += v * x[j];
    }
    y
}

/// Symmetric Ruiz scaling `d` making every row of `D K D` have unit max
/// norm. Barrier Hessian rows can be many orders of magnitude larger than
/// the constraint rows.
fn ruiz(n: usize, k: &[(usize, usize, f64)]) -> DVector<f64> {
    let mut d = DVector::from_element(n, 1.0);
    for _ in 0..RUIZ_STEPS {
        let mut r = DVector::zeros(n);
        for &(i, j, v) in k {
            r[i] = f64::max(r[i], (d[i] * v * d[j]).abs());
        }
        if r.iter().all(|&v| v == 0.0 || (v - 1.0).abs() <= 1e-2) {
            break;
        }
        for i in 0..n {
            if r[i] > 0.0 {
                d[i] /= r[i].sqrt();
            }
        }
    }
    d
}

enum Factored {
    Dense(nalgebra::LU<f64, Dyn, Dyn>),
    Sparse(faer::sparse::linalg::solvers::Lu<usize, f64>),
}

impl Factored {
    fn new(n: usize, k: &[(usize, usize, f64)], sparse: bool) -> Option<Factored> {
        if sparse {
            let m =
                faer::sparse::SparseColMat::<usize, f64>::try_new_from_triplets(n, n, k).ok()?;
            m.sp_lu().ok().map(Factored::Sparse)
        } else {
            let mut m = DMatrix::zeros(n, n);
            for &(i, j, v) in k {
                m[(i, j)] += v;
            }
            Some(Factored::Dense(m.lu()))
        }
    }

    fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let x = match self {
            Factored::Dense(lu) => lu.solve(b)?,
            Factored::Sparse(lu) => {
                use faer::prelude::SpSolver;
                let col = faer::Col::<f64>::from_fn(b.len(), |i| b[i]);
                let x = lu.solve(&col);
                DVector::from_fn(b.len(), |i, _| x[i])
            }
        };
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

/// Solves `K x = rhs` for the symmetric indefinite KKT matrix given by
/// triplets.
fn solve_kkt(
    n: usize,
    k: &[(usize, usize, f64)],
    rhs: &DVector<f64>,
    sparse: bool,
) -> Option<DVector<f64>> {
    if n == 0 {
        return Some(DVector::zeros(0));
    }
    let d = ruiz(n, k);
    let scaled: Vec<(usize, usize, f64)> =
        k.iter().map(|&(i, j, v)| (i, j, d[i] * v * d[j])).collect();
    let f = Factored::new(n, &scaled, sparse)?;
    let solve = |b: &DVector<f64>| f.solve(&b.component_mul(&d)).map(|y| y.component_mul(&d));
    let mut x = solve(rhs)?;
    let abs_k: Vec<(usize, usize, f64)> = k.iter().map(|&(i, j, v)| (i, j, v.abs())).collect();
    let mut err = f64::INFINITY;
    for _ in 0..=REFINE_STEPS {
        let r = rhs - matvec(n, k, &x);
        let mag = matvec(n, &abs_k, &x.abs()) + rhs.abs();
        err = backward_error(&r, &mag);
        if err <= 1e-14 {
            break;
        }
        x += solve(&r)?;
    }
    if err > 1e-8 {
        debug!("KKT solve: backward error {err:.1e}");
    }
    Some(x)
}

/// Componentwise backward error `max |r_i| / mag_i`.
fn backward_error(r: &DVector<f64>, mag: &DVector<f64>) -> f64 {
    r.iter()
        .zip(mag.iter())
        .map(|(&ri, &mi)| {
            if ri == 0.0 {
                0.0
            } else if mi > 0.0 {
                ri.abs() / mi
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// Maximal linearly independent subset of equality rows, chosen greedily by
/// an incremental Cholesky factorization of `A Aᵀ`.
pub(super) struct EqualityBasis {
    pub rows: Vec<LinearRow>,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl EqualityBasis {
    pub(super) fn new(all: &[LinearRow], n_vars: usize) -> EqualityBasis {
        // Column-wise incidence for sparse inner products.
        let mut by_var: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_vars];
        for (k, r) in all.iter().enumerate() {
            for &(i, a) in &r.coeffs {
                by_var[i].push((k, a));
            }
        }
        let p = all.len();
        let gram_col = |k: usize| -> Vec<f64> {
            let mut col = vec![0.0; p];
            for &(i, a) in &all[k].coeffs {
                for &(k2, b) in &by_var[i] {
                    col[k2] += a * b;
                }
            }
            col
        };
        let mut selected: Vec<usize> = Vec::new();
        // Rows of the lower-triangular factor, grown one row at a time.
        let mut l: Vec<Vec<f64>> = Vec::new();
        for k in 0..p {
            let col = gram_col(k);
            let gkk = col[k];
            if gkk <= 0.0 {
                continue;
            }
            let mut y = Vec::with_capacity(selected.len());
            for (a, row) in l.iter().enumerate() {
                let s: f64 = row[..a].iter().zip(&y).map(|(x, y)| x * y).sum();
                y.push((col[selected[a]] - s) / row[a]);
            }
            let pivot = gkk - y.iter().map(|v| v * v).sum::<f64>();
            if pivot > 1e-10 * gkk {
                y.push(pivot.sqrt());
                l.push(y);
                selected.push(k);
            }
        }
        let rows: Vec<LinearRow> = selected.iter().map(|&k| all[k].clone()).collect();
        let q = rows.len();
        let chol = if q > 0 {
            let lm = DMatrix::from_fn(q, q, |i, j| if j <= i { l[i][j] } else { 0.0 });
            Cholesky::new(&lm * lm.transpose())
        } else {
            None
        };
        EqualityBasis { rows, chol }
    }

    /// Closest point to `w` satisfying the selected equalities.
    pub(super) fn project(&self, w: &DVector<f64>) -> DVector<f64> {
        let Some(ch) = &self.chol else {
            return w.clone();
        };
        let r = DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|row| row.rhs - row.eval(w.as_slice())),
        );
        let nu = ch.solve(&r);
        let mut out = w.clone();
        for (k, row) in self.rows.iter().enumerate() {
            for &(i, a) in &row.coeffs {
                out[i] += a * nu[k];
            }
        }
        out
    }
}
