//! Smallest certifiable threshold by bisection, and sweeps over degrees.

use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use super::{cross_check, verify, Method, Status, VerificationOutcome, VerifyOptions};
use crate::error::Result;
use crate::model::{Model, PrivacySpec};

#[derive(Debug, Clone, Serialize)]
pub struct GammaSearch {
    pub method: Method,
    /// Smallest certified threshold found; `None` when even `γ = 1` fails.
    pub gamma_star: Option<f64>,
    /// Largest secret mass reached by the falsifier; no `γ` below it can hold.
    pub lower_bound: f64,
    pub falsify_depth: usize,
    /// Every threshold tried, in order.
    pub trace: Vec<(f64, Status)>,
    /// Outcome at `gamma_star`.
    pub outcome: Option<VerificationOutcome>,
    pub wall_time_s: f64,
}

/// Bisection over `γ ∈ [L, 1]` where `L` is the falsifier lower bound.
///
/// Relies on monotonicity in `γ`: the unsafe set shrinks as `γ` grows. The
/// upper endpoint is always certified and the lower one is not, so the
/// returned value is certified and within `tol` of the bracket's lower end.
pub fn min_certified_gamma(
    model: &Model,
    spec: &PrivacySpec,
    method: Method,
    tol: f64,
    falsify_depth: usize,
    opts: &VerifyOptions,
) -> Result<GammaSearch> {
    let started = Instant::now();
    let falsifier = cross_check(model, spec, falsify_depth, opts.seed)?;
    let inner = VerifyOptions {
        falsify_depth: None,
        ..opts.clone()
    };
    let mut trace = Vec::new();
    let mut run = |gamma: f64| -> Result<VerificationOutcome> {
        let o = verify(model, &spec.with_lambda(gamma), method, &inner)?;
        info!("bisection: gamma={gamma:.4} -> {}", o.status);
        trace.push((gamma, o.status));
        Ok(o)
    };
    let top = run(1.0)?;
    let mut search = GammaSearch {
        method,
        gamma_star: None,
        lower_bound: falsifier.lower_bound,
        falsify_depth,
        trace: Vec::new(),
        outcome: None,
        wall_time_s: 0.0,
    };
    if top.status == Status::Certified {
        let mut lo = falsifier.lower_bound.min(1.0);
        let mut hi = 1.0;
        let mut best = top;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let o = run(mid)?;
            if o.status == Status::Certified {
                hi = mid;
                best = o;
            } else {
                lo = mid;
            }
        }
        search.gamma_star = Some(hi);
        search.outcome = Some(best);
    }
    search.trace = trace;
    search.wall_time_s = started.elapsed().as_secs_f64();
    Ok(search)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub degree: usize,
    pub gamma_star: Option<f64>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

/// [`min_certified_gamma`] for each degree, in parallel. Failures are recorded
/// per row.
pub fn degree_sweep(
    model: &Model,
    spec: &PrivacySpec,
    method: Method,
    degrees: &[usize],
    tol: f64,
    falsify_depth: usize,
    opts: &VerifyOptions,
) -> Vec<SweepRow> {
    degrees
        .par_iter()
        .map(|&d| {
            let started = Instant::now();
            let r =
                min_certified_gamma(model, spec, method.with_degree(d), tol, falsify_depth, opts);
            let wall_time_s = started.elapsed().as_secs_f64();
            match r {
                Ok(s) => SweepRow {
                    degree: d,
                    gamma_star: s.gamma_star,
                    wall_time_s,
                    error: None,
                },
                Err(e) => SweepRow {
                    degree: d,
                    gamma_star: None,
                    wall_time_s,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}
