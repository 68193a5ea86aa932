//! Barrier-certificate verification: the quadratic SDP for MDPs, the SOS
//! programs for POMDPs, threshold bisection and sampling-based validation.

mod bisect;
mod mdp;
mod pomdp;
mod validate;

use std::path::PathBuf;
use std::time::Instant;

use log::info;
use serde::Serialize;

use crate::belief::{default_grid, falsify, FalsifyOptions, FalsifyReport};
use crate::conic::{ConicProgram, ConicSolution, Residuals, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::model::{Horizon, Model, PrivacySpec};
use crate::poly::Polynomial;
use crate::sos::SosCertificate;

pub use bisect::{degree_sweep, min_certified_gamma, GammaSearch, SweepRow};
pub use mdp::verify_mdp;
pub use pomdp::{verify_pomdp_finite, verify_pomdp_infinite};
pub use validate::{validate_certificate, CertificateValidation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    MdpSdp,
    PomdpFiniteSos { horizon: usize, degree: usize },
    PomdpInfiniteSos { degree: usize },
}

impl Method {
    /// The natural method for a model and spec; `degree` is used for POMDPs.
    pub fn for_spec(model: &Model, spec: &PrivacySpec, degree: usize) -> Method {
        match (model.is_pomdp(), spec.horizon) {
            (false, _) => Method::MdpSdp,
            (true, Horizon::Finite(t)) => Method::PomdpFiniteSos { horizon: t, degree },
            (true, Horizon::Infinite) => Method::PomdpInfiniteSos { degree },
        }
    }

    pub fn degree(&self) -> Option<usize> {
        match *self {
            Method::MdpSdp => None,
            Method::PomdpFiniteSos { degree, .. } | Method::PomdpInfiniteSos { degree } => {
                Some(degree)
            }
        }
    }

    pub fn with_degree(self, degree: usize) -> Method {
        match self {
            Method::MdpSdp => Method::MdpSdp,
            Method::PomdpFiniteSos { horizon, .. } => Method::PomdpFiniteSos { horizon, degree },
            Method::PomdpInfiniteSos { .. } => Method::PomdpInfiniteSos { degree },
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::MdpSdp => write!(f, "mdp-sdp"),
            Method::PomdpFiniteSos { horizon, degree } => {
                write!(f, "pomdp-finite-sos(T={horizon}, d={degree})")
            }
            Method::PomdpInfiniteSos { degree } => write!(f, "pomdp-infinite-sos(d={degree})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Certified,
    Unknown,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Certified => "certified",
            Status::Unknown => "unknown",
        })
    }
}

/// A numeric barrier certificate.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    /// `B(b) = b̄ᵀ V b̄` with `b̄ = (b, 1)`.
    Quadratic {
        v: Vec<Vec<f64>>,
        /// Nonnegative S-procedure weights on the initial-set rows.
        u: Vec<Vec<f64>>,
        s_u: f64,
        /// Total-mass band used for localization, if any.
        mass_band: Option<(f64, f64)>,
        orthant: bool,
    },
    /// One polynomial for the all-time case, or `B_0 … B_T`.
    Polynomial {
        barriers: Vec<Polynomial>,
        sos: SosCertificate,
    },
}

impl Certificate {
    /// `B(t, b)`. Time-invariant certificates ignore `t`; finite-horizon ones
    /// clamp it to the last step.
    pub fn eval(&self, t: usize, b: &[f64]) -> f64 {
        match self {
            Certificate::Quadratic { v, .. } => {
                let n = b.len();
                let bar = |i: usize| if i < n { b[i] } else { 1.0 };
                let mut s = 0.0;
                for (i, row) in v.iter().enumerate() {
                    for (j, x) in row.iter().enumerate() {
                        s += bar(i) * x * bar(j);
                    }
                }
                s
            }
            Certificate::Polynomial { barriers, .. } => {
                let k = t.min(barriers.len() - 1);
                barriers[k].eval(b).unwrap_or(f64::NAN)
            }
        }
    }

    /// Number of time-indexed barriers minus one; 0 for time-invariant ones.
    pub fn last_step(&self) -> usize {
        match self {
            Certificate::Quadratic { .. } => 0,
            Certificate::Polynomial { barriers, .. } => barriers.len() - 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverDiagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub margin: f64,
    pub margin_bound: f64,
    pub elastic: f64,
    pub n_vars: usize,
    pub n_blocks: usize,
    pub n_equalities: usize,
    pub residuals: Residuals,
}

impl SolverDiagnostics {
    fn new(program: &ConicProgram, sol: &ConicSolution) -> SolverDiagnostics {
        SolverDiagnostics {
            status: sol.status,
            iterations: sol.iterations,
            margin: sol.margin,
            margin_bound: sol.margin_bound,
            elastic: sol.elastic,
            n_vars: program.n_vars(),
            n_blocks: program.blocks.len(),
            n_equalities: program.equalities.len(),
            residuals: sol.residuals.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FalsifierCheck {
    pub depth: usize,
    pub lower_bound: f64,
    pub nodes: u64,
    pub witness: Option<crate::belief::FalsificationWitness>,
    /// A witness was found although the program produced a certificate.
    pub conflict: bool,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct Diagnostics {
    pub solver: Option<SolverDiagnostics>,
    pub validation: Option<CertificateValidation>,
    pub falsifier: Option<FalsifierCheck>,
    /// Why the outcome is not certified, when it is not.
    pub notes: Vec<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationOutcome {
    pub status: Status,
    pub method: Method,
    pub gamma: f64,
    pub certificate: Option<Certificate>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub solver: SolverOptions,
    /// MDP: localize to the invariant total-mass band of the initial set.
    pub mass_band: bool,
    /// MDP: localize to the nonnegative orthant.
    pub orthant: bool,
    /// POMDP: add simplex multipliers to the decrease conditions.
    pub localize_simplex: bool,
    /// POMDP: add `N − |b|² ≥ 0` to every positivity condition.
    pub archimedean_radius: Option<f64>,
    /// Finite horizon: one polynomial in `(b, t)` instead of one per step.
    pub time_polynomial: bool,
    pub n_samples: usize,
    pub seed: u64,
    /// Depth of the falsifier cross-check; `None` skips it.
    pub falsify_depth: Option<usize>,
    pub prune: bool,
    pub degree_cap: usize,
    pub dump_sdp: Option<PathBuf>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            solver: SolverOptions::default(),
            mass_band: true,
            orthant: true,
            localize_simplex: false,
            archimedean_radius: None,
            time_polynomial: false,
            n_samples: 10_000,
            seed: 0,
            falsify_depth: Some(10),
            prune: true,
            degree_cap: 12,
            dump_sdp: None,
        }
    }
}

/// Runs `method` on `model`/`spec` at `spec.lambda`.
pub fn verify(
    model: &Model,
    spec: &PrivacySpec,
    method: Method,
    opts: &VerifyOptions,
) -> Result<VerificationOutcome> {
    match method {
        Method::MdpSdp => verify_mdp(model, spec, opts),
        Method::PomdpFiniteSos { horizon, degree } => {
            let spec = PrivacySpec {
                horizon: Horizon::Finite(horizon),
                ..spec.clone()
            };
            verify_pomdp_finite(model, &spec, degree, opts)
        }
        Method::PomdpInfiniteSos { degree } => verify_pomdp_infinite(model, spec, degree, opts),
    }
}

fn write_dump(opts: &VerifyOptions, program: &ConicProgram, sol: &ConicSolution) -> Result<()> {
    if let Some(path) = &opts.dump_sdp {
        let text = serde_json::to_string_pretty(&crate::conic::dump(program, Some(sol)))
            .map_err(|e| Error::Program(e.to_string()))?;
        std::fs::write(path, text)?;
    }
    Ok(())
}

/// Validation, falsifier cross-check and status for a solved program.
fn finish(
    model: &Model,
    spec: &PrivacySpec,
    method: Method,
    opts: &VerifyOptions,
    certificate: Option<Certificate>,
    mut diagnostics: Diagnostics,
    started: Instant,
) -> Result<VerificationOutcome> {
    let mut status = if certificate.is_some() {
        Status::Certified
    } else {
        Status::Unknown
    };
    let mut outcome = VerificationOutcome {
        status,
        method,
        gamma: spec.lambda,
        certificate,
        diagnostics: Diagnostics::default(),
    };
    if status == Status::Certified {
        let v = validate_certificate(model, spec, &outcome, opts)?;
        if !v.ok {
            status = Status::Unknown;
            diagnostics
                .notes
                .push("certificate failed sampling validation".into());
        }
        diagnostics.validation = Some(v);
    }
    if let Some(depth) = opts.falsify_depth {
        let report = cross_check(model, spec, depth, opts.seed)?;
        let conflict = status == Status::Certified && report.witness.is_some();
        if conflict {
            status = Status::Unknown;
            diagnostics
                .notes
                .push("falsifier found a witness against the certificate".into());
        }
        diagnostics.falsifier = Some(FalsifierCheck {
            depth,
            lower_bound: report.lower_bound,
            nodes: report.nodes,
            witness: report.witness,
            conflict,
        });
    }
    diagnostics.wall_time_s = started.elapsed().as_secs_f64();
    info!(
        "{method} at gamma={}: {status} ({:.2}s)",
        spec.lambda, diagnostics.wall_time_s
    );
    // A rejected certificate stays attached for inspection.
    outcome.status = status;
    outcome.diagnostics = diagnostics;
    Ok(outcome)
}

fn cross_check(
    model: &Model,
    spec: &PrivacySpec,
    depth: usize,
    seed: u64,
) -> Result<FalsifyReport> {
    let grid = default_grid(model, spec, 64, seed)?;
    falsify(model, spec, depth, &grid, FalsifyOptions::default())
}
