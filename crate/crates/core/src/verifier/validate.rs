//! A posteriori sampling checks of a barrier certificate.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;

use super::{Certificate, VerificationOutcome, VerifyOptions};
use crate::belief::{default_grid, ZERO_PROB_TOL};
use crate::error::{Error, Result};
use crate::model::{unsafe_halfspace, Model, PrivacySpec};
use crate::sos::ROUNDTRIP_TOL;

/// Largest increase `B(next) − B(b)` accepted along a sampled transition.
pub const DECREASE_TOL: f64 = 1e-7;

const MAX_REPORTED: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct CertificateValidation {
    pub ok: bool,
    pub unsafe_samples: usize,
    /// Smallest `B` over unsafe samples; must be positive.
    pub worst_unsafe: Option<f64>,
    pub initial_samples: usize,
    /// Largest `B` over initial samples; must be negative.
    pub worst_initial: Option<f64>,
    pub transition_samples: usize,
    /// Largest `B(next) − B(b)`; must be at most [`DECREASE_TOL`].
    pub worst_decrease: Option<f64>,
    pub max_roundtrip_error: Option<f64>,
    pub violations: Vec<String>,
}

/// One step of the belief dynamics: `(label, next)` for every branch with
/// positive probability.
fn successors(model: &Model, b: &[f64]) -> Vec<(String, Vec<f64>)> {
    let n = b.len();
    let mut out = Vec::new();
    for a in 0..model.n_actions() {
        let h = model.transition(a);
        let hb: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| h[(i, j)] * b[j]).sum())
            .collect();
        match model.observation_matrix(a) {
            None => out.push((model.actions()[a].clone(), hb)),
            Some(o) => {
                let names = model.observations().expect("POMDP");
                for z in 0..o.ncols() {
                    let s: Vec<f64> = (0..n).map(|i| o[(i, z)] * hb[i]).collect();
                    let r: f64 = s.iter().sum();
                    if r > ZERO_PROB_TOL {
                        out.push((
                            format!("{}/{}", model.actions()[a], names[z]),
                            s.iter().map(|v| v / r).collect(),
                        ));
                    }
                }
            }
        }
    }
    out
}

/// Uniform point of `{b ⪰ 0, Σb = mass}`.
fn sample_scaled_simplex(rng: &mut ChaCha8Rng, n: usize, mass: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| mass * v / s).collect()
}

fn fmt_point(b: &[f64]) -> String {
    let parts: Vec<String> = b.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Samples the unsafe set, the initial set and random transitions and
/// checks the three barrier conditions pointwise.
///
/// Beliefs are drawn uniformly from `{b ⪰ 0, Σb = m}` with `m` uniform over
/// the total-mass range reachable from the initial set: the initial range for
/// MDPs, where `H` preserves mass, and 1 for POMDPs. Transitions are also
/// taken from every initial sample.
pub fn validate_certificate(
    model: &Model,
    spec: &PrivacySpec,
    outcome: &VerificationOutcome,
    opts: &VerifyOptions,
) -> Result<CertificateValidation> {
    let cert = outcome
        .certificate
        .as_ref()
        .ok_or_else(|| Error::Precondition("outcome carries no certificate".into()))?;
    let n = model.n_states();
    let n_samples = opts.n_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x7a11_da7e);
    let (lo, hi) = if model.is_pomdp() {
        (1.0, 1.0)
    } else {
        spec.initial_mass_range(model)?
    };
    let unsafe_set = unsafe_halfspace(spec, model);
    let last = cert.last_step();
    let mut violations = Vec::new();
    let mut report = |msg: String| {
        if violations.len() < MAX_REPORTED {
            violations.push(msg);
        }
    };

    // Unsafe set, by rejection. The largest secret mass on the domain is `hi`.
    let mut unsafe_samples = 0;
    let mut worst_unsafe: Option<f64> = None;
    if hi > spec.lambda {
        let mut tries = 0;
        while unsafe_samples < n_samples && tries < 100 * n_samples {
            tries += 1;
            let m = rng.gen_range(lo..=hi);
            let b = sample_scaled_simplex(&mut rng, n, m);
            if !unsafe_set.contains(&b) {
                continue;
            }
            unsafe_samples += 1;
            let v = cert.eval(last, &b);
            worst_unsafe = Some(worst_unsafe.map_or(v, |w| w.min(v)));
            if !(v > 0.0) {
                report(format!("B = {v:e} ≤ 0 at unsafe belief {}", fmt_point(&b)));
            }
        }
    }

    let initial = default_grid(model, spec, n_samples, opts.seed)?;
    let mut worst_initial: Option<f64> = None;
    for b in &initial {
        let v = cert.eval(0, b.values());
        worst_initial = Some(worst_initial.map_or(v, |w| w.max(v)));
        if !(v < 0.0) {
            report(format!(
                "B = {v:e} ≥ 0 at initial belief {}",
                fmt_point(b.values())
            ));
        }
    }

    let mut transition_samples = 0;
    let mut worst_decrease: Option<f64> = None;
    let mut check_step = |t: usize, b: &[f64], label: &str, next: &[f64]| {
        transition_samples += 1;
        let inc = cert.eval(t, next) - cert.eval(t.saturating_sub(1), b);
        worst_decrease = Some(worst_decrease.map_or(inc, |w| w.max(inc)));
        if !(inc <= DECREASE_TOL) {
            report(format!(
                "B increases by {inc:e} along {label} at step {t} from {}",
                fmt_point(b)
            ));
        }
    };
    for b in &initial {
        for (label, next) in successors(model, b.values()) {
            check_step(1, b.values(), &label, &next);
        }
    }
    for _ in 0..n_samples {
        let m = rng.gen_range(lo..=hi);
        let b = sample_scaled_simplex(&mut rng, n, m);
        let succ = successors(model, &b);
        let Some((label, next)) = succ.choose(&mut rng) else {
            continue;
        };
        let t = if last == 0 {
            1
        } else {
            rng.gen_range(1..=last)
        };
        check_step(t, &b, label, next);
    }

    let max_roundtrip_error = match cert {
        Certificate::Polynomial { sos, .. } => {
            let e = sos.max_roundtrip_error();
            if !(e <= ROUNDTRIP_TOL) {
                report(format!(
                    "Gram round-trip error {e:e} exceeds {ROUNDTRIP_TOL:e}"
                ));
            }
            Some(e)
        }
        Certificate::Quadratic { .. } => None,
    };
    let ok = violations.is_empty();
    Ok(CertificateValidation {
        ok,
        unsafe_samples,
        worst_unsafe,
        initial_samples: initial.len(),
        worst_initial,
        transition_samples,
        worst_decrease,
        max_roundtrip_error,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_simplex_samples_have_the_requested_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mass in [0.5, 1.0, 1.7] {
            for _ in 0..100 {
                let b = sample_scaled_simplex(&mut rng, 4, mass);
                assert!(b.iter().all(|&v| v >= 0.0));
                assert!((b.iter().sum::<f64>() - mass).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn points_are_formatted_to_four_places() {
        assert_eq!(fmt_point(&[0.5, 1.0 / 3.0]), "[0.5000, 0.3333]");
    }
}
